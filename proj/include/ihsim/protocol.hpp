#pragma once

// Frame-clocked simulation of the information-harvesting protocol.
//
// Three node roles share one radio medium: the wireless power transceiver
// (WPT), energy harvesters (EH) and information receivers (IR). Passive
// eavesdroppers reuse the IR machine without a remap key. Messages have one
// frame of latency; nodes step in a fixed order (WPT, EHs, IRs,
// eavesdroppers, each by ascending id).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ihsim/channel.hpp"
#include "ihsim/errors.hpp"
#include "ihsim/geometry.hpp"
#include "ihsim/phy.hpp"
#include "ihsim/rng.hpp"

namespace ihsim::protocol {

using NodeId = std::uint32_t;
using Frame = std::uint64_t;

inline constexpr NodeId kWptId = 0;
inline constexpr NodeId kBroadcast = 0xFFFFFFFFU;

enum class MessageKind { PowerRequest, IdentExchange, ConfigAck, PowerBeacon, Rfi, SeedFrame, ErrorReport, StopInfo };

constexpr std::string_view to_string(MessageKind k) {
  switch (k) {
    case MessageKind::PowerRequest: return "PowerRequest";
    case MessageKind::IdentExchange: return "IdentExchange";
    case MessageKind::ConfigAck: return "ConfigAck";
    case MessageKind::PowerBeacon: return "PowerBeacon";
    case MessageKind::Rfi: return "RFI";
    case MessageKind::SeedFrame: return "SeedFrame";
    case MessageKind::ErrorReport: return "ErrorReport";
    case MessageKind::StopInfo: return "StopInfo";
  }
  return "?";
}

/// Parameters an IR attaches to its request for information.
struct RfiPayload {
  std::uint32_t requested_bits_per_frame = 6;
  std::uint64_t pattern_update_period = phy::kNoRemap;  // frames; kNoRemap disables remapping
  bool an_enabled = false;
  std::uint64_t remap_key = 0;
};

/// One receiver's view of a seeding frame, attached by the medium.
struct SeedObservation {
  phy::Complex y;
  channel::CVector h_estimate;
  phy::Complex an_sample;  // the receiver's own AN waveform (IR only)
};

struct SeedPayload {
  std::uint64_t seq = 0;  // seeding frame counter; remap epochs are counted on it
  int n_tx = 0;
  int k = 0;
  int bits = 0;
  std::vector<double> phases;  // shifter setting, shared during configuration
  double total_power_w = 0.0;
  std::optional<SeedObservation> observation;
};

struct ErrorPayload {
  std::optional<std::uint64_t> last_good_seq;
};

struct ProtocolMessage {
  MessageKind kind;
  NodeId sender = 0;
  NodeId receiver = 0;
  Frame frame = 0;
  std::variant<std::monostate, RfiPayload, SeedPayload, ErrorPayload> payload{};
};

/// Deterministic inbox order: sender, then kind.
inline void sort_inbox(std::vector<ProtocolMessage>& inbox) {
  std::stable_sort(inbox.begin(), inbox.end(), [](const ProtocolMessage& a, const ProtocolMessage& b) {
    return std::pair{a.sender, static_cast<int>(a.kind)} < std::pair{b.sender, static_cast<int>(b.kind)};
  });
}

inline std::string describe_inbox(std::span<const ProtocolMessage> inbox) {
  if (inbox.empty()) return "Tick";
  std::string out;
  for (const auto& m : inbox) {
    if (!out.empty()) out += '|';
    out += to_string(m.kind);
    out += '@';
    out += std::to_string(m.sender);
  }
  return out;
}

// ---------------------------------------------------------------------------
// WPT

enum class WptState { Idle, Identification, PowerTransfer, InfoSeeding };

constexpr std::string_view to_string(WptState s) {
  switch (s) {
    case WptState::Idle: return "Idle";
    case WptState::Identification: return "Identification";
    case WptState::PowerTransfer: return "PowerTransfer";
    case WptState::InfoSeeding: return "InfoSeeding";
  }
  return "?";
}

struct WptConfig {
  int n_tx = 64;
  int active_antennas = 1;
  double total_power_w = 0.01;
  std::optional<int> phase_resolution_bits;
  std::uint64_t total_info_bits = 0;  // 0: unlimited
};

struct SeedingSession {
  NodeId ir = 0;
  RfiPayload rfi;
  phy::PatternCodebook codebook{1, 1, 0};
  std::uint64_t next_seq = 0;
  std::optional<std::uint64_t> last_emitted_seq;
  Frame last_emitted_frame = 0;
};

struct WptNode {
  WptState state = WptState::Idle;
  std::optional<phy::PatternCodebook> codebook;  // remapped codebook of the current seeding frame
  std::uint64_t frame_counter = 0;
  std::vector<NodeId> ehs;  // ascending
  std::set<NodeId> awaiting_ack;
  std::vector<NodeId> irs;
  std::optional<SeedingSession> session;
};

/// Source bits for seeding frame `seq`, a pure function of (seed, seq).
inline phy::Bits payload_bits(std::uint64_t seed, std::uint64_t seq, int bits) {
  if (bits == 0) return {};
  Rng rng = make_stream(seed, {streams::kPayload, seq});
  return phy::value_to_bits(rng() >> (64 - bits), bits);
}

struct WptContext {
  const WptConfig& config;
  const channel::CVector* eh_channel = nullptr;  // primary EH channel this frame
  std::uint64_t payload_seed = 0;
};

struct WptStepResult {
  WptNode node;
  std::vector<ProtocolMessage> outbox;
  std::optional<channel::CVector> tx;  // radiated vector, if radiating
  std::string event;
  std::optional<std::uint64_t> seeded_seq;
  std::vector<std::string> violations;
};

namespace detail {

inline void insert_sorted(std::vector<NodeId>& ids, NodeId id) {
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) ids.insert(it, id);
}

inline bool is_active(WptState s) { return s != WptState::Idle; }

}  // namespace detail

/// Advances the WPT by one frame.
inline WptStepResult wpt_step(const WptNode& state, std::span<const ProtocolMessage> inbox, Frame frame,
                              const WptContext& ctx) {
  WptStepResult r{state, {}, std::nullopt, describe_inbox(inbox), std::nullopt, {}};
  WptNode& n = r.node;
  auto send = [&](MessageKind kind, NodeId to, auto payload) {
    r.outbox.push_back(ProtocolMessage{kind, kWptId, to, frame, payload});
  };
  auto enter_identification = [&] {
    n.state = WptState::Identification;
    n.awaiting_ack = {n.ehs.begin(), n.ehs.end()};
    for (NodeId eh : n.ehs) send(MessageKind::IdentExchange, eh, std::monostate{});
  };

  // A session that survived a restart resumes once power transfer is back.
  if (n.state == WptState::PowerTransfer && n.session) {
    n.state = WptState::InfoSeeding;
    r.event = r.event == "Tick" ? "ResumeSeeding" : r.event + "|ResumeSeeding";
  }

  for (const auto& m : inbox) {
    switch (m.kind) {
      case MessageKind::PowerRequest:
        detail::insert_sorted(n.ehs, m.sender);
        if (n.state == WptState::Idle) {
          n.state = WptState::Identification;
        }
        n.awaiting_ack.insert(m.sender);
        send(MessageKind::IdentExchange, m.sender, std::monostate{});
        break;
      case MessageKind::ConfigAck:
        n.awaiting_ack.erase(m.sender);
        if (n.state == WptState::Identification && n.awaiting_ack.empty()) n.state = WptState::PowerTransfer;
        break;
      case MessageKind::Rfi: {
        const auto* rfi = std::get_if<RfiPayload>(&m.payload);
        if (!rfi || !detail::is_active(n.state) || rfi->requested_bits_per_frame == 0 ||
            rfi->pattern_update_period == 0) {
          r.violations.push_back("RFI rejected");
          break;
        }
        auto cb = phy::build_codebook(ctx.config.n_tx, ctx.config.active_antennas,
                                      static_cast<int>(rfi->requested_bits_per_frame));
        if (cb.bits_per_use() == 0) {
          r.violations.push_back("RFI rejected: codebook carries no bits");
          break;
        }
        detail::insert_sorted(n.irs, m.sender);
        n.session = SeedingSession{m.sender, *rfi, cb, 0, std::nullopt, 0};
        if (n.state == WptState::PowerTransfer) n.state = WptState::InfoSeeding;
        break;
      }
      case MessageKind::ErrorReport: {
        if (!detail::is_active(n.state)) {
          r.violations.push_back("ErrorReport while idle");
          break;
        }
        if (n.session) {
          const auto* err = std::get_if<ErrorPayload>(&m.payload);
          if (err && err->last_good_seq) {
            n.session->next_seq = *err->last_good_seq + 1;
          } else if (n.session->last_emitted_seq && n.session->last_emitted_frame + 1 >= frame) {
            // The frame emitted last step was still in flight.
            n.session->next_seq = *n.session->last_emitted_seq;
          }
        }
        enter_identification();
        break;
      }
      case MessageKind::StopInfo:
        if (n.session && n.session->ir == m.sender) {
          n.session.reset();
          n.codebook.reset();
          if (n.state == WptState::InfoSeeding) n.state = WptState::PowerTransfer;
        }
        break;
      default:
        r.violations.push_back(std::string("unexpected ") + std::string(to_string(m.kind)));
        break;
    }
  }

  if (n.state == WptState::InfoSeeding && n.session && ctx.config.total_info_bits > 0 &&
      n.session->next_seq * static_cast<std::uint64_t>(n.session->codebook.bits_per_use()) >=
          ctx.config.total_info_bits) {
    n.session.reset();
    n.codebook.reset();
    n.state = WptState::PowerTransfer;
    r.event += "|PayloadComplete";
  }

  if (detail::is_active(n.state)) {
    std::vector<double> phases(ctx.config.n_tx, 0.0);
    if (ctx.eh_channel) phases = phy::cophase_all(*ctx.eh_channel, ctx.config.phase_resolution_bits);
    phy::ActivationPattern pattern;
    if (n.state == WptState::InfoSeeding) {
      auto& s = *n.session;
      n.codebook = phy::remap_codebook(s.codebook, s.rfi.remap_key, s.next_seq, s.rfi.pattern_update_period);
      const auto bits = payload_bits(ctx.payload_seed, s.next_seq, n.codebook->bits_per_use());
      pattern = phy::bits_to_pattern(bits, *n.codebook);
      SeedPayload p;
      p.seq = s.next_seq;
      p.n_tx = ctx.config.n_tx;
      p.k = ctx.config.active_antennas;
      p.bits = n.codebook->bits_per_use();
      p.phases = phases;
      p.total_power_w = ctx.config.total_power_w;
      send(MessageKind::SeedFrame, s.ir, p);
      r.seeded_seq = s.next_seq;
      s.last_emitted_seq = s.next_seq;
      s.last_emitted_frame = frame;
      ++s.next_seq;
    } else {
      pattern.active.resize(ctx.config.active_antennas);
      for (int i = 0; i < ctx.config.active_antennas; ++i) pattern.active[i] = i;
    }
    r.tx = phy::tx_signal(pattern, phases, ctx.config.total_power_w);
    send(MessageKind::PowerBeacon, kBroadcast, std::monostate{});
  }
  ++n.frame_counter;
  return r;
}

// ---------------------------------------------------------------------------
// EH

enum class EhState { Idle, Requesting, Configuring, Harvesting };

constexpr std::string_view to_string(EhState s) {
  switch (s) {
    case EhState::Idle: return "Idle";
    case EhState::Requesting: return "Requesting";
    case EhState::Configuring: return "Configuring";
    case EhState::Harvesting: return "Harvesting";
  }
  return "?";
}

struct EhNode {
  NodeId id = 1;
  EhState state = EhState::Idle;
  double energy_j = 0.0;
};

/// What the battery charging unit sees. Deliberately carries no information
/// about the transmitted pattern.
struct EhContext {
  double received_power_w = 0.0;
  double frame_duration_s = 1e-3;
};

struct EhStepResult {
  EhNode node;
  std::vector<ProtocolMessage> outbox;
  double energy_increment_j = 0.0;
  std::string event;
};

inline EhStepResult eh_step(const EhNode& state, std::span<const ProtocolMessage> inbox, Frame frame,
                            const EhContext& ctx) {
  EhStepResult r{state, {}, 0.0, describe_inbox(inbox)};
  EhNode& n = r.node;
  auto send = [&](MessageKind kind) { r.outbox.push_back(ProtocolMessage{kind, n.id, kWptId, frame, std::monostate{}}); };

  if (n.state == EhState::Idle) {
    n.state = EhState::Requesting;
    send(MessageKind::PowerRequest);
  }
  for (const auto& m : inbox) {
    if (m.kind == MessageKind::IdentExchange) {
      n.state = EhState::Configuring;
      send(MessageKind::ConfigAck);
    } else if (m.kind == MessageKind::PowerBeacon && n.state == EhState::Configuring) {
      // A beacon in the same inbox as IdentExchange belongs to the old link.
      const bool reconfiguring = std::any_of(inbox.begin(), inbox.end(),
                                             [](const auto& x) { return x.kind == MessageKind::IdentExchange; });
      if (!reconfiguring) n.state = EhState::Harvesting;
    }
  }
  if (n.state == EhState::Harvesting) {
    r.energy_increment_j = ctx.received_power_w * ctx.frame_duration_s;
    n.energy_j += r.energy_increment_j;
  }
  return r;
}

// ---------------------------------------------------------------------------
// IR and eavesdropper

enum class IrState { Sensing, Estimating, RfiSent, HarvestingInfo };

constexpr std::string_view to_string(IrState s) {
  switch (s) {
    case IrState::Sensing: return "Sensing";
    case IrState::Estimating: return "Estimating";
    case IrState::RfiSent: return "RfiSent";
    case IrState::HarvestingInfo: return "HarvestingInfo";
  }
  return "?";
}

struct IrNode {
  NodeId id = 2;
  IrState state = IrState::Sensing;
  bool eavesdropper = false;  // passive: never requests, has no remap key or AN waveform
  RfiPayload rfi;
  std::optional<Frame> stop_frame;
  bool done = false;
  std::optional<channel::CVector> channel_estimate;
  std::map<std::uint64_t, phy::Bits> decoded;  // by seeding seq
};

struct IrContext {
  const channel::CVector* channel_now = nullptr;  // estimate available this frame
  const phy::SignalConfig* signal = nullptr;
};

struct IrStepResult {
  IrNode node;
  std::vector<ProtocolMessage> outbox;
  std::optional<std::pair<std::uint64_t, phy::Bits>> decoded;
  std::string event;
};

namespace detail {

inline phy::Bits decode_seed(const IrNode& n, const SeedPayload& p, const phy::SignalConfig* signal) {
  const SeedObservation& obs = *p.observation;
  phy::Complex y = obs.y;
  if (!n.eavesdropper && n.rfi.an_enabled && signal) y = phy::cancel_si(y, obs.an_sample, *signal);
  auto cb = phy::build_codebook(p.n_tx, p.k, p.bits);
  if (!n.eavesdropper) cb = phy::remap_codebook(cb, n.rfi.remap_key, p.seq, n.rfi.pattern_update_period);
  const auto det = phy::ml_detect(y, obs.h_estimate, cb, p.phases, p.total_power_w);
  return phy::pattern_to_bits(det.pattern, cb);
}

}  // namespace detail

inline IrStepResult ir_step(const IrNode& state, std::span<const ProtocolMessage> inbox, Frame frame,
                            const IrContext& ctx) {
  IrStepResult r{state, {}, std::nullopt, describe_inbox(inbox)};
  IrNode& n = r.node;

  if (!n.eavesdropper && n.stop_frame && frame >= *n.stop_frame && !n.done &&
      (n.state == IrState::RfiSent || n.state == IrState::HarvestingInfo)) {
    r.outbox.push_back(ProtocolMessage{MessageKind::StopInfo, n.id, kWptId, frame, std::monostate{}});
    n.state = IrState::Sensing;
    n.done = true;
    r.event += "|Stop";
    return r;
  }

  if (!n.eavesdropper && n.state == IrState::Estimating) {
    r.outbox.push_back(ProtocolMessage{MessageKind::Rfi, n.id, kWptId, frame, n.rfi});
    n.state = IrState::RfiSent;
  }

  for (const auto& m : inbox) {
    if (m.kind == MessageKind::PowerBeacon && n.state == IrState::Sensing && !n.eavesdropper && !n.done) {
      if (ctx.channel_now) {
        n.channel_estimate = *ctx.channel_now;
        n.state = IrState::Estimating;
      }
    } else if (m.kind == MessageKind::SeedFrame) {
      const auto* p = std::get_if<SeedPayload>(&m.payload);
      if (!p || !p->observation) continue;
      const bool listening = n.eavesdropper || n.state == IrState::RfiSent || n.state == IrState::HarvestingInfo;
      if (!listening) continue;
      n.state = IrState::HarvestingInfo;
      n.channel_estimate = p->observation->h_estimate;
      auto bits = detail::decode_seed(n, *p, ctx.signal);
      n.decoded[p->seq] = bits;
      r.decoded = std::pair{p->seq, std::move(bits)};
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Scenario and orchestration

struct EhSpec {
  geometry::Point3 position{1.0, 0.0, geometry::kTerminalHeight};
  Frame join_frame = 0;
};

struct IrSpec {
  geometry::Point3 position{20.0, 0.0, geometry::kTerminalHeight};
  Frame join_frame = 0;
  std::optional<Frame> stop_frame;
  RfiPayload rfi;
  double estimation_error = 0.0;  // CN variance relative to mean per-antenna channel power
};

struct EveSpec {
  geometry::Point3 position{20.0, 0.0, geometry::kTerminalHeight};
  /// Share the channel and noise of this IR (index into Scenario::irs).
  std::optional<std::size_t> colocated_with_ir;
};

struct FaultEvent {
  Frame frame = 0;
  NodeId reporter = 1;
};

struct Scenario {
  Frame frames = 200;
  double frame_duration_s = 1e-3;
  geometry::ObstacleSpec obstacles{};
  channel::ChannelConfig channel{};
  phy::SignalConfig signal{};
  int active_antennas = 1;
  geometry::Point3 wpt_position{0.0, 0.0, geometry::kTerminalHeight};
  std::uint64_t total_info_bits = 0;
  bool noiseless = false;
  std::vector<EhSpec> ehs;
  std::vector<IrSpec> irs;
  std::vector<EveSpec> eves;
  std::vector<FaultEvent> faults;

  NodeId eh_id(std::size_t i) const { return static_cast<NodeId>(1 + i); }
  NodeId ir_id(std::size_t i) const { return static_cast<NodeId>(1 + ehs.size() + i); }
  NodeId eve_id(std::size_t i) const { return static_cast<NodeId>(1 + ehs.size() + irs.size() + i); }
  std::size_t node_count() const { return 1 + ehs.size() + irs.size() + eves.size(); }

  /// Throws one ValidationError naming every offending field.
  void validate() const {
    std::vector<std::string> bad;
    auto check = [&](bool ok, const std::string& field) {
      if (!ok) bad.push_back(field);
    };
    auto nested = [&](auto&& v, const std::string& field) {
      try {
        v();
      } catch (const ValidationError& e) {
        bad.push_back(field + "." + e.field());
      }
    };
    check(frames >= 1, "frames");
    check(frame_duration_s > 0.0, "frame_duration_s");
    nested([&] { obstacles.validate(); }, "obstacles");
    nested([&] { channel.validate(); }, "channel");
    nested([&] { signal.validate(); }, "signal");
    check(channel.n_tx <= phy::kMaxAntennas, "channel.n_tx");
    check(active_antennas >= 1 && active_antennas <= channel.n_tx, "active_antennas");
    auto positive_distance = [&](const geometry::Point3& p) {
      return p.z >= 0.0 && geometry::distance(p, wpt_position) > 0.0;
    };
    check(wpt_position.z >= 0.0, "wpt_position.z");
    for (std::size_t i = 0; i < ehs.size(); ++i) check(positive_distance(ehs[i].position), "ehs[" + std::to_string(i) + "].position");
    for (std::size_t i = 0; i < irs.size(); ++i) {
      const auto tag = "irs[" + std::to_string(i) + "]";
      check(positive_distance(irs[i].position), tag + ".position");
      check(irs[i].rfi.requested_bits_per_frame >= 1, tag + ".rfi.requested_bits_per_frame");
      check(irs[i].rfi.pattern_update_period >= 1, tag + ".rfi.pattern_update_period");
      check(irs[i].estimation_error >= 0.0, tag + ".estimation_error");
    }
    for (std::size_t i = 0; i < eves.size(); ++i) {
      const auto tag = "eves[" + std::to_string(i) + "]";
      if (!eves[i].colocated_with_ir) check(positive_distance(eves[i].position), tag + ".position");
      check(!eves[i].colocated_with_ir || *eves[i].colocated_with_ir < irs.size(), tag + ".colocated_with_ir");
    }
    for (std::size_t i = 0; i < faults.size(); ++i)
      check(faults[i].reporter != kWptId && faults[i].reporter < node_count(), "faults[" + std::to_string(i) + "].reporter");
    if (!bad.empty()) {
      std::string joined;
      for (const auto& b : bad) joined += (joined.empty() ? "" : ", ") + b;
      throw ValidationError(joined, "invalid scenario");
    }
  }
};

struct TraceRecord {
  Frame frame = 0;
  NodeId node = 0;
  std::string node_label;
  std::string state_before;
  std::string event;
  std::string state_after;
  std::vector<MessageKind> emitted;
  double harvested_uw = 0.0;
  int bits_decoded = 0;
  std::optional<bool> detect_ok;
  std::optional<double> radiated_w;  // WPT only
};

inline constexpr std::string_view kTraceHeader =
    "frame,node,state_before,event,state_after,harvested_uW,bits_decoded,detect_ok";

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string trace_to_csv(std::span<const TraceRecord> records) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.frame) + ',' + r.node_label + ',' + r.state_before + ',' + r.event + ',' + r.state_after +
           ',' + format_number(r.harvested_uw) + ',' + std::to_string(r.bits_decoded) + ',' +
           (r.detect_ok ? (*r.detect_ok ? "1" : "0") : "") + '\n';
  }
  return out;
}

/// FNV-1a 64 over the bytes, as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct ReceiverSummary {
  NodeId id = 0;
  std::uint64_t bits_decoded = 0;
  std::uint64_t bits_correct = 0;
  std::uint64_t frames_decoded = 0;
  std::uint64_t frames_correct = 0;
  bool decoded_equals_seeded = false;  // contiguous from seq 0 and every block matches

  double bit_accuracy() const { return bits_decoded ? static_cast<double>(bits_correct) / bits_decoded : 0.0; }
  double pattern_error_rate() const {
    return frames_decoded ? 1.0 - static_cast<double>(frames_correct) / frames_decoded : 0.0;
  }
};

struct ScenarioSummary {
  std::uint64_t identification_entries = 0;
  std::uint64_t error_reports = 0;
  std::uint64_t seeded_frames = 0;  // distinct seqs radiated
  std::vector<double> eh_energy_j;
  std::vector<ReceiverSummary> irs;
  std::vector<ReceiverSummary> eves;
  std::vector<Frame> recovery_frames;  // per fault: frames until the WPT served again
  std::vector<std::string> violations;
};

struct ScenarioOutcome {
  std::vector<TraceRecord> trace;
  ScenarioSummary summary;

  std::string csv() const { return trace_to_csv(trace); }
  std::string hash() const { return fnv1a_hex(csv()); }
};

namespace detail {

inline ReceiverSummary summarize_receiver(const IrNode& node, std::uint64_t seed) {
  ReceiverSummary s;
  s.id = node.id;
  bool contiguous = true;
  std::uint64_t expect = 0;
  for (const auto& [seq, bits] : node.decoded) {
    const auto truth = payload_bits(seed, seq, static_cast<int>(bits.size()));
    std::uint64_t ok = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) ok += bits[i] == truth[i];
    s.bits_decoded += bits.size();
    s.bits_correct += ok;
    ++s.frames_decoded;
    s.frames_correct += ok == bits.size();
    contiguous = contiguous && seq == expect++;
  }
  s.decoded_equals_seeded = contiguous && s.frames_decoded > 0 && s.frames_correct == s.frames_decoded;
  return s;
}

}  // namespace detail

/// Runs a scenario to completion. Deterministic per (scenario, seed).
inline ScenarioOutcome run_scenario(const Scenario& sc, std::uint64_t seed) {
  sc.validate();
  const channel::ChannelModel model(sc.channel);
  const double noise_w = sc.noiseless ? 0.0 : channel::dbm_to_watts(channel::noise_power_dbm(sc.channel));
  const std::size_t n_nodes = sc.node_count();

  Rng field_rng = make_stream(seed, {streams::kField});
  const auto field = geometry::sample_field(sc.obstacles, field_rng);

  // Per-node link bookkeeping. link_of[i] is the id whose channel and noise
  // streams node i uses (colocated eavesdroppers share an IR's).
  std::vector<geometry::Point3> position(n_nodes, sc.wpt_position);
  std::vector<Frame> join(n_nodes, 0);
  std::vector<NodeId> link_of(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) link_of[i] = static_cast<NodeId>(i);
  std::vector<std::string> label(n_nodes, "WPT");
  for (std::size_t i = 0; i < sc.ehs.size(); ++i) {
    position[sc.eh_id(i)] = sc.ehs[i].position;
    join[sc.eh_id(i)] = sc.ehs[i].join_frame;
    label[sc.eh_id(i)] = "EH" + std::to_string(sc.eh_id(i));
  }
  for (std::size_t i = 0; i < sc.irs.size(); ++i) {
    position[sc.ir_id(i)] = sc.irs[i].position;
    join[sc.ir_id(i)] = sc.irs[i].join_frame;
    label[sc.ir_id(i)] = "IR" + std::to_string(sc.ir_id(i));
  }
  for (std::size_t i = 0; i < sc.eves.size(); ++i) {
    const NodeId id = sc.eve_id(i);
    label[id] = "EVE" + std::to_string(id);
    if (sc.eves[i].colocated_with_ir) {
      const NodeId ir = sc.ir_id(*sc.eves[i].colocated_with_ir);
      link_of[id] = ir;
      position[id] = position[ir];
    } else {
      position[id] = sc.eves[i].position;
    }
  }
  std::vector<bool> los(n_nodes, false);
  std::vector<double> shadow(n_nodes, 0.0);
  for (std::size_t i = 1; i < n_nodes; ++i) {
    const NodeId l = link_of[i];
    los[i] = !geometry::is_blocked(field, sc.wpt_position, position[l]);
    Rng srng = make_stream(seed, {streams::kShadow, l});
    shadow[i] = channel::sample_shadowing(sc.channel, srng);
  }

  WptNode wpt;
  const WptConfig wpt_cfg{sc.channel.n_tx, sc.active_antennas, sc.signal.total_power_w(), sc.signal.phase_resolution_bits,
                          sc.total_info_bits};
  std::vector<EhNode> ehs(sc.ehs.size());
  for (std::size_t i = 0; i < ehs.size(); ++i) ehs[i].id = sc.eh_id(i);
  std::vector<IrNode> irs(sc.irs.size());
  for (std::size_t i = 0; i < irs.size(); ++i) {
    irs[i].id = sc.ir_id(i);
    irs[i].rfi = sc.irs[i].rfi;
    irs[i].stop_frame = sc.irs[i].stop_frame;
  }
  std::vector<IrNode> eves(sc.eves.size());
  for (std::size_t i = 0; i < eves.size(); ++i) {
    eves[i].id = sc.eve_id(i);
    eves[i].eavesdropper = true;
  }

  ScenarioOutcome out;
  std::vector<std::vector<ProtocolMessage>> pending(n_nodes);
  std::vector<Frame> open_faults;

  auto present = [&](std::size_t id, Frame f) { return id == kWptId || f >= join[id]; };

  for (Frame f = 0; f < sc.frames; ++f) {
    // Deliver.
    std::vector<std::vector<ProtocolMessage>> inbox(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
      if (present(i, f)) inbox[i] = std::move(pending[i]);
      pending[i].clear();
    }
    for (const auto& fault : sc.faults) {
      if (fault.frame != f) continue;
      for (auto& box : inbox)
        std::erase_if(box, [](const ProtocolMessage& m) { return m.kind == MessageKind::SeedFrame; });
      ErrorPayload err;
      for (const auto& ir : irs)
        if (ir.id == fault.reporter && !ir.decoded.empty()) err.last_good_seq = ir.decoded.rbegin()->first;
      inbox[kWptId].push_back(ProtocolMessage{MessageKind::ErrorReport, fault.reporter, kWptId, f, err});
      ++out.summary.error_reports;
      open_faults.push_back(f);
    }
    for (auto& box : inbox) sort_inbox(box);

    // Channels for this frame.
    std::vector<std::optional<channel::ChannelRealization>> ch(n_nodes);
    for (std::size_t i = 1; i < n_nodes; ++i) {
      if (!present(i, f)) continue;
      const NodeId l = link_of[i];
      Rng frng = make_stream(seed, {streams::kFading, l, f});
      ch[i] = model.draw({sc.wpt_position, position[l], 0.0}, los[i], frng, shadow[i]);
    }
    auto noise_sample = [&](std::size_t id) {
      Rng nrng = make_stream(seed, {streams::kNoise, link_of[id], f});
      return noise_w > 0.0 ? complex_normal(nrng, noise_w) : phy::Complex{};
    };

    // WPT.
    const channel::CVector* primary_eh = nullptr;
    for (NodeId eh : wpt.ehs)
      if (ch[eh]) {
        primary_eh = &ch[eh]->h;
        break;
      }
    const WptState wpt_before = wpt.state;
    auto wr = wpt_step(wpt, inbox[kWptId], f, WptContext{wpt_cfg, primary_eh, seed});
    for (auto& v : wr.violations) out.summary.violations.push_back("frame " + std::to_string(f) + ": " + v);
    if (wr.node.state == WptState::Identification &&
        (wpt_before != WptState::Identification ||
         std::any_of(inbox[kWptId].begin(), inbox[kWptId].end(),
                     [](const auto& m) { return m.kind == MessageKind::ErrorReport; })))
      ++out.summary.identification_entries;
    if (wr.seeded_seq) out.summary.seeded_frames = std::max(out.summary.seeded_frames, *wr.seeded_seq + 1);
    if (!open_faults.empty() && (wr.node.state == WptState::InfoSeeding ||
                                 (wr.node.state == WptState::PowerTransfer && !wr.node.session))) {
      for (Frame start : open_faults) out.summary.recovery_frames.push_back(f - start);
      open_faults.clear();
    }
    wpt = std::move(wr.node);
    {
      TraceRecord rec;
      rec.frame = f;
      rec.node = kWptId;
      rec.node_label = label[kWptId];
      rec.state_before = to_string(wpt_before);
      rec.event = wr.event;
      rec.state_after = to_string(wpt.state);
      for (const auto& m : wr.outbox) rec.emitted.push_back(m.kind);
      if (wr.tx) rec.radiated_w = wr.tx->squaredNorm();
      out.trace.push_back(std::move(rec));
    }

    // The medium: expand beacons, attach per-receiver observations to seeds.
    std::vector<phy::Complex> an(n_nodes);
    for (std::size_t i = 0; i < irs.size(); ++i) {
      const NodeId id = irs[i].id;
      if (present(id, f) && irs[i].rfi.an_enabled) {
        Rng arng = make_stream(seed, {streams::kArtificialNoise, id, f});
        an[id] = phy::an_waveform_sample(sc.signal, arng);
      }
    }
    auto observe = [&](std::size_t id, const channel::CVector& x, bool own_an) {
      SeedObservation obs;
      obs.y = phy::inner(ch[id]->h, x) + noise_sample(id);
      for (std::size_t j = 0; j < irs.size(); ++j) {
        const NodeId ir = irs[j].id;
        if (an[ir] == phy::Complex{}) continue;
        if (own_an && ir == id) {
          obs.y = phy::an_mask(obs.y, an[ir]);  // self-interference before cancellation
          obs.an_sample = an[ir];
        } else if (!own_an) {
          obs.y = phy::an_mask(obs.y, an[ir]);
        }
      }
      obs.h_estimate = ch[id]->h;
      return obs;
    };
    for (auto& m : wr.outbox) {
      if (m.kind == MessageKind::PowerBeacon) {
        for (std::size_t i = 1; i < n_nodes; ++i) {
          ProtocolMessage copy = m;
          copy.receiver = static_cast<NodeId>(i);
          pending[i].push_back(std::move(copy));
        }
      } else if (m.kind == MessageKind::SeedFrame) {
        const auto& seed_payload = std::get<SeedPayload>(m.payload);
        if (present(m.receiver, f)) {
          ProtocolMessage copy = m;
          auto obs = observe(m.receiver, *wr.tx, true);
          const auto ir_it = std::find_if(irs.begin(), irs.end(), [&](const IrNode& n) { return n.id == m.receiver; });
          const auto& spec = sc.irs[static_cast<std::size_t>(ir_it - irs.begin())];
          if (spec.estimation_error > 0.0) {
            Rng erng = make_stream(seed, {streams::kEstimate, m.receiver, f});
            const double var = spec.estimation_error * obs.h_estimate.squaredNorm() / obs.h_estimate.size();
            for (Eigen::Index a = 0; a < obs.h_estimate.size(); ++a) obs.h_estimate[a] += complex_normal(erng, var);
          }
          std::get<SeedPayload>(copy.payload).observation = std::move(obs);
          pending[m.receiver].push_back(std::move(copy));
        }
        for (const auto& e : eves) {
          if (!present(e.id, f)) continue;
          ProtocolMessage copy = m;
          copy.receiver = e.id;
          SeedPayload p = seed_payload;
          p.observation = observe(e.id, *wr.tx, false);
          copy.payload = std::move(p);
          pending[e.id].push_back(std::move(copy));
        }
      } else {
        pending[m.receiver].push_back(m);
      }
    }

    // EHs.
    for (auto& eh : ehs) {
      if (!present(eh.id, f)) continue;
      const EhState before = eh.state;
      const double p_rx = wr.tx ? phy::harvested_power(ch[eh.id]->h, *wr.tx).watts : 0.0;
      auto er = eh_step(eh, inbox[eh.id], f, EhContext{p_rx, sc.frame_duration_s});
      eh = er.node;
      TraceRecord rec;
      rec.frame = f;
      rec.node = eh.id;
      rec.node_label = label[eh.id];
      rec.state_before = to_string(before);
      rec.event = er.event;
      rec.state_after = to_string(eh.state);
      for (const auto& m : er.outbox) {
        rec.emitted.push_back(m.kind);
        pending[m.receiver].push_back(m);
      }
      rec.harvested_uw = er.energy_increment_j > 0.0 ? p_rx * 1e6 : 0.0;
      out.trace.push_back(std::move(rec));
    }

    // IRs, then eavesdroppers.
    auto step_receiver = [&](IrNode& node) {
      if (!present(node.id, f)) return;
      const IrState before = node.state;
      const channel::CVector* now = ch[node.id] ? &ch[node.id]->h : nullptr;
      auto rr = ir_step(node, inbox[node.id], f, IrContext{now, &sc.signal});
      node = std::move(rr.node);
      TraceRecord rec;
      rec.frame = f;
      rec.node = node.id;
      rec.node_label = label[node.id];
      rec.state_before = to_string(before);
      rec.event = rr.event;
      rec.state_after = to_string(node.state);
      for (const auto& m : rr.outbox) {
        rec.emitted.push_back(m.kind);
        pending[m.receiver].push_back(m);
      }
      if (rr.decoded) {
        const auto& [seq, bits] = *rr.decoded;
        rec.bits_decoded = static_cast<int>(bits.size());
        rec.detect_ok = bits == payload_bits(seed, seq, static_cast<int>(bits.size()));
      }
      out.trace.push_back(std::move(rec));
    };
    for (auto& ir : irs) step_receiver(ir);
    for (auto& e : eves) step_receiver(e);
  }

  for (const auto& eh : ehs) out.summary.eh_energy_j.push_back(eh.energy_j);
  for (const auto& ir : irs) out.summary.irs.push_back(detail::summarize_receiver(ir, seed));
  for (const auto& e : eves) out.summary.eves.push_back(detail::summarize_receiver(e, seed));
  return out;
}

/// One EH at 1 m and one IR at 20 m that joins at frame 10 and asks for
/// 6 bits per frame with a keyed remap every 10 seeding frames.
inline Scenario golden_scenario() {
  Scenario sc;
  sc.frames = 200;
  sc.ehs.push_back(EhSpec{});
  IrSpec ir;
  ir.join_frame = 10;
  ir.rfi.requested_bits_per_frame = 6;
  ir.rfi.pattern_update_period = 10;
  ir.rfi.remap_key = 0x1F2E3D4C5B6A7988ULL;
  sc.irs.push_back(ir);
  return sc;
}

inline constexpr std::uint64_t kGoldenSeed = 20240601;

}  // namespace ihsim::protocol
