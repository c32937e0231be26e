#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <sstream>

#include "ihsim/protocol.hpp"

using namespace ihsim;
using namespace ihsim::protocol;

namespace {

std::vector<const TraceRecord*> records_of(const ScenarioOutcome& out, NodeId node) {
  std::vector<const TraceRecord*> r;
  for (const auto& rec : out.trace)
    if (rec.node == node) r.push_back(&rec);
  return r;
}

Scenario quiet_scenario() {
  Scenario sc = golden_scenario();
  sc.noiseless = true;
  return sc;
}

WptConfig small_wpt() {
  WptConfig c;
  c.n_tx = 8;
  c.active_antennas = 2;
  return c;
}

ProtocolMessage msg(MessageKind k, NodeId from, Frame f = 0) { return {k, from, kWptId, f, std::monostate{}}; }

std::string read_golden_hash() {
  std::ifstream in(std::string(IHSIM_GOLDEN_DIR) + "/protocol_trace.fnv");
  std::string h;
  in >> h;
  return h;
}

}  // namespace

TEST(WptStep, IdleToIdentificationOnPowerRequest) {
  const auto cfg = small_wpt();
  const std::vector inbox{msg(MessageKind::PowerRequest, 1)};
  const auto r = wpt_step(WptNode{}, inbox, 1, {cfg});
  EXPECT_EQ(r.node.state, WptState::Identification);
  ASSERT_FALSE(r.outbox.empty());
  EXPECT_EQ(r.outbox.front().kind, MessageKind::IdentExchange);
  EXPECT_EQ(r.outbox.front().receiver, 1U);
}

TEST(WptStep, PowerTransferToInfoSeedingOnRfi) {
  const auto cfg = small_wpt();
  WptNode n;
  n.state = WptState::PowerTransfer;
  n.ehs = {1};
  RfiPayload rfi;
  rfi.requested_bits_per_frame = 3;
  rfi.pattern_update_period = 4;
  rfi.remap_key = 99;
  const std::vector inbox{ProtocolMessage{MessageKind::Rfi, 2, kWptId, 5, rfi}};
  const auto r = wpt_step(n, inbox, 6, {cfg});
  EXPECT_EQ(r.node.state, WptState::InfoSeeding);
  ASSERT_TRUE(r.node.codebook.has_value());
  EXPECT_EQ(r.node.codebook->bits_per_use(), 3);
  EXPECT_EQ(r.node.codebook->k(), 2);
  ASSERT_TRUE(r.seeded_seq.has_value());
  EXPECT_EQ(*r.seeded_seq, 0U);
}

TEST(WptStep, RfiCappedAtCodebookCapacity) {
  auto cfg = small_wpt();
  WptNode n;
  n.state = WptState::PowerTransfer;
  RfiPayload rfi;
  rfi.requested_bits_per_frame = 40;
  const std::vector inbox{ProtocolMessage{MessageKind::Rfi, 2, kWptId, 0, rfi}};
  const auto r = wpt_step(n, inbox, 1, {cfg});
  ASSERT_TRUE(r.node.codebook.has_value());
  EXPECT_EQ(r.node.codebook->bits_per_use(), 4);  // C(8,2) = 28
}

TEST(WptStep, RfiWithoutCapacityIsRejected) {
  auto cfg = small_wpt();
  cfg.active_antennas = 8;
  WptNode n;
  n.state = WptState::PowerTransfer;
  const std::vector inbox{ProtocolMessage{MessageKind::Rfi, 2, kWptId, 0, RfiPayload{}}};
  const auto r = wpt_step(n, inbox, 1, {cfg});
  EXPECT_EQ(r.node.state, WptState::PowerTransfer);
  EXPECT_FALSE(r.violations.empty());
}

TEST(WptStep, ErrorReportRestartsIdentificationAndRewinds) {
  const auto cfg = small_wpt();
  WptNode n;
  n.state = WptState::PowerTransfer;
  n.ehs = {1};
  const std::vector rfi{ProtocolMessage{MessageKind::Rfi, 2, kWptId, 0, RfiPayload{}}};
  n = wpt_step(n, rfi, 1, {cfg}).node;
  for (Frame f = 2; f < 6; ++f) n = wpt_step(n, {}, f, {cfg}).node;
  ASSERT_EQ(n.session->next_seq, 5U);

  const std::vector err{ProtocolMessage{MessageKind::ErrorReport, 2, kWptId, 6, ErrorPayload{2}}};
  const auto r = wpt_step(n, err, 6, {cfg});
  EXPECT_EQ(r.node.state, WptState::Identification);
  EXPECT_EQ(r.node.session->next_seq, 3U);
  EXPECT_EQ(std::count_if(r.outbox.begin(), r.outbox.end(),
                          [](const auto& m) { return m.kind == MessageKind::IdentExchange; }),
            1);

  // Ack brings power transfer back, and seeding resumes on the next frame.
  auto n2 = wpt_step(r.node, std::vector{msg(MessageKind::ConfigAck, 1)}, 7, {cfg}).node;
  EXPECT_EQ(n2.state, WptState::PowerTransfer);
  const auto resumed = wpt_step(n2, {}, 8, {cfg});
  EXPECT_EQ(resumed.node.state, WptState::InfoSeeding);
  EXPECT_EQ(*resumed.seeded_seq, 3U);
}

TEST(WptStep, UnexpectedMessageIsLoggedAndIgnored) {
  const auto cfg = small_wpt();
  WptNode n;
  n.state = WptState::PowerTransfer;
  const std::vector inbox{msg(MessageKind::SeedFrame, 3)};
  const auto r = wpt_step(n, inbox, 2, {cfg});
  EXPECT_EQ(r.node.state, WptState::PowerTransfer);
  ASSERT_EQ(r.violations.size(), 1U);
}

TEST(WptStep, StopInfoReturnsToPowerTransfer) {
  const auto cfg = small_wpt();
  WptNode n;
  n.state = WptState::PowerTransfer;
  n = wpt_step(n, std::vector{ProtocolMessage{MessageKind::Rfi, 2, kWptId, 0, RfiPayload{}}}, 1, {cfg}).node;
  ASSERT_EQ(n.state, WptState::InfoSeeding);
  const auto r = wpt_step(n, std::vector{msg(MessageKind::StopInfo, 2)}, 2, {cfg});
  EXPECT_EQ(r.node.state, WptState::PowerTransfer);
  EXPECT_FALSE(r.node.session.has_value());
}

TEST(WptStep, RemapSynchronyWithKeyedReceiver) {
  const auto cfg = small_wpt();
  RfiPayload rfi;
  rfi.requested_bits_per_frame = 4;
  rfi.pattern_update_period = 3;
  rfi.remap_key = 0xABCDEF;
  WptNode n;
  n.state = WptState::PowerTransfer;
  n = wpt_step(n, std::vector{ProtocolMessage{MessageKind::Rfi, 2, kWptId, 0, rfi}}, 1, {cfg}).node;
  const auto base = phy::build_codebook(cfg.n_tx, cfg.active_antennas, 4);
  for (std::uint64_t seq = 0; seq < 20; ++seq) {
    const auto ir_cb = phy::remap_codebook(base, rfi.remap_key, seq, rfi.pattern_update_period);
    EXPECT_EQ(n.codebook->permutation(), ir_cb.permutation()) << "seq " << seq;
    n = wpt_step(n, {}, 2 + seq, {cfg}).node;
  }
}

TEST(EhStep, HandshakeSequence) {
  EhNode eh;
  auto r = eh_step(eh, {}, 0, {});
  EXPECT_EQ(r.node.state, EhState::Requesting);
  ASSERT_EQ(r.outbox.size(), 1U);
  EXPECT_EQ(r.outbox[0].kind, MessageKind::PowerRequest);
  r = eh_step(r.node, std::vector{ProtocolMessage{MessageKind::IdentExchange, 0, 1, 1, {}}}, 2, {});
  EXPECT_EQ(r.node.state, EhState::Configuring);
  EXPECT_EQ(r.outbox[0].kind, MessageKind::ConfigAck);
  r = eh_step(r.node, std::vector{ProtocolMessage{MessageKind::PowerBeacon, 0, 1, 2, {}}}, 3, {1e-3, 1e-3});
  EXPECT_EQ(r.node.state, EhState::Harvesting);
  EXPECT_DOUBLE_EQ(r.energy_increment_j, 1e-6);
}

TEST(IrStep, SensingToEstimatingToRfiSent) {
  IrNode ir;
  const channel::CVector h = channel::CVector::Ones(4);
  auto r = ir_step(ir, std::vector{ProtocolMessage{MessageKind::PowerBeacon, 0, 2, 0, {}}}, 1, {&h});
  EXPECT_EQ(r.node.state, IrState::Estimating);
  EXPECT_TRUE(r.node.channel_estimate.has_value());
  r = ir_step(r.node, {}, 2, {&h});
  EXPECT_EQ(r.node.state, IrState::RfiSent);
  ASSERT_EQ(r.outbox.size(), 1U);
  EXPECT_EQ(r.outbox[0].kind, MessageKind::Rfi);
}

TEST(Scenario, EmptyScenarioStaysIdle) {
  Scenario sc;
  sc.frames = 50;
  const auto out = run_scenario(sc, 1);
  ASSERT_EQ(out.trace.size(), 50U);
  for (const auto& r : out.trace) {
    EXPECT_EQ(r.state_after, "Idle");
    EXPECT_FALSE(r.radiated_w.has_value());
  }
}

TEST(Scenario, ValidationListsOffendingFields) {
  Scenario sc = golden_scenario();
  sc.obstacles.ocr = 1.5;
  sc.irs[0].rfi.pattern_update_period = 0;
  sc.active_antennas = 0;
  try {
    run_scenario(sc, 1);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string f = e.field();
    EXPECT_NE(f.find("obstacles.obstacle.cover_ratio"), std::string::npos) << f;
    EXPECT_NE(f.find("irs[0].rfi.pattern_update_period"), std::string::npos) << f;
    EXPECT_NE(f.find("active_antennas"), std::string::npos) << f;
  }
}

TEST(Scenario, GoldenHandshakeCompletesInThreeFrames) {
  const auto out = run_scenario(golden_scenario(), kGoldenSeed);
  const auto eh = records_of(out, 1);
  ASSERT_EQ(eh[0]->state_after, "Requesting");
  std::size_t harvesting = 0;
  while (eh[harvesting]->state_after != "Harvesting") ++harvesting;
  EXPECT_EQ(harvesting, 3U);
}

TEST(Scenario, EnergyStrictlyIncreasesWhileHarvesting) {
  const auto out = run_scenario(golden_scenario(), kGoldenSeed);
  for (const auto* r : records_of(out, 1)) {
    if (r->state_before == "Harvesting" && r->state_after == "Harvesting") {
      EXPECT_GT(r->harvested_uw, 0.0) << "frame " << r->frame;
    }
  }
  EXPECT_GT(out.summary.eh_energy_j.at(0), 0.0);
}

TEST(Scenario, GoldenTraceHash) {
  const auto out = run_scenario(golden_scenario(), kGoldenSeed);
  const auto golden = read_golden_hash();
  ASSERT_FALSE(golden.empty()) << "missing golden file";
  EXPECT_EQ(out.hash(), golden);
}

TEST(Scenario, SameSeedIdenticalTrace) {
  const auto a = run_scenario(golden_scenario(), 77);
  const auto b = run_scenario(golden_scenario(), 77);
  EXPECT_EQ(a.csv(), b.csv());
  const auto c = run_scenario(golden_scenario(), 78);
  EXPECT_NE(a.csv(), c.csv());
}

TEST(Scenario, RfiLeadsToHarvestingInfoWithinThreeFrames) {
  const auto out = run_scenario(golden_scenario(), kGoldenSeed);
  const auto ir = records_of(out, 2);
  std::optional<Frame> rfi, harvesting;
  for (const auto* r : ir) {
    if (!rfi && std::find(r->emitted.begin(), r->emitted.end(), MessageKind::Rfi) != r->emitted.end()) rfi = r->frame;
    if (!harvesting && r->state_after == "HarvestingInfo") harvesting = r->frame;
  }
  ASSERT_TRUE(rfi && harvesting);
  EXPECT_LE(*harvesting - *rfi, 3U);
}

TEST(Scenario, PowerRequestLeadsToHarvestingWithinFiveFrames) {
  Scenario sc = golden_scenario();
  sc.ehs.push_back(EhSpec{{2.0, 1.0, geometry::kTerminalHeight}, 40});
  const auto out = run_scenario(sc, 5);
  for (NodeId id : {NodeId{1}, NodeId{2}}) {
    const auto eh = records_of(out, id);
    const Frame start = eh.front()->frame;
    const auto it = std::find_if(eh.begin(), eh.end(), [](const auto* r) { return r->state_after == "Harvesting"; });
    ASSERT_NE(it, eh.end());
    EXPECT_LE((*it)->frame - start, 5U) << "EH " << id;
  }
}

TEST(Scenario, InfoSeedingRequiresPriorRfi) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto out = run_scenario(golden_scenario(), seed);
    bool rfi_seen = false;
    for (const auto& r : out.trace) {
      if (r.node == kWptId && r.event.find("RFI@") != std::string::npos) rfi_seen = true;
      if (r.node == kWptId && r.state_after == "InfoSeeding") {
        EXPECT_TRUE(rfi_seen) << "frame " << r.frame;
      }
    }
    EXPECT_TRUE(rfi_seen);
  }
}

TEST(Scenario, RadiatedPowerIdenticalAcrossModes) {
  const auto out = run_scenario(golden_scenario(), kGoldenSeed);
  std::optional<double> transfer, seeding;
  for (const auto* r : records_of(out, kWptId)) {
    if (!r->radiated_w) continue;
    if (r->state_after == "PowerTransfer") transfer = *r->radiated_w;
    if (r->state_after == "InfoSeeding") {
      seeding = *r->radiated_w;
      ASSERT_TRUE(transfer.has_value());
      // Same per-antenna allocation; only the rounding of |exp(j phi)|^2 differs.
      EXPECT_NEAR(*seeding, *transfer, 4 * std::numeric_limits<double>::epsilon() * *transfer);
    }
  }
  EXPECT_TRUE(transfer && seeding);
}

TEST(Scenario, EhObliviousToInformationReceiver) {
  Scenario with_ir = golden_scenario();
  Scenario without_ir = golden_scenario();
  without_ir.irs.clear();
  for (std::uint64_t seed : {std::uint64_t{1}, std::uint64_t{2}, kGoldenSeed}) {
    const auto a = run_scenario(with_ir, seed);
    const auto b = run_scenario(without_ir, seed);
    const auto ea = records_of(a, 1);
    const auto eb = records_of(b, 1);
    ASSERT_EQ(ea.size(), eb.size());
    for (std::size_t i = 0; i < ea.size(); ++i) {
      EXPECT_EQ(ea[i]->state_before, eb[i]->state_before);
      EXPECT_EQ(ea[i]->event, eb[i]->event);
      EXPECT_EQ(ea[i]->state_after, eb[i]->state_after);
      EXPECT_EQ(ea[i]->emitted, eb[i]->emitted);
    }
  }
}

TEST(Scenario, ZeroNoiseDecodedEqualsSeeded) {
  const auto out = run_scenario(quiet_scenario(), 3);
  const auto& ir = out.summary.irs.at(0);
  EXPECT_GT(ir.frames_decoded, 100U);
  EXPECT_TRUE(ir.decoded_equals_seeded);
  EXPECT_EQ(ir.bits_correct, ir.bits_decoded);
}

TEST(Scenario, DecodedEqualsSeededAcrossRemapEpochs) {
  Scenario sc = quiet_scenario();
  sc.irs[0].rfi.pattern_update_period = 10;
  const auto out = run_scenario(sc, 11);
  const auto& ir = out.summary.irs.at(0);
  EXPECT_GT(ir.frames_decoded, 30U);  // several epochs
  EXPECT_TRUE(ir.decoded_equals_seeded);
}

TEST(Scenario, EachErrorReportAddsOneIdentificationEntry) {
  Scenario sc = quiet_scenario();
  const auto base = run_scenario(sc, 9).summary.identification_entries;
  sc.faults = {{40, 2}, {90, 1}, {140, 2}};
  const auto out = run_scenario(sc, 9);
  EXPECT_EQ(out.summary.identification_entries, base + 3);
  EXPECT_EQ(out.summary.error_reports, 3U);
  EXPECT_EQ(out.summary.recovery_frames.size(), 3U);
  EXPECT_TRUE(out.summary.irs.at(0).decoded_equals_seeded);
}

TEST(Scenario, IdentificationReenteredAfterEveryErrorReport) {
  Scenario sc = quiet_scenario();
  sc.faults = {{30, 2}, {31, 1}, {100, 2}};
  const auto out = run_scenario(sc, 4);
  for (const auto* r : records_of(out, kWptId)) {
    if (r->event.find("ErrorReport") != std::string::npos) {
      EXPECT_EQ(r->state_after, "Identification") << "frame " << r->frame;
    }
  }
  EXPECT_TRUE(out.summary.irs.at(0).decoded_equals_seeded);
}

TEST(Scenario, RetransmittedFramesRedecodeIdentically) {
  Scenario sc = quiet_scenario();
  const auto clean = run_scenario(sc, 21);
  sc.faults = {{60, 2}};
  const auto faulty = run_scenario(sc, 21);
  // Same source stream per seq, so every block decoded in both runs matches.
  const auto& a = clean.summary.irs.at(0);
  const auto& b = faulty.summary.irs.at(0);
  EXPECT_TRUE(a.decoded_equals_seeded);
  EXPECT_TRUE(b.decoded_equals_seeded);
  EXPECT_LT(b.frames_decoded, a.frames_decoded);
}

TEST(Scenario, ColocatedEavesdropperWithoutDefencesMatchesIr) {
  Scenario sc = golden_scenario();
  sc.irs[0].rfi.pattern_update_period = phy::kNoRemap;
  sc.eves.push_back(EveSpec{{}, 0});
  const auto out = run_scenario(sc, 13);
  const auto& ir = out.summary.irs.at(0);
  const auto& eve = out.summary.eves.at(0);
  EXPECT_EQ(ir.bits_decoded, eve.bits_decoded);
  EXPECT_EQ(ir.bits_correct, eve.bits_correct);
}

TEST(Scenario, KeylessEavesdropperAtRemapPeriodOneIsAtChance) {
  Scenario sc = quiet_scenario();
  sc.frames = 2000;
  sc.irs[0].rfi.pattern_update_period = 1;
  sc.eves.push_back(EveSpec{{}, 0});
  const auto out = run_scenario(sc, 17);
  const auto& eve = out.summary.eves.at(0);
  ASSERT_GE(eve.bits_decoded, 10000U);
  EXPECT_NEAR(eve.bit_accuracy(), 0.5, 0.02);
  EXPECT_TRUE(out.summary.irs.at(0).decoded_equals_seeded);
}

TEST(Trace, CsvHeaderAndFormatting) {
  TraceRecord r;
  r.frame = 3;
  r.node_label = "EH1";
  r.state_before = "Configuring";
  r.event = "PowerBeacon@0";
  r.state_after = "Harvesting";
  r.harvested_uw = 12.3456789;
  r.detect_ok = true;
  const auto csv = trace_to_csv(std::vector{r});
  EXPECT_EQ(csv, std::string(kTraceHeader) + "\n3,EH1,Configuring,PowerBeacon@0,Harvesting,12.3457,0,1\n");
}

TEST(Trace, FnvKnownVectors) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}
