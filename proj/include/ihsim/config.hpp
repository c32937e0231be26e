#pragma once

// Experiment configuration: flat dotted JSON keys, defaults from the
// simulation parameter table, strict validation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "ihsim/channel.hpp"
#include "ihsim/errors.hpp"
#include "ihsim/geometry.hpp"
#include "ihsim/phy.hpp"

namespace ihsim::config {

enum class Experiment { Los, Harvest, Se, Protocol, Secrecy };

inline std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::Los: return "los";
    case Experiment::Harvest: return "harvest";
    case Experiment::Se: return "se";
    case Experiment::Protocol: return "protocol";
    case Experiment::Secrecy: return "secrecy";
  }
  return "?";
}

inline Experiment parse_experiment(const std::string& s) {
  for (auto e : {Experiment::Los, Experiment::Harvest, Experiment::Se, Experiment::Protocol, Experiment::Secrecy})
    if (to_string(e) == s) return e;
  throw ValidationError("experiment", "unknown experiment '" + s + "'");
}

struct ExperimentConfig {
  Experiment experiment = Experiment::Los;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> trials;  // absent: per-experiment default
  std::string output;

  geometry::ObstacleSpec obstacles{};
  channel::ChannelConfig channel{};
  phy::SignalConfig signal{};
  double d_info_m = 20.0;
  double d_energy_m = 1.0;

  // Sweep axes; absent means the experiment's default axis.
  std::optional<std::vector<double>> sweep_ocr;
  std::optional<std::vector<double>> sweep_d;
  std::optional<std::vector<int>> sweep_k;

  int harvest_patterns = 50;
  bool harvest_symmetric_los = false;

  bool se_symmetric_los = false;
  int mi_noise_draws = 16;

  std::uint64_t protocol_frames = 200;
  std::uint64_t protocol_runs = 20;
  std::vector<double> protocol_fault_rates{0.0, 0.005, 0.01, 0.02, 0.05};
  int protocol_active_antennas = 1;
  int protocol_bits_per_frame = 6;
  std::uint64_t protocol_remap_period = 10;  // 0: no remap
  std::uint64_t protocol_remap_key = 0x1F2E3D4C5B6A7988ULL;
  std::uint64_t protocol_ir_join_frame = 10;

  int secrecy_n_tx = 4;
  int secrecy_k = 1;
  double secrecy_snr_db = 30.0;
  std::vector<double> secrecy_an_over_noise_db{-channel::kInf, 0.0, 10.0, 20.0};
  std::vector<std::uint64_t> secrecy_remap_periods{0, 1, 10};  // 0: no remap
  bool secrecy_eve_colocated = true;
  std::uint64_t secrecy_remap_key = 0x5EC12E7ULL;

  /// Throws ValidationError naming the first offending key.
  void validate() const {
    obstacles.validate();
    channel.validate();
    signal.validate();
    if (channel.n_tx > phy::kMaxAntennas) throw ValidationError("wpt.n_tx", "must be <= 64");
    if (trials && *trials < 1) throw ValidationError("trials", "must be >= 1");
    if (!(d_info_m > 0.0)) throw ValidationError("geometry.d_info_m", "must be positive");
    if (!(d_energy_m > 0.0)) throw ValidationError("geometry.d_energy_m", "must be positive");
    if (sweep_ocr) {
      if (sweep_ocr->empty()) throw ValidationError("sweep.ocr", "must not be empty");
      for (std::size_t i = 0; i < sweep_ocr->size(); ++i) {
        const double o = (*sweep_ocr)[i];
        if (!(o >= 0.0 && o <= 0.9)) throw ValidationError("sweep.ocr[" + std::to_string(i) + "]", "must lie in [0, 0.9]");
      }
    }
    if (sweep_d) {
      if (sweep_d->empty()) throw ValidationError("sweep.d", "must not be empty");
      for (std::size_t i = 0; i < sweep_d->size(); ++i)
        if (!((*sweep_d)[i] > 0.0)) throw ValidationError("sweep.d[" + std::to_string(i) + "]", "must be positive");
    }
    if (sweep_k) {
      if (sweep_k->empty()) throw ValidationError("sweep.k", "must not be empty");
      for (std::size_t i = 0; i < sweep_k->size(); ++i) {
        const int k = (*sweep_k)[i];
        if (k < 1 || k > channel.n_tx) throw ValidationError("sweep.k[" + std::to_string(i) + "]", "must lie in [1, n_tx]");
      }
    }
    if (harvest_patterns < 1) throw ValidationError("harvest.patterns", "must be >= 1");
    if (mi_noise_draws < 1) throw ValidationError("mi.noise_draws", "must be >= 1");
    if (protocol_frames < 1) throw ValidationError("protocol.frames", "must be >= 1");
    if (protocol_runs < 1) throw ValidationError("protocol.runs", "must be >= 1");
    if (protocol_fault_rates.empty()) throw ValidationError("protocol.fault_rates", "must not be empty");
    for (double r : protocol_fault_rates)
      if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("protocol.fault_rates", "must lie in [0, 1]");
    if (protocol_active_antennas < 1 || protocol_active_antennas > channel.n_tx)
      throw ValidationError("protocol.active_antennas", "must lie in [1, n_tx]");
    if (protocol_bits_per_frame < 1) throw ValidationError("protocol.bits_per_frame", "must be >= 1");
    if (secrecy_n_tx < 1 || secrecy_n_tx > phy::kMaxAntennas) throw ValidationError("secrecy.n_tx", "must lie in [1, 64]");
    if (secrecy_k < 1 || secrecy_k > secrecy_n_tx) throw ValidationError("secrecy.k", "must lie in [1, n_tx]");
    if (phy::build_codebook(secrecy_n_tx, secrecy_k).bits_per_use() < 1)
      throw ValidationError("secrecy.k", "codebook carries no bits");
    if (!std::isfinite(secrecy_snr_db)) throw ValidationError("secrecy.snr_db", "must be finite");
    if (secrecy_an_over_noise_db.empty()) throw ValidationError("secrecy.an_over_noise_db", "must not be empty");
    for (double a : secrecy_an_over_noise_db)
      if (std::isnan(a) || a == channel::kInf) throw ValidationError("secrecy.an_over_noise_db", "must be finite or -inf");
    if (secrecy_remap_periods.empty()) throw ValidationError("secrecy.remap_periods", "must not be empty");
  }
};

namespace detail {

using nlohmann::json;

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};
template <class T>
struct is_optional : std::false_type {};
template <class T>
struct is_optional<std::optional<T>> : std::true_type {};

template <class T>
json encode(const T& v) {
  if constexpr (std::is_same_v<T, double>) {
    if (v == channel::kInf) return "inf";
    if (v == -channel::kInf) return "-inf";
    return v;
  } else if constexpr (is_optional<T>::value) {
    return v ? encode(*v) : json(nullptr);
  } else if constexpr (is_vector<T>::value) {
    json arr = json::array();
    for (const auto& item : v) arr.push_back(encode(item));
    return arr;
  } else {
    return v;
  }
}

template <class T>
T decode(const json& j, const std::string& key) {
  if constexpr (std::is_same_v<T, double>) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      if (s == "inf") return channel::kInf;
      if (s == "-inf") return -channel::kInf;
    }
    throw ValidationError(key, "expected a number, \"inf\" or \"-inf\"");
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) throw ValidationError(key, "expected true or false");
    return j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw ValidationError(key, "expected a string");
    return j.get<std::string>();
  } else if constexpr (std::is_unsigned_v<T>) {
    if (!j.is_number_unsigned()) throw ValidationError(key, "expected a non-negative integer");
    return j.get<T>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) throw ValidationError(key, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) throw ValidationError(key, "out of range");
    return static_cast<T>(v);
  } else if constexpr (is_optional<T>::value) {
    if (j.is_null()) return std::nullopt;
    return decode<typename T::value_type>(j, key);
  } else {
    static_assert(is_vector<T>::value);
    if (!j.is_array()) throw ValidationError(key, "expected a list");
    T out;
    for (std::size_t i = 0; i < j.size(); ++i)
      out.push_back(decode<typename T::value_type>(j[i], key + "[" + std::to_string(i) + "]"));
    return out;
  }
}

// Binds each key to a member; loads when `in` is set, saves when `out` is.
struct Binder {
  const json* in = nullptr;
  json* out = nullptr;
  std::vector<std::string> known;

  template <class T>
  void operator()(const std::string& key, T& v) {
    known.push_back(key);
    if (in) {
      if (const auto it = in->find(key); it != in->end()) v = decode<T>(*it, key);
    }
    if (out) (*out)[key] = encode(v);
  }
};

template <class F>
void bind_fields(ExperimentConfig& c, F& f) {
  f("seed", c.seed);
  f("trials", c.trials);
  f("output", c.output);

  f("obstacle.cover_ratio", c.obstacles.ocr);
  f("obstacle.radius_min_m", c.obstacles.radius_min);
  f("obstacle.radius_max_m", c.obstacles.radius_max);
  f("obstacle.height_min_m", c.obstacles.height_min);
  f("obstacle.height_max_m", c.obstacles.height_max);
  f("obstacle.area_width_m", c.obstacles.area.width);
  f("obstacle.area_depth_m", c.obstacles.area.depth);
  f("obstacle.end_caps", c.obstacles.end_caps);

  f("wpt.n_tx", c.channel.n_tx);
  f("wpt.total_power_dbm", c.signal.total_power_dbm);
  f("carrier.frequency_hz", c.channel.carrier_freq_hz);
  f("antenna.spacing_wavelengths", c.channel.element_spacing);
  f("antenna.array_gain_dbi", c.channel.array_gain_dbi);
  f("shadowing.sigma_db", c.channel.shadow_sigma_db);
  f("angle_offset.sigma_deg", c.channel.angle_offset_sigma_deg);
  f("channel.correlation", c.channel.corr_coeff);
  f("channel.rician_k_db", c.channel.rician_k_db);
  f("channel.noise_figure_db", c.channel.noise_figure_db);
  f("subcarrier.bandwidth_hz", c.channel.subcarrier_bw_hz);

  f("signal.phase_resolution_bits", c.signal.phase_resolution_bits);
  f("signal.an_power_dbm", c.signal.an_power_dbm);
  f("signal.si_residual_db", c.signal.si_residual_db);

  f("geometry.d_info_m", c.d_info_m);
  f("geometry.d_energy_m", c.d_energy_m);

  f("sweep.ocr", c.sweep_ocr);
  f("sweep.d", c.sweep_d);
  f("sweep.k", c.sweep_k);

  f("harvest.patterns", c.harvest_patterns);
  f("harvest.symmetric_los", c.harvest_symmetric_los);
  f("se.symmetric_los", c.se_symmetric_los);
  f("mi.noise_draws", c.mi_noise_draws);

  f("protocol.frames", c.protocol_frames);
  f("protocol.runs", c.protocol_runs);
  f("protocol.fault_rates", c.protocol_fault_rates);
  f("protocol.active_antennas", c.protocol_active_antennas);
  f("protocol.bits_per_frame", c.protocol_bits_per_frame);
  f("protocol.remap_period", c.protocol_remap_period);
  f("protocol.remap_key", c.protocol_remap_key);
  f("protocol.ir_join_frame", c.protocol_ir_join_frame);

  f("secrecy.n_tx", c.secrecy_n_tx);
  f("secrecy.k", c.secrecy_k);
  f("secrecy.snr_db", c.secrecy_snr_db);
  f("secrecy.an_over_noise_db", c.secrecy_an_over_noise_db);
  f("secrecy.remap_periods", c.secrecy_remap_periods);
  f("secrecy.eve_colocated", c.secrecy_eve_colocated);
  f("secrecy.remap_key", c.secrecy_remap_key);
}

}  // namespace detail

/// Parses JSON text. Absent keys keep their defaults; unknown keys are
/// rejected so typos cannot silently fall back to defaults.
inline ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    j = nlohmann::json::object();
  } else {
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError("config", std::string("malformed JSON: ") + e.what());
    }
  }
  if (!j.is_object()) throw ValidationError("config", "top level must be an object");

  ExperimentConfig c;
  if (auto it = j.find("experiment"); it != j.end()) {
    if (!it->is_string()) throw ValidationError("experiment", "expected a string");
    c.experiment = parse_experiment(it->get<std::string>());
  }
  detail::Binder b{&j, nullptr, {"experiment"}};
  detail::bind_fields(c, b);
  for (const auto& [key, value] : j.items())
    if (std::find(b.known.begin(), b.known.end(), key) == b.known.end()) throw ValidationError(key, "unknown key");
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string dump_config(ExperimentConfig c) {
  nlohmann::json j = nlohmann::json::object();
  j["experiment"] = to_string(c.experiment);
  detail::Binder b{nullptr, &j, {}};
  detail::bind_fields(c, b);
  return j.dump(2) + "\n";
}

inline void save_config(const ExperimentConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("output", "cannot write '" + path + "'");
  out << dump_config(c);
}

}  // namespace ihsim::config
