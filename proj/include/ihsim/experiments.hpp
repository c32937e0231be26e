#pragma once

// Seeded experiment runners. Each returns a rectangular table with one row
// per sweep point; every statistic carries a standard error column.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ihsim/channel.hpp"
#include "ihsim/config.hpp"
#include "ihsim/geometry.hpp"
#include "ihsim/phy.hpp"
#include "ihsim/protocol.hpp"
#include "ihsim/rng.hpp"

namespace ihsim::experiments {

using config::ExperimentConfig;

struct ExperimentResult {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::string> artifacts;  // suffix -> file contents

  std::size_t column(const std::string& c) const {
    const auto it = std::find(columns.begin(), columns.end(), c);
    if (it == columns.end()) throw std::out_of_range("no column " + c);
    return static_cast<std::size_t>(it - columns.begin());
  }
  double at(std::size_t row, const std::string& c) const { return rows.at(row).at(column(c)); }
};

/// CSV cell: 6 significant digits, empty for NaN, "inf"/"-inf" for infinities.
inline std::string format_cell(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string to_csv(const ExperimentResult& r) {
  std::string out;
  for (std::size_t i = 0; i < r.columns.size(); ++i) out += (i ? "," : "") + r.columns[i];
  out += '\n';
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_cell(row[i]);
    out += '\n';
  }
  return out;
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

namespace detail {

inline std::vector<double> range(double first, double last, double step) {
  std::vector<double> v;
  for (int i = 0; first + i * step <= last + 1e-9; ++i) v.push_back(std::round((first + i * step) * 1e9) / 1e9);
  return v;
}

inline std::vector<double> default_ocr_axis() { return range(0.0, 0.9, 0.1); }

inline geometry::Point3 at_distance(double d) { return {d, 0.0, geometry::kTerminalHeight}; }

inline channel::LinkGeometry link(double d) {
  return {{0.0, 0.0, geometry::kTerminalHeight}, at_distance(d), 0.0};
}

// Pure-LoS, zero-offset links: every antenna sees the same coefficient.
inline channel::ChannelConfig symmetric(channel::ChannelConfig c) {
  c.rician_k_db = channel::kInf;
  c.angle_offset_sigma_deg = 0.0;
  return c;
}

inline double std_dev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  // Shifted by the first value so identical inputs give exactly zero.
  double mean = 0.0;
  for (double x : v) mean += x - v[0];
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - v[0] - mean) * (x - v[0] - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// LoS probability against distance and cover ratio, closed form and sampled.
inline ExperimentResult exp_los(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto ocrs = cfg.sweep_ocr.value_or(detail::default_ocr_axis());
  const auto ds = cfg.sweep_d.value_or(detail::range(1.0, 20.0, 1.0));
  const std::uint64_t trials = cfg.trials.value_or(10000);

  ExperimentResult r{"los", {"ocr", "d", "p_los_analytic", "p_los_empirical", "se"}, {}, {}};
  r.rows.resize(ocrs.size() * ds.size());
  for (std::size_t i = 0; i < ocrs.size(); ++i) {
    auto spec = cfg.obstacles;
    spec.ocr = ocrs[i];
    for (std::size_t j = 0; j < ds.size(); ++j) {
      const auto est = geometry::p_los_empirical(spec, ds[j], trials, stream_id(cfg.seed, {streams::kField, i, j}),
                                                 geometry::kTerminalHeight);
      r.rows[i * ds.size() + j] = {ocrs[i], ds[j], geometry::p_los_analytic(spec, ds[j]), est.mean, est.se};
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

/// Harvested power for random equal-k patterns at fixed EH positions.
///
/// Realizations are shared by all patterns (and all k) at a distance; the
/// LoS state of realization t is u_t < p_los(ocr, d) with u_t common to every
/// cover ratio. Per pattern, the statistic is the mean over realizations of
/// the harvested power in dBm.
inline ExperimentResult exp_harvest(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto ocrs = cfg.sweep_ocr.value_or(std::vector<double>{cfg.obstacles.ocr});
  const auto ds = cfg.sweep_d.value_or(std::vector<double>{cfg.d_energy_m, cfg.d_info_m});
  const auto ks = cfg.sweep_k.value_or(std::vector<int>{1, 4, 16, 32});
  const std::uint64_t trials = cfg.trials.value_or(1000);
  const auto chan_cfg = cfg.harvest_symmetric_los ? detail::symmetric(cfg.channel) : cfg.channel;
  const channel::ChannelModel model(chan_cfg);
  const double p_w = cfg.signal.total_power_w();
  const int n = chan_cfg.n_tx;
  const auto n_pat = static_cast<std::size_t>(cfg.harvest_patterns);

  std::vector<std::vector<phy::ActivationPattern>> patterns(ks.size());
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    Rng prng = make_stream(cfg.seed, {streams::kPatterns, static_cast<std::uint64_t>(ks[ki])});
    for (std::size_t p = 0; p < n_pat; ++p) patterns[ki].push_back(phy::random_pattern(n, ks[ki], prng));
  }

  ExperimentResult r{"harvest",
                     {"ocr", "d", "k", "p_los", "mean_dbm", "mean_dbm_se", "spread_range_db", "spread_std_db",
                      "spread_std_se", "pattern_se_max_db"},
                     {},
                     {}};
  for (double ocr : ocrs) {
    auto spec = cfg.obstacles;
    spec.ocr = ocr;
    for (std::size_t di = 0; di < ds.size(); ++di) {
      const double p_los = cfg.harvest_symmetric_los ? 1.0 : geometry::p_los_analytic(spec, ds[di]);
      // dbm[t][ki][p]
      std::vector<std::vector<std::vector<double>>> dbm(trials);
      parallel_for(trials, [&](std::size_t t) {
        Rng urng = make_stream(cfg.seed, {streams::kField, di, t});
        const bool los = uniform01(urng) < p_los;
        Rng frng = make_stream(cfg.seed, {streams::kFading, di, t});
        const auto h = model.draw(detail::link(ds[di]), los, frng).h;
        auto& out = dbm[t];
        out.resize(ks.size());
        for (std::size_t ki = 0; ki < ks.size(); ++ki) {
          for (const auto& pat : patterns[ki]) {
            const auto phases = phy::cophase_weights(h, pat, cfg.signal.phase_resolution_bits);
            out[ki].push_back(phy::harvested_power(h, phy::tx_signal(pat, phases, p_w)).dbm);
          }
        }
      });
      for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        std::vector<double> pattern_means(n_pat);
        double se_max = 0.0;
        for (std::size_t p = 0; p < n_pat; ++p) {
          std::vector<double> column(trials);
          for (std::size_t t = 0; t < trials; ++t) column[t] = dbm[t][ki][p];
          const auto e = mean_and_se(column);
          pattern_means[p] = e.mean;
          se_max = std::max(se_max, e.se);
        }
        // Grand mean: average over patterns of the per-realization values.
        std::vector<double> per_realization(trials);
        for (std::size_t t = 0; t < trials; ++t) {
          double s = 0.0;
          for (double v : dbm[t][ki]) s += v;
          per_realization[t] = s / static_cast<double>(n_pat);
        }
        const auto grand = mean_and_se(per_realization);
        const auto [lo, hi] = std::minmax_element(pattern_means.begin(), pattern_means.end());
        const double sd = detail::std_dev(pattern_means);
        const double sd_se = n_pat > 1 ? sd / std::sqrt(2.0 * static_cast<double>(n_pat - 1)) : 0.0;
        r.rows.push_back({ocr, ds[di], static_cast<double>(ks[ki]), p_los, grand.mean, grand.se, *hi - *lo, sd, sd_se,
                          se_max});
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

/// Spectral efficiency at the IR against k and cover ratio.
///
/// The WPT cophases toward the EH (d_energy) and the IR (d_info) detects the
/// active pattern. LoS states use uniforms shared across cover ratios, so the
/// estimate at a higher cover ratio differs only on realizations that turned
/// NLoS. MI is estimated where the codebook has at most 2^16 entries; the
/// combinatorial fallback is log2 C(n,k) times the sampled fraction of
/// realizations with an NLoS IR link.
inline ExperimentResult exp_se(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto ocrs = cfg.sweep_ocr.value_or(detail::default_ocr_axis());
  const auto ks = cfg.sweep_k.value_or(std::vector<int>{1, 2, 4, 8, 16, 24, 32, 40, 48, 56, 62, 63, 64});
  const std::uint64_t trials = cfg.trials.value_or(1000);
  const auto chan_cfg = cfg.se_symmetric_los ? detail::symmetric(cfg.channel) : cfg.channel;
  const channel::ChannelModel model(chan_cfg);
  const int n = chan_cfg.n_tx;
  const double p_w = cfg.signal.total_power_w();
  const double n0 = channel::dbm_to_watts(channel::noise_power_dbm(chan_cfg));

  // LoS thresholds per realization and link, common to every cover ratio.
  std::vector<double> u_eh(trials), u_ir(trials);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng a = make_stream(cfg.seed, {streams::kField, 0, t});
    Rng b = make_stream(cfg.seed, {streams::kField, 1, t});
    u_eh[t] = uniform01(a);
    u_ir[t] = uniform01(b);
  }
  auto channel_of = [&](std::size_t link_id, std::size_t t, bool los, double d) {
    Rng rng = make_stream(cfg.seed, {streams::kFading, link_id, t});
    return model.draw(detail::link(d), los, rng).h;
  };

  std::vector<double> p_eh(ocrs.size()), p_ir(ocrs.size());
  for (std::size_t i = 0; i < ocrs.size(); ++i) {
    auto spec = cfg.obstacles;
    spec.ocr = ocrs[i];
    p_eh[i] = geometry::p_los_analytic(spec, cfg.d_energy_m);
    p_ir[i] = geometry::p_los_analytic(spec, cfg.d_info_m);
  }

  ExperimentResult r{"se",
                     {"ocr", "k", "se_combinatorial", "codebook_bits", "p_los_ir", "nlos_fraction", "mi_estimate",
                      "mi_se", "se_estimate", "se_estimate_se"},
                     {},
                     {}};
  std::vector<std::vector<double>> rows(ocrs.size() * ks.size());
  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    const int k = ks[ki];
    const auto cb = phy::build_codebook(n, k);
    const double comb = phy::se_bound_combinatorial(n, k);
    const bool with_mi = cb.size() <= phy::kMaxMiCodebook;

    // mi[t][state], state = 2*eh_los + ir_los; NaN until needed.
    std::vector<std::array<double, 4>> mi(trials);
    for (auto& m : mi) m.fill(kNaN);
    if (with_mi) {
      parallel_for(trials, [&](std::size_t t) {
        for (std::size_t i = 0; i < ocrs.size(); ++i) {
          const bool eh_los = u_eh[t] < p_eh[i];
          const bool ir_los = u_ir[t] < p_ir[i];
          const int state = 2 * eh_los + ir_los;
          if (!std::isnan(mi[t][state])) continue;
          const auto h_eh = channel_of(0, t, eh_los, cfg.d_energy_m);
          const auto h_ir = channel_of(1, t, ir_los, cfg.d_info_m);
          const auto phases = phy::cophase_all(h_eh, cfg.signal.phase_resolution_bits);
          const auto means = phy::constellation_means(h_ir, cb, phases, p_w);
          mi[t][state] = phy::mi_monte_carlo([&](Rng&) { return means; }, cb.size(), n0, 1,
                                             static_cast<std::size_t>(cfg.mi_noise_draws),
                                             stream_id(cfg.seed, {streams::kEstimate, static_cast<std::uint64_t>(k), t}))
                             .mean;
        }
      });
    }
    for (std::size_t i = 0; i < ocrs.size(); ++i) {
      std::vector<double> nlos(trials), per(trials);
      for (std::size_t t = 0; t < trials; ++t) {
        const bool eh_los = u_eh[t] < p_eh[i];
        const bool ir_los = u_ir[t] < p_ir[i];
        nlos[t] = ir_los ? 0.0 : 1.0;
        if (with_mi) per[t] = mi[t][2 * eh_los + ir_los];
      }
      const auto frac = mean_and_se(nlos);
      double mi_mean = kNaN, mi_se = kNaN, est = frac.mean * comb, est_se = frac.se * comb;
      if (with_mi) {
        const auto e = mean_and_se(per);
        mi_mean = e.mean;
        mi_se = e.se;
        est = e.mean;
        est_se = e.se;
      }
      rows[i * ks.size() + ki] = {ocrs[i], static_cast<double>(k), comb, static_cast<double>(cb.bits_per_use()), p_ir[i],
                                  frac.mean, mi_mean, mi_se, est, est_se};
    }
  }
  r.rows = std::move(rows);
  return r;
}

// ---------------------------------------------------------------------------

/// The protocol scenario a config describes: one EH at d_energy, one IR at
/// d_info joining at protocol.ir_join_frame.
inline protocol::Scenario scenario_from(const ExperimentConfig& cfg) {
  protocol::Scenario sc;
  sc.frames = cfg.protocol_frames;
  sc.obstacles = cfg.obstacles;
  sc.channel = cfg.channel;
  sc.signal = cfg.signal;
  sc.active_antennas = cfg.protocol_active_antennas;
  sc.ehs.push_back({detail::at_distance(cfg.d_energy_m), 0});
  protocol::IrSpec ir;
  ir.position = detail::at_distance(cfg.d_info_m);
  ir.join_frame = cfg.protocol_ir_join_frame;
  ir.rfi.requested_bits_per_frame = static_cast<std::uint32_t>(cfg.protocol_bits_per_frame);
  ir.rfi.pattern_update_period = cfg.protocol_remap_period == 0 ? phy::kNoRemap : cfg.protocol_remap_period;
  ir.rfi.remap_key = cfg.protocol_remap_key;
  sc.irs.push_back(ir);
  return sc;
}

/// Fault-injection sweep. Run 0 uses the master seed itself, so with the
/// default config and the golden seed its no-fault trace is the golden trace.
/// Faults hit each frame after the IR joins with the row's probability; the
/// reporter is the IR or the EH with equal odds.
inline ExperimentResult exp_protocol(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::uint64_t runs = cfg.trials.value_or(cfg.protocol_runs);
  const auto base = scenario_from(cfg);
  const std::uint64_t first_fault = cfg.protocol_ir_join_frame + 5;

  ExperimentResult r{"protocol",
                     {"fault_rate", "runs", "error_reports", "error_reports_se", "reentries", "reentries_se",
                      "reentries_per_report", "recovery_frames", "recovery_frames_se", "ir_bit_accuracy",
                      "ir_bit_accuracy_se", "decoded_equals_seeded", "decoded_equals_seeded_se", "eh_energy_uj",
                      "eh_energy_uj_se"},
                     {},
                     {}};
  for (std::size_t fi = 0; fi < cfg.protocol_fault_rates.size(); ++fi) {
    const double rate = cfg.protocol_fault_rates[fi];
    struct RunStats {
      double reports, reentries, recovery, accuracy, equal, energy_uj;
      std::string trace;
    };
    std::vector<RunStats> stats(runs);
    parallel_for(runs, [&](std::size_t run) {
      auto sc = base;
      Rng frng = make_stream(cfg.seed, {streams::kFault, fi, run});
      for (protocol::Frame f = first_fault; f < sc.frames; ++f) {
        const bool hit = uniform01(frng) < rate;
        const bool from_ir = uniform01(frng) < 0.5;
        if (hit) sc.faults.push_back({f, from_ir ? sc.ir_id(0) : sc.eh_id(0)});
      }
      const std::uint64_t run_seed = run == 0 ? cfg.seed : stream_id(cfg.seed, {run});
      const auto out = protocol::run_scenario(sc, run_seed);
      const auto& s = out.summary;
      double recovery = 0.0;
      for (auto f : s.recovery_frames) recovery += static_cast<double>(f);
      recovery = s.recovery_frames.empty() ? kNaN : recovery / static_cast<double>(s.recovery_frames.size());
      const double reentries = static_cast<double>(s.identification_entries) - 1.0;
      stats[run] = {static_cast<double>(s.error_reports), reentries, recovery, s.irs.at(0).bit_accuracy(),
                    s.irs.at(0).decoded_equals_seeded ? 1.0 : 0.0, s.eh_energy_j.at(0) * 1e6,
                    run == 0 ? out.csv() : std::string{}};
    });
    std::vector<double> reports, reentries, recovery, accuracy, equal, energy;
    double total_reports = 0.0, total_reentries = 0.0;
    for (const auto& s : stats) {
      reports.push_back(s.reports);
      reentries.push_back(s.reentries);
      if (!std::isnan(s.recovery)) recovery.push_back(s.recovery);
      accuracy.push_back(s.accuracy);
      equal.push_back(s.equal);
      energy.push_back(s.energy_uj);
      total_reports += s.reports;
      total_reentries += s.reentries;
    }
    const auto rep = mean_and_se(reports), ree = mean_and_se(reentries), acc = mean_and_se(accuracy),
               eq = mean_and_se(equal), en = mean_and_se(energy);
    const Estimate rec = recovery.empty() ? Estimate{kNaN, kNaN} : mean_and_se(recovery);
    r.rows.push_back({rate, static_cast<double>(runs), rep.mean, rep.se, ree.mean, ree.se,
                      total_reports > 0 ? total_reentries / total_reports : kNaN, rec.mean, rec.se, acc.mean, acc.se,
                      eq.mean, eq.se, en.mean, en.se});
    char suffix[64];
    std::snprintf(suffix, sizeof suffix, "trace_rate%zu.csv", fi);
    r.artifacts[suffix] = std::move(stats[0].trace);
  }
  return r;
}

// ---------------------------------------------------------------------------

/// IR against a passive eavesdropper at the detector level.
///
/// Channels are correlated Rayleigh with unit per-antenna power and the noise
/// power is set by secrecy.snr_db. Artificial noise is specified relative to
/// that noise floor; the IR removes its own AN down to signal.si_residual_db.
/// All rows share the channel, noise, payload and AN streams (paired trials).
inline ExperimentResult exp_secrecy(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::uint64_t trials = cfg.trials.value_or(10000);
  const int n = cfg.secrecy_n_tx;
  const int k = cfg.secrecy_k;
  const auto base_cb = phy::build_codebook(n, k);
  const int bits = base_cb.bits_per_use();
  const auto sqrt_r = channel::correlation_sqrt(n, cfg.channel.corr_coeff);
  const double n0 = std::pow(10.0, -cfg.secrecy_snr_db / 10.0);
  const std::vector<double> phases(static_cast<std::size_t>(n), 0.0);

  ExperimentResult r{"secrecy",
                     {"an_over_noise_db", "remap_period", "trials", "bits_per_trial", "ir_bit_accuracy",
                      "ir_bit_accuracy_se", "eve_bit_accuracy", "eve_bit_accuracy_se", "ir_pattern_error",
                      "ir_pattern_error_se", "eve_pattern_error", "eve_pattern_error_se"},
                     {},
                     {}};
  for (double an_db : cfg.secrecy_an_over_noise_db) {
    for (std::uint64_t period : cfg.secrecy_remap_periods) {
      phy::SignalConfig sig = cfg.signal;
      sig.total_power_dbm = 30.0;  // 1 W
      sig.an_power_dbm = an_db == -channel::kInf ? -channel::kInf : channel::watts_to_dbm(n0) + an_db;
      const std::uint64_t remap_period = period == 0 ? phy::kNoRemap : period;
      std::vector<double> ir_acc(trials), eve_acc(trials), ir_err(trials), eve_err(trials);
      parallel_for(trials, [&](std::size_t t) {
        auto draw_h = [&](std::uint64_t link) {
          Rng rng = make_stream(cfg.seed, {streams::kFading, link, t});
          channel::CVector w(n);
          for (int i = 0; i < n; ++i) w[i] = complex_normal(rng, 1.0);
          return channel::CVector(sqrt_r * w);
        };
        auto draw_noise = [&](std::uint64_t link) {
          Rng rng = make_stream(cfg.seed, {streams::kNoise, link, t});
          return complex_normal(rng, n0);
        };
        const channel::CVector h_ir = draw_h(0);
        const channel::CVector h_eve = cfg.secrecy_eve_colocated ? h_ir : draw_h(1);
        const phy::Complex n_ir = draw_noise(0);
        const phy::Complex n_eve = cfg.secrecy_eve_colocated ? n_ir : draw_noise(1);
        Rng arng = make_stream(cfg.seed, {streams::kArtificialNoise, t});
        const phy::Complex an = phy::an_waveform_sample(sig, arng);

        const auto cb = phy::remap_codebook(base_cb, cfg.secrecy_remap_key, t, remap_period);
        const auto payload = protocol::payload_bits(cfg.seed, t, bits);
        const auto pattern = phy::bits_to_pattern(payload, cb);
        const auto x = phy::tx_signal(pattern, phases, sig.total_power_w());

        const phy::Complex y_ir = phy::cancel_si(phy::inner(h_ir, x) + n_ir + an, an, sig);
        const phy::Complex y_eve = phy::an_mask(phy::inner(h_eve, x) + n_eve, an);
        const auto d_ir = phy::ml_detect(y_ir, h_ir, cb, phases, sig.total_power_w());
        const auto d_eve = phy::ml_detect(y_eve, h_eve, base_cb, phases, sig.total_power_w());
        auto accuracy = [&](const phy::Bits& got) {
          int ok = 0;
          for (int b = 0; b < bits; ++b) ok += got[b] == payload[b];
          return static_cast<double>(ok) / bits;
        };
        ir_acc[t] = accuracy(phy::pattern_to_bits(d_ir.pattern, cb));
        eve_acc[t] = accuracy(phy::pattern_to_bits(d_eve.pattern, base_cb));
        ir_err[t] = d_ir.pattern == pattern ? 0.0 : 1.0;
        eve_err[t] = d_eve.pattern == pattern ? 0.0 : 1.0;
      });
      const auto a = mean_and_se(ir_acc), b = mean_and_se(eve_acc), c = mean_and_se(ir_err), d = mean_and_se(eve_err);
      r.rows.push_back({an_db, static_cast<double>(period), static_cast<double>(trials), static_cast<double>(bits), a.mean,
                        a.se, b.mean, b.se, c.mean, c.se, d.mean, d.se});
    }
  }
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case config::Experiment::Los: return exp_los(cfg);
    case config::Experiment::Harvest: return exp_harvest(cfg);
    case config::Experiment::Se: return exp_se(cfg);
    case config::Experiment::Protocol: return exp_protocol(cfg);
    case config::Experiment::Secrecy: return exp_secrecy(cfg);
  }
  throw ValidationError("experiment", "unknown");
}

}  // namespace ihsim::experiments
