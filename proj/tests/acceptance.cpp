// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Oracles here are written independently of the library.

#include <algorithm>
#include <bit>
#include <boost/multiprecision/cpp_int.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "ihsim/experiments.hpp"

using namespace ihsim;
using boost::multiprecision::cpp_int;
using experiments::ExperimentResult;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

config::ExperimentConfig base(config::Experiment e) {
  config::ExperimentConfig c;
  c.experiment = e;
  return c;
}

// --- criterion 1 ---------------------------------------------------------------

Verdict los_model() {
  Verdict v;
  auto cfg = base(config::Experiment::Los);
  cfg.sweep_ocr = std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  cfg.sweep_d = std::vector<double>{};
  for (int d = 1; d <= 20; ++d) cfg.sweep_d->push_back(d);
  cfg.trials = 10000;
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = experiments::exp_los(cfg);
  const double elapsed = seconds_since(t0);

  const std::size_t nd = cfg.sweep_d->size();
  int outside = 0;
  double worst = 0.0;
  std::string worst_at;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const double z = std::abs(r.at(i, "p_los_empirical") - r.at(i, "p_los_analytic")) / r.at(i, "se");
    if (z > 3.0) ++outside;
    if (z > worst) {
      worst = z;
      worst_at = fmt("ocr=%.1f d=%.0f", r.at(i, "ocr"), r.at(i, "d"));
    }
  }
  v.check(outside == 0, fmt("|emp - analytic| <= 3 SE at all %zu points (max %.2f SE at %s; %d outside)", r.rows.size(),
                            worst, worst_at.c_str(), outside));

  bool dec_d = true, dec_ocr = true, emp_trend = true;
  for (std::size_t i = 0; i < cfg.sweep_ocr->size(); ++i) {
    for (std::size_t j = 0; j < nd; ++j) {
      const std::size_t row = i * nd + j;
      if (j + 1 < nd) {
        dec_d &= r.at(row, "p_los_analytic") > r.at(row + 1, "p_los_analytic");
        const double tol = 3.0 * std::hypot(r.at(row, "se"), r.at(row + 1, "se"));
        emp_trend &= r.at(row + 1, "p_los_empirical") <= r.at(row, "p_los_empirical") + tol;
      }
      if (i + 1 < cfg.sweep_ocr->size()) dec_ocr &= r.at(row, "p_los_analytic") > r.at(row + nd, "p_los_analytic");
    }
  }
  v.check(dec_d, "analytic curves strictly decreasing in d");
  v.check(dec_ocr, "analytic curves strictly decreasing in OCR");
  v.check(emp_trend, "empirical curves non-increasing in d within 3 combined SE");
  v.check(elapsed <= 60.0, fmt("runtime %.1f s <= 60 s", elapsed));
  return v;
}

// --- criterion 2 ---------------------------------------------------------------

Verdict harvest_non_interference() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = base(config::Experiment::Harvest);
  cfg.trials = 1000;
  cfg.harvest_patterns = 50;
  cfg.sweep_d = std::vector<double>{1.0};
  cfg.sweep_k = std::vector<int>{1, 4, 16, 32};

  auto sym = cfg;
  sym.harvest_symmetric_los = true;
  const auto rs = experiments::exp_harvest(sym);
  bool zero = true;
  for (std::size_t i = 0; i < rs.rows.size(); ++i)
    zero &= rs.at(i, "spread_range_db") == 0.0 && rs.at(i, "spread_std_db") == 0.0;
  v.check(zero, "symmetric LoS: across-pattern spread exactly 0 dB for k in {1,4,16,32}");

  const auto rd = experiments::exp_harvest(cfg);
  for (std::size_t i = 0; i < rd.rows.size(); ++i) {
    const double sd = rd.at(i, "spread_std_db");
    v.check(sd <= 0.5, fmt("default, d=1 m, k=%2.0f: spread (std over 50 patterns) %.3f dB <= 0.5 dB [max-min %.3f dB]",
                           rd.at(i, "k"), sd, rd.at(i, "spread_range_db")));
  }
  const double elapsed = seconds_since(t0);
  v.check(elapsed <= 300.0, fmt("runtime %.1f s <= 300 s", elapsed));
  return v;
}

// --- criterion 3 ---------------------------------------------------------------

cpp_int big_binomial(int n, int k) {
  cpp_int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// log2 of a positive big integer from its top 64 bits.
double big_log2(const cpp_int& x) {
  const unsigned msb = boost::multiprecision::msb(x);
  const unsigned shift = msb > 62 ? msb - 62 : 0;
  const auto top = static_cast<std::uint64_t>(x >> shift);
  return std::log2(static_cast<double>(top)) + shift;
}

Verdict se_bound() {
  Verdict v;
  bool symmetric = true, matches = true;
  int argmax = 0;
  double best = -1.0, worst_err = 0.0;
  for (int k = 1; k <= 64; ++k) {
    const double s = phy::se_bound_combinatorial(64, k);
    if (k < 64) symmetric &= s == phy::se_bound_combinatorial(64, 64 - k);
    const double err = std::abs(s - big_log2(big_binomial(64, k)));
    worst_err = std::max(worst_err, err);
    matches &= err < 1e-9;
    if (s > best) {
      best = s;
      argmax = k;
    }
  }
  const double oracle = big_log2(big_binomial(64, 32));
  v.check(symmetric, "se_bound_combinatorial(64,k) == se_bound_combinatorial(64,64-k) for all k");
  v.check(matches, fmt("matches big-integer log2 C(64,k) for all k (max error %.2e)", worst_err));
  v.check(argmax == 32 && std::abs(best - oracle) < 1e-9 && std::abs(oracle - 60.67) < 0.005,
          fmt("peak at k=%d, %.6f bits (oracle %.6f)", argmax, best, oracle));

  auto cfg = base(config::Experiment::Se);
  cfg.se_symmetric_los = true;
  cfg.trials = 1000;
  cfg.sweep_k = std::vector<int>{1, 2};
  cfg.sweep_ocr = std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto r = experiments::exp_se(cfg);
  const std::size_t nk = 2;
  for (std::size_t ki = 0; ki < nk; ++ki) {
    const double mi0 = r.at(ki, "mi_estimate");
    v.check(std::abs(mi0) <= 0.02, fmt("k=%zu: MI at OCR=0, symmetric LoS = %.2e bits (0 +- 0.02)", ki + 1, mi0));
    bool nondecreasing = true, rises = true;
    for (std::size_t i = 1; i < cfg.sweep_ocr->size(); ++i) {
      const std::size_t row = i * nk + ki, prev = row - nk;
      nondecreasing &= r.at(row, "mi_estimate") >= r.at(prev, "mi_estimate") - 1e-9;
      if (r.at(row, "nlos_fraction") > r.at(prev, "nlos_fraction"))
        rises &= r.at(row, "mi_estimate") > r.at(prev, "mi_estimate");
    }
    const double last = r.at((cfg.sweep_ocr->size() - 1) * nk + ki, "mi_estimate");
    v.check(nondecreasing && rises && last > mi0 + 1.0,
            fmt("k=%zu: MI at the 20 m IR increases with OCR (%.3f -> %.3f bits; strictly wherever NLoS share grows)",
                ki + 1, mi0, last));
  }
  return v;
}

// --- criterion 4 ---------------------------------------------------------------

std::vector<std::vector<int>> lexicographic_subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  for (std::uint32_t mask = 0; mask < (1U << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    std::vector<int> s;
    for (int i = 0; i < n; ++i)
      if (mask & (1U << i)) s.push_back(i);
    out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Verdict detector_oracle() {
  Verdict v;
  Rng rng = make_stream(4242, {1});
  int agree = 0, trials = 10000, distinct_cases = 0, distinct_exact = 0;
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 7));
    const int k = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n - 1)));
    const auto cb = phy::build_codebook(n, k);
    const auto subsets = lexicographic_subsets(n, k);
    const std::size_t m = std::size_t{1} << static_cast<int>(std::floor(std::log2(static_cast<double>(subsets.size()))));

    channel::CVector h(n);
    for (int i = 0; i < n; ++i) h[i] = complex_normal(rng, 1.0);
    std::vector<double> phases(n);
    for (auto& p : phases) p = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const double power = 1.0;
    const double n0 = std::pow(10.0, -uniform(rng, -5.0, 30.0) / 10.0);
    const std::size_t sent = uniform_index(rng, m);
    auto mean_of = [&](const std::vector<int>& s) {
      phy::Complex mu{};
      for (int i : s) mu += h[i] * std::polar(std::sqrt(power / k), phases[i]);
      return mu;
    };
    const phy::Complex y = mean_of(subsets[sent]) + complex_normal(rng, n0);

    std::size_t best = 0;
    double best_d = std::norm(y - mean_of(subsets[0]));
    for (std::size_t q = 1; q < m; ++q) {
      const double d = std::norm(y - mean_of(subsets[q]));
      if (d < best_d) {
        best_d = d;
        best = q;
      }
    }
    const auto det = phy::ml_detect(y, h, cb, phases, power);
    agree += det.pattern.active == subsets[best];

    // Noise-free observation.
    std::vector<phy::Complex> means(m);
    for (std::size_t q = 0; q < m; ++q) means[q] = mean_of(subsets[q]);
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a + 1; b < m; ++b) min_gap = std::min(min_gap, std::abs(means[a] - means[b]));
    if (min_gap > 1e-9) {
      ++distinct_cases;
      const auto clean = phy::ml_detect(means[sent], h, cb, phases, power);
      distinct_exact += clean.pattern.active == subsets[sent];
    }
  }
  v.check(agree == trials, fmt("ml_detect == brute-force argmin on %d/%d random trials (n_tx 2..8)", agree, trials));
  v.check(distinct_exact == distinct_cases && distinct_cases > 0,
          fmt("zero-noise recovery exact in %d/%d trials with distinct means", distinct_exact, distinct_cases));
  return v;
}

// --- criterion 5 ---------------------------------------------------------------

// I = 1 - E[log2(1 + exp(-4x/N0))], x ~ N(1, N0/2), by composite Simpson.
double two_point_mi(double n0) {
  const double sigma = std::sqrt(n0 / 2.0);
  const double lo = 1.0 - 14.0 * sigma, hi = 1.0 + 14.0 * sigma;
  const int steps = 20000;
  const double hstep = (hi - lo) / steps;
  auto f = [&](double x) {
    const double pdf = std::exp(-(x - 1.0) * (x - 1.0) / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const double a = -4.0 * x / n0;
    const double softplus = a > 0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
    return pdf * softplus / std::numbers::ln2;
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < steps; ++i) s += f(lo + i * hstep) * (i % 2 ? 4.0 : 2.0);
  return 1.0 - s * hstep / 3.0;
}

Verdict mi_oracle() {
  Verdict v;
  channel::CVector h(2);
  h << 1.0, -1.0;
  const auto cb = phy::build_codebook(2, 1);
  const std::vector<double> phases{0.0, 0.0};
  const auto means = phy::constellation_means(h, cb, phases, 1.0);
  for (double snr_db : {-10.0, 0.0, 10.0}) {
    const double n0 = std::pow(10.0, -snr_db / 10.0);
    const auto est = phy::mi_monte_carlo([&](Rng&) { return means; }, cb.size(), n0, 1, 40000, 99);
    const double ref = two_point_mi(n0);
    v.check(std::abs(est.mean - ref) <= 0.05,
            fmt("SNR %+3.0f dB: Monte Carlo %.4f +- %.4f bits vs quadrature %.4f bits (|diff| <= 0.05)", snr_db, est.mean,
                est.se, ref));
  }
  return v;
}

// --- criterion 6 ---------------------------------------------------------------

std::vector<std::string> eh_view(const protocol::ScenarioOutcome& out) {
  std::vector<std::string> rows;
  for (const auto& r : out.trace) {
    if (r.node != 1) continue;
    std::string s = r.state_before + "," + r.event + "," + r.state_after;
    for (auto k : r.emitted) s += "," + std::string(protocol::to_string(k));
    rows.push_back(s);
  }
  return rows;
}

Verdict protocol_conformance() {
  Verdict v;
  std::ifstream in(std::string(IHSIM_GOLDEN_DIR) + "/protocol_trace.fnv");
  std::string golden;
  in >> golden;
  const auto a = protocol::run_scenario(protocol::golden_scenario(), protocol::kGoldenSeed);
  const auto b = protocol::run_scenario(protocol::golden_scenario(), protocol::kGoldenSeed);
  v.check(!golden.empty() && a.hash() == golden && b.hash() == golden,
          fmt("golden trace hash %s == committed %s (two runs)", a.hash().c_str(), golden.c_str()));

  bool oblivious = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto without = protocol::golden_scenario();
    without.irs.clear();
    oblivious &= eh_view(protocol::run_scenario(protocol::golden_scenario(), seed)) ==
                 eh_view(protocol::run_scenario(without, seed));
  }
  v.check(oblivious, "EH state and message sequences identical with and without IR (20 paired seeds)");

  bool one_each = true, recovered = true;
  int reports = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto sc = protocol::golden_scenario();
    sc.noiseless = true;
    const auto clean = protocol::run_scenario(sc, seed).summary.identification_entries;
    Rng frng = make_stream(seed, {streams::kFault});
    for (protocol::Frame f = 20; f < sc.frames; f += 10 + uniform_index(frng, 30))
      sc.faults.push_back({f, uniform01(frng) < 0.5 ? sc.ir_id(0) : sc.eh_id(0)});
    const auto out = protocol::run_scenario(sc, seed);
    reports += static_cast<int>(out.summary.error_reports);
    one_each &= out.summary.identification_entries == clean + out.summary.error_reports;
    recovered &= out.summary.irs.at(0).decoded_equals_seeded;
  }
  v.check(one_each, fmt("each of %d injected ErrorReports adds exactly one Identification re-entry", reports));
  v.check(recovered, "decoded bit-stream equals seeded stream after every recovery (20 runs)");

  bool across_epochs = true;
  std::uint64_t frames = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto sc = protocol::golden_scenario();
    sc.noiseless = true;
    sc.frames = 400;
    const auto s = protocol::run_scenario(sc, seed).summary.irs.at(0);
    across_epochs &= s.decoded_equals_seeded;
    frames += s.frames_decoded;
  }
  v.check(across_epochs, fmt("zero noise: decoded == seeded across remap epochs (period 10, %llu seeding frames)",
                             static_cast<unsigned long long>(frames)));
  return v;
}

// --- criterion 7 ---------------------------------------------------------------

Verdict security() {
  Verdict v;
  auto cfg = base(config::Experiment::Secrecy);
  cfg.trials = 10000;
  cfg.secrecy_an_over_noise_db = {-channel::kInf, 20.0};
  cfg.secrecy_remap_periods = {1};
  const auto r = experiments::exp_secrecy(cfg);
  const double bits = r.at(0, "trials") * r.at(0, "bits_per_trial");
  const double acc = r.at(0, "eve_bit_accuracy");
  v.check(bits >= 1e4 && std::abs(acc - 0.5) <= 0.02,
          fmt("keyless eavesdropper, remap period 1: bit accuracy %.4f over %.0f bits (0.5 +- 0.02)", acc, bits));
  const double ir = r.at(1, "ir_pattern_error"), eve = r.at(1, "eve_pattern_error");
  v.check(eve >= 10.0 * ir, fmt("AN 20 dB over noise: eavesdropper pattern error %.4f >= 10 x IR %.4f (ratio %.1f)", eve,
                                ir, ir > 0 ? eve / ir : std::numeric_limits<double>::infinity()));

  auto sc = protocol::golden_scenario();
  sc.noiseless = true;
  sc.frames = 2000;
  sc.irs[0].rfi.pattern_update_period = 1;
  sc.eves.push_back({{}, 0});
  const auto out = protocol::run_scenario(sc, 5);
  const auto& e = out.summary.eves.at(0);
  v.check(e.bits_decoded >= 10000 && std::abs(e.bit_accuracy() - 0.5) <= 0.02,
          fmt("protocol-level keyless eavesdropper: bit accuracy %.4f over %llu bits", e.bit_accuracy(),
              static_cast<unsigned long long>(e.bits_decoded)));
  return v;
}

// --- criterion 8 ---------------------------------------------------------------

Verdict determinism() {
  Verdict v;
  std::vector<config::ExperimentConfig> cfgs;
  {
    auto c = base(config::Experiment::Los);
    c.trials = 2000;
    cfgs.push_back(c);
  }
  {
    auto c = base(config::Experiment::Harvest);
    c.trials = 200;
    cfgs.push_back(c);
  }
  {
    auto c = base(config::Experiment::Se);
    c.trials = 100;
    cfgs.push_back(c);
  }
  {
    auto c = base(config::Experiment::Protocol);
    c.trials = 5;
    cfgs.push_back(c);
  }
  {
    auto c = base(config::Experiment::Secrecy);
    c.trials = 2000;
    cfgs.push_back(c);
  }
  for (auto& c : cfgs) {
    c.seed = 31337;
    setenv("IHSIM_THREADS", "1", 1);
    const auto a = experiments::run_experiment(c);
    const auto b = experiments::run_experiment(c);
    setenv("IHSIM_THREADS", "3", 1);
    const auto p = experiments::run_experiment(c);
    unsetenv("IHSIM_THREADS");
    const bool same = experiments::to_csv(a) == experiments::to_csv(b) && a.artifacts == b.artifacts;
    const bool threads = experiments::to_csv(a) == experiments::to_csv(p) && a.artifacts == p.artifacts;
    v.check(same && threads, fmt("%s: CSV%s byte-identical on re-run and with 3 workers", a.name.c_str(),
                                 a.artifacts.empty() ? "" : " and traces"));
  }
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"LoS model", los_model},
      {"Harvest non-interference", harvest_non_interference},
      {"SE bound", se_bound},
      {"Detector oracle equivalence", detector_oracle},
      {"MI oracle", mi_oracle},
      {"Protocol conformance", protocol_conformance},
      {"Security properties", security},
      {"Determinism", determinism},
  };
  int failed = 0;
  std::vector<std::string> summary;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    for (const auto& n : v.notes) std::printf("    %s\n", n.c_str());
    const auto line = fmt("%s criterion %zu: %s (%.1f s)", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                          seconds_since(t0));
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    summary.push_back(line);
    failed += !v.pass;
  }
  std::printf("\n");
  for (const auto& s : summary) std::printf("%s\n", s.c_str());
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
