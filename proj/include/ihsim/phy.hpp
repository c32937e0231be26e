#pragma once

// Spatial-modulation information seeding and harvesting.
//
// A codeword (bits_per_use bits) selects one of the first 2^bits_per_use
// k-subsets of the transmit antennas in lexicographic order, optionally
// through a keyed permutation that is rotated per epoch. Phase shifters are
// cophased toward the energy harvester and held fixed while the pattern
// changes, so every pattern radiates the same total power.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "ihsim/channel.hpp"
#include "ihsim/errors.hpp"
#include "ihsim/rng.hpp"

namespace ihsim::phy {

using channel::CVector;
using Complex = std::complex<double>;
using Bits = std::vector<std::uint8_t>;

inline constexpr int kMaxAntennas = 64;
/// Largest codebook ml_detect will search exhaustively.
inline constexpr std::uint64_t kMaxDetectCodebook = std::uint64_t{1} << 20;
/// Largest codebook mi_monte_carlo will enumerate.
inline constexpr std::uint64_t kMaxMiCodebook = std::uint64_t{1} << 16;
/// remap period meaning "never remap".
inline constexpr std::uint64_t kNoRemap = std::numeric_limits<std::uint64_t>::max();

namespace detail {

using BinomialTable = std::array<std::array<std::uint64_t, kMaxAntennas + 1>, kMaxAntennas + 1>;

// Pascal's triangle; every C(n, k) with n <= 64 fits in 64 bits.
constexpr BinomialTable make_binomials() {
  BinomialTable t{};
  for (int n = 0; n <= kMaxAntennas; ++n) {
    t[n][0] = 1;
    for (int k = 1; k <= n; ++k) t[n][k] = t[n - 1][k - 1] + (k <= n - 1 ? t[n - 1][k] : 0);
  }
  return t;
}

inline constexpr BinomialTable kBinomials = make_binomials();

}  // namespace detail

/// Exact C(n, k) for 0 <= n <= 64.
constexpr std::uint64_t binomial(int n, int k) {
  if (n < 0 || n > kMaxAntennas) throw ValidationError("n_tx", "binomial supports 0 <= n <= 64");
  if (k < 0 || k > n) return 0;
  return detail::kBinomials[n][k];
}

struct ActivationPattern {
  std::vector<int> active;  // sorted, distinct

  int k() const noexcept { return static_cast<int>(active.size()); }
  friend bool operator==(const ActivationPattern&, const ActivationPattern&) = default;
};

inline bool is_valid_pattern(const ActivationPattern& p, int n_tx) noexcept {
  if (p.active.empty()) return false;
  for (std::size_t i = 0; i < p.active.size(); ++i) {
    if (p.active[i] < 0 || p.active[i] >= n_tx) return false;
    if (i > 0 && p.active[i] <= p.active[i - 1]) return false;
  }
  return true;
}

inline void validate_pattern(const ActivationPattern& p, int n_tx) {
  if (!is_valid_pattern(p, n_tx))
    throw ValidationError("pattern", "indices must be non-empty, sorted, distinct and below n_tx");
}

/// Keyed bijection on [0, 2^bits): a six-round Feistel network on
/// 2*ceil(bits/2) bits with cycle walking back into the domain.
class KeyedPermutation {
 public:
  KeyedPermutation() = default;
  KeyedPermutation(int bits, std::uint64_t key, std::uint64_t epoch)
      : bits_(bits), key_(key), epoch_(epoch), identity_(false) {
    half_ = (bits + 1) / 2;
    round_keys_ = {};
    std::uint64_t s = mix64(key ^ mix64(epoch ^ 0x7e4a1c3b2d5f6081ULL));
    for (auto& rk : round_keys_) rk = s = mix64(s);
  }

  static KeyedPermutation identity(int bits) {
    KeyedPermutation p;
    p.bits_ = bits;
    return p;
  }

  bool is_identity() const noexcept { return identity_; }
  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t epoch() const noexcept { return epoch_; }

  std::uint64_t forward(std::uint64_t v) const noexcept {
    if (identity_ || bits_ == 0) return v;
    std::uint64_t x = encrypt(v);
    while (x >> bits_) x = encrypt(x);
    return x;
  }

  std::uint64_t inverse(std::uint64_t v) const noexcept {
    if (identity_ || bits_ == 0) return v;
    std::uint64_t x = decrypt(v);
    while (x >> bits_) x = decrypt(x);
    return x;
  }

  friend bool operator==(const KeyedPermutation& a, const KeyedPermutation& b) noexcept {
    if (a.identity_ || b.identity_) return a.identity_ == b.identity_ && a.bits_ == b.bits_;
    return a.bits_ == b.bits_ && a.key_ == b.key_ && a.epoch_ == b.epoch_;
  }

 private:
  static constexpr int kRounds = 6;

  std::uint64_t mask() const noexcept { return (std::uint64_t{1} << half_) - 1; }
  std::uint64_t round_fn(int r, std::uint64_t x) const noexcept { return mix64(round_keys_[r] + x) & mask(); }

  std::uint64_t encrypt(std::uint64_t x) const noexcept {
    std::uint64_t l = x >> half_, r = x & mask();
    for (int i = 0; i < kRounds; ++i) {
      const std::uint64_t next = l ^ round_fn(i, r);
      l = r;
      r = next;
    }
    return (l << half_) | r;
  }

  std::uint64_t decrypt(std::uint64_t x) const noexcept {
    std::uint64_t l = x >> half_, r = x & mask();
    for (int i = kRounds - 1; i >= 0; --i) {
      const std::uint64_t prev = r ^ round_fn(i, l);
      r = l;
      l = prev;
    }
    return (l << half_) | r;
  }

  int bits_ = 0;
  int half_ = 0;
  std::uint64_t key_ = 0;
  std::uint64_t epoch_ = 0;
  bool identity_ = true;
  std::array<std::uint64_t, kRounds> round_keys_{};
};

class PatternCodebook {
 public:
  PatternCodebook(int n_tx, int k, int bits) : n_tx_(n_tx), k_(k), bits_(bits), perm_(KeyedPermutation::identity(bits)) {}

  int n_tx() const noexcept { return n_tx_; }
  int k() const noexcept { return k_; }
  int bits_per_use() const noexcept { return bits_; }
  std::uint64_t size() const noexcept { return std::uint64_t{1} << bits_; }
  const KeyedPermutation& permutation() const noexcept { return perm_; }
  void set_permutation(KeyedPermutation p) { perm_ = p; }

  /// Lexicographic unranking of the index-th k-subset.
  ActivationPattern pattern_at(std::uint64_t index) const {
    if (index >= size()) throw ValidationError("index", "outside codebook");
    ActivationPattern p;
    p.active.reserve(k_);
    int c = 0;
    for (int slot = 0; slot < k_; ++slot) {
      for (;; ++c) {
        const std::uint64_t below = binomial(n_tx_ - 1 - c, k_ - 1 - slot);
        if (index < below) break;
        index -= below;
      }
      p.active.push_back(c++);
    }
    return p;
  }

  /// Lexicographic rank, or nullopt if the pattern is not a codeword.
  std::optional<std::uint64_t> index_of(const ActivationPattern& p) const {
    if (p.k() != k_ || !is_valid_pattern(p, n_tx_)) return std::nullopt;
    std::uint64_t rank = 0;
    int c = 0;
    for (int slot = 0; slot < k_; ++slot) {
      for (; c < p.active[slot]; ++c) rank += binomial(n_tx_ - 1 - c, k_ - 1 - slot);
      ++c;
    }
    if (rank >= size()) return std::nullopt;
    return rank;
  }

  std::uint64_t codeword_to_index(std::uint64_t codeword) const noexcept { return perm_.forward(codeword); }
  std::uint64_t index_to_codeword(std::uint64_t index) const noexcept { return perm_.inverse(index); }

 private:
  int n_tx_;
  int k_;
  int bits_;
  KeyedPermutation perm_;
};

/// floor(log2 C(n_tx, k)) bits, optionally capped at max_bits.
inline PatternCodebook build_codebook(int n_tx, int k, std::optional<int> max_bits = std::nullopt) {
  if (n_tx < 1 || n_tx > kMaxAntennas) throw ValidationError("n_tx", "must lie in [1, 64]");
  if (k < 1 || k > n_tx) throw ValidationError("k", "must lie in [1, n_tx]");
  int bits = std::bit_width(binomial(n_tx, k)) - 1;
  if (max_bits) {
    if (*max_bits < 0) throw ValidationError("max_bits", "must be non-negative");
    bits = std::min(bits, *max_bits);
  }
  return PatternCodebook(n_tx, k, bits);
}

inline std::uint64_t bits_to_value(std::span<const std::uint8_t> bits) {
  std::uint64_t v = 0;
  for (auto b : bits) v = (v << 1) | (b & 1U);
  return v;
}

inline Bits value_to_bits(std::uint64_t v, int width) {
  Bits out(width);
  for (int i = width - 1; i >= 0; --i, v >>= 1) out[i] = static_cast<std::uint8_t>(v & 1U);
  return out;
}

inline ActivationPattern bits_to_pattern(std::span<const std::uint8_t> bits, const PatternCodebook& cb) {
  if (static_cast<int>(bits.size()) != cb.bits_per_use()) throw ValidationError("bits", "length must equal bits_per_use");
  return cb.pattern_at(cb.codeword_to_index(bits_to_value(bits)));
}

inline Bits pattern_to_bits(const ActivationPattern& p, const PatternCodebook& cb) {
  const auto index = cb.index_of(p);
  if (!index) throw ValidationError("pattern", "not in codebook");
  return value_to_bits(cb.index_to_codeword(*index), cb.bits_per_use());
}

/// Codebook whose permutation is keyed by (key, frame_index / period).
inline PatternCodebook remap_codebook(const PatternCodebook& cb, std::uint64_t key, std::uint64_t frame_index,
                                      std::uint64_t period) {
  if (period == 0) throw ValidationError("pattern_update_period", "must be >= 1");
  PatternCodebook out = cb;
  if (period == kNoRemap) {
    out.set_permutation(KeyedPermutation::identity(cb.bits_per_use()));
  } else {
    out.set_permutation(KeyedPermutation(cb.bits_per_use(), key, frame_index / period));
  }
  return out;
}

/// Uniform random k-subset of [0, n_tx), sorted.
inline ActivationPattern random_pattern(int n_tx, int k, Rng& rng) {
  std::vector<int> pool(n_tx);
  for (int i = 0; i < n_tx; ++i) pool[i] = i;
  for (int i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, n_tx - i)]);
  ActivationPattern p{{pool.begin(), pool.begin() + k}};
  std::sort(p.active.begin(), p.active.end());
  return p;
}

struct SignalConfig {
  double total_power_dbm = 10.0;
  std::optional<int> phase_resolution_bits;  // nullopt: continuous
  double an_power_dbm = -channel::kInf;      // -inf: artificial noise off
  double si_residual_db = -110.0;

  void validate() const {
    if (!std::isfinite(total_power_dbm)) throw ValidationError("wpt.total_power_dbm", "must be finite");
    if (phase_resolution_bits && (*phase_resolution_bits < 1 || *phase_resolution_bits > 30))
      throw ValidationError("signal.phase_resolution_bits", "must lie in [1, 30]");
    if (std::isnan(an_power_dbm) || an_power_dbm == channel::kInf)
      throw ValidationError("signal.an_power_dbm", "must be finite or -inf");
    if (std::isnan(si_residual_db) || si_residual_db > 0.0)
      throw ValidationError("signal.si_residual_db", "must be <= 0 (or -inf)");
  }

  double total_power_w() const { return channel::dbm_to_watts(total_power_dbm); }
  double an_power_w() const { return an_power_dbm == -channel::kInf ? 0.0 : channel::dbm_to_watts(an_power_dbm); }
};

inline double quantize_phase(double phi, std::optional<int> resolution_bits) {
  if (!resolution_bits) return phi;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(std::uint64_t{1} << *resolution_bits);
  return std::round(phi / step) * step;
}

/// Conjugate phases on the pattern's antennas (zero elsewhere).
inline std::vector<double> cophase_weights(const CVector& h, const ActivationPattern& p,
                                           std::optional<int> resolution_bits = std::nullopt) {
  validate_pattern(p, static_cast<int>(h.size()));
  std::vector<double> phases(h.size(), 0.0);
  for (int i : p.active) {
    if (h[i] == Complex{}) throw ValidationError("h", "zero channel entry on an active antenna");
    phases[i] = quantize_phase(-std::arg(h[i]), resolution_bits);
  }
  return phases;
}

/// Conjugate phases for every antenna, i.e. the shifter setting the WPT holds
/// while patterns change.
inline std::vector<double> cophase_all(const CVector& h, std::optional<int> resolution_bits = std::nullopt) {
  ActivationPattern all;
  all.active.resize(h.size());
  for (int i = 0; i < static_cast<int>(h.size()); ++i) all.active[i] = i;
  return cophase_weights(h, all, resolution_bits);
}

/// Constant-envelope vector: sqrt(P/k) e^{j phi_i} on the pattern, zero elsewhere.
inline CVector tx_signal(const ActivationPattern& p, std::span<const double> phases, double total_power_w) {
  validate_pattern(p, static_cast<int>(phases.size()));
  CVector x = CVector::Zero(static_cast<Eigen::Index>(phases.size()));
  const double amp = std::sqrt(total_power_w / static_cast<double>(p.k()));
  for (int i : p.active) x[i] = std::polar(amp, phases[i]);
  return x;
}

/// h^T x summed sequentially in antenna order. Off-pattern entries are exact
/// zeros, so equal-magnitude patterns give bitwise-equal sums (a vectorized
/// reduction would group terms by position).
inline Complex inner(const CVector& h, const CVector& x) {
  Complex acc{};
  for (Eigen::Index i = 0; i < h.size(); ++i) acc += h[i] * x[i];
  return acc;
}

struct ReceivedPower {
  double watts = 0.0;
  double dbm = -channel::kInf;
};

inline ReceivedPower harvested_power(const CVector& h, const CVector& x) {
  if (h.size() != x.size()) throw ValidationError("x", "length must match channel");
  const double w = std::norm(inner(h, x));
  return {w, w > 0.0 ? channel::watts_to_dbm(w) : -channel::kInf};
}

/// y = h^T x + n with n ~ CN(0, noise_power).
inline Complex rx_sample(const CVector& h, const CVector& x, double noise_power, Rng& rng) {
  const Complex clean = inner(h, x);
  const Complex n = complex_normal(rng, noise_power);
  return noise_power > 0.0 ? clean + n : clean;
}

namespace detail {

inline bool next_combination(std::vector<int>& c, int n) {
  const int k = static_cast<int>(c.size());
  int i = k - 1;
  while (i >= 0 && c[i] == n - k + i) --i;
  if (i < 0) return false;
  ++c[i];
  for (int j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
  return true;
}

}  // namespace detail

/// Noise-free receive points mu_p = h^T x(p) for every pattern, in index order.
inline std::vector<Complex> constellation_means(const CVector& h, const PatternCodebook& cb, std::span<const double> phases,
                                                double total_power_w) {
  if (h.size() != cb.n_tx() || static_cast<int>(phases.size()) != cb.n_tx())
    throw ValidationError("h", "length must equal n_tx");
  std::vector<Complex> z(cb.n_tx());
  for (int i = 0; i < cb.n_tx(); ++i) z[i] = h[i] * std::polar(1.0, phases[i]);
  const double amp = std::sqrt(total_power_w / cb.k());
  std::vector<Complex> means;
  means.reserve(cb.size());
  std::vector<int> combo(cb.k());
  for (int i = 0; i < cb.k(); ++i) combo[i] = i;
  for (std::uint64_t index = 0; index < cb.size(); ++index) {
    Complex sum{};
    for (int i : combo) sum += z[i];
    means.push_back(amp * sum);
    detail::next_combination(combo, cb.n_tx());
  }
  return means;
}

struct Detection {
  ActivationPattern pattern;
  std::uint64_t index = 0;  // lexicographic pattern index
  double metric = 0.0;
};

/// Maximum-likelihood pattern: argmin_p |y - h^T x(p)|^2, lowest index on ties.
inline Detection ml_detect(Complex y, const CVector& h, const PatternCodebook& cb, std::span<const double> phases,
                           double total_power_w) {
  if (cb.size() > kMaxDetectCodebook) throw GuardError("ml_detect: codebook exceeds exhaustive-search limit");
  const auto means = constellation_means(h, cb, phases, total_power_w);
  if (means.empty()) throw ValidationError("codebook", "empty");
  std::uint64_t best = 0;
  double best_metric = std::norm(y - means[0]);
  for (std::uint64_t i = 1; i < means.size(); ++i) {
    const double m = std::norm(y - means[i]);
    if (m < best_metric) {
      best_metric = m;
      best = i;
    }
  }
  return {cb.pattern_at(best), best, best_metric};
}

/// log2 C(n_tx, k), unfloored.
inline double se_bound_combinatorial(int n_tx, int k) {
  if (n_tx < 1 || n_tx > kMaxAntennas) throw ValidationError("n_tx", "must lie in [1, 64]");
  if (k < 1 || k > n_tx) throw ValidationError("k", "must lie in [1, n_tx]");
  return static_cast<double>(std::log2(static_cast<long double>(binomial(n_tx, k))));
}

/// Monte Carlo estimate of I(pattern; y | h) in bits for equiprobable
/// patterns. `draw_means(rng)` returns the receive constellation of one channel
/// draw. Each draw then averages n_noise samples of
///   log2 M - log2 sum_q exp((|y - mu_p|^2 - |y - mu_q|^2) / N0)
/// with p uniform. Draw i uses its own stream, so the result is independent
/// of thread scheduling.
template <class DrawMeans>
Estimate mi_monte_carlo(DrawMeans&& draw_means, std::uint64_t codebook_size, double noise_power, std::size_t n_channel,
                        std::size_t n_noise, std::uint64_t seed) {
  if (codebook_size > kMaxMiCodebook)
    throw GuardError("mi_monte_carlo: codebook larger than 2^16; use se_bound_combinatorial instead");
  if (codebook_size == 0) throw ValidationError("codebook", "empty");
  if (n_channel < 1 || n_noise < 1) throw ValidationError("trials", "must be >= 1");
  if (!(noise_power >= 0.0)) throw ValidationError("noise_power", "must be >= 0");
  const double log2_m = std::log2(static_cast<double>(codebook_size));

  std::vector<std::vector<double>> terms(n_channel);
  parallel_for(n_channel, [&](std::size_t c) {
    Rng rng = make_stream(seed, {streams::kFading, c});
    const std::vector<Complex> means = draw_means(rng);
    if (means.size() != codebook_size) throw ValidationError("draw_means", "constellation size mismatch");
    auto& out = terms[c];
    out.reserve(n_noise);
    std::vector<double> exps(codebook_size);
    for (std::size_t j = 0; j < n_noise; ++j) {
      const std::uint64_t p = uniform_index(rng, codebook_size);
      const Complex n = complex_normal(rng, noise_power);
      if (noise_power == 0.0) {
        const auto same = std::count(means.begin(), means.end(), means[p]);
        out.push_back(log2_m - std::log2(static_cast<double>(same)));
        continue;
      }
      const Complex y = means[p] + n;
      const double base = std::norm(n);
      double peak = -std::numeric_limits<double>::infinity();
      for (std::uint64_t q = 0; q < codebook_size; ++q) {
        exps[q] = (base - std::norm(y - means[q])) / noise_power;
        peak = std::max(peak, exps[q]);
      }
      double sum = 0.0;
      for (double e : exps) sum += std::exp(e - peak);
      out.push_back(log2_m - (peak + std::log(sum)) / std::numbers::ln2);
    }
  });

  if (n_channel >= 2) {
    std::vector<double> per_draw(n_channel);
    for (std::size_t c = 0; c < n_channel; ++c) per_draw[c] = mean_and_se(terms[c]).mean;
    return mean_and_se(per_draw);
  }
  return mean_and_se(terms[0]);
}

/// One sample of the IR-generated masking waveform, CN(0, an_power).
inline Complex an_waveform_sample(const SignalConfig& cfg, Rng& rng) { return complex_normal(rng, cfg.an_power_w()); }

/// Eavesdropper observation with the artificial noise added through its
/// AN channel gain.
inline Complex an_mask(Complex y_eve, Complex an_sample, Complex an_channel = {1.0, 0.0}) {
  return y_eve + an_channel * an_sample;
}

/// IR observation after subtracting its own AN; the residual amplitude is
/// 10^(si_residual_db / 20) of the AN sample.
inline Complex cancel_si(Complex y_ir, Complex an_sample, const SignalConfig& cfg) {
  const double residual = cfg.si_residual_db == -channel::kInf ? 0.0 : std::pow(10.0, cfg.si_residual_db / 20.0);
  return y_ir - (1.0 - residual) * an_sample;
}

}  // namespace ihsim::phy
