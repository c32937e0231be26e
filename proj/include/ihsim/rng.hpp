#pragma once

// Seeded random streams and portable samplers.
//
// The standard <random> distributions are implementation-defined, so traces
// would differ between standard libraries. Everything here draws raw 64-bit
// words from std::mt19937_64 (which is fully specified) and transforms them
// with fixed formulas.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <initializer_list>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <thread>
#include <vector>

namespace ihsim {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a stream id from a master seed and a tuple of counters.
/// stream = mix(... mix(mix(master) ^ c0) ^ c1 ...), so trial partitioning
/// is reproducible independent of the thread that runs the trial.
inline std::uint64_t stream_id(std::uint64_t master, std::initializer_list<std::uint64_t> counters) noexcept {
  std::uint64_t s = mix64(master);
  for (auto c : counters) s = mix64(s ^ mix64(c + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> counters) {
  return Rng{stream_id(master, counters)};
}

// Stream labels. Kept distinct so adding a consumer never shifts another.
namespace streams {
inline constexpr std::uint64_t kField = 0xF1E1D;
inline constexpr std::uint64_t kShadow = 0x5AD0;
inline constexpr std::uint64_t kFading = 0xFAD1;
inline constexpr std::uint64_t kNoise = 0x7015E;
inline constexpr std::uint64_t kPayload = 0xDA7A;
inline constexpr std::uint64_t kArtificialNoise = 0xA1;
inline constexpr std::uint64_t kFault = 0xFA17;
inline constexpr std::uint64_t kPatterns = 0x9A7;
inline constexpr std::uint64_t kEstimate = 0xE57;
}  // namespace streams

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n) by rejection (n > 0).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

/// Box-Muller pair of independent standard normals. Always consumes two words.
inline std::pair<double, double> normal_pair(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

inline double normal(Rng& rng, double mean = 0.0, double sigma = 1.0) {
  return mean + sigma * normal_pair(rng).first;
}

/// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
inline std::complex<double> complex_normal(Rng& rng, double variance = 1.0) {
  const auto [a, b] = normal_pair(rng);
  const double s = std::sqrt(variance / 2.0);
  return {s * a, s * b};
}

/// Poisson variate. Multiplication method for small means, PTRS (Hormann 1993)
/// otherwise.
inline std::uint64_t poisson(Rng& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  if (mean < 10.0) {
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = uniform01(rng);
    while (prod > limit) {
      ++k;
      prod *= uniform01(rng);
    }
    return k;
  }
  const double smu = std::sqrt(mean);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    const double u = uniform01(rng) - 0.5;
    const double v = uniform01(rng);
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <= -mean + k * log_mean - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

/// Worker count: IHSIM_THREADS if set and positive, else hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("IHSIM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n). Callers write results into slot i, so the
/// outcome does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    try {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    } catch (...) {
      const std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(n);
    }
  };
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
    body();
  }
  if (failure) std::rethrow_exception(failure);
}

/// Mean and standard error of the mean.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

inline Estimate mean_and_se(const std::vector<double>& xs) {
  Estimate e;
  if (xs.empty()) return e;
  double sum = 0.0;
  for (double x : xs) sum += x;
  e.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return e;
  double ss = 0.0;
  for (double x : xs) ss += (x - e.mean) * (x - e.mean);
  e.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  return e;
}

}  // namespace ihsim
