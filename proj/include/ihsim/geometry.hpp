#pragma once

// Homogeneous-PPP cylinder obstacle fields and line-of-sight blockage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "ihsim/errors.hpp"
#include "ihsim/rng.hpp"

namespace ihsim::geometry {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline double distance(const Point3& a, const Point3& b) noexcept {
  return std::hypot(b.x - a.x, b.y - a.y, b.z - a.z);
}

/// Axis-aligned sampling rectangle.
struct Area {
  double width = 50.0;
  double depth = 50.0;
  double center_x = 0.0;
  double center_y = 0.0;

  double size() const noexcept { return width * depth; }
  double x_min() const noexcept { return center_x - width / 2.0; }
  double y_min() const noexcept { return center_y - depth / 2.0; }
};

struct ObstacleSpec {
  double ocr = 0.3;
  double radius_min = 0.3;
  double radius_max = 0.6;
  double height_min = 5.0;
  double height_max = 25.0;
  Area area{};
  /// Include the pi*E[r^2] end-cap term of the capsule in p_los_analytic.
  bool end_caps = true;

  void validate() const {
    if (!(ocr >= 0.0 && ocr <= 0.9)) throw ValidationError("obstacle.cover_ratio", "must lie in [0, 0.9]");
    if (!(radius_min > 0.0)) throw ValidationError("obstacle.radius_min_m", "must be positive");
    if (!(radius_max >= radius_min)) throw ValidationError("obstacle.radius_max_m", "must be >= radius_min");
    if (!(height_min > 0.0)) throw ValidationError("obstacle.height_min_m", "must be positive");
    if (!(height_max >= height_min)) throw ValidationError("obstacle.height_max_m", "must be >= height_min");
    if (!(area.width > 0.0)) throw ValidationError("obstacle.area_width_m", "must be positive");
    if (!(area.depth > 0.0)) throw ValidationError("obstacle.area_depth_m", "must be positive");
  }

  double mean_radius() const noexcept { return 0.5 * (radius_min + radius_max); }

  /// E[r^2] for r ~ U[radius_min, radius_max].
  double mean_radius_sq() const noexcept {
    if (radius_max == radius_min) return radius_min * radius_min;
    const double lo = radius_min, hi = radius_max;
    return (hi * hi * hi - lo * lo * lo) / (3.0 * (hi - lo));
  }
};

struct Obstacle {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
  double height = 0.0;
};

struct ObstacleField {
  std::vector<Obstacle> obstacles;
  double density = 0.0;  // per m^2
};

/// Obstacles per square meter such that the expected covered fraction
/// (ignoring overlaps) equals the cover ratio.
inline double density_from_ocr(const ObstacleSpec& spec) {
  spec.validate();
  if (spec.ocr == 0.0) return 0.0;
  return spec.ocr / (std::numbers::pi * spec.mean_radius_sq());
}

/// Samples the PPP restricted to `window`. A restriction of a homogeneous PPP
/// is again a homogeneous PPP, so small windows around a link are exact.
inline ObstacleField sample_field_in(const ObstacleSpec& spec, const Area& window, Rng& rng) {
  ObstacleField field;
  field.density = density_from_ocr(spec);
  const std::uint64_t count = poisson(rng, field.density * window.size());
  field.obstacles.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Obstacle o;
    o.x = window.x_min() + window.width * uniform01(rng);
    o.y = window.y_min() + window.depth * uniform01(rng);
    o.radius = uniform(rng, spec.radius_min, spec.radius_max);
    o.height = uniform(rng, spec.height_min, spec.height_max);
    field.obstacles.push_back(o);
  }
  return field;
}

inline ObstacleField sample_field(const ObstacleSpec& spec, Rng& rng) { return sample_field_in(spec, spec.area, rng); }

/// True iff some obstacle's disk meets the 2-D projection of segment a-b and
/// the obstacle is taller than the segment at the closest approach.
inline bool is_blocked(const ObstacleField& field, Point3 a, Point3 b) {
  // Canonical endpoint order makes the result exactly symmetric.
  if (std::pair{b.x, std::pair{b.y, b.z}} < std::pair{a.x, std::pair{a.y, a.z}}) std::swap(a, b);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len_sq = dx * dx + dy * dy;
  for (const auto& o : field.obstacles) {
    double t = 0.0;
    if (len_sq > 0.0) t = std::clamp(((o.x - a.x) * dx + (o.y - a.y) * dy) / len_sq, 0.0, 1.0);
    const double px = a.x + t * dx - o.x;
    const double py = a.y + t * dy - o.y;
    if (px * px + py * py > o.radius * o.radius) continue;
    const double z = a.z + t * (b.z - a.z);
    if (o.height > z) return true;
  }
  return false;
}

/// Void probability of the capsule swept by a random-radius disk along a
/// segment of length d (Boolean model).
inline double p_los_analytic(const ObstacleSpec& spec, double d) {
  if (!(d >= 0.0)) throw ValidationError("d", "distance must be non-negative");
  const double lambda = density_from_ocr(spec);
  double area = 2.0 * spec.mean_radius() * d;
  if (spec.end_caps) area += std::numbers::pi * spec.mean_radius_sq();
  return std::clamp(std::exp(-lambda * area), 0.0, 1.0);
}

inline constexpr double kTerminalHeight = 1.5;

/// Monte Carlo LoS probability for a segment of length d centred in the area.
/// Each trial samples only the window that can reach the segment.
inline Estimate p_los_empirical(const ObstacleSpec& spec, double d, std::uint64_t trials, std::uint64_t seed,
                                double terminal_height = kTerminalHeight) {
  spec.validate();
  if (trials < 1) throw ValidationError("trials", "must be >= 1");
  if (!(d >= 0.0)) throw ValidationError("d", "distance must be non-negative");
  const Point3 a{spec.area.center_x - d / 2.0, spec.area.center_y, terminal_height};
  const Point3 b{spec.area.center_x + d / 2.0, spec.area.center_y, terminal_height};
  const Area window{d + 2.0 * spec.radius_max, 2.0 * spec.radius_max, spec.area.center_x, spec.area.center_y};
  std::vector<double> clear(trials);
  parallel_for(trials, [&](std::size_t t) {
    Rng rng = make_stream(seed, {streams::kField, t});
    clear[t] = is_blocked(sample_field_in(spec, window, rng), a, b) ? 0.0 : 1.0;
  });
  Estimate e = mean_and_se(clear);
  // Binomial SE on the add-one (Laplace) proportion, so an all-clear or
  // all-blocked sample still carries a nonzero uncertainty.
  const double n = static_cast<double>(trials);
  const double adjusted = (e.mean * n + 1.0) / (n + 2.0);
  e.se = std::sqrt(adjusted * (1.0 - adjusted) / n);
  return e;
}

}  // namespace ihsim::geometry
