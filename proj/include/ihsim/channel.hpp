#pragma once

// Per-link channel vectors: path loss, log-normal shadowing, array gain, and
// Rician (LoS) / Rayleigh (NLoS) small-scale fading with exponential Kronecker
// transmit correlation.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>

#include "ihsim/errors.hpp"
#include "ihsim/geometry.hpp"
#include "ihsim/rng.hpp"

namespace ihsim::channel {

using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ChannelConfig {
  int n_tx = 64;
  double carrier_freq_hz = 2.0e9;
  double element_spacing = 0.5;  // wavelengths
  double array_gain_dbi = 15.0;
  double shadow_sigma_db = 8.0;
  double angle_offset_sigma_deg = 2.0;
  double corr_coeff = 0.7;
  double rician_k_db = 10.0;  // +inf: pure LoS
  double subcarrier_bw_hz = 15.0e3;
  double noise_figure_db = 0.0;

  void validate() const {
    if (n_tx < 1) throw ValidationError("wpt.n_tx", "must be >= 1");
    if (!(carrier_freq_hz > 0.0)) throw ValidationError("carrier.frequency_hz", "must be positive");
    if (!(element_spacing > 0.0)) throw ValidationError("antenna.spacing_wavelengths", "must be positive");
    if (!std::isfinite(array_gain_dbi)) throw ValidationError("antenna.array_gain_dbi", "must be finite");
    if (!(shadow_sigma_db >= 0.0)) throw ValidationError("shadowing.sigma_db", "must be >= 0");
    if (!(angle_offset_sigma_deg >= 0.0)) throw ValidationError("angle_offset.sigma_deg", "must be >= 0");
    if (!(corr_coeff >= 0.0 && corr_coeff < 1.0)) throw ValidationError("channel.correlation", "must lie in [0, 1)");
    if (std::isnan(rician_k_db) || rician_k_db == -kInf) throw ValidationError("channel.rician_k_db", "must be a number or +inf");
    if (!(subcarrier_bw_hz > 0.0)) throw ValidationError("subcarrier.bandwidth_hz", "must be positive");
    if (!std::isfinite(noise_figure_db)) throw ValidationError("channel.noise_figure_db", "must be finite");
  }
};

struct LinkGeometry {
  geometry::Point3 tx;
  geometry::Point3 rx;
  double boresight_angle = 0.0;  // radians from array broadside

  double distance() const noexcept { return geometry::distance(tx, rx); }
};

struct ChannelRealization {
  CVector h;
  bool los = false;
  double path_loss_db = 0.0;
  double shadowing_db = 0.0;
  double angle_offset = 0.0;

  /// Large-scale amplitude g.
  double amplitude(double array_gain_dbi) const {
    return std::pow(10.0, (-path_loss_db + array_gain_dbi + shadowing_db) / 20.0);
  }
};

/// 128.1 + 37.6 log10(d / 1 km).
inline double path_loss_db(double d_m) {
  if (!(d_m > 0.0)) throw std::domain_error("path_loss_db: distance must be positive");
  return 128.1 + 37.6 * std::log10(d_m / 1000.0);
}

inline double sample_shadowing(const ChannelConfig& cfg, Rng& rng) { return normal(rng, 0.0, cfg.shadow_sigma_db); }

inline CVector steering_vector(int n_tx, double spacing, double theta) {
  CVector a(n_tx);
  const double step = 2.0 * std::numbers::pi * spacing * std::sin(theta);
  for (int i = 0; i < n_tx; ++i) a[i] = std::polar(1.0, step * i);
  return a;
}

/// Lower Cholesky factor L of R_ij = rho^|i-j|, so L L^H = R.
inline CMatrix correlation_sqrt(int n_tx, double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) throw ValidationError("channel.correlation", "must lie in [0, 1)");
  if (n_tx < 1) throw ValidationError("wpt.n_tx", "must be >= 1");
  Eigen::MatrixXd r(n_tx, n_tx);
  for (int i = 0; i < n_tx; ++i)
    for (int j = 0; j < n_tx; ++j) r(i, j) = std::pow(rho, std::abs(i - j));
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  return llt.matrixL().toDenseMatrix().cast<std::complex<double>>();
}

inline double noise_power_dbm(const ChannelConfig& cfg) {
  return -174.0 + 10.0 * std::log10(cfg.subcarrier_bw_hz) + cfg.noise_figure_db;
}

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// Channel generator with the correlation factor computed once.
class ChannelModel {
 public:
  explicit ChannelModel(ChannelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    sqrt_r_ = correlation_sqrt(cfg_.n_tx, cfg_.corr_coeff);
  }

  const ChannelConfig& config() const noexcept { return cfg_; }

  /// Draws one realization. The stream is consumed in a fixed order
  /// (shadowing, angle offset, n_tx fading samples) whatever the LoS state, so
  /// paired runs that differ only in LoS stay aligned. A supplied shadowing
  /// value replaces the draw.
  ChannelRealization draw(const LinkGeometry& geom, bool los, Rng& rng,
                          std::optional<double> shadowing_db = std::nullopt) const {
    ChannelRealization out;
    out.los = los;
    out.path_loss_db = path_loss_db(geom.distance());
    out.shadowing_db = shadowing_db ? *shadowing_db : sample_shadowing(cfg_, rng);
    out.angle_offset = normal(rng, 0.0, cfg_.angle_offset_sigma_deg * std::numbers::pi / 180.0);
    CVector w(cfg_.n_tx);
    for (int i = 0; i < cfg_.n_tx; ++i) w[i] = complex_normal(rng, 1.0);

    const double g = out.amplitude(cfg_.array_gain_dbi);
    if (!los) {
      out.h = g * (sqrt_r_ * w);
      return out;
    }
    const CVector a = steering_vector(cfg_.n_tx, cfg_.element_spacing, geom.boresight_angle + out.angle_offset);
    if (cfg_.rician_k_db == kInf) {
      out.h = g * a;
      return out;
    }
    const double k = db_to_linear(cfg_.rician_k_db);
    out.h = g * std::sqrt(k / (k + 1.0)) * a + g * std::sqrt(1.0 / (k + 1.0)) * (sqrt_r_ * w);
    return out;
  }

  ChannelRealization draw(const LinkGeometry& geom, const geometry::ObstacleField& field, Rng& rng,
                          std::optional<double> shadowing_db = std::nullopt) const {
    return draw(geom, !geometry::is_blocked(field, geom.tx, geom.rx), rng, shadowing_db);
  }

 private:
  ChannelConfig cfg_;
  CMatrix sqrt_r_;
};

inline ChannelRealization draw_channel(const LinkGeometry& geom, bool los, const ChannelConfig& cfg, Rng& rng) {
  return ChannelModel(cfg).draw(geom, los, rng);
}

}  // namespace ihsim::channel
