#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailpass/errors.hpp"

namespace tailpass {

inline constexpr double kSpeedOfLight = 299792458.0;

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

/// One client of the waveguide: geometry, upload payload, compute time and the
/// statistical weights entering the convergence bound.
struct ClientProfile {
  int id = 0;
  double u = 0.0;             // projection on the waveguide axis [m]
  double r = 1.0;             // transverse distance to the waveguide [m], > 0
  double payload_bits = 1e8;  // S_i
  double compute_time = 0.0;  // [s]
  double agg_weight = 1.0;    // p_i
  double grad_bound = 1.0;    // G_i
  std::optional<double> tx_power_w;  // overrides SystemConfig::tx_power_w

  void validate() const {
    require(std::isfinite(u), ErrorCode::InvalidParams, "client u must be finite");
    require(r > 0.0 && std::isfinite(r), ErrorCode::InvalidParams, "client r must be > 0");
    require(payload_bits > 0.0, ErrorCode::InvalidParams, "client payload_bits must be > 0");
    require(compute_time >= 0.0, ErrorCode::InvalidParams, "client compute_time must be >= 0");
    require(agg_weight > 0.0, ErrorCode::InvalidParams, "client agg_weight must be > 0");
    require(grad_bound > 0.0, ErrorCode::InvalidParams, "client grad_bound must be > 0");
    if (tx_power_w) require(*tx_power_w > 0.0, ErrorCode::InvalidParams, "client tx power must be > 0");
  }
};

/// Radio and problem constants. Stored in SI units; dB quantities are
/// converted at the boundary. Friis factor and wavenumber are always derived
/// from the carrier frequency.
struct SystemConfig {
  double carrier_hz = 28e9;
  double tx_power_w = dbm_to_watts(23.0);
  double noise_density_dbm_hz = -174.0;
  double bandwidth_hz = 10e6;
  double waveguide_len_m = 10.0;
  int sample_size = 10;

  double friis_factor() const {
    return kSpeedOfLight * kSpeedOfLight /
           (16.0 * std::numbers::pi * std::numbers::pi * carrier_hz * carrier_hz);
  }
  double wavenumber() const { return 2.0 * std::numbers::pi * carrier_hz / kSpeedOfLight; }
  double noise_power_w() const {
    return std::pow(10.0, (noise_density_dbm_hz - 30.0) / 10.0) * bandwidth_hz;
  }

  void validate() const {
    require(carrier_hz > 0.0, ErrorCode::InvalidParams, "carrier_hz must be > 0");
    require(tx_power_w > 0.0, ErrorCode::InvalidParams, "tx power must be > 0");
    require(std::isfinite(noise_density_dbm_hz), ErrorCode::InvalidParams,
            "noise density must be finite");
    require(bandwidth_hz > 0.0, ErrorCode::InvalidParams, "bandwidth_hz must be > 0");
    require(waveguide_len_m > 0.0, ErrorCode::InvalidParams, "waveguide_len_m must be > 0");
    require(sample_size >= 1, ErrorCode::InvalidParams, "sample_size must be >= 1");
  }

  bool in_range(double x) const { return x >= 0.0 && x <= waveguide_len_m; }
};

inline double distance(const ClientProfile& client, double x) {
  return std::hypot(x - client.u, client.r);
}

/// |h|^2 = eta_f / d^2; the phase factor has unit modulus and drops out.
inline double channel_gain(const ClientProfile& client, double x, const SystemConfig& cfg) {
  const double d = distance(client, x);
  return cfg.friis_factor() / (d * d);
}

inline double snr(const ClientProfile& client, double x, const SystemConfig& cfg) {
  const double power = client.tx_power_w.value_or(cfg.tx_power_w);
  return power / cfg.noise_power_w() * channel_gain(client, x, cfg);
}

/// Spectral efficiency log2(1 + gamma) in bit/s/Hz.
inline double spectral_efficiency(double gamma) { return std::log1p(gamma) / std::numbers::ln2; }

inline double upload_time(const ClientProfile& client, double x, const SystemConfig& cfg) {
  const double se = spectral_efficiency(snr(client, x, cfg));
  if (!(se > 0.0) || !std::isfinite(se)) {
    throw Error(ErrorCode::OverflowLatency,
                "spectral efficiency underflowed for client " + std::to_string(client.id));
  }
  const double tau = client.payload_bits / (cfg.bandwidth_hz * se);
  if (!std::isfinite(tau)) {
    throw Error(ErrorCode::OverflowLatency,
                "upload time overflowed for client " + std::to_string(client.id));
  }
  return tau;
}

/// Per-round latency t(x) = t_comp + S / (B log2(1 + gamma(x))).
inline double latency(const ClientProfile& client, double x, const SystemConfig& cfg) {
  return client.compute_time + upload_time(client, x, cfg);
}

/// Closed-form dt/dx. Sign follows sign(x - u).
inline double latency_derivative(const ClientProfile& client, double x, const SystemConfig& cfg) {
  const double gamma = snr(client, x, cfg);
  const double se = spectral_efficiency(gamma);
  if (!(se > 0.0) || !std::isfinite(se)) {
    throw Error(ErrorCode::OverflowLatency,
                "spectral efficiency underflowed for client " + std::to_string(client.id));
  }
  const double dx = x - client.u;
  const double d2 = dx * dx + client.r * client.r;
  return client.payload_bits / (cfg.bandwidth_hz * std::numbers::ln2) * gamma /
         ((1.0 + gamma) * se * se) * (2.0 * dx / d2);
}

inline std::vector<double> latencies(std::span<const ClientProfile> clients, double x,
                                     const SystemConfig& cfg) {
  std::vector<double> t;
  t.reserve(clients.size());
  for (const auto& c : clients) t.push_back(latency(c, x, cfg));
  return t;
}

}  // namespace tailpass
