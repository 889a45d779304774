#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "tailpass/errors.hpp"
#include "tailpass/geometry_link.hpp"
#include "tailpass/order_stats.hpp"

namespace tailpass {

/// Inputs of the rounds-to-accuracy bound (smoothness, strong convexity, local
/// epochs, per-client gradient statistics).
struct ConvergenceParams {
  double smoothness = 1.0;        // L_sm
  double strong_convexity = 1.0;  // m_cv
  int local_epochs = 1;           // E
  int sample_size = 1;            // K
  std::vector<double> grad_var_bounds;  // chi_i
  std::vector<double> grad_bounds;      // G_i
  std::vector<double> agg_weights;      // p_i
  double opt_gap = 0.0;    // F* - sum_i p_i F_i*
  double init_dist = 0.0;  // ||w0 - w*||

  void validate() const {
    require(strong_convexity > 0.0, ErrorCode::InvalidParams, "strong_convexity must be > 0");
    require(smoothness >= strong_convexity, ErrorCode::InvalidParams,
            "smoothness must be >= strong_convexity");
    require(local_epochs >= 1, ErrorCode::InvalidParams, "local_epochs must be >= 1");
    require(sample_size >= 1, ErrorCode::InvalidParams, "sample_size must be >= 1");
    const std::size_t n = agg_weights.size();
    require(n >= 1, ErrorCode::InvalidParams, "agg_weights must be nonempty");
    require(grad_bounds.size() == n && grad_var_bounds.size() == n, ErrorCode::InvalidParams,
            "per-client sequences must have equal length");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      require(agg_weights[i] > 0.0, ErrorCode::InvalidParams, "agg_weights must be > 0");
      require(grad_bounds[i] > 0.0, ErrorCode::InvalidParams, "grad_bounds must be > 0");
      require(grad_var_bounds[i] >= 0.0, ErrorCode::InvalidParams, "grad_var_bounds must be >= 0");
      total += agg_weights[i];
    }
    require(std::abs(total - 1.0) <= 1e-12, ErrorCode::InvalidParams, "agg_weights must sum to 1");
    require(std::isfinite(opt_gap), ErrorCode::InvalidParams, "opt_gap must be finite");
    require(init_dist >= 0.0 && std::isfinite(init_dist), ErrorCode::InvalidParams,
            "init_dist must be >= 0");
  }
};

/// g(q) = omega * sum_i c_i / q_i + nu. The order of `c` must match whatever
/// distribution it is evaluated against.
struct ConvergenceConstants {
  double omega = 1.0;
  double nu = 0.0;
  std::vector<double> c;

  ConvergenceConstants reordered(const LatencyProfile& prof) const {
    return {omega, nu, prof.to_sorted<double>(c)};
  }
};

/// c_i = p_i^2 G_i^2 from the clients' aggregation weights and gradient bounds.
inline std::vector<double> statistical_weights(std::span<const ClientProfile> clients) {
  std::vector<double> c;
  c.reserve(clients.size());
  for (const auto& cl : clients) c.push_back(cl.agg_weight * cl.agg_weight * cl.grad_bound * cl.grad_bound);
  return c;
}

inline ConvergenceConstants constants_from_params(const ConvergenceParams& p) {
  p.validate();
  const double ls = p.smoothness, mc = p.strong_convexity;
  const double e = p.local_epochs;
  ConvergenceConstants out;
  out.omega = (e / p.sample_size) * (ls / (mc * mc));
  double v_var = 0.0, v_eng = 0.0;
  out.c.resize(p.agg_weights.size());
  for (std::size_t i = 0; i < p.agg_weights.size(); ++i) {
    const double pi = p.agg_weights[i], gi = p.grad_bounds[i], chi = p.grad_var_bounds[i];
    out.c[i] = pi * pi * gi * gi;
    v_var += pi * pi * chi * chi;
    v_eng += pi * gi * gi;
  }
  out.nu = ls / (mc * mc) * (v_var / e + p.opt_gap + e * v_eng) + ls / mc * p.init_dist;
  return out;
}

inline double convergence_factor(const SamplingDistribution& q, const ConvergenceConstants& consts) {
  if (q.size() != consts.c.size()) {
    throw Error(ErrorCode::DimensionMismatch, "weights and distribution differ in length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) s += consts.c[i] / q[i];
  const double g = consts.omega * s + consts.nu;
  if (!(g > 0.0)) throw Error(ErrorCode::NonPositiveG, "convergence factor g(q) <= 0");
  return g;
}

/// J(q, x) = f(q, x) g(q); consts.c in sorted-client order.
inline double wallclock_objective(const SamplingDistribution& q, const LatencyProfile& prof, long K,
                                  const ConvergenceConstants& consts) {
  return expected_straggler(q, prof, K) * convergence_factor(q, consts);
}

}  // namespace tailpass
