#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tailpass/convergence.hpp"
#include "tailpass/errors.hpp"
#include "tailpass/numerics.hpp"
#include "tailpass/order_stats.hpp"
#include "tailpass/rng.hpp"

namespace tailpass {

struct InnerSolveOptions {
  int n_starts = 8;
  int max_iters = 500;
  /// Stop when the relative spread of the KKT multipliers drops below this.
  double grad_tol = 1e-12;
  // projected-gradient fallback: initial step scale, backtracking factor and
  // Armijo constant
  double initial_step = 0.1;
  double shrink = 0.5;
  double armijo = 1e-4;
  /// Lower bound on every coordinate while iterating.
  double floor_eps = 1e-12;

  void validate(std::size_t n) const {
    require(n_starts >= 1, ErrorCode::InvalidParams, "n_starts must be >= 1");
    require(max_iters >= 1, ErrorCode::InvalidParams, "max_iters must be >= 1");
    require(grad_tol > 0.0, ErrorCode::InvalidParams, "grad_tol must be > 0");
    require(initial_step > 0.0, ErrorCode::InvalidParams, "initial_step must be > 0");
    require(shrink > 0.0 && shrink < 1.0, ErrorCode::InvalidParams, "shrink must be in (0,1)");
    require(armijo > 0.0 && armijo < 1.0, ErrorCode::InvalidParams, "armijo must be in (0,1)");
    require(floor_eps > 0.0 && floor_eps * static_cast<double>(n) < 1.0, ErrorCode::InvalidParams,
            "floor_eps must be in (0, 1/N)");
  }
};

/// Result of an inner solve. `q` is in sorted-client order.
struct InnerSolution {
  SamplingDistribution q;
  double J = 0.0;
  double f = 0.0;
  double g = 0.0;
  double kkt_residual = 0.0;
  bool converged = false;
  int best_start = 0;
  int iterations = 0;
};

inline SamplingDistribution sqrt_rule(std::span<const double> c) {
  require(!c.empty(), ErrorCode::InvalidArgument, "sqrt_rule needs at least one weight");
  std::vector<double> w(c.size());
  double total = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    require(c[i] > 0.0 && std::isfinite(c[i]), ErrorCode::NonPositiveWeight,
            "statistical weights must be > 0");
    w[i] = std::sqrt(c[i]);
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return SamplingDistribution(std::move(w));
}

namespace detail {

/// J(q) = f(q) g(q) over sorted latencies `t`, extended off the simplex via
/// the gap form so that -D is the exact gradient of f.
class ProductObjective {
 public:
  ProductObjective(std::span<const double> t, std::span<const double> c, double omega, double nu,
                   long K)
      : t_(t.begin(), t.end()), c_(c.begin(), c.end()), omega_(omega), nu_(nu), k_(K) {
    gaps_.resize(t_.size() - 1);
    for (std::size_t i = 0; i + 1 < t_.size(); ++i) gaps_[i] = t_[i + 1] - t_[i];
  }

  struct Eval {
    double f = 0.0, g = 0.0, J = 0.0;
    std::vector<double> cum, D, lambda;
    double residual = 0.0;
  };

  std::size_t size() const { return t_.size(); }

  Eval eval(const std::vector<double>& q) const {
    const std::size_t n = size();
    Eval e;
    e.D.assign(n, 0.0);
    e.lambda.resize(n);
    e.cum.resize(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) e.cum[i] = (acc += q[i]);
    e.f = t_.back();
    double tail = 0.0;
    for (std::size_t i = n - 1; i-- > 0;) {
      const double qk1 = ipow(e.cum[i], k_ - 1);
      e.f -= gaps_[i] * qk1 * e.cum[i];
      tail += gaps_[i] * qk1;
      e.D[i] = static_cast<double>(k_) * tail;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += c_[i] / q[i];
    e.g = omega_ * s + nu_;
    if (!(e.g > 0.0)) throw Error(ErrorCode::NonPositiveG, "convergence factor g(q) <= 0");
    e.J = e.f * e.g;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      e.lambda[i] = e.f * omega_ * c_[i] / (q[i] * q[i]) + e.g * e.D[i];
      mean += e.lambda[i];
    }
    mean /= static_cast<double>(n);
    double worst = 0.0;
    for (double l : e.lambda) worst = std::max(worst, std::abs(l - mean));
    e.residual = mean > 0.0 ? worst / mean : 0.0;
    return e;
  }

  double value(const std::vector<double>& q) const {
    const std::size_t n = size();
    double acc = 0.0, f = t_.back(), s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += q[i];
      if (i + 1 < n) f -= gaps_[i] * ipow(acc, k_ - 1) * acc;
      s += c_[i] / q[i];
    }
    return f * (omega_ * s + nu_);
  }

  /// Hessian of the gap-form J at q (full N x N, not projected).
  Eigen::MatrixXd hessian(const std::vector<double>& q, const Eval& e) const {
    const std::size_t n = size();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    if (k_ >= 2) {
      std::vector<double> suffix(n, 0.0);
      for (std::size_t i = n - 1; i-- > 0;) suffix[i] = suffix[i + 1] + gaps_[i] * ipow(e.cum[i], k_ - 2);
      const double scale = -static_cast<double>(k_) * static_cast<double>(k_ - 1) * e.g;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) h(a, b) = scale * suffix[std::max(a, b)];
    }
    for (std::size_t a = 0; a < n; ++a) {
      const double grad_g_a = -omega_ * c_[a] / (q[a] * q[a]);
      for (std::size_t b = 0; b < n; ++b) {
        const double grad_g_b = -omega_ * c_[b] / (q[b] * q[b]);
        h(a, b) += (-e.D[a]) * grad_g_b + grad_g_a * (-e.D[b]);
      }
      h(a, a) += e.f * 2.0 * omega_ * c_[a] / (q[a] * q[a] * q[a]);
    }
    return h;
  }

 private:
  std::vector<double> t_, gaps_, c_;
  double omega_, nu_;
  long k_;
};

/// Euclidean projection onto {y : y_i >= floor, sum y = 1}.
inline void project_to_simplex(std::vector<double>& y, double floor) {
  const std::size_t n = y.size();
  const double mass = 1.0 - static_cast<double>(n) * floor;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = y[i] - floor;
  std::vector<double> sorted = u;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cs = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cs += sorted[j];
    const double candidate = (cs - mass) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) theta = candidate;
  }
  for (std::size_t i = 0; i < n; ++i) y[i] = std::max(u[i] - theta, 0.0) + floor;
}

inline void renormalize(std::vector<double>& q) {
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  for (auto& v : q) v /= total;
}

struct LocalResult {
  std::vector<double> q;
  ProductObjective::Eval eval;
  bool converged = false;
  int iterations = 0;
};

/// Descent from one start: equality-constrained Newton steps where they give
/// descent, projected gradient with backtracking otherwise.
inline LocalResult local_descent(const ProductObjective& obj, std::vector<double> q,
                                 const InnerSolveOptions& opts) {
  const std::size_t n = obj.size();
  constexpr double eps = std::numeric_limits<double>::epsilon();
  auto ev = obj.eval(q);
  double pg_step = -1.0;
  int it = 0;
  bool converged = ev.residual <= opts.grad_tol;
  for (; it < opts.max_iters && !converged; ++it) {
    bool stepped = false;

    // Newton on the KKT system [H 1; 1^T 0][d; mu] = [lambda - mean; 0].
    {
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + 1, n + 1);
      kkt.topLeftCorner(n, n) = obj.hessian(q, ev);
      kkt.block(0, n, n, 1).setOnes();
      kkt.block(n, 0, 1, n).setOnes();
      // the constant part of lambda only moves the multiplier; centring the
      // right-hand side keeps the solve accurate near convergence
      const double lambda_mean =
          std::accumulate(ev.lambda.begin(), ev.lambda.end(), 0.0) / static_cast<double>(n);
      Eigen::VectorXd rhs(n + 1);
      for (std::size_t i = 0; i < n; ++i) rhs(i) = ev.lambda[i] - lambda_mean;
      rhs(n) = 0.0;
      const Eigen::VectorXd sol = kkt.partialPivLu().solve(rhs);
      std::vector<double> d(n);
      double slope = 0.0;  // grad J . d
      bool finite = true;
      for (std::size_t i = 0; i < n; ++i) {
        d[i] = sol(i);
        finite = finite && std::isfinite(d[i]);
        slope -= ev.lambda[i] * d[i];
      }
      if (finite && slope < 0.0) {
        double alpha = 1.0;
        for (std::size_t i = 0; i < n; ++i)
          if (d[i] < 0.0) alpha = std::min(alpha, 0.9 * (q[i] - opts.floor_eps) / -d[i]);
        for (int bt = 0; bt < 40 && alpha > 0.0; ++bt, alpha *= opts.shrink) {
          std::vector<double> trial(n);
          for (std::size_t i = 0; i < n; ++i) trial[i] = std::max(q[i] + alpha * d[i], opts.floor_eps);
          renormalize(trial);
          auto tev = obj.eval(trial);
          const bool armijo = tev.J <= ev.J + opts.armijo * alpha * slope;
          // in the rounding regime J cannot resolve the decrease; accept the
          // full step when it improves stationarity
          const bool rounding = alpha == 1.0 && tev.J <= ev.J * (1.0 + 16.0 * eps) &&
                                tev.residual < ev.residual;
          if (armijo || rounding) {
            q = std::move(trial);
            ev = std::move(tev);
            stepped = true;
            break;
          }
        }
      }
    }

    if (!stepped) {
      double mean = 0.0;
      for (double l : ev.lambda) mean += l;
      mean /= static_cast<double>(n);
      double pg_norm = 0.0, qmin = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        pg_norm = std::max(pg_norm, std::abs(ev.lambda[i] - mean));
        qmin = std::min(qmin, q[i]);
      }
      if (pg_step <= 0.0) pg_step = opts.initial_step * qmin / std::max(pg_norm, 1e-300);
      double beta = pg_step;
      for (int bt = 0; bt < 60; ++bt, beta *= opts.shrink) {
        std::vector<double> trial(n);
        for (std::size_t i = 0; i < n; ++i) trial[i] = q[i] + beta * ev.lambda[i];
        project_to_simplex(trial, opts.floor_eps);
        renormalize(trial);
        double slope = 0.0;
        for (std::size_t i = 0; i < n; ++i) slope -= ev.lambda[i] * (trial[i] - q[i]);
        if (!(slope < 0.0)) continue;
        const double jt = obj.value(trial);
        if (jt <= ev.J + opts.armijo * slope) {
          q = std::move(trial);
          ev = obj.eval(q);
          stepped = true;
          pg_step = beta * 2.0;
          break;
        }
      }
    }

    if (!stepped) break;  // stalled
    converged = ev.residual <= opts.grad_tol;
  }
  return {std::move(q), std::move(ev), converged, it};
}

inline InnerSolution solve_product_problem(std::span<const double> t_sorted,
                                           std::span<const double> c, double omega, double nu,
                                           long K, const InnerSolveOptions& opts,
                                           std::uint64_t seed,
                                           std::span<const std::vector<double>> extra_starts) {
  const std::size_t n = t_sorted.size();
  require(n >= 1, ErrorCode::InvalidArgument, "inner problem needs at least one client");
  require(c.size() == n, ErrorCode::DimensionMismatch, "weights and latencies differ in length");
  require(K >= 1, ErrorCode::InvalidArgument, "K must be >= 1");
  opts.validate(n);
  const auto base = sqrt_rule(c);
  if (n == 1) {
    InnerSolution s;
    s.q = SamplingDistribution(std::vector<double>{1.0});
    s.f = t_sorted[0];
    s.g = omega * c[0] + nu;
    if (!(s.g > 0.0)) throw Error(ErrorCode::NonPositiveG, "convergence factor g(q) <= 0");
    s.J = s.f * s.g;
    s.converged = true;
    return s;
  }

  ProductObjective obj(t_sorted, c, omega, nu, K);
  std::vector<std::vector<double>> starts;
  starts.push_back(base.q());
  for (int k = 1; k < opts.n_starts; ++k) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    auto mix = rng.dirichlet(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) mix[i] = 0.5 * base[i] + 0.5 * mix[i];
    starts.push_back(std::move(mix));
  }
  for (const auto& s : extra_starts) {
    require(s.size() == n, ErrorCode::DimensionMismatch, "warm start has wrong length");
    starts.push_back(s);
  }

  std::optional<LocalResult> best;
  int best_index = 0, total_iters = 0;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    auto q0 = starts[k];
    for (auto& v : q0) v = std::max(v, opts.floor_eps);
    renormalize(q0);
    auto res = local_descent(obj, std::move(q0), opts);
    total_iters += res.iterations;
    // a later start must win by more than rounding noise
    if (!best || res.eval.J < best->eval.J * (1.0 - 1e-12)) {
      best = std::move(res);
      best_index = static_cast<int>(k);
    }
  }

  InnerSolution s;
  s.q = SamplingDistribution(best->q);
  s.f = best->eval.f;
  s.g = best->eval.g;
  s.J = best->eval.J;
  s.kkt_residual = best->eval.residual;
  s.converged = best->converged;
  s.best_start = best_index;
  s.iterations = total_iters;
  return s;
}

}  // namespace detail

/// Minimises J(q) = f(q) g(q) over the open simplex for fixed latencies.
/// `consts.c` must be in the profile's sorted order. Starts: the square-root
/// rule, n_starts-1 Dirichlet perturbations of it, then any `extra_starts`.
inline InnerSolution solve_inner(const LatencyProfile& prof, const ConvergenceConstants& consts,
                                 long K, const InnerSolveOptions& opts, std::uint64_t seed,
                                 std::span<const std::vector<double>> extra_starts = {}) {
  return detail::solve_product_problem(prof.sorted_t, consts.c, consts.omega, consts.nu, K, opts,
                                       seed, extra_starts);
}

struct KktReport {
  std::vector<double> lambda;
  double lambda_spread = 0.0;
  std::vector<double> recursion_residuals;
  std::vector<double> psi;
  double f = 0.0;
  double g = 0.0;
};

/// Stationarity diagnostics at q: lambda_s = f w c_s / q_s^2 + g D_s should be
/// constant, and psi_i = c_i / q_i^2 should step up by the tail premium.
inline KktReport kkt_report(const SamplingDistribution& q, const LatencyProfile& prof,
                            const ConvergenceConstants& consts, long K) {
  const std::size_t n = q.size();
  require(consts.c.size() == n, ErrorCode::DimensionMismatch, "weights have wrong length");
  KktReport r;
  r.f = expected_straggler(q, prof, K);
  r.g = convergence_factor(q, consts);
  const auto d = tail_sensitivity(q, prof, K);
  r.lambda.resize(n);
  r.psi.resize(n);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, mean = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    r.psi[s] = consts.c[s] / (q[s] * q[s]);
    r.lambda[s] = r.f * consts.omega * r.psi[s] + r.g * d[s];
    lo = std::min(lo, r.lambda[s]);
    hi = std::max(hi, r.lambda[s]);
    mean += r.lambda[s];
  }
  mean /= static_cast<double>(n);
  r.lambda_spread = (hi - lo) / mean;
  const auto& cum = q.cum();
  r.recursion_residuals.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double premium = r.g / (r.f * consts.omega) * static_cast<double>(K) * prof.gaps[i] *
                           ipow(cum[i + 1], K - 1);
    r.recursion_residuals[i] = r.psi[i + 1] - r.psi[i] - premium;
  }
  return r;
}

/// (g / (f w)) K gap_i Q_i^{K-1} for 0-based gap index i in [0, N-2].
inline double tail_premium(const LatencyProfile& prof, const SamplingDistribution& q,
                           std::size_t gap_index, const ConvergenceConstants& consts, long K) {
  if (gap_index + 1 >= prof.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "gap index " + std::to_string(gap_index) +
                                                " out of range for " +
                                                std::to_string(prof.size()) + " clients");
  }
  const double f = expected_straggler(q, prof, K);
  const double g = convergence_factor(q, consts);
  return g / (f * consts.omega) * static_cast<double>(K) * prof.gaps[gap_index] *
         ipow(q.cum()[gap_index + 1], K - 1);
}

/// Latency classes: maximal runs of sorted clients whose adjacent latencies
/// differ by at most the tie tolerance.
struct ClassPartition {
  std::vector<std::vector<std::size_t>> classes;  // sorted-client indices
  std::vector<double> class_times;                // strictly increasing
  std::vector<double> class_weights;              // C_m = sum sqrt(c_i)
  std::vector<double> sqrt_c;                     // per sorted client

  std::size_t size() const { return classes.size(); }
};

inline ClassPartition class_partition(const LatencyProfile& prof, std::span<const double> c,
                                      double tie_tol = 1e-9) {
  require(tie_tol >= 0.0, ErrorCode::InvalidArgument, "tie_tol must be >= 0");
  require(c.size() == prof.size(), ErrorCode::DimensionMismatch, "weights have wrong length");
  ClassPartition part;
  part.sqrt_c.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    require(c[i] > 0.0, ErrorCode::NonPositiveWeight, "statistical weights must be > 0");
    part.sqrt_c[i] = std::sqrt(c[i]);
  }
  for (std::size_t i = 0; i < prof.size(); ++i) {
    if (i == 0 || prof.gaps[i - 1] > tie_tol) part.classes.emplace_back();
    part.classes.back().push_back(i);
  }
  for (const auto& cls : part.classes) {
    const double t0 = prof.sorted_t[cls.front()];
    double dev = 0.0, weight = 0.0;
    for (auto i : cls) {
      dev += prof.sorted_t[i] - t0;
      weight += part.sqrt_c[i];
    }
    part.class_times.push_back(t0 + dev / static_cast<double>(cls.size()));
    part.class_weights.push_back(weight);
  }
  return part;
}

struct ClassReducedSolution {
  std::vector<double> deltas;  // per-class masses
  SamplingDistribution q;      // expanded, sorted-client order
  double J = 0.0;
  InnerSolution reduced;
};

/// Solves the M-class problem (class masses with weights C_m^2) and expands
/// by the within-class square-root law. Only consts.omega and consts.nu are
/// used; the weights come from the partition.
inline ClassReducedSolution solve_class_reduced(const ClassPartition& part,
                                                const ConvergenceConstants& consts, long K,
                                                const InnerSolveOptions& opts, std::uint64_t seed,
                                                std::span<const std::vector<double>> extra_starts = {}) {
  require(part.size() >= 1, ErrorCode::InvalidArgument, "partition has no classes");
  std::vector<double> c_class(part.size());
  for (std::size_t m = 0; m < part.size(); ++m) c_class[m] = part.class_weights[m] * part.class_weights[m];
  ClassReducedSolution out;
  out.reduced = detail::solve_product_problem(part.class_times, c_class, consts.omega, consts.nu, K,
                                              opts, seed, extra_starts);
  out.deltas = out.reduced.q.q();
  std::vector<double> q(part.sqrt_c.size());
  for (std::size_t m = 0; m < part.size(); ++m)
    for (auto i : part.classes[m]) q[i] = out.deltas[m] * part.sqrt_c[i] / part.class_weights[m];
  detail::renormalize(q);
  out.q = SamplingDistribution(std::move(q));
  out.J = out.reduced.J;
  return out;
}

/// Fast class at t_f, slow class at t_s > t_f, square-root aggregates C_f, C_s.
struct TwoClassProblem {
  double t_f = 1.0;
  double t_s = 2.0;
  double C_f = 1.0;
  double C_s = 1.0;
  double omega = 1.0;
  double nu = 0.0;
  long K = 1;

  double gap() const { return t_s - t_f; }

  void validate() const {
    require(gap() > 0.0, ErrorCode::InvalidParams, "two-class problem needs t_s > t_f");
    require(C_f > 0.0 && C_s > 0.0, ErrorCode::InvalidParams, "class weights must be > 0");
    require(omega > 0.0, ErrorCode::InvalidParams, "omega must be > 0");
    require(K >= 1, ErrorCode::InvalidParams, "K must be >= 1");
  }

  double f(double delta) const { return t_s - gap() * ipow(1.0 - delta, K); }
  double g(double delta) const {
    return omega * (C_f * C_f / (1.0 - delta) + C_s * C_s / delta) + nu;
  }
  /// Statistics-only split C_s / (C_f + C_s), the minimiser of g alone.
  double stat_split() const { return C_s / (C_f + C_s); }
};

inline double two_class_objective(const TwoClassProblem& p, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw Error(ErrorCode::DeltaOutOfRange, "delta must lie in (0, 1)");
  }
  return p.f(delta) * p.g(delta);
}

/// dJ/ddelta = gap K (1-d)^{K-1} g + f w (C_f^2/(1-d)^2 - C_s^2/d^2).
inline double two_class_stationarity(const TwoClassProblem& p, double delta) {
  const double one_minus = 1.0 - delta;
  return p.gap() * static_cast<double>(p.K) * ipow(one_minus, p.K - 1) * p.g(delta) +
         p.f(delta) * p.omega *
             (p.C_f * p.C_f / (one_minus * one_minus) - p.C_s * p.C_s / (delta * delta));
}

struct TwoClassSolution {
  double delta = 0.0;
  double J = 0.0;
  double stationarity_residual = 0.0;
  bool converged = false;
};

/// Global 1-D minimisation: logit-spaced scan over (1e-8, 1 - 1e-8), golden
/// section in the best cell, then bisection on the stationarity condition.
inline TwoClassSolution solve_two_class(const TwoClassProblem& p, double tol = 1e-8) {
  p.validate();
  constexpr double lo_edge = 1e-8, hi_edge = 1.0 - 1e-8;
  constexpr int n_scan = 4001;
  const double z_lo = std::log(lo_edge / (1.0 - lo_edge));
  const double z_hi = -z_lo;
  auto at = [&](int k) {
    const double z = z_lo + (z_hi - z_lo) * k / (n_scan - 1);
    return 1.0 / (1.0 + std::exp(-z));
  };
  int best = 0;
  double best_j = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n_scan; ++k) {
    const double j = two_class_objective(p, at(k));
    if (j < best_j) {
      best_j = j;
      best = k;
    }
  }
  double lo = at(std::max(best - 1, 0));
  double hi = at(std::min(best + 1, n_scan - 1));
  const auto gs = golden_section([&](double d) { return two_class_objective(p, d); }, lo, hi, 1e-10);
  double delta = gs.x;

  const double s_lo = two_class_stationarity(p, lo);
  const double s_hi = two_class_stationarity(p, hi);
  if (s_lo < 0.0 && s_hi > 0.0) {
    const double root =
        bisect([&](double d) { return two_class_stationarity(p, d); }, lo, hi, s_lo, s_hi, 0.0, 100);
    if (two_class_objective(p, root) <= two_class_objective(p, delta) * (1.0 + 1e-12)) delta = root;
  }
  if (two_class_objective(p, delta) > best_j) delta = at(best);

  TwoClassSolution sol;
  sol.delta = delta;
  sol.J = two_class_objective(p, delta);
  sol.stationarity_residual = std::abs(two_class_stationarity(p, delta));
  sol.converged = sol.stationarity_residual <= tol * std::abs(sol.J);
  return sol;
}

struct ThresholdCheck {
  bool satisfied = false;
  double lhs = 0.0;  // C_s^2
  double rhs = 0.0;
};

/// Sufficient condition for slow-class collapse at sample size p.K:
/// C_s^2 <= (1 - xi)(rho/K) gap P / (t_s - gap P) (w C_f^2 + nu) / w,
/// with P = (1 - rho/K)^K.
inline ThresholdCheck collapse_threshold(const TwoClassProblem& p, double rho, double xi) {
  require(rho > 0.0, ErrorCode::InvalidMargin, "rho must be > 0");
  require(xi > 0.0 && xi < 1.0, ErrorCode::InvalidMargin, "xi must lie in (0, 1)");
  require(rho < static_cast<double>(p.K), ErrorCode::InvalidMargin, "rho must be < K");
  require(p.omega > 0.0, ErrorCode::InvalidMargin, "omega must be > 0");
  const double k = static_cast<double>(p.K);
  const double pk = ipow(1.0 - rho / k, p.K);
  const double tail = p.gap() * pk;
  require(tail < p.t_s, ErrorCode::InvalidMargin, "gap * P must be below t_s");
  ThresholdCheck out;
  out.lhs = p.C_s * p.C_s;
  out.rhs = (1.0 - xi) * (rho / k) * tail / (p.t_s - tail) *
            (p.omega * p.C_f * p.C_f + p.nu) / p.omega;
  out.satisfied = out.lhs <= out.rhs;
  return out;
}

struct PhaseSweepOptions {
  double rho = 1.0;
  double xi = 0.5;
  /// When set, C_s^2 is rescaled per K to this fraction of the threshold.
  std::optional<double> threshold_fraction;
  double tol = 1e-8;
};

struct PhaseSweepRow {
  long K = 0;
  double C_s = 0.0;
  double delta = 0.0;
  double K_delta = 0.0;
  double ratio_stat = 0.0;
  bool threshold_satisfied = false;
  bool threshold_defined = true;
  double split_margin = 0.0;  // C_s/delta - C_f/(1-delta), >= 0 at a KKT point
};

inline std::vector<PhaseSweepRow> phase_transition_sweep(const TwoClassProblem& base,
                                                         std::span<const long> Ks,
                                                         const PhaseSweepOptions& opts = {}) {
  require(!Ks.empty(), ErrorCode::InvalidArgument, "sweep needs at least one K");
  std::vector<PhaseSweepRow> rows;
  for (long K : Ks) {
    TwoClassProblem p = base;
    p.K = K;
    if (opts.threshold_fraction) {
      const auto th = collapse_threshold(p, opts.rho, opts.xi);
      p.C_s = std::sqrt(*opts.threshold_fraction * th.rhs);
    }
    const auto sol = solve_two_class(p, opts.tol);
    PhaseSweepRow row;
    row.K = K;
    row.C_s = p.C_s;
    row.delta = sol.delta;
    row.K_delta = static_cast<double>(K) * sol.delta;
    row.ratio_stat = sol.delta / p.stat_split();
    if (opts.rho < static_cast<double>(K)) {
      row.threshold_satisfied = collapse_threshold(p, opts.rho, opts.xi).satisfied;
    } else {
      row.threshold_defined = false;
    }
    row.split_margin = p.C_s / sol.delta - p.C_f / (1.0 - sol.delta);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tailpass
