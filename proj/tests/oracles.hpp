#pragma once

// Reference computations used only by the tests. They are written without
// calling into the library's formulas so that agreement means something.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

#include "tailpass/geometry_link.hpp"
#include "tailpass/rng.hpp"

namespace oracle {

/// E[max] by summing over every ordered K-tuple of client draws.
inline double enumerate_expected_max(const std::vector<double>& t, const std::vector<double>& q, int K) {
  const std::size_t n = t.size();
  std::vector<std::size_t> idx(static_cast<std::size_t>(K), 0);
  double total = 0.0;
  for (;;) {
    double p = 1.0, m = -std::numeric_limits<double>::infinity();
    for (auto i : idx) {
      p *= q[i];
      m = std::max(m, t[i]);
    }
    total += p * m;
    std::size_t k = 0;
    while (k < idx.size() && ++idx[k] == n) idx[k++] = 0;
    if (k == idx.size()) return total;
  }
}

/// P(client i is the maximum) by the same enumeration; ties go to the later
/// index in `t`'s order, which must be sorted.
inline std::vector<double> enumerate_straggler_pmf(const std::vector<double>& t, const std::vector<double>& q,
                                                   int K) {
  const std::size_t n = t.size();
  std::vector<std::size_t> idx(static_cast<std::size_t>(K), 0);
  std::vector<double> pi(n, 0.0);
  for (;;) {
    double p = 1.0;
    std::size_t worst = 0;
    for (auto i : idx) {
      p *= q[i];
      worst = std::max(worst, i);
    }
    pi[worst] += p;
    std::size_t k = 0;
    while (k < idx.size() && ++idx[k] == n) idx[k++] = 0;
    if (k == idx.size()) return pi;
  }
}

/// gamma at distance d straight from the link budget in dB.
inline double snr_db_budget(double carrier_hz, double tx_dbm, double n0_dbm_hz, double bandwidth_hz, double d) {
  const double lambda = 299792458.0 / carrier_hz;
  const double path_gain_db = 20.0 * std::log10(lambda / (4.0 * std::numbers::pi * d));
  const double noise_dbm = n0_dbm_hz + 10.0 * std::log10(bandwidth_hz);
  return tx_dbm + path_gain_db - noise_dbm;
}

inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

inline std::vector<double> random_simplex(tailpass::Rng& rng, std::size_t n, double alpha = 1.0) {
  auto q = rng.dirichlet(n, alpha);
  // keep away from the boundary so finite differences stay inside
  for (auto& v : q) v = 0.9 * v + 0.1 / static_cast<double>(n);
  return q;
}

inline std::vector<double> random_latencies(tailpass::Rng& rng, std::size_t n, double lo = 0.5, double hi = 3.0) {
  std::vector<double> t(n);
  for (auto& v : t) v = rng.uniform(lo, hi);
  return t;
}

/// Minimum of h over the barycentric grid {(i, j, steps-i-j)/steps} with all
/// coordinates strictly positive.
inline double barycentric_min(int steps, const std::function<double(const std::vector<double>&)>& h,
                              std::vector<double>* arg = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 1; i < steps; ++i)
    for (int j = 1; i + j < steps; ++j) {
      const std::vector<double> q{double(i) / steps, double(j) / steps, double(steps - i - j) / steps};
      const double v = h(q);
      if (v < best) {
        best = v;
        if (arg) *arg = q;
      }
    }
  return best;
}

/// Rounds for w <- w - lr a (w - b) to reach (a/2)|w - b|^2 <= eps.
inline long quadratic_rounds(double a, double lr, double dist2, double eps) {
  const double gap0 = 0.5 * a * dist2;
  if (gap0 <= eps) return 0;
  const double rate = (1.0 - lr * a) * (1.0 - lr * a);
  return static_cast<long>(std::ceil(std::log(gap0 / eps) / std::log(1.0 / rate)));
}

inline tailpass::ClientProfile client(int id, double u, double r, double tcomp = 0.1, double payload = 1e8,
                                      double p = 1.0, double G = 1.0) {
  tailpass::ClientProfile c;
  c.id = id;
  c.u = u;
  c.r = r;
  c.compute_time = tcomp;
  c.payload_bits = payload;
  c.agg_weight = p;
  c.grad_bound = G;
  return c;
}

}  // namespace oracle
