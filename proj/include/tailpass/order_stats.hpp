#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tailpass/errors.hpp"
#include "tailpass/geometry_link.hpp"
#include "tailpass/numerics.hpp"
#include "tailpass/parallel.hpp"
#include "tailpass/rng.hpp"

namespace tailpass {

/// Latencies of all clients at one antenna position, in nondecreasing order.
/// perm[k] is the position (in the caller's client list) of the k-th fastest
/// client; gaps[k] = sorted_t[k+1] - sorted_t[k].
struct LatencyProfile {
  std::vector<double> sorted_t;
  std::vector<std::size_t> perm;
  std::vector<double> gaps;

  std::size_t size() const { return sorted_t.size(); }

  /// Stable sort: equal latencies keep their original relative order.
  static LatencyProfile from_latencies(std::span<const double> t) {
    require(!t.empty(), ErrorCode::InvalidArgument, "latency profile needs at least one client");
    LatencyProfile prof;
    prof.perm.resize(t.size());
    std::iota(prof.perm.begin(), prof.perm.end(), std::size_t{0});
    std::stable_sort(prof.perm.begin(), prof.perm.end(),
                     [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
    prof.sorted_t.reserve(t.size());
    for (auto i : prof.perm) prof.sorted_t.push_back(t[i]);
    prof.gaps.resize(t.size() - 1);
    for (std::size_t i = 0; i + 1 < t.size(); ++i)
      prof.gaps[i] = prof.sorted_t[i + 1] - prof.sorted_t[i];
    return prof;
  }

  /// Values indexed by original client position, reordered to sorted order.
  template <class T>
  std::vector<T> to_sorted(std::span<const T> original) const {
    require(original.size() == size(), ErrorCode::DimensionMismatch, "to_sorted size");
    std::vector<T> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = original[perm[k]];
    return out;
  }

  template <class T>
  std::vector<T> to_original(std::span<const T> sorted) const {
    require(sorted.size() == size(), ErrorCode::DimensionMismatch, "to_original size");
    std::vector<T> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[perm[k]] = sorted[k];
    return out;
  }
};

inline LatencyProfile sort_by_latency(std::span<const ClientProfile> clients, double x,
                                      const SystemConfig& cfg) {
  const auto t = latencies(clients, x, cfg);
  return LatencyProfile::from_latencies(t);
}

/// A strictly positive point of the probability simplex together with its
/// prefix sums cum[i] = q[0] + ... + q[i-1] (cum[0] = 0, cum[N] = 1).
class SamplingDistribution {
 public:
  SamplingDistribution() = default;

  explicit SamplingDistribution(std::vector<double> q) : q_(std::move(q)) {
    require(!q_.empty(), ErrorCode::InvalidDistribution, "empty distribution");
    double total = 0.0;
    for (double v : q_) {
      require(v > 0.0 && std::isfinite(v), ErrorCode::InvalidDistribution,
              "probabilities must be strictly positive");
      total += v;
    }
    const double tol = 1e-12 + 4e-16 * static_cast<double>(q_.size());
    require(std::abs(total - 1.0) <= tol, ErrorCode::InvalidDistribution,
            "probabilities must sum to 1");
    cum_.resize(q_.size() + 1);
    cum_[0] = 0.0;
    for (std::size_t i = 0; i < q_.size(); ++i) cum_[i + 1] = cum_[i] + q_[i];
  }

  static SamplingDistribution normalized(std::span<const double> weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    require(total > 0.0, ErrorCode::InvalidDistribution, "weights must have positive mass");
    std::vector<double> q(weights.begin(), weights.end());
    for (auto& v : q) v /= total;
    return SamplingDistribution(std::move(q));
  }

  static SamplingDistribution uniform(std::size_t n) {
    return SamplingDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  std::size_t size() const { return q_.size(); }
  double operator[](std::size_t i) const { return q_[i]; }
  const std::vector<double>& q() const { return q_; }
  const std::vector<double>& cum() const { return cum_; }

 private:
  std::vector<double> q_;
  std::vector<double> cum_;
};

namespace detail {
inline void check_dims(const SamplingDistribution& q, const LatencyProfile& prof, long K) {
  if (q.size() != prof.size()) {
    throw Error(ErrorCode::DimensionMismatch, "distribution has " + std::to_string(q.size()) +
                                                  " entries, profile has " +
                                                  std::to_string(prof.size()));
  }
  require(K >= 1, ErrorCode::InvalidArgument, "sample size K must be >= 1");
}
}  // namespace detail

/// Straggler pmf: pi_i = Q_i^K - Q_{i-1}^K, probability that sorted client i is
/// the round maximum.
inline std::vector<double> straggler_pmf(const SamplingDistribution& q, const LatencyProfile& prof,
                                         long K) {
  detail::check_dims(q, prof, K);
  const auto& cum = q.cum();
  std::vector<double> pi(q.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double cur = ipow(cum[i + 1], K);
    pi[i] = cur - prev;
    prev = cur;
  }
  return pi;
}

/// E[max latency of K i.i.d. draws] = sum_i (Q_i^K - Q_{i-1}^K) t_i.
inline double expected_straggler(const SamplingDistribution& q, const LatencyProfile& prof,
                                 long K) {
  const auto pi = straggler_pmf(q, prof, K);
  double f = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) f += pi[i] * prof.sorted_t[i];
  return f;
}

/// Same quantity through the gap form t_N - sum_i gap_i Q_i^K.
inline double expected_straggler_gap_form(const SamplingDistribution& q,
                                          const LatencyProfile& prof, long K) {
  detail::check_dims(q, prof, K);
  const auto& cum = q.cum();
  double f = prof.sorted_t.back();
  for (std::size_t i = 0; i < prof.gaps.size(); ++i) f -= prof.gaps[i] * ipow(cum[i + 1], K);
  return f;
}

/// D_s = K sum_{i >= s} gap_i Q_i^{K-1}; the simplex gradient representative of
/// f is -D. Nonincreasing in s with D_N = 0.
inline std::vector<double> tail_sensitivity(const SamplingDistribution& q,
                                            const LatencyProfile& prof, long K) {
  detail::check_dims(q, prof, K);
  const auto& cum = q.cum();
  const std::size_t n = q.size();
  std::vector<double> d(n, 0.0);
  double acc = 0.0;
  for (std::size_t i = n - 1; i-- > 0;) {
    acc += prof.gaps[i] * ipow(cum[i + 1], K - 1);
    d[i] = static_cast<double>(K) * acc;
  }
  return d;
}

/// Hessian of f: -K(K-1) sum_i gap_i Q_i^{K-2} a_i a_i^T with a_i the indicator
/// of the first i sorted clients. Entry (a, b) only sees gaps i >= max(a, b).
inline Eigen::MatrixXd straggler_hessian(const SamplingDistribution& q,
                                         const LatencyProfile& prof, long K) {
  detail::check_dims(q, prof, K);
  require(K >= 2, ErrorCode::KTooSmall, "Hessian of f needs K >= 2");
  const auto& cum = q.cum();
  const std::size_t n = q.size();
  // suffix[j] = sum_{i >= j} gap_i Q_i^{K-2} over 0-based gap indices
  std::vector<double> suffix(n, 0.0);
  for (std::size_t i = n - 1; i-- > 0;) suffix[i] = suffix[i + 1] + prof.gaps[i] * ipow(cum[i + 1], K - 2);
  const double scale = -static_cast<double>(K) * static_cast<double>(K - 1);
  Eigen::MatrixXd h(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) h(a, b) = scale * suffix[std::max(a, b)];
  return h;
}

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t draws = 0;
  /// How often each sorted client was the round maximum (ties go to the higher
  /// sorted index, matching the pmf convention).
  std::vector<std::uint64_t> straggler_counts;
};

/// Draws n rounds of K clients with replacement and averages the round maximum.
/// Work is split into fixed chunks with their own substreams, so the result is
/// bit-identical for any `jobs`.
inline MonteCarloEstimate monte_carlo_straggler(const SamplingDistribution& q,
                                                const LatencyProfile& prof, long K,
                                                std::uint64_t n_draws, std::uint64_t seed,
                                                unsigned jobs = 1) {
  detail::check_dims(q, prof, K);
  require(n_draws >= 1, ErrorCode::InvalidArgument, "n_draws must be >= 1");
  constexpr std::uint64_t kChunk = 1u << 16;
  const std::size_t n = q.size();
  const std::uint64_t n_chunks = (n_draws + kChunk - 1) / kChunk;
  const auto& cum = q.cum();
  const double total = cum[n];

  struct Partial {
    std::uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    std::vector<std::uint64_t> hits;
  };
  std::vector<Partial> parts(n_chunks);
  parallel_for(n_chunks, jobs, [&](std::size_t c) {
    Rng rng = Rng::stream(seed, c);
    Partial& p = parts[c];
    p.hits.assign(n, 0);
    const std::uint64_t begin = c * kChunk;
    const std::uint64_t end = std::min(n_draws, begin + kChunk);
    for (std::uint64_t r = begin; r < end; ++r) {
      std::size_t worst = 0;
      for (long k = 0; k < K; ++k) {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cum.begin() + 1, cum.end(), u);
        std::size_t idx = it == cum.end() ? n - 1 : static_cast<std::size_t>(it - cum.begin() - 1);
        worst = std::max(worst, idx);
      }
      ++p.hits[worst];
      const double x = prof.sorted_t[worst];
      ++p.count;
      const double delta = x - p.mean;
      p.mean += delta / static_cast<double>(p.count);
      p.m2 += delta * (x - p.mean);
    }
  });

  MonteCarloEstimate est;
  est.straggler_counts.assign(n, 0);
  double mean = 0.0, m2 = 0.0;
  std::uint64_t count = 0;
  for (const auto& p : parts) {
    if (p.count == 0) continue;
    for (std::size_t i = 0; i < n; ++i) est.straggler_counts[i] += p.hits[i];
    if (count == 0) {
      mean = p.mean;
      m2 = p.m2;
      count = p.count;
      continue;
    }
    const std::uint64_t total_count = count + p.count;
    const double delta = p.mean - mean;
    mean += delta * static_cast<double>(p.count) / static_cast<double>(total_count);
    m2 += p.m2 + delta * delta * static_cast<double>(count) * static_cast<double>(p.count) /
                     static_cast<double>(total_count);
    count = total_count;
  }
  est.mean = mean;
  est.draws = count;
  est.std_error = count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count)) : 0.0;
  return est;
}

}  // namespace tailpass
