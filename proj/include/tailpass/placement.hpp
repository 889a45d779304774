#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "tailpass/convergence.hpp"
#include "tailpass/errors.hpp"
#include "tailpass/geometry_link.hpp"
#include "tailpass/numerics.hpp"
#include "tailpass/order_stats.hpp"
#include "tailpass/parallel.hpp"
#include "tailpass/participation.hpp"
#include "tailpass/rng.hpp"

namespace tailpass {

struct PlacementOptions {
  double tol_x = 1e-9;  // [m]
  double tol_t = 1e-9;  // [s]
  int scan_points = 2048;
  int probes = 64;       // per interval, before refinement
  int max_probes = 1024;
  double tie_tol = 1e-9;  // [s], latency classes
  /// Multi-start count for warm-started probe and bisection solves; candidates
  /// always get the full InnerSolveOptions::n_starts.
  int probe_starts = 1;
  unsigned jobs = 1;

  void validate() const {
    require(tol_x > 0.0 && tol_t > 0.0, ErrorCode::InvalidParams, "tolerances must be > 0");
    require(scan_points >= 2, ErrorCode::InvalidParams, "scan_points must be >= 2");
    require(probes >= 1 && max_probes >= probes, ErrorCode::InvalidParams,
            "need 1 <= probes <= max_probes");
    require(tie_tol >= 0.0, ErrorCode::InvalidParams, "tie_tol must be >= 0");
    require(probe_starts >= 1, ErrorCode::InvalidParams, "probe_starts must be >= 1");
  }
};

/// Everything the outer search needs. consts.c is in the clients' own order.
struct PlacementProblem {
  std::vector<ClientProfile> clients;
  SystemConfig cfg;
  ConvergenceConstants consts;
  long K = 1;
  InnerSolveOptions inner;
  PlacementOptions opts;

  void validate() const {
    require(!clients.empty(), ErrorCode::InvalidArgument, "placement needs at least one client");
    for (const auto& c : clients) c.validate();
    cfg.validate();
    require(consts.c.size() == clients.size(), ErrorCode::DimensionMismatch,
            "statistical weights and clients differ in length");
    require(K >= 1, ErrorCode::InvalidArgument, "K must be >= 1");
    inner.validate(clients.size());
    opts.validate();
  }
};

struct Crossing {
  double x = 0.0;
  std::size_t i = 0, j = 0;  // client positions
  bool tangential = false;   // touching minimum rather than a sign change
};

/// Ordering breakpoints on [0, L]. points[0] = 0 and points.back() = L;
/// signatures[m] lists client ids in latency order on (points[m], points[m+1]).
struct BreakpointPartition {
  std::vector<double> points;
  std::vector<std::vector<int>> signatures;
  std::vector<Crossing> crossings;  // every refined crossing, before deduplication

  std::size_t intervals() const { return points.empty() ? 0 : points.size() - 1; }

  bool near_point(double x, double tol) const {
    return std::any_of(points.begin(), points.end(),
                       [&](double p) { return std::abs(x - p) <= tol; });
  }
};

inline std::vector<int> ordering_signature(std::span<const ClientProfile> clients, double x,
                                           const SystemConfig& cfg) {
  const auto prof = sort_by_latency(clients, x, cfg);
  std::vector<int> ids;
  ids.reserve(prof.size());
  for (auto k : prof.perm) ids.push_back(clients[k].id);
  return ids;
}

/// Roots of t_i - t_j for all pairs: grid scan, bisection on sign changes, and
/// golden-section probing of local minima of |t_i - t_j| for touching curves.
/// Pairs that stay within tol_t over the whole grid are identical and skipped.
inline BreakpointPartition find_breakpoints(std::span<const ClientProfile> clients,
                                            const SystemConfig& cfg, double tol_x, double tol_t,
                                            int scan_points = 2048, unsigned jobs = 1) {
  require(!clients.empty(), ErrorCode::InvalidArgument, "no clients");
  require(scan_points >= 2, ErrorCode::InvalidParams, "scan_points must be >= 2");
  const std::size_t n = clients.size();
  const double len = cfg.waveguide_len_m;
  const auto npts = static_cast<std::size_t>(scan_points);
  std::vector<double> grid(npts);
  for (std::size_t k = 0; k < npts; ++k)
    grid[k] = len * static_cast<double>(k) / static_cast<double>(npts - 1);
  // table[c][k] = t_c(grid[k])
  std::vector<std::vector<double>> table(n, std::vector<double>(npts));
  parallel_for(n, jobs, [&](std::size_t c) {
    for (std::size_t k = 0; k < npts; ++k) table[c][k] = latency(clients[c], grid[k], cfg);
  });

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<std::vector<Crossing>> found(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t p) {
    const auto [i, j] = pairs[p];
    auto diff = [&](double x) { return latency(clients[i], x, cfg) - latency(clients[j], x, cfg); };
    std::vector<double> d(npts);
    bool identical = true;
    for (std::size_t k = 0; k < npts; ++k) {
      d[k] = table[i][k] - table[j][k];
      identical = identical && std::abs(d[k]) <= tol_t;
    }
    if (identical) return;
    auto& out = found[p];
    for (std::size_t k = 0; k < npts; ++k) {
      if (d[k] == 0.0) {
        out.push_back({grid[k], i, j, false});
        continue;
      }
      if (k + 1 < npts && d[k + 1] != 0.0 && sign_of(d[k]) != sign_of(d[k + 1])) {
        const double x = bisect(diff, grid[k], grid[k + 1], d[k], d[k + 1], tol_x);
        out.push_back({x, i, j, false});
      }
    }
    for (std::size_t k = 1; k + 1 < npts; ++k) {
      const double a = std::abs(d[k - 1]), b = std::abs(d[k]), c = std::abs(d[k + 1]);
      if (!(b <= a && b <= c)) continue;
      if (sign_of(d[k - 1]) != sign_of(d[k]) || sign_of(d[k]) != sign_of(d[k + 1])) continue;
      const auto gs = golden_section([&](double x) { return std::abs(diff(x)); }, grid[k - 1],
                                     grid[k + 1], tol_x);
      if (gs.value < tol_t) out.push_back({gs.x, i, j, true});
    }
  });

  BreakpointPartition part;
  std::vector<double> xs;
  for (const auto& f : found) {
    for (const auto& c : f) {
      part.crossings.push_back(c);
      xs.push_back(c.x);
    }
  }
  std::sort(xs.begin(), xs.end());
  part.points.push_back(0.0);
  for (double x : xs) {
    if (x - part.points.back() <= tol_x || len - x <= tol_x) continue;
    part.points.push_back(x);
  }
  part.points.push_back(len);
  for (std::size_t m = 0; m + 1 < part.points.size(); ++m) {
    const double mid = 0.5 * (part.points[m] + part.points[m + 1]);
    part.signatures.push_back(ordering_signature(clients, mid, cfg));
  }
  return part;
}

/// Inner optimum at one antenna position. q and pi are in the clients' own
/// order; phi = sum_i pi_i t_i'(x), the envelope slope divided by g.
struct PlacementEval {
  double x = 0.0;
  double J = 0.0, f = 0.0, g = 0.0;
  double kkt_residual = 0.0;
  double phi = 0.0;
  bool converged = false;
  bool class_reduced = false;
  std::vector<double> q;
  std::vector<double> pi;
};

namespace detail {

inline std::uint64_t position_seed(std::uint64_t seed, double x) {
  return derive_seed(seed, std::bit_cast<std::uint64_t>(x));
}

/// Fills f, g, J, pi and phi for a sorted distribution at x.
inline void finish_eval(PlacementEval& e, const PlacementProblem& pb, const LatencyProfile& prof,
                        const SamplingDistribution& q_sorted) {
  e.q = prof.to_original<double>(q_sorted.q());
  e.f = expected_straggler(q_sorted, prof, pb.K);
  // g in the clients' own order, so equal q gives bit-identical g at every x
  e.g = convergence_factor(SamplingDistribution(e.q), pb.consts);
  e.J = e.f * e.g;
  const auto pi_sorted = straggler_pmf(q_sorted, prof, pb.K);
  e.phi = 0.0;
  for (std::size_t k = 0; k < prof.size(); ++k)
    e.phi += pi_sorted[k] * latency_derivative(pb.clients[prof.perm[k]], e.x, pb.cfg);
  e.pi = prof.to_original<double>(pi_sorted);
}

}  // namespace detail

/// Solves the inner problem at x (class-reduced when latencies tie). `warm`
/// and `extra_starts` are distributions in the clients' own order; n_starts,
/// when positive, overrides the multi-start count.
inline PlacementEval evaluate_inner(const PlacementProblem& pb, double x, std::uint64_t seed,
                                    std::span<const double> warm = {},
                                    std::span<const std::vector<double>> extra_starts = {},
                                    int n_starts = 0) {
  InnerSolveOptions inner = pb.inner;
  if (n_starts > 0) inner.n_starts = n_starts;
  const auto prof = sort_by_latency(pb.clients, x, pb.cfg);
  const auto consts_sorted = pb.consts.reordered(prof);
  const auto part = class_partition(prof, consts_sorted.c, pb.opts.tie_tol);
  const std::uint64_t s = detail::position_seed(seed, x);

  std::vector<std::vector<double>> starts;
  if (!warm.empty()) starts.push_back(prof.to_sorted(warm));
  for (const auto& st : extra_starts) starts.push_back(prof.to_sorted<double>(st));

  PlacementEval e;
  e.x = x;
  SamplingDistribution q_sorted;
  if (part.size() < prof.size()) {
    for (auto& st : starts) {
      std::vector<double> mass(part.size(), 0.0);
      for (std::size_t m = 0; m < part.size(); ++m)
        for (auto i : part.classes[m]) mass[m] += st[i];
      st = std::move(mass);
    }
    const auto red = solve_class_reduced(part, consts_sorted, pb.K, inner, s, starts);
    q_sorted = red.q;
    e.converged = red.reduced.converged;
    e.kkt_residual = red.reduced.kkt_residual;
    e.class_reduced = true;
  } else {
    const auto sol = solve_inner(prof, consts_sorted, pb.K, inner, s, starts);
    q_sorted = sol.q;
    e.converged = sol.converged;
    e.kkt_residual = sol.kkt_residual;
  }
  detail::finish_eval(e, pb, prof, q_sorted);
  return e;
}

/// J and phi at x for a distribution held fixed (clients' own order).
inline PlacementEval evaluate_fixed_q(const PlacementProblem& pb, double x,
                                      const SamplingDistribution& q_original) {
  const auto prof = sort_by_latency(pb.clients, x, pb.cfg);
  PlacementEval e;
  e.x = x;
  e.converged = true;
  detail::finish_eval(e, pb, prof, SamplingDistribution(prof.to_sorted<double>(q_original.q())));
  return e;
}

/// Envelope slope at an interior point of a fixed-ordering interval.
inline PlacementEval envelope_derivative(const PlacementProblem& pb,
                                         const BreakpointPartition& part, double x,
                                         std::uint64_t seed) {
  if (part.near_point(x, pb.opts.tol_x)) {
    throw Error(ErrorCode::OnBreakpoint,
                "x = " + std::to_string(x) + " lies on an ordering breakpoint");
  }
  return evaluate_inner(pb, x, seed);
}

enum class CandidateKind { Breakpoint, Root, ClosestApproach, Extra, Probe };

inline std::string to_string(CandidateKind k) {
  switch (k) {
    case CandidateKind::Breakpoint: return "breakpoint";
    case CandidateKind::Root: return "root";
    case CandidateKind::ClosestApproach: return "closest_approach";
    case CandidateKind::Extra: return "extra";
    case CandidateKind::Probe: return "probe";
  }
  return "unknown";
}

struct Candidate {
  double x = 0.0;
  double J = 0.0;
  bool converged = false;
  CandidateKind kind = CandidateKind::Probe;
};

struct PlacementSolution {
  double x_star = 0.0;
  SamplingDistribution q_star;  // clients' own order
  double J_star = 0.0;
  double f = 0.0, g = 0.0;
  double kkt_residual = 0.0;
  double phi = 0.0;
  bool converged = false;
  std::vector<double> straggler_probs;  // clients' own order
  std::vector<Candidate> candidates;    // sorted by x
  std::vector<double> roots;
  BreakpointPartition partition;
  bool all_failed = false;
};

/// Optional additions to the joint search. Every (x, start) pair is also
/// logged as a feasible design point, so the result is never worse than any
/// of them.
struct PlacementExtras {
  std::vector<double> x;                    // additional candidate positions
  std::vector<std::vector<double>> starts;  // extra inner starts, clients' own order
};

namespace detail {

struct IntervalScan {
  std::vector<PlacementEval> probes;
  std::vector<double> roots;
};

template <class Evaluate>
IntervalScan scan_interval(const PlacementOptions& o, double a, double b, Evaluate& evaluate) {
  IntervalScan out;
  if (b - a <= 4.0 * o.tol_x) return out;
  int n = o.probes;
  int prev_changes = -1;
  for (;;) {
    out.probes.clear();
    std::vector<double> warm;
    for (int k = 1; k <= n; ++k) {
      const double x = a + (b - a) * static_cast<double>(k) / static_cast<double>(n + 1);
      out.probes.push_back(evaluate(x, std::span<const double>(warm)));
      warm = out.probes.back().q;
    }
    int changes = 0;
    for (std::size_t k = 0; k + 1 < out.probes.size(); ++k)
      if (sign_of(out.probes[k].phi) * sign_of(out.probes[k + 1].phi) < 0.0) ++changes;
    if (changes <= 1 || n * 2 > o.max_probes || changes == prev_changes) break;
    prev_changes = changes;
    n *= 2;
  }
  for (std::size_t k = 0; k < out.probes.size(); ++k) {
    const auto& lo = out.probes[k];
    if (lo.phi == 0.0) {
      out.roots.push_back(lo.x);
      continue;
    }
    if (k + 1 == out.probes.size()) break;
    const auto& hi = out.probes[k + 1];
    if (hi.phi == 0.0 || sign_of(lo.phi) == sign_of(hi.phi)) continue;
    std::vector<double> warm = lo.q;
    auto phi = [&](double x) {
      auto e = evaluate(x, std::span<const double>(warm));
      warm = e.q;
      return e.phi;
    };
    out.roots.push_back(bisect(phi, lo.x, hi.x, lo.phi, hi.phi, o.tol_x));
  }
  return out;
}

/// Breakpoint-and-root enumeration shared by the joint and fixed-q searches.
/// evaluate(x, warm) must be a pure function of its arguments.
template <class Evaluate>
PlacementSolution breakpoint_root_search(const PlacementProblem& pb, Evaluate evaluate,
                                         std::span<const double> extra_x,
                                         std::span<const PlacementEval> pinned = {}) {
  pb.validate();
  const auto& o = pb.opts;
  const double len = pb.cfg.waveguide_len_m;
  PlacementSolution sol;
  sol.partition = find_breakpoints(pb.clients, pb.cfg, o.tol_x, o.tol_t, o.scan_points, o.jobs);
  const auto& pts = sol.partition.points;

  std::vector<IntervalScan> scans(sol.partition.intervals());
  parallel_for(scans.size(), o.jobs,
               [&](std::size_t m) { scans[m] = scan_interval(o, pts[m], pts[m + 1], evaluate); });

  std::vector<std::pair<double, CandidateKind>> wanted;
  for (double p : pts) wanted.emplace_back(p, CandidateKind::Breakpoint);
  for (const auto& s : scans)
    for (double r : s.roots) {
      wanted.emplace_back(r, CandidateKind::Root);
      sol.roots.push_back(r);
    }
  for (const auto& c : pb.clients)
    if (pb.cfg.in_range(c.u)) wanted.emplace_back(c.u, CandidateKind::ClosestApproach);
  for (double x : extra_x) {
    require(pb.cfg.in_range(x), ErrorCode::InvalidArgument, "extra candidate outside [0, L]");
    wanted.emplace_back(x, CandidateKind::Extra);
  }
  std::stable_sort(wanted.begin(), wanted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  wanted.erase(std::unique(wanted.begin(), wanted.end(),
                           [](const auto& a, const auto& b) { return a.first == b.first; }),
               wanted.end());

  std::vector<PlacementEval> fresh(wanted.size());
  parallel_for(wanted.size(), o.jobs,
               [&](std::size_t k) { fresh[k] = evaluate(wanted[k].first, std::span<const double>{}); });

  // log every evaluated point; the argmin runs over the same list
  std::vector<std::pair<Candidate, const PlacementEval*>> all;
  for (std::size_t k = 0; k < wanted.size(); ++k)
    all.push_back({{wanted[k].first, fresh[k].J, fresh[k].converged, wanted[k].second}, &fresh[k]});
  for (const auto& s : scans)
    for (const auto& e : s.probes) all.push_back({{e.x, e.J, e.converged, CandidateKind::Probe}, &e});
  for (const auto& e : pinned) all.push_back({{e.x, e.J, e.converged, CandidateKind::Extra}, &e});
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.first.x < b.first.x; });

  // Ties within rounding go to points known exactly (u_i, breakpoints) rather
  // than to bisection roots or probes, which are only located to tol_x.
  auto rank = [](CandidateKind k) {
    switch (k) {
      case CandidateKind::ClosestApproach: return 0;
      case CandidateKind::Breakpoint: return 1;
      case CandidateKind::Extra: return 2;
      case CandidateKind::Root: return 3;
      case CandidateKind::Probe: return 4;
    }
    return 5;
  };
  const PlacementEval* best = nullptr;
  for (bool need_converged : {true, false}) {
    for (const auto& [cand, ev] : all) {
      if (need_converged && !cand.converged) continue;
      if (!best || cand.J < best->J) best = ev;
    }
    if (!best) continue;
    const double tie = best->J * (1.0 + 1e-14);
    int best_rank = 5;
    for (const auto& [cand, ev] : all) {
      if (need_converged && !cand.converged) continue;
      if (cand.J <= tie && (rank(cand.kind) < best_rank || (rank(cand.kind) == best_rank && cand.J < best->J))) {
        best = ev;
        best_rank = rank(cand.kind);
      }
    }
    break;
  }
  sol.all_failed = std::none_of(all.begin(), all.end(), [](const auto& a) { return a.first.converged; });
  for (const auto& a : all) sol.candidates.push_back(a.first);

  sol.x_star = std::clamp(best->x, 0.0, len);
  sol.q_star = SamplingDistribution(best->q);
  sol.J_star = best->J;
  sol.f = best->f;
  sol.g = best->g;
  sol.kkt_residual = best->kkt_residual;
  sol.phi = best->phi;
  sol.converged = best->converged;
  sol.straggler_probs = best->pi;
  return sol;
}

}  // namespace detail

/// Joint search over x in [0, L] and q: enumerate ordering breakpoints, find
/// the sign changes of phi inside every interval, and keep the best of all
/// roots, breakpoints, closest-approach points {u_i} and probes. The result is
/// independent of opts.jobs.
inline PlacementSolution solve_placement(const PlacementProblem& pb, std::uint64_t seed,
                                         const PlacementExtras& extras = {}) {
  auto evaluate = [&](double x, std::span<const double> warm) {
    return evaluate_inner(pb, x, seed, warm, extras.starts, warm.empty() ? 0 : pb.opts.probe_starts);
  };
  std::vector<PlacementEval> pinned;
  for (double x : extras.x)
    for (const auto& st : extras.starts) pinned.push_back(evaluate_fixed_q(pb, x, SamplingDistribution(st)));
  return detail::breakpoint_root_search(pb, evaluate, extras.x, pinned);
}

/// Same search with q held fixed (e.g. uniform sampling).
inline PlacementSolution solve_placement_fixed_q(const PlacementProblem& pb,
                                                 const SamplingDistribution& q_original,
                                                 std::span<const double> extra_x = {}) {
  require(q_original.size() == pb.clients.size(), ErrorCode::DimensionMismatch,
          "distribution and clients differ in length");
  auto evaluate = [&](double x, std::span<const double>) { return evaluate_fixed_q(pb, x, q_original); };
  return detail::breakpoint_root_search(pb, evaluate, extra_x);
}

/// Inner solves on a uniform grid of n_grid points over [0, L].
inline std::vector<PlacementEval> placement_grid_oracle(const PlacementProblem& pb, int n_grid,
                                                        std::uint64_t seed) {
  pb.validate();
  require(n_grid >= 2, ErrorCode::InvalidArgument, "n_grid must be >= 2");
  const auto n = static_cast<std::size_t>(n_grid);
  std::vector<PlacementEval> out(n);
  parallel_for(n, pb.opts.jobs, [&](std::size_t k) {
    const double x = pb.cfg.waveguide_len_m * static_cast<double>(k) / static_cast<double>(n - 1);
    out[k] = evaluate_inner(pb, x, seed);
  });
  return out;
}

}  // namespace tailpass
