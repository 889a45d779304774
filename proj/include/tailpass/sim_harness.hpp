#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailpass/convergence.hpp"
#include "tailpass/csv.hpp"
#include "tailpass/errors.hpp"
#include "tailpass/geometry_link.hpp"
#include "tailpass/order_stats.hpp"
#include "tailpass/parallel.hpp"
#include "tailpass/participation.hpp"
#include "tailpass/placement.hpp"
#include "tailpass/rng.hpp"

namespace tailpass {

struct GeneratorOptions {
  double r_min = 1.0, r_max = 5.0;           // [m]
  double tcomp_min = 0.05, tcomp_max = 0.15;  // [s]
  double dirichlet_alpha = 0.3;               // +inf gives identical label mixes
  int n_labels = 10;
  double g0 = 1.0;  // G_i = g0 (1 + h_i)
  int samples_min = 50, samples_max = 200;
  double payload_bits = 1e8;

  void validate() const {
    require(r_min > 0.0 && r_max >= r_min, ErrorCode::InvalidParams, "need 0 < r_min <= r_max");
    require(tcomp_min >= 0.0 && tcomp_max >= tcomp_min, ErrorCode::InvalidParams,
            "need 0 <= tcomp_min <= tcomp_max");
    require(dirichlet_alpha > 0.0, ErrorCode::InvalidParams, "dirichlet_alpha must be > 0");
    require(n_labels >= 1, ErrorCode::InvalidParams, "n_labels must be >= 1");
    require(g0 > 0.0, ErrorCode::InvalidParams, "g0 must be > 0");
    require(samples_min >= 1 && samples_max >= samples_min, ErrorCode::InvalidParams,
            "need 1 <= samples_min <= samples_max");
    require(payload_bits > 0.0, ErrorCode::InvalidParams, "payload_bits must be > 0");
  }
};

/// Clients, radio config and convergence constants (consts.c in the clients'
/// own order). Label mixes and sample counts are kept for generated scenarios.
struct Scenario {
  std::vector<ClientProfile> clients;
  SystemConfig cfg;
  ConvergenceConstants consts;
  std::optional<ConvergenceParams> params;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> label_mix;
  std::vector<double> heterogeneity;
  std::vector<int> samples;

  std::size_t size() const { return clients.size(); }

  /// Constants at sample size K. Only the parameter form depends on K (omega
  /// carries a 1/K factor); direct constants are returned unchanged.
  ConvergenceConstants constants_for(long K) const {
    if (!params) return consts;
    ConvergenceParams p = *params;
    p.sample_size = static_cast<int>(K);
    return constants_from_params(p);
  }

  void validate() const {
    require(!clients.empty(), ErrorCode::InvalidParams, "scenario has no clients");
    cfg.validate();
    double total = 0.0;
    for (const auto& c : clients) {
      c.validate();
      total += c.agg_weight;
    }
    require(std::abs(total - 1.0) <= 1e-12, ErrorCode::InvalidParams,
            "client agg_weight values must sum to 1");
    require(consts.c.size() == clients.size(), ErrorCode::InvalidParams,
            "statistical weights and clients differ in length");
    require(consts.omega > 0.0 && std::isfinite(consts.nu), ErrorCode::InvalidParams,
            "omega must be > 0 and nu finite");
    for (double v : consts.c)
      require(v > 0.0 && std::isfinite(v), ErrorCode::InvalidParams, "statistical weights must be > 0");
  }
};

inline Scenario generate_scenario(std::size_t n_clients, std::uint64_t seed,
                                  const GeneratorOptions& gen = {}, const SystemConfig& cfg = {}) {
  require(n_clients >= 1, ErrorCode::InvalidArgument, "n_clients must be >= 1");
  gen.validate();
  cfg.validate();
  Scenario scn;
  scn.cfg = cfg;
  scn.seed = seed;
  Rng rng = Rng::stream(seed, 0);
  const auto labels = static_cast<std::size_t>(gen.n_labels);
  for (std::size_t i = 0; i < n_clients; ++i) {
    ClientProfile c;
    c.id = static_cast<int>(i);
    c.u = rng.uniform(0.0, cfg.waveguide_len_m);
    c.r = rng.uniform(gen.r_min, gen.r_max);
    c.compute_time = rng.uniform(gen.tcomp_min, gen.tcomp_max);
    c.payload_bits = gen.payload_bits;
    scn.label_mix.push_back(rng.dirichlet(labels, gen.dirichlet_alpha));
    const int span = gen.samples_max - gen.samples_min + 1;
    const int extra = std::min(span - 1, static_cast<int>(rng.uniform() * span));
    scn.samples.push_back(gen.samples_min + extra);
    scn.clients.push_back(c);
  }
  const double total = std::accumulate(scn.samples.begin(), scn.samples.end(), 0.0);
  std::vector<double> global(labels, 0.0);
  for (std::size_t i = 0; i < n_clients; ++i)
    for (std::size_t l = 0; l < labels; ++l) global[l] += scn.samples[i] / total * scn.label_mix[i][l];
  for (std::size_t i = 0; i < n_clients; ++i) {
    double h = 0.0;
    for (std::size_t l = 0; l < labels; ++l) {
      const double d = scn.label_mix[i][l] - global[l];
      h += d * d;
    }
    h = std::sqrt(h);
    scn.heterogeneity.push_back(h);
    scn.clients[i].agg_weight = scn.samples[i] / total;
    scn.clients[i].grad_bound = gen.g0 * (1.0 + h);
  }
  scn.consts.omega = 1.0;
  scn.consts.nu = 0.0;
  scn.consts.c = statistical_weights(scn.clients);
  return scn;
}

enum class FastFractionMode { Count, Mass };

/// Splits clients (in list order) into a fast and a slow compute class. Count
/// mode makes the first ceil(ff N) clients fast; mass mode adds clients until
/// their aggregation weight reaches ff.
inline void apply_fast_fraction(Scenario& scn, double ff, FastFractionMode mode,
                                double t_fast = 0.05, double t_slow = 0.15) {
  require(ff >= 0.0 && ff <= 1.0, ErrorCode::InvalidParams, "fast fraction must lie in [0, 1]");
  const std::size_t n = scn.size();
  double mass = 0.0;
  std::size_t n_fast = 0;
  if (mode == FastFractionMode::Count) {
    n_fast = static_cast<std::size_t>(std::ceil(ff * static_cast<double>(n) - 1e-12));
  } else {
    while (n_fast < n && mass < ff - 1e-12) mass += scn.clients[n_fast++].agg_weight;
  }
  for (std::size_t i = 0; i < n; ++i) scn.clients[i].compute_time = i < n_fast ? t_fast : t_slow;
}

inline PlacementProblem make_problem(const Scenario& scn, long K, const InnerSolveOptions& inner = {},
                                     const PlacementOptions& popts = {}) {
  PlacementProblem pb;
  pb.clients = scn.clients;
  pb.cfg = scn.cfg;
  pb.consts = scn.constants_for(K);
  pb.K = K;
  pb.inner = inner;
  pb.opts = popts;
  return pb;
}

/// Per-round maxima of K i.i.d. draws. stragglers[r] is the client position
/// that set round r's time; selections (R*K entries) only when requested.
struct RoundTrace {
  long K = 1;
  std::vector<double> round_times;
  std::vector<std::uint32_t> stragglers;
  std::vector<std::uint32_t> selections;
  std::vector<double> cumulative;

  double mean() const {
    return std::accumulate(round_times.begin(), round_times.end(), 0.0) /
           static_cast<double>(round_times.size());
  }
  double std_error() const {
    const std::size_t n = round_times.size();
    if (n < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double t : round_times) ss += (t - m) * (t - m);
    return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  }
};

inline RoundTrace simulate_rounds(const Scenario& scn, const SamplingDistribution& q, double x,
                                  long K, std::uint64_t rounds, std::uint64_t seed,
                                  unsigned jobs = 1, bool keep_selections = false) {
  require(rounds >= 1, ErrorCode::InvalidArgument, "rounds must be >= 1");
  require(K >= 1, ErrorCode::InvalidArgument, "K must be >= 1");
  require(q.size() == scn.size(), ErrorCode::DimensionMismatch, "distribution and clients differ in length");
  const auto prof = sort_by_latency(scn.clients, x, scn.cfg);
  const SamplingDistribution qs(prof.to_sorted<double>(q.q()));
  const auto& cum = qs.cum();
  const std::size_t n = qs.size();
  RoundTrace tr;
  tr.K = K;
  tr.round_times.resize(rounds);
  tr.stragglers.resize(rounds);
  if (keep_selections) tr.selections.resize(rounds * static_cast<std::uint64_t>(K));
  constexpr std::uint64_t kChunk = 1u << 16;
  const std::uint64_t n_chunks = (rounds + kChunk - 1) / kChunk;
  parallel_for(n_chunks, jobs, [&](std::size_t c) {
    Rng rng = Rng::stream(seed, c);
    const std::uint64_t end = std::min(rounds, (c + 1) * kChunk);
    for (std::uint64_t r = c * kChunk; r < end; ++r) {
      std::size_t worst = 0;
      for (long k = 0; k < K; ++k) {
        const double u = rng.uniform() * cum[n];
        auto it = std::upper_bound(cum.begin() + 1, cum.end(), u);
        const std::size_t idx = it == cum.end() ? n - 1 : static_cast<std::size_t>(it - cum.begin() - 1);
        worst = std::max(worst, idx);
        if (keep_selections) tr.selections[r * K + k] = static_cast<std::uint32_t>(prof.perm[idx]);
      }
      tr.round_times[r] = prof.sorted_t[worst];
      tr.stragglers[r] = static_cast<std::uint32_t>(prof.perm[worst]);
    }
  });
  tr.cumulative.resize(rounds);
  double acc = 0.0;
  for (std::uint64_t r = 0; r < rounds; ++r) tr.cumulative[r] = (acc += tr.round_times[r]);
  return tr;
}

struct ExperimentOptions {
  InnerSolveOptions inner;
  PlacementOptions placement;  // placement.jobs sets the number of concurrent cells
  bool verify = false;
  std::uint64_t verify_draws = 100000;
};

/// One operating point (x, q) with its analytic f, g and J.
struct MethodDesign {
  std::string method;
  double x = 0.0;
  SamplingDistribution q;  // clients' own order
  double f = 0.0, g = 0.0, J = 0.0;
};

/// Conventional (x = 0, uniform q), PASS-Random (best x for uniform q) and
/// PASS-Joint (joint search, seeded with the PASS-Random point).
struct DesignSet {
  MethodDesign conventional, pass_random, pass_joint;
  PlacementSolution joint_solution;

  std::vector<const MethodDesign*> all() const { return {&conventional, &pass_random, &pass_joint}; }
};

inline MethodDesign design_from_eval(std::string name, const PlacementEval& e) {
  return {std::move(name), e.x, SamplingDistribution(e.q), e.f, e.g, e.J};
}

inline DesignSet design_methods(const Scenario& scn, long K, std::uint64_t seed,
                                const ExperimentOptions& opts) {
  PlacementOptions popts = opts.placement;
  popts.jobs = 1;
  const auto pb = make_problem(scn, K, opts.inner, popts);
  const auto uniform = SamplingDistribution::uniform(scn.size());
  DesignSet d;
  d.conventional = design_from_eval("conventional", evaluate_fixed_q(pb, 0.0, uniform));
  const auto rnd = solve_placement_fixed_q(pb, uniform);
  d.pass_random = design_from_eval("pass_random", evaluate_fixed_q(pb, rnd.x_star, uniform));
  PlacementExtras extras;
  extras.x = {rnd.x_star};
  extras.starts = {uniform.q()};
  d.joint_solution = solve_placement(pb, seed, extras);
  const auto& js = d.joint_solution;
  d.pass_joint = {"pass_joint", js.x_star, js.q_star, js.f, js.g, js.J_star};
  return d;
}

struct MonteCarloCheck {
  double mean = 0.0, std_error = 0.0, z = 0.0;
};

inline MonteCarloCheck verify_f(const Scenario& scn, const MethodDesign& d, long K,
                                std::uint64_t draws, std::uint64_t seed) {
  const auto prof = sort_by_latency(scn.clients, d.x, scn.cfg);
  const SamplingDistribution qs(prof.to_sorted<double>(d.q.q()));
  const auto mc = monte_carlo_straggler(qs, prof, K, draws, seed);
  MonteCarloCheck out{mc.mean, mc.std_error, 0.0};
  const double diff = d.f - mc.mean;
  if (mc.std_error > 0.0) {
    out.z = diff / mc.std_error;
  } else if (std::abs(diff) > 1e-12 * std::abs(d.f)) {
    out.z = std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  return out;
}

// ---- round-time CCDF --------------------------------------------------------

struct CcdfResult {
  CsvTable table{{"method", "t", "ccdf", "ccdf_analytic"}};
  std::vector<MethodDesign> designs;  // conventional, pass_optimized, pass_joint
  std::vector<double> p99;            // empirical 99th percentile per design
};

/// Empirical P(T > t) over R simulated rounds for the conventional design,
/// the joint placement with uniform q, and the full joint design. Each
/// distinct latency t contributes a left-limit row P(T >= t) and a P(T > t)
/// row, so the table traces the step function exactly.
inline CcdfResult ccdf_experiment(const Scenario& scn, long K, std::uint64_t rounds,
                                  std::uint64_t seed, const ExperimentOptions& opts = {}) {
  scn.validate();
  const auto ds = design_methods(scn, K, derive_seed(seed, 0), opts);
  CcdfResult res;
  res.designs.push_back(ds.conventional);
  {
    PlacementOptions popts = opts.placement;
    popts.jobs = 1;
    const auto pb = make_problem(scn, K, opts.inner, popts);
    res.designs.push_back(design_from_eval(
        "pass_optimized", evaluate_fixed_q(pb, ds.pass_joint.x, SamplingDistribution::uniform(scn.size()))));
  }
  res.designs.push_back(ds.pass_joint);

  struct Row {
    double t;
    std::size_t method;
    int side;  // 0: P(T >= t), 1: P(T > t)
    double emp, ana;
  };
  std::vector<Row> rows;
  for (std::size_t m = 0; m < res.designs.size(); ++m) {
    const auto& d = res.designs[m];
    const auto tr = simulate_rounds(scn, d.q, d.x, K, rounds, derive_seed(seed, 1 + m), opts.placement.jobs);
    auto times = tr.round_times;
    std::sort(times.begin(), times.end());
    const auto r = static_cast<double>(times.size());
    const std::size_t i99 = std::min(times.size() - 1,
                                     static_cast<std::size_t>(std::ceil(0.99 * r)) - 1);
    res.p99.push_back(times[i99]);
    const auto prof = sort_by_latency(scn.clients, d.x, scn.cfg);
    const SamplingDistribution qs(prof.to_sorted<double>(d.q.q()));
    const auto& cum = qs.cum();
    for (std::size_t k = 0; k < prof.size();) {
      std::size_t e = k;
      while (e + 1 < prof.size() && prof.sorted_t[e + 1] == prof.sorted_t[k]) ++e;
      const double t = prof.sorted_t[k];
      const auto lo = std::lower_bound(times.begin(), times.end(), t);
      const auto hi = std::upper_bound(times.begin(), times.end(), t);
      const double ge = static_cast<double>(times.end() - lo) / r;
      const double gt = static_cast<double>(times.end() - hi) / r;
      rows.push_back({t, m, 0, ge, 1.0 - ipow(cum[k], K)});
      rows.push_back({t, m, 1, gt, 1.0 - ipow(cum[e + 1], K)});
      k = e + 1;
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
  for (const auto& row : rows)
    res.table.add_row({res.designs[row.method].method, row.t, row.emp, std::max(row.ana, 0.0)});
  return res;
}

// ---- two-class sweeps --------------------------------------------------------

/// delta*, the premium K gap (1-delta*)^{K-1}, its normalised form
/// (g/(f w)) K gap (1-delta*)^{K-1}, the psi gap on the two-client embedding,
/// and P(at least one slow draw) for every (K, gap). A zero gap reports the
/// statistics-only split.
inline CsvTable tail_premium_experiment(const TwoClassProblem& tmpl, std::span<const double> gaps,
                                        std::span<const long> Ks, double tol = 1e-8) {
  require(!gaps.empty() && !Ks.empty(), ErrorCode::InvalidArgument, "sweep needs gaps and Ks");
  CsvTable t({"K", "Delta", "delta_star", "premium", "tail_premium", "psi_gap",
              "p_at_least_one_slow", "converged"});
  for (long K : Ks) {
    for (double gap : gaps) {
      require(gap >= 0.0, ErrorCode::InvalidParams, "gap must be >= 0");
      TwoClassProblem p = tmpl;
      p.K = K;
      p.t_s = p.t_f + gap;
      double delta = p.stat_split();
      bool converged = true;
      if (gap > 0.0) {
        const auto sol = solve_two_class(p, tol);
        delta = sol.delta;
        converged = sol.converged;
      }
      const double premium = static_cast<double>(K) * gap * ipow(1.0 - delta, K - 1);
      const double f = p.t_s - gap * ipow(1.0 - delta, K);
      const double g = p.g(delta);
      const double normalised = g / (f * p.omega) * premium;
      const SamplingDistribution q(std::vector<double>{1.0 - delta, delta});
      const auto prof = LatencyProfile::from_latencies(std::vector<double>{p.t_f, p.t_s});
      const ConvergenceConstants consts{p.omega, p.nu, {p.C_f * p.C_f, p.C_s * p.C_s}};
      const auto rep = kkt_report(q, prof, consts, K);
      t.add_row({std::int64_t{K}, gap, delta, premium, normalised, rep.psi[1] - rep.psi[0],
                 1.0 - ipow(1.0 - delta, K), converged});
    }
  }
  return t;
}

struct PhaseSeries {
  std::string label;
  TwoClassProblem problem;
  std::optional<double> threshold_fraction;  // rescale C_s^2 to this share of the threshold
};

inline CsvTable phase_transition_experiment(std::span<const PhaseSeries> series,
                                            std::span<const long> Ks,
                                            const PhaseSweepOptions& base = {}) {
  require(!series.empty() && !Ks.empty(), ErrorCode::InvalidArgument, "sweep needs series and Ks");
  CsvTable t({"K", "C_s", "delta_star", "K_delta_star", "ratio_stat", "threshold", "split_margin",
              "series"});
  for (const auto& s : series) {
    PhaseSweepOptions o = base;
    o.threshold_fraction = s.threshold_fraction;
    for (const auto& row : phase_transition_sweep(s.problem, Ks, o)) {
      const std::string th = !row.threshold_defined ? "undefined" : row.threshold_satisfied ? "true" : "false";
      t.add_row({std::int64_t{row.K}, row.C_s, row.delta, row.K_delta, row.ratio_stat, th,
                 row.split_margin, s.label});
    }
  }
  return t;
}

// ---- (f, g) trade-off and J versus K ----------------------------------------

struct TradeoffResult {
  CsvTable table;
  std::vector<long> Ks;
  std::vector<DesignSet> designs;  // one per K
};

namespace detail {

inline std::vector<std::string> tradeoff_header(bool verify, bool with_fraction) {
  std::vector<std::string> h;
  if (with_fraction) h.push_back("f_f");
  for (const char* c : {"method", "K", "x", "f", "g", "J"}) h.emplace_back(c);
  if (verify)
    for (const char* c : {"f_mc", "f_mc_se", "z_score"}) h.emplace_back(c);
  return h;
}

inline void tradeoff_rows(CsvTable& t, const Scenario& scn, std::span<const long> Ks,
                          std::span<const DesignSet> designs, std::uint64_t seed,
                          const ExperimentOptions& opts, std::optional<double> ff) {
  // Monte Carlo checks per (K, method) cell, each on its own substream
  std::vector<MonteCarloCheck> checks(Ks.size() * 3);
  if (opts.verify) {
    parallel_for(checks.size(), opts.placement.jobs, [&](std::size_t c) {
      const auto& d = *designs[c / 3].all()[c % 3];
      checks[c] = verify_f(scn, d, Ks[c / 3], opts.verify_draws, derive_seed(seed, 1'000'000 + c));
    });
  }
  for (std::size_t k = 0; k < Ks.size(); ++k) {
    const auto all = designs[k].all();
    for (std::size_t m = 0; m < all.size(); ++m) {
      std::vector<CsvCell> row;
      if (ff) row.emplace_back(*ff);
      row.emplace_back(all[m]->method);
      row.emplace_back(std::int64_t{Ks[k]});
      for (double v : {all[m]->x, all[m]->f, all[m]->g, all[m]->J}) row.emplace_back(v);
      if (opts.verify) {
        const auto& c = checks[k * 3 + m];
        for (double v : {c.mean, c.std_error, c.z}) row.emplace_back(v);
      }
      t.add_row(std::move(row));
    }
  }
}

inline std::vector<DesignSet> designs_over_k(const Scenario& scn, std::span<const long> Ks,
                                             std::uint64_t seed, const ExperimentOptions& opts) {
  std::vector<DesignSet> out(Ks.size());
  parallel_for(Ks.size(), opts.placement.jobs,
               [&](std::size_t k) { out[k] = design_methods(scn, Ks[k], derive_seed(seed, k), opts); });
  return out;
}

}  // namespace detail

inline TradeoffResult tradeoff_experiment(const Scenario& scn, std::span<const long> Ks,
                                          std::uint64_t seed, const ExperimentOptions& opts = {}) {
  scn.validate();
  require(!Ks.empty(), ErrorCode::InvalidArgument, "sweep needs at least one K");
  TradeoffResult res{CsvTable(detail::tradeoff_header(opts.verify, false)),
                     {Ks.begin(), Ks.end()}, detail::designs_over_k(scn, Ks, seed, opts)};
  detail::tradeoff_rows(res.table, scn, Ks, res.designs, seed, opts, std::nullopt);
  return res;
}

struct FgVsKResult {
  CsvTable table;
  std::vector<double> fractions;
  std::vector<TradeoffResult> per_fraction;
};

/// Trade-off sweep repeated for several fast-class fractions of the scenario.
inline FgVsKResult fg_vs_k_experiment(const Scenario& scn, std::span<const double> fractions,
                                      FastFractionMode mode, std::span<const long> Ks,
                                      std::uint64_t seed, const ExperimentOptions& opts = {}) {
  require(!fractions.empty(), ErrorCode::InvalidArgument, "need at least one fast fraction");
  FgVsKResult res{CsvTable(detail::tradeoff_header(opts.verify, true)), {fractions.begin(), fractions.end()}, {}};
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    Scenario s = scn;
    apply_fast_fraction(s, fractions[i], mode);
    const std::uint64_t cell_seed = derive_seed(seed, i);
    res.per_fraction.push_back(tradeoff_experiment(s, Ks, cell_seed, opts));
    detail::tradeoff_rows(res.table, s, Ks, res.per_fraction.back().designs, cell_seed, opts, fractions[i]);
  }
  return res;
}

// ---- envelope and breakpoints ----------------------------------------------

struct EnvelopeResult {
  CsvTable table;
  PlacementSolution solution;
  std::vector<PlacementEval> grid;
  double grid_x = 0.0, grid_J = 0.0;
};

/// J*(x), f, g, phi and every client's latency on a uniform grid, plus the
/// breakpoint-and-root solution for comparison.
inline EnvelopeResult envelope_experiment(const Scenario& scn, long K, int n_grid, std::uint64_t seed,
                                          const ExperimentOptions& opts = {}) {
  scn.validate();
  const auto pb = make_problem(scn, K, opts.inner, opts.placement);
  std::vector<std::string> header{"x", "J_star", "f", "g", "phi", "converged"};
  for (const auto& c : scn.clients) header.push_back("t_" + std::to_string(c.id));
  EnvelopeResult res{CsvTable(header), solve_placement(pb, seed), placement_grid_oracle(pb, n_grid, seed)};
  res.grid_J = std::numeric_limits<double>::infinity();
  for (const auto& e : res.grid) {
    std::vector<CsvCell> row{e.x, e.J, e.f, e.g, e.phi, e.converged};
    for (double t : latencies(scn.clients, e.x, scn.cfg)) row.emplace_back(t);
    res.table.add_row(std::move(row));
    if (e.J < res.grid_J) {
      res.grid_J = e.J;
      res.grid_x = e.x;
    }
  }
  return res;
}

// ---- synthetic federated training ------------------------------------------

/// Local objective F_i(w) = (a/2) |w - b|^2 with Gaussian gradient noise.
struct QuadraticClient {
  double curvature = 1.0;      // a_i
  std::vector<double> center;  // b_i
  double noise_std = 0.0;      // per coordinate
  double weight = 1.0;         // p_i
};

struct FedAvgOptions {
  double learning_rate = 0.05;
  int local_epochs = 2;
  double epsilon = 1e-2;
  long max_rounds = 100000;
  double init_value = 1.0;  // every coordinate of w0

  void validate() const {
    require(learning_rate > 0.0, ErrorCode::InvalidParams, "learning_rate must be > 0");
    require(local_epochs >= 1, ErrorCode::InvalidParams, "local_epochs must be >= 1");
    require(epsilon > 0.0, ErrorCode::InvalidParams, "epsilon must be > 0");
    require(max_rounds >= 1, ErrorCode::InvalidParams, "max_rounds must be >= 1");
  }
};

inline double global_loss(std::span<const QuadraticClient> clients, std::span<const double> w) {
  double loss = 0.0;
  for (const auto& c : clients) {
    double s = 0.0;
    for (std::size_t d = 0; d < w.size(); ++d) s += (w[d] - c.center[d]) * (w[d] - c.center[d]);
    loss += c.weight * 0.5 * c.curvature * s;
  }
  return loss;
}

/// Minimiser sum p a b / sum p a and the optimal loss.
inline std::pair<std::vector<double>, double> quadratic_optimum(std::span<const QuadraticClient> clients) {
  require(!clients.empty(), ErrorCode::InvalidArgument, "no clients");
  const std::size_t dim = clients.front().center.size();
  std::vector<double> w(dim, 0.0);
  double total = 0.0;
  for (const auto& c : clients) {
    require(c.center.size() == dim, ErrorCode::DimensionMismatch, "client centres differ in length");
    total += c.weight * c.curvature;
    for (std::size_t d = 0; d < dim; ++d) w[d] += c.weight * c.curvature * c.center[d];
  }
  for (auto& v : w) v /= total;
  const double f_star = global_loss(clients, w);
  return {std::move(w), f_star};
}

struct FlRun {
  long rounds = 0;
  double wallclock = 0.0;
  double final_gap = 0.0;
};

/// FedAvg with K i.i.d. draws per round and the unbiased update
/// w += sum_k p_i / (K q_i) (w_i - w). Each round lasts as long as its slowest
/// draw. Stops once F(w) - F* <= epsilon.
inline FlRun run_fedavg(std::span<const QuadraticClient> clients, std::span<const double> latency_s,
                        const SamplingDistribution& q, long K, const FedAvgOptions& o, Rng& rng) {
  o.validate();
  const std::size_t n = clients.size();
  require(latency_s.size() == n && q.size() == n, ErrorCode::DimensionMismatch,
          "clients, latencies and distribution differ in length");
  require(K >= 1, ErrorCode::InvalidArgument, "K must be >= 1");
  const auto [w_star, f_star] = quadratic_optimum(clients);
  const std::size_t dim = w_star.size();
  std::vector<double> w(dim, o.init_value), local(dim), delta(dim);
  const auto& cum = q.cum();
  FlRun run;
  for (;;) {
    run.final_gap = global_loss(clients, w) - f_star;
    if (run.final_gap <= o.epsilon) return run;
    if (run.rounds >= o.max_rounds) {
      throw Error(ErrorCode::MaxRoundsExceeded,
                  "target accuracy not reached within " + std::to_string(o.max_rounds) + " rounds");
    }
    std::fill(delta.begin(), delta.end(), 0.0);
    double round_time = 0.0;
    for (long k = 0; k < K; ++k) {
      const double u = rng.uniform() * cum[n];
      auto it = std::upper_bound(cum.begin() + 1, cum.end(), u);
      const std::size_t i = it == cum.end() ? n - 1 : static_cast<std::size_t>(it - cum.begin() - 1);
      const auto& c = clients[i];
      round_time = std::max(round_time, latency_s[i]);
      local = w;
      for (int e = 0; e < o.local_epochs; ++e)
        for (std::size_t d = 0; d < dim; ++d) {
          const double noise = c.noise_std > 0.0 ? c.noise_std * rng.normal() : 0.0;
          local[d] -= o.learning_rate * (c.curvature * (local[d] - c.center[d]) + noise);
        }
      const double scale = c.weight / (static_cast<double>(K) * q[i]);
      for (std::size_t d = 0; d < dim; ++d) delta[d] += scale * (local[d] - w[d]);
    }
    for (std::size_t d = 0; d < dim; ++d) w[d] += delta[d];
    run.wallclock += round_time;
    ++run.rounds;
  }
}

struct SyntheticFlOptions {
  FedAvgOptions fedavg;
  double curvature_min = 1.0, curvature_max = 2.0;
  double center_scale = 1.0;
  double noise_std = 0.05;
  int replicates = 10;
  int dim = 10;  // used when the scenario carries no label mixes

  void validate() const {
    fedavg.validate();
    require(curvature_min > 0.0 && curvature_max >= curvature_min, ErrorCode::InvalidParams,
            "need 0 < curvature_min <= curvature_max");
    require(noise_std >= 0.0, ErrorCode::InvalidParams, "noise_std must be >= 0");
    require(replicates >= 1, ErrorCode::InvalidParams, "replicates must be >= 1");
    require(dim >= 1, ErrorCode::InvalidParams, "dim must be >= 1");
  }
};

/// Quadratic local objectives for a scenario: curvatures in
/// [curvature_min, curvature_max] (or [m_cv, L_sm] when convergence parameters
/// are given), centres at the scaled label-mix deviation when available.
inline std::vector<QuadraticClient> synthetic_clients(const Scenario& scn, const SyntheticFlOptions& o,
                                                      std::uint64_t seed) {
  o.validate();
  double a_lo = o.curvature_min, a_hi = o.curvature_max;
  if (scn.params) {
    a_lo = scn.params->strong_convexity;
    a_hi = scn.params->smoothness;
  }
  Rng rng = Rng::stream(seed, 0);
  std::vector<double> global;
  if (!scn.label_mix.empty()) {
    global.assign(scn.label_mix.front().size(), 0.0);
    for (std::size_t i = 0; i < scn.size(); ++i)
      for (std::size_t l = 0; l < global.size(); ++l)
        global[l] += scn.clients[i].agg_weight * scn.label_mix[i][l];
  }
  std::vector<QuadraticClient> out;
  for (std::size_t i = 0; i < scn.size(); ++i) {
    QuadraticClient c;
    c.curvature = rng.uniform(a_lo, a_hi);
    c.weight = scn.clients[i].agg_weight;
    c.noise_std = o.noise_std;
    if (scn.params && i < scn.params->grad_var_bounds.size()) c.noise_std = scn.params->grad_var_bounds[i];
    if (!global.empty()) {
      for (std::size_t l = 0; l < global.size(); ++l)
        c.center.push_back(o.center_scale * (scn.label_mix[i][l] - global[l]));
    } else {
      for (int d = 0; d < o.dim; ++d) c.center.push_back(o.center_scale * rng.normal());
    }
    out.push_back(std::move(c));
  }
  return out;
}

/// Spearman rank correlation with average ranks for ties; 0 when either side
/// is constant.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorCode::InvalidArgument, "spearman needs two equal samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t s = 0; s < idx.size();) {
      std::size_t e = s;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) ++e;
      for (std::size_t k = s; k <= e; ++k) r[idx[k]] = 0.5 * static_cast<double>(s + e) + 1.0;
      s = e + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0.0 && sbb > 0.0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

struct SyntheticFlResult {
  CsvTable table{{"method", "K", "x", "J", "rounds_mean", "wallclock_mean", "wallclock_se", "replicates"}};
  DesignSet designs;
  std::vector<double> J, wallclock;  // conventional, pass_random, pass_joint
  double rank_correlation = 0.0;
};

/// Time to reach F(w) - F* <= epsilon for the three designs, averaged over
/// replicates that share random streams across designs.
inline SyntheticFlResult synthetic_fl_experiment(const Scenario& scn, long K, std::uint64_t seed,
                                                 const SyntheticFlOptions& fl = {},
                                                 const ExperimentOptions& opts = {}) {
  scn.validate();
  fl.validate();
  SyntheticFlResult res;
  res.designs = design_methods(scn, K, derive_seed(seed, 0), opts);
  const auto clients = synthetic_clients(scn, fl, derive_seed(seed, 1));
  FedAvgOptions fo = fl.fedavg;
  if (scn.params) fo.local_epochs = scn.params->local_epochs;
  const auto all = res.designs.all();
  const auto reps = static_cast<std::size_t>(fl.replicates);
  std::vector<FlRun> runs(all.size() * reps);
  parallel_for(runs.size(), opts.placement.jobs, [&](std::size_t c) {
    const auto& d = *all[c / reps];
    const auto lat = latencies(scn.clients, d.x, scn.cfg);
    Rng rng = Rng::stream(derive_seed(seed, 2), c % reps);
    runs[c] = run_fedavg(clients, lat, d.q, K, fo, rng);
  });
  for (std::size_t m = 0; m < all.size(); ++m) {
    double wc = 0.0, rounds = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      wc += runs[m * reps + r].wallclock;
      rounds += static_cast<double>(runs[m * reps + r].rounds);
    }
    wc /= static_cast<double>(reps);
    rounds /= static_cast<double>(reps);
    double ss = 0.0;
    for (std::size_t r = 0; r < reps; ++r) ss += std::pow(runs[m * reps + r].wallclock - wc, 2);
    const double se = reps > 1 ? std::sqrt(ss / static_cast<double>(reps - 1) / static_cast<double>(reps)) : 0.0;
    res.J.push_back(all[m]->J);
    res.wallclock.push_back(wc);
    res.table.add_row({all[m]->method, std::int64_t{K}, all[m]->x, all[m]->J, rounds, wc, se,
                       static_cast<std::int64_t>(reps)});
  }
  res.rank_correlation = spearman(res.J, res.wallclock);
  return res;
}

}  // namespace tailpass
