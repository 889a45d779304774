#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tailpass/csv.hpp"
#include "tailpass/errors.hpp"
#include "tailpass/geometry_link.hpp"
#include "tailpass/parallel.hpp"
#include "tailpass/participation.hpp"
#include "tailpass/placement.hpp"
#include "tailpass/scenario_io.hpp"
#include "tailpass/sim_harness.hpp"
#include "tailpass/version.hpp"

namespace tailpass::cli {

enum ExitCode : int { kOk = 0, kConfig = 2, kNumeric = 3, kConvergence = 4 };

inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config:
    case ErrorCode::InvalidParams:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidMargin:
    case ErrorCode::KTooSmall:
      return kConfig;
    case ErrorCode::MaxRoundsExceeded:
      return kConvergence;
    default:
      return kNumeric;
  }
}

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"ccdf",    "tail_premium", "phase_transition", "tradeoff",
                                              "fg_vs_k", "envelope",     "synthetic_fl"};
  return names;
}

struct Flags {
  std::string command;
  std::string scenario;
  std::optional<double> x;
  std::optional<long> K;
  std::optional<std::uint64_t> seed;
  unsigned jobs = default_jobs();
  std::string out;
  bool verify = false;
  bool inner_only = false;
  std::string experiment;
};

namespace detail {

using nlohmann::json;

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ConfigError(p.string(), "cannot write output file");
  f << body;
  if (!f) throw ConfigError(p.string(), "write failed");
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void warn_if_outside(const Flags& fl, const SystemConfig& cfg, std::ostream& err) {
  if (fl.x && !cfg.in_range(*fl.x)) {
    err << "warning: --x " << format_double(*fl.x) << " lies outside the waveguide [0, "
        << format_double(cfg.waveguide_len_m) << "]; continuing\n";
  }
}

inline ScenarioFile load(const Flags& fl) {
  return load_scenario_file(fl.scenario, {fl.K, fl.seed});
}

/// Scenario used by experiments run without --scenario: ten generated
/// clients from the --seed value.
inline ScenarioFile default_scenario(const Flags& fl) {
  json doc = {{"generator", {{"n_clients", 10}}}};
  return parse_scenario(doc, {fl.K, fl.seed});
}

inline json header(const char* command, const ScenarioFile& sf, std::uint64_t seed) {
  return {{"version", version_string()},
          {"command", command},
          {"seed", seed},
          {"K", sf.scenario.cfg.sample_size},
          {"config", to_json(sf)}};
}

inline json design_json(const MethodDesign& d) {
  return {{"method", d.method}, {"x", d.x}, {"q", d.q.q()}, {"f", d.f}, {"g", d.g}, {"J", d.J}};
}

inline json kkt_json(const Scenario& scn, long K, double x, const std::vector<double>& q_original,
                     const ConvergenceConstants& consts) {
  const auto prof = sort_by_latency(scn.clients, x, scn.cfg);
  const SamplingDistribution qs(prof.to_sorted<double>(q_original));
  const auto rep = kkt_report(qs, prof, consts.reordered(prof), K);
  std::vector<int> order;
  for (auto k : prof.perm) order.push_back(scn.clients[k].id);
  return {{"latency_order", order},
          {"lambda_spread", rep.lambda_spread},
          {"lambda", rep.lambda},
          {"recursion_residuals", rep.recursion_residuals},
          {"psi", rep.psi}};
}

// ---- latency ----------------------------------------------------------------

inline int cmd_latency(const Flags& fl, std::ostream& out, std::ostream& err) {
  if (!fl.x) throw ConfigError("--x", "latency needs a position");
  const auto sf = load(fl);
  const auto& scn = sf.scenario;
  warn_if_outside(fl, scn.cfg, err);
  CsvTable t({"id", "u", "r", "d", "snr", "snr_db", "tau", "t", "dt_dx"});
  for (const auto& c : scn.clients) {
    const double gamma = snr(c, *fl.x, scn.cfg);
    t.add_row({std::int64_t{c.id}, c.u, c.r, distance(c, *fl.x), gamma, 10.0 * std::log10(gamma),
               upload_time(c, *fl.x, scn.cfg), latency(c, *fl.x, scn.cfg),
               latency_derivative(c, *fl.x, scn.cfg)});
  }
  const auto body = t.str();
  out << body;
  if (!fl.out.empty()) write_file(std::filesystem::path(fl.out) / "latency.csv", body);
  return kOk;
}

// ---- solve ------------------------------------------------------------------

inline int cmd_solve(const Flags& fl, std::ostream& out, std::ostream& err) {
  const auto sf = load(fl);
  const auto& scn = sf.scenario;
  const long K = scn.cfg.sample_size;
  const std::uint64_t seed = sf.seed.value_or(0);
  PlacementOptions popts = sf.placement;
  popts.jobs = fl.jobs;
  const auto pb = make_problem(scn, K, sf.inner, popts);
  json doc = header("solve", sf, seed);
  int code = kOk;
  if (fl.inner_only) {
    if (!fl.x) throw ConfigError("--x", "--inner-only needs a position");
    warn_if_outside(fl, scn.cfg, err);
    const auto e = evaluate_inner(pb, *fl.x, seed);
    doc["mode"] = "inner";
    doc["result"] = {{"x", e.x},
                     {"q", e.q},
                     {"J", e.J},
                     {"f", e.f},
                     {"g", e.g},
                     {"phi", e.phi},
                     {"kkt_residual", e.kkt_residual},
                     {"converged", e.converged},
                     {"class_reduced", e.class_reduced},
                     {"straggler_probs", e.pi},
                     {"kkt", kkt_json(scn, K, e.x, e.q, pb.consts)}};
    if (!e.converged) {
      err << "error: inner solve did not converge\n";
      code = kConvergence;
    }
  } else {
    if (fl.x) err << "warning: --x is ignored without --inner-only\n";
    const auto sol = solve_placement(pb, seed);
    json candidates = json::array();
    for (const auto& c : sol.candidates)
      candidates.push_back({{"x", c.x}, {"J", c.J}, {"converged", c.converged}, {"kind", to_string(c.kind)}});
    json crossings = json::array();
    for (const auto& c : sol.partition.crossings)
      crossings.push_back({{"x", c.x},
                           {"client_a", scn.clients[c.i].id},
                           {"client_b", scn.clients[c.j].id},
                           {"tangential", c.tangential}});
    doc["mode"] = "placement";
    json result = {{"x_star", sol.x_star},
                   {"q_star", sol.q_star.q()},
                   {"J_star", sol.J_star},
                   {"f", sol.f},
                   {"g", sol.g},
                   {"phi", sol.phi},
                   {"kkt_residual", sol.kkt_residual},
                   {"converged", sol.converged},
                   {"all_failed", sol.all_failed},
                   {"straggler_probs", sol.straggler_probs},
                   {"breakpoints", sol.partition.points},
                   {"signatures", sol.partition.signatures},
                   {"crossings", std::move(crossings)},
                   {"roots", sol.roots},
                   {"candidates", std::move(candidates)}};
    if (!sol.all_failed) result["kkt"] = kkt_json(scn, K, sol.x_star, sol.q_star.q(), pb.consts);
    doc["result"] = std::move(result);
    if (sol.all_failed) {
      err << "error: every candidate failed to converge\n";
      code = kConvergence;
    }
  }
  const auto body = dump(doc);
  if (fl.out.empty()) {
    out << body;
  } else {
    const auto path = std::filesystem::path(fl.out) / "solve.json";
    write_file(path, body);
    out << path.string() << "\n";
  }
  return code;
}

// ---- experiments --------------------------------------------------------------

struct ExperimentOutput {
  CsvTable table;
  json summary;
};

inline ExperimentOutput run_experiment(const std::string& name, const ScenarioFile& sf, std::uint64_t seed,
                                       const Flags& fl) {
  const auto& scn = sf.scenario;
  const auto& e = sf.experiments;
  const long K = scn.cfg.sample_size;
  ExperimentOptions opts;
  opts.inner = sf.inner;
  opts.placement = sf.placement;
  opts.placement.jobs = fl.jobs;
  opts.verify = fl.verify;
  opts.verify_draws = e.verify_draws;

  if (name == "ccdf") {
    auto r = ccdf_experiment(scn, K, e.ccdf_rounds, seed, opts);
    json designs = json::array();
    for (std::size_t m = 0; m < r.designs.size(); ++m) {
      auto d = design_json(r.designs[m]);
      d["p99"] = r.p99[m];
      designs.push_back(std::move(d));
    }
    return {std::move(r.table), {{"rounds", e.ccdf_rounds}, {"designs", std::move(designs)}}};
  }
  if (name == "tail_premium") {
    return {tail_premium_experiment(e.premium, e.premium_gaps, e.premium_Ks), json::object()};
  }
  if (name == "phase_transition") {
    TwoClassProblem large = e.phase;
    large.C_s = e.phase_large_C_s.value_or(e.phase.C_f);
    const std::vector<PhaseSeries> series{{"threshold", e.phase, e.phase_threshold_fraction},
                                          {"fixed", large, std::nullopt}};
    PhaseSweepOptions po;
    po.rho = e.phase_rho;
    po.xi = e.phase_xi;
    return {phase_transition_experiment(series, e.phase_Ks, po), json::object()};
  }
  if (name == "tradeoff") {
    auto r = tradeoff_experiment(scn, e.tradeoff_Ks, seed, opts);
    return {std::move(r.table), json::object()};
  }
  if (name == "fg_vs_k") {
    auto r = fg_vs_k_experiment(scn, e.fast_fractions, e.fast_fraction_mode, e.fg_Ks, seed, opts);
    return {std::move(r.table), json::object()};
  }
  if (name == "envelope") {
    auto r = envelope_experiment(scn, K, e.envelope_grid, seed, opts);
    return {std::move(r.table),
            {{"x_star", r.solution.x_star},
             {"J_star", r.solution.J_star},
             {"q_star", r.solution.q_star.q()},
             {"breakpoints", r.solution.partition.points},
             {"roots", r.solution.roots},
             {"grid_x", r.grid_x},
             {"grid_J", r.grid_J}}};
  }
  if (name == "synthetic_fl") {
    auto r = synthetic_fl_experiment(scn, K, seed, e.fl, opts);
    json designs = json::array();
    for (const auto* d : r.designs.all()) designs.push_back(design_json(*d));
    return {std::move(r.table), {{"designs", std::move(designs)}, {"rank_correlation", r.rank_correlation}}};
  }
  throw ConfigError("experiment", "unknown experiment '" + name + "'");
}

inline std::filesystem::path output_dir(const Flags& fl) {
  if (!fl.out.empty()) return fl.out;
  if (const char* env = std::getenv("TAILPASS_OUT_DIR"); env && *env) return env;
  return "results";
}

inline int cmd_experiment(const Flags& fl, std::ostream& out, std::ostream& err) {
  if (!fl.seed) throw ConfigError("--seed", "experiments need an explicit seed");
  if (fl.x) err << "warning: --x is ignored by experiments\n";
  std::vector<std::string> names;
  if (fl.experiment == "all") {
    names = experiment_names();
  } else {
    bool known = false;
    for (const auto& n : experiment_names()) known |= n == fl.experiment;
    if (!known) throw ConfigError("experiment", "unknown experiment '" + fl.experiment + "'");
    names = {fl.experiment};
  }
  const auto sf = fl.scenario.empty() ? default_scenario(fl) : load(fl);
  const auto dir = output_dir(fl);
  for (const auto& name : names) {
    auto res = run_experiment(name, sf, *fl.seed, fl);
    json doc = header("experiment", sf, *fl.seed);
    doc["experiment"] = name;
    doc["verify"] = fl.verify;
    doc["csv"] = name + ".csv";
    doc["columns"] = res.table.header();
    doc["rows"] = res.table.size();
    doc["summary"] = std::move(res.summary);
    write_file(dir / (name + ".csv"), res.table.str());
    write_file(dir / (name + ".json"), dump(doc));
    out << (dir / (name + ".csv")).string() << "\n";
  }
  return kOk;
}

}  // namespace detail

/// Parses arguments and runs one subcommand. Returns the process exit status;
/// nothing is written to std::cout or std::cerr directly.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pinching-antenna placement and client sampling for synchronous federated learning",
               "tailpass"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);
  Flags fl;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--K", fl.K, "Clients sampled per round (overrides system.sample_size)");
    sub->add_option("--seed", fl.seed, "Master seed");
    sub->add_option("--jobs", fl.jobs, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", fl.out, "Output directory");
  };

  auto* lat = app.add_subcommand("latency", "Per-client distance, SNR and latency at a position");
  lat->add_option("--scenario", fl.scenario, "Scenario file")->required();
  lat->add_option("--x", fl.x, "Antenna position [m]");
  add_common(lat);

  auto* solve = app.add_subcommand("solve", "Joint placement search, or the inner problem at --x");
  solve->add_option("--scenario", fl.scenario, "Scenario file")->required();
  solve->add_option("--x", fl.x, "Antenna position [m] for --inner-only");
  solve->add_flag("--inner-only", fl.inner_only, "Optimize q only at the given --x");
  add_common(solve);

  auto* exp = app.add_subcommand("experiment", "Run an experiment sweep and write CSV output");
  std::vector<std::string> choices = experiment_names();
  choices.push_back("all");
  exp->add_option("name", fl.experiment, "Experiment name")->required()->check(CLI::IsMember(choices));
  exp->add_option("--scenario", fl.scenario, "Scenario file (default: ten generated clients)");
  exp->add_option("--x", fl.x, "Unused; accepted for symmetry");
  exp->add_flag("--verify", fl.verify, "Add Monte Carlo checks of every analytic f");
  add_common(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (lat->parsed()) return detail::cmd_latency(fl, out, err);
    if (solve->parsed()) return detail::cmd_solve(fl, out, err);
    return detail::cmd_experiment(fl, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumeric;
  }
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"tailpass"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace tailpass::cli
