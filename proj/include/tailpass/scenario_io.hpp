#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tailpass/convergence.hpp"
#include "tailpass/errors.hpp"
#include "tailpass/geometry_link.hpp"
#include "tailpass/participation.hpp"
#include "tailpass/placement.hpp"
#include "tailpass/sim_harness.hpp"

namespace tailpass {

/// Sweep settings for the experiment subcommands. Anything not given in the
/// scenario file keeps these defaults.
struct ExperimentSettings {
  std::uint64_t ccdf_rounds = 1'000'000;
  std::vector<long> tradeoff_Ks{10, 20, 30};
  std::vector<double> fast_fractions{0.25, 0.35, 0.45};
  FastFractionMode fast_fraction_mode = FastFractionMode::Count;
  std::vector<long> fg_Ks = [] {
    std::vector<long> k;
    for (long i = 1; i <= 50; ++i) k.push_back(i);
    return k;
  }();
  TwoClassProblem premium{};  // t_s is set per gap
  std::vector<double> premium_gaps = [] {
    std::vector<double> d{0.0};
    for (int i = 1; i <= 20; ++i) d.push_back(0.1 * i);
    return d;
  }();
  std::vector<long> premium_Ks{5, 10, 20};
  TwoClassProblem phase{};
  std::vector<long> phase_Ks{8, 16, 32, 64, 128, 256};
  double phase_rho = 1.0, phase_xi = 0.5;
  double phase_threshold_fraction = 0.5;
  std::optional<double> phase_large_C_s;  // defaults to C_f
  int envelope_grid = 2001;
  SyntheticFlOptions fl;
  std::uint64_t verify_draws = 100000;
};

/// A fully resolved scenario file: problem data, solver options and sweep
/// settings. `generator` is kept for provenance when clients were generated.
struct ScenarioFile {
  Scenario scenario;
  std::optional<std::uint64_t> seed;
  std::optional<GeneratorOptions> generator;
  std::optional<std::size_t> generator_clients;
  InnerSolveOptions inner;
  PlacementOptions placement;
  ExperimentSettings experiments;
};

/// Values supplied on the command line that take part in resolution.
struct LoadOverrides {
  std::optional<long> K;
  std::optional<std::uint64_t> seed;
};

namespace detail {

using nlohmann::json;

/// Reads one JSON object, rejecting keys outside `allowed` and reporting
/// every problem with its dotted path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, std::set<std::string> allowed)
      : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    for (const auto& [key, value] : j_.items()) {
      if (!allowed.count(key)) throw ConfigError(at(key), "unknown key");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const { return j_.at(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double def) const {
    return has(key) ? as_number(raw(key), at(key)) : def;
  }
  std::optional<double> opt_number(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return as_number(raw(key), at(key));
  }
  long integer(const std::string& key, long def) const {
    return has(key) ? as_integer(raw(key), at(key)) : def;
  }
  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t def) const {
    return has(key) ? as_unsigned(raw(key), at(key)) : def;
  }
  std::string string(const std::string& key, std::string def) const {
    if (!has(key)) return def;
    if (!raw(key).is_string()) throw ConfigError(at(key), "expected a string");
    return raw(key).get<std::string>();
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> def) const {
    if (!has(key)) return def;
    const auto& a = array(key);
    std::vector<double> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_number(a[i], index(key, i)));
    return out;
  }
  std::vector<long> integers(const std::string& key, std::vector<long> def) const {
    if (!has(key)) return def;
    const auto& a = array(key);
    std::vector<long> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_integer(a[i], index(key, i)));
    return out;
  }
  const json& array(const std::string& key) const {
    if (!raw(key).is_array()) throw ConfigError(at(key), "expected an array");
    return raw(key);
  }
  std::string index(const std::string& key, std::size_t i) const {
    return at(key) + "[" + std::to_string(i) + "]";
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
    return d;
  }
  static long as_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    return v.get<long>();
  }
  static std::uint64_t as_unsigned(const json& v, const std::string& path) {
    if (!v.is_number_unsigned()) throw ConfigError(path, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

 private:
  const json& j_;
  std::string path_;
};

/// Runs a validate() that throws Error and rethrows it as a ConfigError at `path`.
template <class F>
void check_at(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

inline SystemConfig read_system(const ObjectReader& root) {
  SystemConfig cfg;
  if (!root.has("system")) return cfg;
  ObjectReader r(root.raw("system"), "system",
                 {"carrier_hz", "tx_power_dbm", "tx_power_w", "noise_density_dbm_hz", "bandwidth_hz",
                  "waveguide_len_m", "sample_size"});
  cfg.carrier_hz = r.number("carrier_hz", cfg.carrier_hz);
  if (r.has("tx_power_dbm") && r.has("tx_power_w"))
    throw ConfigError(r.at("tx_power_w"), "give tx_power_dbm or tx_power_w, not both");
  if (r.has("tx_power_dbm")) cfg.tx_power_w = dbm_to_watts(r.number("tx_power_dbm", 23.0));
  cfg.tx_power_w = r.number("tx_power_w", cfg.tx_power_w);
  cfg.noise_density_dbm_hz = r.number("noise_density_dbm_hz", cfg.noise_density_dbm_hz);
  cfg.bandwidth_hz = r.number("bandwidth_hz", cfg.bandwidth_hz);
  cfg.waveguide_len_m = r.number("waveguide_len_m", cfg.waveguide_len_m);
  cfg.sample_size = static_cast<int>(r.integer("sample_size", cfg.sample_size));
  check_at("system", [&] { cfg.validate(); });
  return cfg;
}

inline void read_clients(const ObjectReader& root, Scenario& scn) {
  const auto& arr = root.array("clients");
  if (arr.empty()) throw ConfigError("clients", "needs at least one client");
  bool any_weight = false, all_weight = true, any_mix = false, all_mix = true;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string path = root.index("clients", i);
    ObjectReader r(arr[i], path,
                   {"id", "u", "r", "payload_bits", "compute_time", "agg_weight", "grad_bound",
                    "tx_power_dbm", "tx_power_w", "label_mix"});
    ClientProfile c;
    c.id = static_cast<int>(r.integer("id", static_cast<long>(i)));
    if (!r.has("u")) throw ConfigError(r.at("u"), "missing required key");
    if (!r.has("r")) throw ConfigError(r.at("r"), "missing required key");
    c.u = r.number("u", 0.0);
    c.r = r.number("r", 1.0);
    c.payload_bits = r.number("payload_bits", c.payload_bits);
    c.compute_time = r.number("compute_time", c.compute_time);
    c.grad_bound = r.number("grad_bound", c.grad_bound);
    any_weight |= r.has("agg_weight");
    all_weight &= r.has("agg_weight");
    c.agg_weight = r.number("agg_weight", 1.0);
    if (r.has("tx_power_dbm") && r.has("tx_power_w"))
      throw ConfigError(r.at("tx_power_w"), "give tx_power_dbm or tx_power_w, not both");
    if (r.has("tx_power_dbm")) c.tx_power_w = dbm_to_watts(r.number("tx_power_dbm", 0.0));
    if (r.has("tx_power_w")) c.tx_power_w = r.number("tx_power_w", 0.0);
    any_mix |= r.has("label_mix");
    all_mix &= r.has("label_mix");
    if (r.has("label_mix")) scn.label_mix.push_back(r.numbers("label_mix", {}));
    check_at(path, [&] { c.validate(); });
    for (const auto& other : scn.clients)
      if (other.id == c.id) throw ConfigError(r.at("id"), "duplicate client id " + std::to_string(c.id));
    scn.clients.push_back(c);
  }
  if (any_weight && !all_weight)
    throw ConfigError("clients", "agg_weight must be given for every client or for none");
  if (!any_weight)
    for (auto& c : scn.clients) c.agg_weight = 1.0 / static_cast<double>(scn.clients.size());
  if (any_mix && !all_mix)
    throw ConfigError("clients", "label_mix must be given for every client or for none");
  for (std::size_t i = 0; i < scn.label_mix.size(); ++i)
    if (scn.label_mix[i].size() != scn.label_mix.front().size() || scn.label_mix[i].empty())
      throw ConfigError(root.index("clients", i) + ".label_mix", "label mixes differ in length");
}

inline GeneratorOptions read_generator(const ObjectReader& r) {
  GeneratorOptions g;
  g.r_min = r.number("r_min", g.r_min);
  g.r_max = r.number("r_max", g.r_max);
  g.tcomp_min = r.number("tcomp_min", g.tcomp_min);
  g.tcomp_max = r.number("tcomp_max", g.tcomp_max);
  if (r.has("dirichlet_alpha") && r.raw("dirichlet_alpha").is_string()) {
    if (r.string("dirichlet_alpha", "") != "inf")
      throw ConfigError(r.at("dirichlet_alpha"), "expected a number or \"inf\"");
    g.dirichlet_alpha = std::numeric_limits<double>::infinity();
  } else {
    g.dirichlet_alpha = r.number("dirichlet_alpha", g.dirichlet_alpha);
  }
  g.n_labels = static_cast<int>(r.integer("n_labels", g.n_labels));
  g.g0 = r.number("g0", g.g0);
  g.samples_min = static_cast<int>(r.integer("samples_min", g.samples_min));
  g.samples_max = static_cast<int>(r.integer("samples_max", g.samples_max));
  g.payload_bits = r.number("payload_bits", g.payload_bits);
  check_at("generator", [&] { g.validate(); });
  return g;
}

inline void read_convergence(const ObjectReader& root, Scenario& scn) {
  scn.consts = {1.0, 0.0, statistical_weights(scn.clients)};
  if (!root.has("convergence")) return;
  ObjectReader r(root.raw("convergence"), "convergence",
                 {"omega", "nu", "c", "smoothness", "strong_convexity", "local_epochs", "grad_var_bounds",
                  "opt_gap", "init_dist"});
  const bool direct = r.has("omega") || r.has("nu") || r.has("c");
  const bool from_params = r.has("smoothness") || r.has("strong_convexity") || r.has("local_epochs") ||
                           r.has("grad_var_bounds") || r.has("opt_gap") || r.has("init_dist");
  if (direct && from_params)
    throw ConfigError("convergence", "give either omega/nu/c or the bound parameters, not both");
  const std::size_t n = scn.size();
  if (from_params) {
    ConvergenceParams p;
    p.smoothness = r.number("smoothness", p.smoothness);
    p.strong_convexity = r.number("strong_convexity", p.strong_convexity);
    p.local_epochs = static_cast<int>(r.integer("local_epochs", p.local_epochs));
    p.sample_size = scn.cfg.sample_size;
    p.grad_var_bounds = r.numbers("grad_var_bounds", std::vector<double>(n, 0.0));
    if (p.grad_var_bounds.size() != n)
      throw ConfigError(r.at("grad_var_bounds"), "needs one entry per client");
    p.opt_gap = r.number("opt_gap", p.opt_gap);
    p.init_dist = r.number("init_dist", p.init_dist);
    for (const auto& c : scn.clients) {
      p.grad_bounds.push_back(c.grad_bound);
      p.agg_weights.push_back(c.agg_weight);
    }
    check_at("convergence", [&] { scn.consts = constants_from_params(p); });
    scn.params = p;
    return;
  }
  scn.consts.omega = r.number("omega", scn.consts.omega);
  scn.consts.nu = r.number("nu", scn.consts.nu);
  if (r.has("c")) {
    scn.consts.c = r.numbers("c", {});
    if (scn.consts.c.size() != n) throw ConfigError(r.at("c"), "needs one entry per client");
  }
}

inline void read_solver(const ObjectReader& root, ScenarioFile& out) {
  if (!root.has("solver")) return;
  ObjectReader r(root.raw("solver"), "solver",
                 {"n_starts", "max_iters", "grad_tol", "initial_step", "shrink", "armijo", "floor_eps",
                  "tol_x", "tol_t", "scan_points", "probes", "max_probes", "tie_tol", "probe_starts"});
  auto& in = out.inner;
  in.n_starts = static_cast<int>(r.integer("n_starts", in.n_starts));
  in.max_iters = static_cast<int>(r.integer("max_iters", in.max_iters));
  in.grad_tol = r.number("grad_tol", in.grad_tol);
  in.initial_step = r.number("initial_step", in.initial_step);
  in.shrink = r.number("shrink", in.shrink);
  in.armijo = r.number("armijo", in.armijo);
  in.floor_eps = r.number("floor_eps", in.floor_eps);
  auto& po = out.placement;
  po.tol_x = r.number("tol_x", po.tol_x);
  po.tol_t = r.number("tol_t", po.tol_t);
  po.scan_points = static_cast<int>(r.integer("scan_points", po.scan_points));
  po.probes = static_cast<int>(r.integer("probes", po.probes));
  po.max_probes = static_cast<int>(r.integer("max_probes", po.max_probes));
  po.tie_tol = r.number("tie_tol", po.tie_tol);
  po.probe_starts = static_cast<int>(r.integer("probe_starts", po.probe_starts));
}

inline void read_two_class(const ObjectReader& r, TwoClassProblem& p) {
  p.t_f = r.number("t_f", p.t_f);
  p.C_f = r.number("C_f", p.C_f);
  p.C_s = r.number("C_s", p.C_s);
  p.omega = r.number("omega", p.omega);
  p.nu = r.number("nu", p.nu);
}

inline void require_positive(const ObjectReader& r, const std::string& key, const std::vector<long>& v) {
  if (v.empty()) throw ConfigError(r.at(key), "needs at least one entry");
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] < 1) throw ConfigError(r.index(key, i), "must be >= 1");
}

inline void read_experiments(const ObjectReader& root, ExperimentSettings& e) {
  if (!root.has("experiments")) return;
  ObjectReader r(root.raw("experiments"), "experiments",
                 {"ccdf", "tradeoff", "fg_vs_k", "tail_premium", "phase_transition", "envelope",
                  "synthetic_fl", "verify_draws"});
  e.verify_draws = r.unsigned_integer("verify_draws", e.verify_draws);
  if (e.verify_draws < 2) throw ConfigError(r.at("verify_draws"), "must be >= 2");
  if (r.has("ccdf")) {
    ObjectReader s(r.raw("ccdf"), r.at("ccdf"), {"rounds"});
    e.ccdf_rounds = s.unsigned_integer("rounds", e.ccdf_rounds);
    if (e.ccdf_rounds < 1) throw ConfigError(s.at("rounds"), "must be >= 1");
  }
  if (r.has("tradeoff")) {
    ObjectReader s(r.raw("tradeoff"), r.at("tradeoff"), {"K"});
    e.tradeoff_Ks = s.integers("K", e.tradeoff_Ks);
    require_positive(s, "K", e.tradeoff_Ks);
  }
  if (r.has("fg_vs_k")) {
    ObjectReader s(r.raw("fg_vs_k"), r.at("fg_vs_k"), {"K", "fractions", "mode"});
    e.fg_Ks = s.integers("K", e.fg_Ks);
    require_positive(s, "K", e.fg_Ks);
    e.fast_fractions = s.numbers("fractions", e.fast_fractions);
    if (e.fast_fractions.empty()) throw ConfigError(s.at("fractions"), "needs at least one entry");
    for (std::size_t i = 0; i < e.fast_fractions.size(); ++i)
      if (e.fast_fractions[i] < 0.0 || e.fast_fractions[i] > 1.0)
        throw ConfigError(s.index("fractions", i), "must lie in [0, 1]");
    const auto mode = s.string("mode", "count");
    if (mode == "count") e.fast_fraction_mode = FastFractionMode::Count;
    else if (mode == "mass") e.fast_fraction_mode = FastFractionMode::Mass;
    else throw ConfigError(s.at("mode"), "expected \"count\" or \"mass\"");
  }
  if (r.has("tail_premium")) {
    ObjectReader s(r.raw("tail_premium"), r.at("tail_premium"),
                   {"t_f", "C_f", "C_s", "omega", "nu", "gaps", "K"});
    read_two_class(s, e.premium);
    e.premium_gaps = s.numbers("gaps", e.premium_gaps);
    if (e.premium_gaps.empty()) throw ConfigError(s.at("gaps"), "needs at least one entry");
    for (std::size_t i = 0; i < e.premium_gaps.size(); ++i)
      if (e.premium_gaps[i] < 0.0) throw ConfigError(s.index("gaps", i), "must be >= 0");
    e.premium_Ks = s.integers("K", e.premium_Ks);
    require_positive(s, "K", e.premium_Ks);
    TwoClassProblem probe = e.premium;
    probe.t_s = probe.t_f + 1.0;
    check_at(s.at("C_f"), [&] { probe.validate(); });
  }
  if (r.has("phase_transition")) {
    ObjectReader s(r.raw("phase_transition"), r.at("phase_transition"),
                   {"t_f", "t_s", "C_f", "C_s", "omega", "nu", "K", "rho", "xi", "threshold_fraction",
                    "large_C_s"});
    read_two_class(s, e.phase);
    e.phase.t_s = s.number("t_s", e.phase.t_s);
    e.phase_Ks = s.integers("K", e.phase_Ks);
    require_positive(s, "K", e.phase_Ks);
    e.phase_rho = s.number("rho", e.phase_rho);
    e.phase_xi = s.number("xi", e.phase_xi);
    e.phase_threshold_fraction = s.number("threshold_fraction", e.phase_threshold_fraction);
    if (!(e.phase_threshold_fraction > 0.0 && e.phase_threshold_fraction <= 1.0))
      throw ConfigError(s.at("threshold_fraction"), "must lie in (0, 1]");
    e.phase_large_C_s = s.opt_number("large_C_s");
    check_at("experiments.phase_transition", [&] { e.phase.validate(); });
  }
  if (r.has("envelope")) {
    ObjectReader s(r.raw("envelope"), r.at("envelope"), {"grid"});
    e.envelope_grid = static_cast<int>(s.integer("grid", e.envelope_grid));
    if (e.envelope_grid < 2) throw ConfigError(s.at("grid"), "must be >= 2");
  }
  if (r.has("synthetic_fl")) {
    ObjectReader s(r.raw("synthetic_fl"), r.at("synthetic_fl"),
                   {"learning_rate", "local_epochs", "epsilon", "max_rounds", "init_value", "curvature_min",
                    "curvature_max", "center_scale", "noise_std", "replicates", "dim"});
    auto& fl = e.fl;
    fl.fedavg.learning_rate = s.number("learning_rate", fl.fedavg.learning_rate);
    fl.fedavg.local_epochs = static_cast<int>(s.integer("local_epochs", fl.fedavg.local_epochs));
    fl.fedavg.epsilon = s.number("epsilon", fl.fedavg.epsilon);
    fl.fedavg.max_rounds = s.integer("max_rounds", fl.fedavg.max_rounds);
    fl.fedavg.init_value = s.number("init_value", fl.fedavg.init_value);
    fl.curvature_min = s.number("curvature_min", fl.curvature_min);
    fl.curvature_max = s.number("curvature_max", fl.curvature_max);
    fl.center_scale = s.number("center_scale", fl.center_scale);
    fl.noise_std = s.number("noise_std", fl.noise_std);
    fl.replicates = static_cast<int>(s.integer("replicates", fl.replicates));
    fl.dim = static_cast<int>(s.integer("dim", fl.dim));
    check_at("experiments.synthetic_fl", [&] { fl.validate(); });
  }
}

}  // namespace detail

/// Parses and validates a scenario document. Nothing is computed before the
/// whole document has been checked; every failure is a ConfigError naming the
/// offending key.
inline ScenarioFile parse_scenario(const nlohmann::json& doc, const LoadOverrides& ov = {}) {
  using detail::ObjectReader;
  ObjectReader root(doc, "",
                    {"seed", "system", "clients", "generator", "convergence", "solver", "experiments"});
  ScenarioFile out;
  if (root.has("seed")) out.seed = root.unsigned_integer("seed", 0);
  if (ov.seed) out.seed = ov.seed;

  Scenario& scn = out.scenario;
  SystemConfig cfg = detail::read_system(root);
  if (ov.K) {
    if (*ov.K < 1) throw ConfigError("--K", "must be >= 1");
    cfg.sample_size = static_cast<int>(*ov.K);
  }

  if (root.has("clients") == root.has("generator"))
    throw ConfigError("clients", "give exactly one of clients or generator");
  if (root.has("clients")) {
    scn.cfg = cfg;
    detail::read_clients(root, scn);
  } else {
    ObjectReader g(root.raw("generator"), "generator",
                   {"n_clients", "seed", "r_min", "r_max", "tcomp_min", "tcomp_max", "dirichlet_alpha",
                    "n_labels", "g0", "samples_min", "samples_max", "payload_bits"});
    if (!g.has("n_clients")) throw ConfigError("generator.n_clients", "missing required key");
    const long n = g.integer("n_clients", 0);
    if (n < 1) throw ConfigError("generator.n_clients", "must be >= 1");
    std::optional<std::uint64_t> gen_seed = out.seed;
    if (g.has("seed")) gen_seed = g.unsigned_integer("seed", 0);
    if (!gen_seed) throw ConfigError("generator.seed", "missing; set it here, at the top level or with --seed");
    out.generator = detail::read_generator(g);
    out.generator_clients = static_cast<std::size_t>(n);
    scn = generate_scenario(static_cast<std::size_t>(n), *gen_seed, *out.generator, cfg);
  }
  scn.seed = out.seed.value_or(0);

  detail::read_convergence(root, scn);
  detail::read_solver(root, out);
  detail::read_experiments(root, out.experiments);

  detail::check_at("solver", [&] {
    out.inner.validate(scn.size());
    out.placement.validate();
  });
  detail::check_at("convergence", [&] { scn.validate(); });
  return out;
}

inline ScenarioFile load_scenario_file(const std::string& path, const LoadOverrides& ov = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open scenario file");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("malformed document: ") + e.what());
  }
  return parse_scenario(doc, ov);
}

/// The resolved configuration as a document that parse_scenario accepts
/// again: clients are listed explicitly and every option is spelled out.
inline nlohmann::json to_json(const ScenarioFile& sf) {
  using nlohmann::json;
  const Scenario& scn = sf.scenario;
  json doc;
  if (sf.seed) doc["seed"] = *sf.seed;
  doc["system"] = {{"carrier_hz", scn.cfg.carrier_hz},
                   {"tx_power_w", scn.cfg.tx_power_w},
                   {"noise_density_dbm_hz", scn.cfg.noise_density_dbm_hz},
                   {"bandwidth_hz", scn.cfg.bandwidth_hz},
                   {"waveguide_len_m", scn.cfg.waveguide_len_m},
                   {"sample_size", scn.cfg.sample_size}};
  json clients = json::array();
  for (std::size_t i = 0; i < scn.size(); ++i) {
    const auto& c = scn.clients[i];
    json jc = {{"id", c.id},
               {"u", c.u},
               {"r", c.r},
               {"payload_bits", c.payload_bits},
               {"compute_time", c.compute_time},
               {"agg_weight", c.agg_weight},
               {"grad_bound", c.grad_bound}};
    if (c.tx_power_w) jc["tx_power_w"] = *c.tx_power_w;
    if (i < scn.label_mix.size()) jc["label_mix"] = scn.label_mix[i];
    clients.push_back(std::move(jc));
  }
  doc["clients"] = std::move(clients);
  if (scn.params) {
    const auto& p = *scn.params;
    doc["convergence"] = {{"smoothness", p.smoothness},
                          {"strong_convexity", p.strong_convexity},
                          {"local_epochs", p.local_epochs},
                          {"grad_var_bounds", p.grad_var_bounds},
                          {"opt_gap", p.opt_gap},
                          {"init_dist", p.init_dist}};
  } else {
    doc["convergence"] = {{"omega", scn.consts.omega}, {"nu", scn.consts.nu}, {"c", scn.consts.c}};
  }
  const auto& in = sf.inner;
  const auto& po = sf.placement;
  doc["solver"] = {{"n_starts", in.n_starts},     {"max_iters", in.max_iters}, {"grad_tol", in.grad_tol},
                   {"initial_step", in.initial_step}, {"shrink", in.shrink},     {"armijo", in.armijo},
                   {"floor_eps", in.floor_eps},   {"tol_x", po.tol_x},         {"tol_t", po.tol_t},
                   {"scan_points", po.scan_points}, {"probes", po.probes},    {"max_probes", po.max_probes},
                   {"tie_tol", po.tie_tol},       {"probe_starts", po.probe_starts}};
  const auto& e = sf.experiments;
  json phase = {{"t_f", e.phase.t_f},   {"t_s", e.phase.t_s},     {"C_f", e.phase.C_f},
                {"C_s", e.phase.C_s},   {"omega", e.phase.omega}, {"nu", e.phase.nu},
                {"K", e.phase_Ks},      {"rho", e.phase_rho},     {"xi", e.phase_xi},
                {"threshold_fraction", e.phase_threshold_fraction}};
  if (e.phase_large_C_s) phase["large_C_s"] = *e.phase_large_C_s;
  const auto& fl = e.fl;
  doc["experiments"] = {
      {"verify_draws", e.verify_draws},
      {"ccdf", {{"rounds", e.ccdf_rounds}}},
      {"tradeoff", {{"K", e.tradeoff_Ks}}},
      {"fg_vs_k",
       {{"K", e.fg_Ks},
        {"fractions", e.fast_fractions},
        {"mode", e.fast_fraction_mode == FastFractionMode::Count ? "count" : "mass"}}},
      {"tail_premium",
       {{"t_f", e.premium.t_f},
        {"C_f", e.premium.C_f},
        {"C_s", e.premium.C_s},
        {"omega", e.premium.omega},
        {"nu", e.premium.nu},
        {"gaps", e.premium_gaps},
        {"K", e.premium_Ks}}},
      {"phase_transition", std::move(phase)},
      {"envelope", {{"grid", e.envelope_grid}}},
      {"synthetic_fl",
       {{"learning_rate", fl.fedavg.learning_rate},
        {"local_epochs", fl.fedavg.local_epochs},
        {"epsilon", fl.fedavg.epsilon},
        {"max_rounds", fl.fedavg.max_rounds},
        {"init_value", fl.fedavg.init_value},
        {"curvature_min", fl.curvature_min},
        {"curvature_max", fl.curvature_max},
        {"center_scale", fl.center_scale},
        {"noise_std", fl.noise_std},
        {"replicates", fl.replicates},
        {"dim", fl.dim}}}};
  return doc;
}

}  // namespace tailpass
