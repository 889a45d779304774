#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli_app.hpp"

using namespace tailpass;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scenario(const std::string& name) {
  return std::string(TAILPASS_SOURCE_DIR) + "/scenarios/" + name;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::path(::testing::TempDir()) / ("tailpass_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_temp(const std::string& name, const std::string& body) {
  const auto p = fs::path(::testing::TempDir()) / name;
  std::ofstream(p) << body;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& body) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const char* kSmall = R"({
  "seed": 4,
  "system": {"sample_size": 3},
  "generator": {"n_clients": 4},
  "experiments": {"tradeoff": {"K": [2, 3]}, "ccdf": {"rounds": 5000},
                  "synthetic_fl": {"replicates": 2}, "envelope": {"grid": 41}}
})";

}  // namespace

TEST(CliLatency, SingleClientAtClosestApproach) {
  const auto r = run({"latency", "--scenario", scenario("single_client.json"), "--x", "3.7"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"id", "u", "r", "d", "snr", "snr_db", "tau", "t", "dt_dx"}));
  SystemConfig cfg;
  const double gamma_max = cfg.tx_power_w * cfg.friis_factor() / (4.0 * cfg.noise_power_w());
  const double expect = 0.08 + 1e8 / (cfg.bandwidth_hz * std::log2(1.0 + gamma_max));
  EXPECT_NEAR(std::stod(rows[1][7]), expect, 1e-12 * expect);
  EXPECT_EQ(std::stod(rows[1][3]), 2.0);
  EXPECT_EQ(std::stod(rows[1][8]), 0.0);
  EXPECT_TRUE(r.err.empty());
}

TEST(CliLatency, OutOfRangeWarnsButRuns) {
  const auto r = run({"latency", "--scenario", scenario("single_client.json"), "--x", "12"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_EQ(parse_csv(r.out).size(), 2u);
}

TEST(CliLatency, MalformedFileNamesKey) {
  const auto path = write_temp("bad_key.json", R"({"clients": [{"u": 1, "r": 1, "colour": "red"}]})");
  const auto r = run({"latency", "--scenario", path, "--x", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("clients[0].colour"), std::string::npos) << r.err;
  const auto broken = write_temp("broken.json", "{\"clients\": [");
  EXPECT_EQ(run({"latency", "--scenario", broken, "--x", "1"}).code, 2);
  EXPECT_EQ(run({"latency", "--scenario", scenario("single_client.json")}).code, 2);
}

TEST(CliLatency, NumericFailureExitsThree) {
  const auto path = write_temp("far.json", R"({"clients": [{"u": 1, "r": 1e160}]})");
  const auto r = run({"latency", "--scenario", path, "--x", "1"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("OverflowLatency"), std::string::npos) << r.err;
}

TEST(CliSolve, InnerOnlySymmetric) {
  const auto r = run({"solve", "--scenario", scenario("symmetric_two_client.json"), "--inner-only", "--x", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = json::parse(r.out);
  EXPECT_EQ(doc["mode"], "inner");
  EXPECT_EQ(doc["version"], version_string());
  EXPECT_TRUE(doc.contains("config"));
  const auto q = doc["result"]["q"].get<std::vector<double>>();
  ASSERT_EQ(q.size(), 2u);
  EXPECT_NEAR(q[0], 0.5, 1e-6);
  EXPECT_NEAR(q[1], 0.5, 1e-6);
  EXPECT_TRUE(doc["result"]["kkt"].contains("lambda_spread"));
}

TEST(CliSolve, SingleClientPlacement) {
  const auto r = run({"solve", "--scenario", scenario("single_client.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = json::parse(r.out);
  EXPECT_NEAR(doc["result"]["x_star"].get<double>(), 3.7, 1e-12);
  EXPECT_EQ(doc["result"]["q_star"].get<std::vector<double>>(), std::vector<double>{1.0});
  EXPECT_FALSE(doc["result"]["candidates"].empty());
}

TEST(CliSolve, RepeatIsByteIdentical) {
  const std::vector<std::string> args{"solve", "--scenario", scenario("params_form.json"), "--jobs", "1"};
  const auto a = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  auto args3 = args;
  args3.back() = "3";
  EXPECT_EQ(a.out, run(args).out);
  EXPECT_EQ(a.out, run(args3).out);
  const auto doc = json::parse(a.out);
  EXPECT_TRUE(doc["result"].contains("breakpoints"));
  EXPECT_EQ(doc["config"]["clients"][0]["id"], 10);
}

TEST(CliSolve, KOverride) {
  const auto r = run({"solve", "--scenario", scenario("symmetric_two_client.json"), "--inner-only", "--x", "3",
                      "--K", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["K"], 7);
  EXPECT_EQ(run({"solve", "--scenario", scenario("symmetric_two_client.json"), "--K", "0"}).code, 2);
}

TEST(CliExperiment, PhaseTransitionColumns) {
  const auto dir = temp_dir("phase");
  const auto r = run({"experiment", "phase_transition", "--seed", "1", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(slurp(dir / "phase_transition.csv"));
  const std::vector<std::string> head(rows[0].begin(), rows[0].begin() + 6);
  EXPECT_EQ(head, (std::vector<std::string>{"K", "C_s", "delta_star", "K_delta_star", "ratio_stat", "threshold"}));
  const auto doc = json::parse(slurp(dir / "phase_transition.json"));
  EXPECT_EQ(doc["experiment"], "phase_transition");
  EXPECT_EQ(doc["version"], version_string());
}

TEST(CliExperiment, SingleClientCcdf) {
  const auto path = write_temp("one.json", R"({"clients": [{"u": 4, "r": 2}], "experiments": {"ccdf": {"rounds": 100}}})");
  const auto dir = temp_dir("ccdf1");
  const auto r = run({"experiment", "ccdf", "--scenario", path, "--seed", "2", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(slurp(dir / "ccdf.csv"));
  std::map<std::string, int> per_method;
  for (std::size_t i = 1; i < rows.size(); ++i) ++per_method[rows[i][0]];
  EXPECT_EQ(per_method.size(), 3u);
  for (const auto& [m, n] : per_method) EXPECT_EQ(n, 2) << m;
}

TEST(CliExperiment, VerifyZScores) {
  const auto path = write_temp("small_verify.json", kSmall);
  const auto dir = temp_dir("verify");
  const auto r = run({"experiment", "tradeoff", "--scenario", path, "--seed", "5", "--verify", "--out",
                      dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(slurp(dir / "tradeoff.csv"));
  ASSERT_EQ(rows[0].back(), "z_score");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(std::abs(std::stod(rows[i].back())), 4.0);
}

TEST(CliExperiment, SeedIsRequired) {
  const auto r = run({"experiment", "tradeoff"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--seed"), std::string::npos);
  EXPECT_EQ(run({"experiment", "nonsense", "--seed", "1"}).code, 2);
}

TEST(CliExperiment, JobsDoNotChangeOutput) {
  const auto path = write_temp("small_jobs.json", kSmall);
  for (const std::string name : {"tradeoff", "ccdf", "envelope"}) {
    const auto d1 = temp_dir("jobs1_" + name), d3 = temp_dir("jobs3_" + name);
    ASSERT_EQ(run({"experiment", name, "--scenario", path, "--seed", "9", "--jobs", "1", "--out", d1.string()}).code, 0);
    ASSERT_EQ(run({"experiment", name, "--scenario", path, "--seed", "9", "--jobs", "3", "--out", d3.string()}).code, 0);
    EXPECT_EQ(slurp(d1 / (name + ".csv")), slurp(d3 / (name + ".csv"))) << name;
    EXPECT_EQ(slurp(d1 / (name + ".json")), slurp(d3 / (name + ".json"))) << name;
  }
}

TEST(CliExperiment, OutputDirFromEnvironment) {
  const auto dir = temp_dir("env");
  ::setenv("TAILPASS_OUT_DIR", dir.string().c_str(), 1);
  const auto r = run({"experiment", "tail_premium", "--seed", "1"});
  ::unsetenv("TAILPASS_OUT_DIR");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "tail_premium.csv"));
  EXPECT_TRUE(fs::exists(dir / "tail_premium.json"));
}

TEST(CliExperiment, MaxRoundsExitsFour) {
  const auto path = write_temp("fl_cap.json", R"({
    "seed": 3, "system": {"sample_size": 2}, "generator": {"n_clients": 3},
    "experiments": {"synthetic_fl": {"max_rounds": 1, "epsilon": 1e-9, "replicates": 1}}})");
  const auto dir = temp_dir("cap");
  const auto r = run({"experiment", "synthetic_fl", "--scenario", path, "--seed", "1", "--out", dir.string()});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("MaxRoundsExceeded"), std::string::npos) << r.err;
}

TEST(Cli, Version) {
  const auto r = run({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(TAILPASS_PROJECT_VERSION), std::string::npos);
  EXPECT_EQ(std::string(kVersion), TAILPASS_PROJECT_VERSION);
}

TEST(Cli, NoSubcommandIsUsageError) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}
