#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "blockipm/driver.hpp"

using namespace blockipm;

namespace {

std::string data_path(const char* name) { return std::string(BLOCKIPM_DATA_DIR) + "/" + name; }

RunConfig base_config() {
  RunConfig cfg;
  cfg.case_path = data_path("case9.m");
  cfg.scenarios = 1;
  cfg.strategy = KktStrategy::reduced;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(BLOCKIPM_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("cmd_solve: case9 reduced reaches Optimal with exit 0") {
  std::ostringstream out, err;
  RunConfig cfg = base_config();
  CHECK(cmd_solve(cfg, out, err) == kExitOk);
  CHECK(out.str().find("Optimal") != std::string::npos);
}

TEST_CASE("cmd_solve: missing file exits 2 with a message") {
  std::ostringstream out, err;
  RunConfig cfg = base_config();
  cfg.case_path = "/nonexistent/case.m";
  CHECK(cmd_solve(cfg, out, err) == kExitParse);
  CHECK(!err.str().empty());
}

TEST_CASE("cmd_solve: config validation failures exit 3") {
  std::ostringstream out, err;
  RunConfig cfg = base_config();
  cfg.scenarios = 0;  // zero-scenario guard
  CHECK(cmd_solve(cfg, out, err) == kExitModel);
  cfg = base_config();
  cfg.groups = 5;  // G > N
  CHECK(cmd_solve(cfg, out, err) == kExitModel);
}

TEST_CASE("cmd_solve: augmented and reduced objectives agree") {
  auto run = [&](KktStrategy s) {
    std::ostringstream out, err;
    RunConfig cfg = base_config();
    cfg.strategy = s;
    cfg.format = OutputFormat::json;
    REQUIRE(cmd_solve(cfg, out, err) == kExitOk);
    return nlohmann::json::parse(out.str());
  };
  auto a = run(KktStrategy::augmented);
  auto r = run(KktStrategy::reduced);
  const double oa = a["objective"].get<double>(), orr = r["objective"].get<double>();
  CHECK(std::abs(oa - orr) / std::max(1.0, std::abs(oa)) <= 1e-6);
}

TEST_CASE("cmd_solve json report round-trips through the scenario serializer") {
  std::ostringstream out, err;
  RunConfig cfg = base_config();
  cfg.scenarios = 3;
  cfg.sigma = 0.1;
  cfg.seed = 5;
  cfg.format = OutputFormat::json;
  REQUIRE(cmd_solve(cfg, out, err) == kExitOk);
  auto j = nlohmann::json::parse(out.str());
  auto scen = opf::ScenarioSet::from_json(j["scenarios"].dump());
  CHECK(scen.N == 3);
  CHECK(scen.seed == 5);
  auto regen = opf::generate_scenarios(opf::parse_matpower_file(cfg.case_path), 3, 0.1, {}, 5);
  for (size_t k = 0; k < regen.multipliers.size(); ++k)
    CHECK(scen.multipliers.data()[k] == regen.multipliers.data()[k]);
}

TEST_CASE("cmd_dims: case118 row matches the published dimensions") {
  std::ostringstream out, err;
  REQUIRE(cmd_dims(data_path("case118.m"), 1, OutputFormat::json, out, err) == kExitOk);
  auto j = nlohmann::json::parse(out.str());
  CHECK(j["buses"] == 118);
  CHECK(j["lines"] == 186);
  CHECK(j["gens"] == 54);
  CHECK(j["n_x"] == 181);
  CHECK(j["n_u"] == 107);
}

TEST_CASE("cmd_dims: case2869pegase dimensions") {
  std::ostringstream out, err;
  REQUIRE(cmd_dims(data_path("case2869pegase.m"), 1, OutputFormat::json, out, err) == kExitOk);
  auto j = nlohmann::json::parse(out.str());
  CHECK(j["n_x"] == 5227);
  CHECK(j["n_u"] == 1019);
}

TEST_CASE("cmd_dims: toy case follows the formulas") {
  // 2 buses, 1 gen at ref: n_x = 2*2-1-1 = 2, n_u = 2*1-1 = 1
  const char* toy = R"(function mpc = toy
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0  0 0 0 1 1 0 138 1 1.1 0.9;
  2 1 10 5 0 0 1 1 0 138 1 1.1 0.9;
];
mpc.gen = [ 1 20 0 50 -50 1.0 100 1 100 0; ];
mpc.branch = [ 1 2 0.01 0.1 0 100 100 100 0 0 1 -360 360; ];
mpc.gencost = [ 2 0 0 3 0.1 10 0; ];
)";
  const std::string path = "/tmp/blockipm_toy_case.m";
  std::ofstream(path) << toy;
  std::ostringstream out, err;
  REQUIRE(cmd_dims(path, 4, OutputFormat::json, out, err) == kExitOk);
  auto j = nlohmann::json::parse(out.str());
  CHECK(j["n_x"] == 2);
  CHECK(j["n_u"] == 1);
  CHECK(j["nvar"] == 4 * 2 + 1);
}

TEST_CASE("cmd_check_derivatives passes on case9 and rejects N = 0") {
  std::ostringstream out, err;
  RunConfig cfg = base_config();
  CHECK(cmd_check_derivatives(cfg, out, err) == kExitOk);
  cfg.scenarios = 0;
  CHECK(cmd_check_derivatives(cfg, out, err) == kExitModel);
}

TEST_CASE("cmd_bench: two strategies give two rows, csv schema is stable") {
  RunConfig a = base_config(), b = base_config();
  b.strategy = KktStrategy::condensed;
  std::ostringstream out, err;
  REQUIRE(cmd_bench({a, b}, OutputFormat::csv, out, err) == kExitOk);
  std::istringstream lines(out.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "instance,N,strategy,G,iters,ad_s,kkt_s,total_s,status,objective");
  int rows = 0;
  for (std::string line; std::getline(lines, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("cmd_bench: reruns with the same seed repeat iters and objective") {
  RunConfig cfg = base_config();
  cfg.scenarios = 2;
  cfg.sigma = 0.05;
  cfg.seed = 17;
  auto run = [&] {
    std::ostringstream out, err;
    REQUIRE(cmd_bench({cfg}, OutputFormat::json, out, err) == kExitOk);
    return nlohmann::json::parse(out.str());
  };
  auto r1 = run(), r2 = run();
  CHECK(r1["rows"][0]["iters"] == r2["rows"][0]["iters"]);
  CHECK(r1["rows"][0]["objective"] == r2["rows"][0]["objective"]);
}

TEST_CASE("bench row failure is recorded and the run continues") {
  RunConfig bad = base_config();
  bad.case_path = "/nonexistent.m";
  RunConfig good = base_config();
  std::ostringstream out, err;
  REQUIRE(cmd_bench({bad, good}, OutputFormat::csv, out, err) == kExitOk);
  CHECK(out.str().find("Error") != std::string::npos);
  CHECK(out.str().find("Optimal") != std::string::npos);
}

TEST_CASE("cli binary: exit codes and config file precedence") {
  CHECK(run_cli("solve --case " + data_path("case9.m") + " --scenarios 1") == 0);
  CHECK(run_cli("solve --case /nope.m") == 2);
  CHECK(run_cli("dims --case " + data_path("case9.m")) == 0);

  // config file provides the case; CLI flag overrides scenarios
  const std::string cfgpath = "/tmp/blockipm_cfg.json";
  std::ofstream(cfgpath) << R"({"case": ")" << data_path("case9.m")
                         << R"(", "scenarios": 2, "strategy": "condensed"})";
  CHECK(run_cli("solve --config " + cfgpath) == 0);
  CHECK(run_cli("solve --config " + cfgpath + " --scenarios 1") == 0);
}

TEST_CASE("cmd_check_derivatives passes on case118 too") {
  std::ostringstream out, err;
  RunConfig cfg = base_config();
  cfg.case_path = data_path("case118.m");
  CHECK(cmd_check_derivatives(cfg, out, err) == kExitOk);
}
