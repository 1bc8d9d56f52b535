#include <iostream>

#include <CLI11.hpp>

#include "blockipm/driver.hpp"

using namespace blockipm;

namespace {

void add_common_flags(CLI::App* cmd, RunConfig& cfg, std::string& config_path,
                      std::string& format, std::string& strategy) {
  cmd->add_option("--case", cfg.case_path, "MATPOWER .m case file");
  cmd->add_option("--scenarios", cfg.scenarios, "number of scenario blocks N");
  cmd->add_option("--sigma", cfg.sigma, "load multiplier standard deviation");
  cmd->add_option("--contingency", cfg.contingencies,
                  "branch index to outage (repeatable, assigned round-robin)");
  cmd->add_option("--seed", cfg.seed, "scenario generator seed");
  cmd->add_option("--strategy", strategy, "KKT strategy: augmented|condensed|reduced");
  cmd->add_option("--groups", cfg.groups, "number of block groups G");
  cmd->add_option("--workers", cfg.workers, "worker threads");
  cmd->add_option("--batch", cfg.n_batch, "reduction tile width n_batch");
  cmd->add_option("--tol", cfg.tol, "KKT tolerance");
  cmd->add_option("--max-iter", cfg.max_iter, "iteration limit");
  cmd->add_option("--format", format, "output format: text|csv|json");
  cmd->add_option("--deterministic", cfg.deterministic,
                  "fixed-order reductions (bitwise reproducible)");
  cmd->add_option("--scenario-file", cfg.scenario_file, "load scenario set from JSON");
  cmd->add_option("--config", config_path, "JSON config file (flags take precedence)");
  cmd->add_flag("--verbose", cfg.verbose, "per-iteration log");
}

// Config precedence: explicit CLI flags > config file > defaults. The file is
// applied first onto the defaults, then flags the user actually passed are
// re-applied from the parsed values.
int finalize(CLI::App* cmd, RunConfig& cfg, const std::string& config_path,
             const std::string& format, const std::string& strategy, std::ostream& err) {
  if (!config_path.empty()) {
    RunConfig file_cfg = cfg;
    try {
      apply_config_file(file_cfg, config_path);
    } catch (const std::exception& e) {
      err << "config error: " << e.what() << "\n";
      return kExitModel;
    }
    // flags the user did not pass fall back to the file's values
    if (cmd->count("--case") == 0) cfg.case_path = file_cfg.case_path;
    if (cmd->count("--scenarios") == 0) cfg.scenarios = file_cfg.scenarios;
    if (cmd->count("--sigma") == 0) cfg.sigma = file_cfg.sigma;
    if (cmd->count("--contingency") == 0) cfg.contingencies = file_cfg.contingencies;
    if (cmd->count("--seed") == 0) cfg.seed = file_cfg.seed;
    if (cmd->count("--strategy") == 0) cfg.strategy = file_cfg.strategy;
    if (cmd->count("--groups") == 0) cfg.groups = file_cfg.groups;
    if (cmd->count("--workers") == 0) cfg.workers = file_cfg.workers;
    if (cmd->count("--batch") == 0) cfg.n_batch = file_cfg.n_batch;
    if (cmd->count("--tol") == 0) cfg.tol = file_cfg.tol;
    if (cmd->count("--max-iter") == 0) cfg.max_iter = file_cfg.max_iter;
    if (cmd->count("--format") == 0) cfg.format = file_cfg.format;
    if (cmd->count("--deterministic") == 0) cfg.deterministic = file_cfg.deterministic;
    if (cmd->count("--scenario-file") == 0) cfg.scenario_file = file_cfg.scenario_file;
  }
  if (cmd->count("--strategy") > 0) {
    auto s = strategy_from_string(strategy);
    if (!s) {
      err << "unknown strategy: " << strategy << "\n";
      return kExitModel;
    }
    cfg.strategy = *s;
  }
  if (cmd->count("--format") > 0) {
    auto f = format_from_string(format);
    if (!f) {
      err << "unknown format: " << format << "\n";
      return kExitModel;
    }
    cfg.format = *f;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"block-structured interior-point solver for stochastic AC optimal power flow"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path, format = "text", strategy = "reduced";

  auto* solve_cmd = app.add_subcommand("solve", "solve a block-OPF instance");
  add_common_flags(solve_cmd, cfg, config_path, format, strategy);

  auto* bench_cmd = app.add_subcommand("bench", "run a strategy/case benchmark matrix");
  std::vector<std::string> bench_strategies;
  std::vector<index_t> bench_groups;
  add_common_flags(bench_cmd, cfg, config_path, format, strategy);
  bench_cmd->add_option("--strategies", bench_strategies,
                        "comma-separated strategies to benchmark")
      ->delimiter(',');
  bench_cmd->add_option("--groups-list", bench_groups, "group counts to benchmark")
      ->delimiter(',');

  auto* check_cmd = app.add_subcommand("check-derivatives",
                                       "compare model derivatives against finite differences");
  add_common_flags(check_cmd, cfg, config_path, format, strategy);

  auto* dims_cmd = app.add_subcommand("dims", "print instance dimensions");
  add_common_flags(dims_cmd, cfg, config_path, format, strategy);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  auto* active = app.get_subcommands().front();
  const int rc = finalize(active, cfg, config_path, format, strategy, std::cerr);
  if (rc != kExitOk) return rc;

  if (active == solve_cmd) return cmd_solve(cfg, std::cout, std::cerr);
  if (active == dims_cmd)
    return cmd_dims(cfg.case_path, cfg.scenarios, cfg.format, std::cout, std::cerr);
  if (active == check_cmd) return cmd_check_derivatives(cfg, std::cout, std::cerr);
  if (active == bench_cmd) {
    std::vector<RunConfig> matrix;
    std::vector<std::string> strategies = bench_strategies;
    if (strategies.empty()) strategies.push_back(to_string(cfg.strategy));
    std::vector<index_t> groups = bench_groups;
    if (groups.empty()) groups.push_back(cfg.groups);
    for (const auto& s : strategies)
      for (index_t g : groups) {
        RunConfig c = cfg;
        auto st = strategy_from_string(s);
        if (!st) {
          std::cerr << "unknown strategy: " << s << "\n";
          return kExitModel;
        }
        c.strategy = *st;
        c.groups = g;
        matrix.push_back(c);
      }
    return cmd_bench(matrix, cfg.format, std::cout, std::cerr);
  }
  return kExitOk;
}
