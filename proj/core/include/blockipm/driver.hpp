#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "blockipm/ipm.hpp"
#include "blockipm/opf.hpp"

namespace blockipm {

/// Exit codes of the command-line front end (a published contract):
/// 0 success, 2 parse failure, 3 model/config failure, 4 solver failure,
/// 5 derivative mismatch.
enum ExitCode {
  kExitOk = 0,
  kExitParse = 2,
  kExitModel = 3,
  kExitSolver = 4,
  kExitDerivative = 5,
};

enum class OutputFormat { text, csv, json };
std::optional<OutputFormat> format_from_string(const std::string& s);

struct RunConfig {
  std::string case_path;
  index_t scenarios = 1;           // N
  double sigma = 0.0;
  std::vector<index_t> contingencies;
  std::uint64_t seed = 0;
  KktStrategy strategy = KktStrategy::reduced;
  index_t groups = 1;              // G
  index_t workers = 1;
  index_t n_batch = 32;
  double tol = 1e-6;
  int max_iter = 300;
  OutputFormat format = OutputFormat::text;
  bool deterministic = true;
  std::string scenario_file;       // optional: load scenarios instead of generating
  bool verbose = false;

  void validate() const;  // throws std::invalid_argument on bad combinations
};

/// Apply settings from a JSON config file (same keys as the CLI flags);
/// values already set on the command line take precedence, so the caller
/// applies the file first and explicit flags second.
void apply_config_file(RunConfig& cfg, const std::string& path);

struct BenchRow {
  std::string instance;
  index_t N = 0;
  std::string strategy;
  index_t G = 0;
  int iters = 0;
  double ad_s = 0, kkt_s = 0, total_s = 0;
  std::string status;
  double objective = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  bool deterministic = true;
  std::string to_csv() const;
  std::string to_json() const;
};

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_dims(const std::string& case_path, index_t N, OutputFormat fmt, std::ostream& out,
             std::ostream& err);
int cmd_check_derivatives(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_bench(const std::vector<RunConfig>& configs, OutputFormat fmt, std::ostream& out,
              std::ostream& err);

}  // namespace blockipm
