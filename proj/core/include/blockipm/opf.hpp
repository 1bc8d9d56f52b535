#pragma once

#include <string>
#include <vector>

#include "blockipm/model.hpp"

namespace blockipm::opf {

struct ParseError : std::runtime_error {
  int line = 0;
  ParseError(const std::string& what, int line_no)
      : std::runtime_error(what + (line_no > 0 ? " (line " + std::to_string(line_no) + ")" : "")),
        line(line_no) {}
};

enum BusType { kPQ = 1, kPV = 2, kRef = 3, kIsolated = 4 };

struct BusRow {
  int id = 0;
  int type = kPQ;
  double Pd = 0, Qd = 0;  // MW / MVAr
  double Gs = 0, Bs = 0;  // shunt, MW / MVAr at V = 1 pu
  double Vm = 1, Va = 0;
  double Vmax = 1.1, Vmin = 0.9;
};

struct GenRow {
  int bus = 0;
  double Pg = 0, Qg = 0;
  double Qmax = 0, Qmin = 0;
  double Vg = 1;
  int status = 1;
  double Pmax = 0, Pmin = 0;
};

struct BranchRow {
  int from = 0, to = 0;
  double r = 0, x = 0, b = 0;
  double rateA = 0;  // MVA; 0 = unlimited
  double tap = 0;    // 0 = nominal (1.0)
  double shift = 0;  // degrees
  int status = 1;
};

struct GenCostRow {
  int model = 2;  // polynomial
  double startup = 0, shutdown = 0;
  int ncost = 0;
  std::vector<double> coef;  // highest order first, MATPOWER convention
};

/// Parsed MATPOWER case. Values stay in the file's units (MW, MVAr, degrees);
/// per-unit conversion happens in the model builder.
struct CaseData {
  std::string name;
  double baseMVA = 100;
  std::vector<BusRow> bus;
  std::vector<GenRow> gen;
  std::vector<BranchRow> branch;
  std::vector<GenCostRow> gencost;

  int ref_bus_index() const;  // index into bus, exactly one expected
};

/// Parse MATPOWER case text: function header, mpc.baseMVA, bracketed numeric
/// matrices mpc.bus / mpc.gen / mpc.branch / mpc.gencost, % comments,
/// semicolon row terminators. Unknown trailing columns are ignored.
CaseData parse_matpower(std::string_view text);
CaseData parse_matpower_file(const std::string& path);

/// Per-scenario data: one load multiplier per bus and an optional list of
/// branch outages (indices into the in-service branch list).
struct ScenarioSet {
  std::uint64_t seed = 0;
  double sigma = 0;
  index_t N = 0;
  Matrix multipliers;                       // nbus x N
  std::vector<std::vector<index_t>> outages;  // per scenario

  std::string to_json() const;
  static ScenarioSet from_json(const std::string& text);
};

/// Multipliers drawn from N(1, sigma^2) truncated to [0.5, 1.5] with the
/// given seed; contingencies assigned round-robin (k-th listed outage goes to
/// scenario k mod N). Verifies each post-contingency network stays connected.
ScenarioSet generate_scenarios(const CaseData& cs, index_t N, double sigma,
                               const std::vector<index_t>& contingencies, std::uint64_t seed);

/// Variable split: u = (active power of every in-service generator except the
/// reference-bus slack, voltage magnitude at each generator bus); x = (angle
/// at non-reference buses, voltage magnitude at non-generator buses).
struct OpfVariableMap {
  index_t n_x = 0, n_u = 0;
  // x layout: [theta of non-ref buses | v of non-gen buses]
  std::vector<index_t> theta_of_bus;  // bus -> x index or -1 (ref)
  std::vector<index_t> vx_of_bus;     // bus -> x index or -1 (gen bus)
  // u layout: [p of non-slack gens | v of gen buses]
  std::vector<index_t> pg_of_gen;     // gen -> u index or -1 (slack)
  std::vector<index_t> vu_of_bus;     // bus -> u index or -1 (non-gen bus)
  index_t slack_gen = -1;             // generator index of the reference slack
  std::vector<index_t> gen_bus;       // in-service gen -> bus index
  std::vector<index_t> live_branch;   // in-service branch indices
};

OpfVariableMap variable_map(const CaseData& cs);

/// Assemble the block-structured NLP: per scenario, polar power-flow
/// equalities g (active balance at non-ref buses, reactive balance at
/// non-generator buses), inequalities h (squared apparent-power flow at both
/// branch ends, generator-bus reactive injection, slack active power) with
/// the limits carried by two-sided slack bounds, and the averaged polynomial
/// generation cost. All blocks share one basis; scenario data lives inside
/// the kernel as per-block constants.
BlockNlp build_block_opf(const CaseData& cs, const ScenarioSet& scen);

/// Size of the dense reduced matrix: n_u^2 * element_size bytes.
count_t reduced_matrix_bytes(count_t n_u, count_t element_size = 8);

/// Dimension summary used by the dims report.
struct CaseDims {
  count_t buses = 0, branches = 0, gens = 0;
  count_t n_x = 0, n_u = 0, m = 0;
  count_t nvar = 0, ncon = 0;
  count_t khat_bytes = 0;
};
CaseDims case_dims(const CaseData& cs, index_t N);

}  // namespace blockipm::opf
