#pragma once

#include "blockipm/kkt.hpp"

namespace blockipm {

struct IpmOptions {
  double tol = 1e-6;
  double mu0 = 1e-1;
  double kappa_mu = 0.2;   // linear mu decrease factor
  double theta_mu = 1.5;   // superlinear mu exponent
  double tau = 0.995;      // fraction-to-boundary
  double kappa_eps = 10.0; // barrier subproblem tolerance: E_mu <= kappa_eps * mu
  int max_iter = 300;
  KktStrategy strategy = KktStrategy::reduced;
  RegSchedule reg;
  index_t n_batch = 32;
  index_t groups = 1;
  ExecMode exec;
  bool allow_fallback = true;  // reduced falls back to augmented on singular G_x
  bool verbose = false;
  // record the augmented-system residual of every accepted step (the
  // recovery-chain check); costs one extra multiply-back per iteration
  bool check_step_residual = false;
};

struct IterationLog {
  int iter = 0;
  double objective = 0;
  double inf_pr = 0, inf_du = 0, complementarity = 0;
  double mu = 0;
  double alpha_primal = 0, alpha_dual = 0;
  double t_ad = 0, t_kkt = 0, t_other = 0, t_total = 0;
  int corrections = 0;
  bool fallback = false;
};

enum class SolveStatus { optimal, max_iter, infeasible, linear_solve_failure };
const char* to_string(SolveStatus s);

struct SolveResult {
  Iterate iterate;
  SolveStatus status = SolveStatus::max_iter;
  double objective = 0;
  std::vector<IterationLog> logs;
  KktResiduals final_residuals;
  OpCounters counters;
  double t_ad = 0, t_kkt = 0, t_total = 0;
  count_t dual_elements = 0;       // derivative workspace tangent elements
  count_t reduce_workspace = 0;    // (2 M n_x + n_u) n_batch summed over groups
  double max_step_residual = 0;    // filled when opts.check_step_residual
};

SolveResult solve(const BlockNlp& nlp, Executor& exec, const IpmOptions& opts);

/// Monotone Fiacco-McCormick update: max(tol/10, min(kappa_mu mu, mu^theta_mu)).
double update_mu(double mu, const IpmOptions& opts);

/// Standard safe start: primals projected strictly inside their bounds
/// (0.1 of the span for two-sided bounds), slacks matched to -h then pushed
/// at least 1e-2 inside, bound multipliers mu0 / gap, y = z = 0.
Iterate initial_iterate(const BlockNlp& nlp, const IpmOptions& opts);

/// Largest alphas in (0, 1] keeping bounded primals (resp. multipliers) at
/// least a (1 - tau) fraction inside.
struct StepSizes {
  double alpha_primal = 1.0, alpha_dual = 1.0;
};

/// Bound-multiplier steps recovered from the linearized perturbed
/// complementarity, e.g. p_kappa = mu (X-L)^{-1} e - kappa - (X-L)^{-1}
/// diag(kappa) p_x for a lower bound.
struct BoundSteps {
  Matrix kappa_lo, kappa_up;  // n_x x N
  Matrix nu_lo, nu_up;        // m x N
  Vector lambda_lo, lambda_up;

  static BoundSteps compute(const BlockNlp& nlp, const Iterate& it, const Step& step, double mu);
};

StepSizes fraction_to_boundary(const BlockNlp& nlp, const Iterate& it, const Step& step,
                               const BoundSteps& bs, double tau);

/// One Newton step from an evaluated bundle with the selected strategy
/// (exposed for the cross-strategy checks).
Step compute_step(const BlockNlp& nlp, const Iterate& it, double mu, const DerivativeBundle& d,
                  KktStrategy strategy, const IpmOptions& opts, Executor& exec,
                  double& delta_w_last, StepInfo* info = nullptr);

}  // namespace blockipm
