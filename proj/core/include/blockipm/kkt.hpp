#pragma once

#include <optional>

#include "blockipm/autodiff.hpp"
#include "blockipm/executor.hpp"
#include "blockipm/linalg.hpp"

namespace blockipm {

enum class KktStrategy { augmented, condensed, reduced };

const char* to_string(KktStrategy s);
std::optional<KktStrategy> strategy_from_string(const std::string& s);

/// Escalating inertia-correction schedule: delta_w on the (x, u) diagonal of
/// every strategy's primal block (so the three systems stay algebraically
/// equivalent), delta_c on the dual block of factored systems only when a
/// factorization reports structural rank loss.
struct RegSchedule {
  double delta_w0 = 1e-4;
  double delta_w_min = 1e-20;
  double delta_w_max = 1e40;
  double kappa_minus = 1.0 / 3.0;
  double kappa_plus = 8.0;
  double kappa_plus_emergency = 100.0;
  double delta_c_bar = 1e-8;
  double mu_power = 0.25;
};

struct NonInteriorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LinearSolveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Newton step in the primal-dual variables; p_d = (p_x, p_u).
struct Step {
  Matrix px;  // n_x x N
  Vector pu;  // n_u
  Matrix ps, pz;  // m x N
  Matrix py;      // n_x x N
};

struct StepInfo {
  double delta_w = 0, delta_c = 0;
  int corrections = 0;
  OpCounters counters;  // reduction instrumentation (reduced strategy)
};

/// The augmented system of the barrier subproblem at an iterate: primal-dual
/// diagonals Sigma_p = (sigma_x, sigma_u), Sigma_s, and right-hand sides
/// r1..r4 including the barrier gradients. Holds references to the
/// derivative bundle evaluated at the same iterate.
struct AugmentedSystem {
  const BlockNlp* nlp = nullptr;
  const DerivativeBundle* d = nullptr;
  double mu = 0;

  Matrix sigma_x;  // n_x x N
  Vector sigma_u;  // n_u
  Matrix sigma_s;  // m x N

  Matrix r1x;  // n_x x N
  Vector r1u;  // n_u (coupling row, summed over blocks)
  Matrix r2, r3, r4;  // m x N, n_x x N, m x N

  double delta_w = 0, delta_c = 0;

  count_t dim() const {
    const auto& dm = nlp->dims;
    return count_t(dm.N) * (2 * dm.n_x + 2 * dm.m) + dm.n_u;
  }
};

AugmentedSystem assemble_augmented(const BlockNlp& nlp, const Iterate& it, double mu,
                                   const DerivativeBundle& d);

/// Symbolic work shared by repeated condensations (per-block union patterns
/// of K = W + H' Sigma_s H, split into xx / xu / uu blocks).
struct CondenseWork {
  CondensePlan xx, xu, uu;
};
CondenseWork make_condense_work(const AdPlan& plan);

/// Condensed system: per-block K blocks (shared pattern, per-block values),
/// the G blocks of the bundle, Sigma_p, and the condensed rhs
/// (rhat1 per block, rhat2 coupling, rhat3 per block).
struct CondensedSystem {
  const BlockNlp* nlp = nullptr;
  const DerivativeBundle* d = nullptr;
  double mu = 0;

  SparsityPattern kxx_p, kxu_p, kuu_p;
  Matrix kxx, kxu, kuu;  // nnz x N

  Matrix sigma_x;
  Vector sigma_u;
  Matrix sigma_s;  // kept for slack/dual recovery

  Matrix rhat1;  // n_x x N
  Vector rhat2;  // n_u
  Matrix rhat3;  // n_x x N
  Matrix r2, r4;  // carried along for recovery

  double delta_w = 0, delta_c = 0;
};

CondensedSystem condense(const AugmentedSystem& sys, const CondenseWork& work);
CondensedSystem condense(const AugmentedSystem& sys);

/// p_z = Sigma_s [H p_d + r4] - r2;  p_s = -Sigma_s^{-1} [r2 + p_z].
void recover_slack_dual(const CondensedSystem& sys, Step& step);

/// Reduced system: dense Khat_uu = Z' K Z assembled by tiles of n_batch
/// Cartesian basis columns, with the workspace accounting and operation
/// counters the instrumentation reports.
struct ReducedSystem {
  Matrix khat;  // n_u x n_u
  Vector rhs;   // n_u
  index_t n_batch = 0;
  count_t workspace_elements = 0;  // (2 M n_x + n_u) * n_batch summed per group
  OpCounters counters;
};

/// Per-group reduction workspace: T_x, L_x (M n_x x n_batch each) and the
/// control-side tile L_u (n_u x n_batch).
struct ReduceWorkspace {
  Matrix T_x, L_x, L_u;
  ReduceWorkspace(index_t M, index_t n_x, index_t n_u, index_t n_batch)
      : T_x(M * n_x, n_batch), L_x(M * n_x, n_batch), L_u(n_u, n_batch) {}
  count_t elements() const {
    return count_t(T_x.rows()) * T_x.cols() + count_t(L_x.rows()) * L_x.cols() +
           count_t(L_u.rows()) * L_u.cols();
  }
};

ReducedSystem reduce(const CondensedSystem& sys, const BlockDiagFactor& facts, index_t n_batch);
ReducedSystem reduce(const CondensedSystem& sys, const Partition& part,
                     const std::vector<BlockDiagFactor>& group_facts, index_t n_batch,
                     Executor& exec);

/// p_x^i = -(G_x^i)^{-1} [rhat3^i + G_u^i p_u];
/// p_y^i = -(G_x^i)^{-T} [rhat1^i + K_xx^i p_x^i + K_xu^i p_u].
void recover_state_adjoint(const CondensedSystem& sys, const BlockDiagFactor& facts, Step& step);
void recover_state_adjoint(const CondensedSystem& sys, const Partition& part,
                           const std::vector<BlockDiagFactor>& group_facts, Step& step);

/// Blockwise Schur-complement oracle over the arrowhead form of the condensed
/// system: S_uu = A0 - sum_i B_i A_i^{-1} B_i', an independent code path from
/// reduce() (dense symmetric factorizations of the per-block A_i).
struct ArrowheadBlocks {
  Matrix a0;               // n_u x n_u
  std::vector<Matrix> ai;  // 2 n_x x 2 n_x
  std::vector<Matrix> bi;  // n_u x 2 n_x
};
ArrowheadBlocks make_arrowhead(const CondensedSystem& sys);
Matrix schur_oracle(const ArrowheadBlocks& blocks);

/// Factor the per-block G_x blocks of the bundle for a block range.
BlockDiagFactor factor_gx_range(const CondensedSystem& sys, index_t lo, index_t hi);

/// Full strategy drivers with the inertia-correction loop. delta_w_last
/// carries the warm-start across iterations.
Step solve_augmented(AugmentedSystem& sys, const RegSchedule& reg, double& delta_w_last,
                     StepInfo* info = nullptr);
Step solve_condensed(AugmentedSystem& sys, const CondenseWork& work, const RegSchedule& reg,
                     double& delta_w_last, StepInfo* info = nullptr);
Step solve_reduced(AugmentedSystem& sys, const CondenseWork& work, const RegSchedule& reg,
                   double& delta_w_last, index_t n_batch, Executor& exec, const Partition& part,
                   StepInfo* info = nullptr);

/// Simple-interface solve for an already assembled augmented system with its
/// current regularization (no correction loop).
Step solve_augmented_once(const AugmentedSystem& sys);

/// Inf-norm residual of the four block rows of the augmented system at a
/// step, relative to the rhs norm; the multiply-back oracle used by the
/// recovery checks.
double augmented_step_residual(const AugmentedSystem& sys, const Step& step);

}  // namespace blockipm
