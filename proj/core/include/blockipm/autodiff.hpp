#pragma once

#include <vector>

#include "blockipm/coloring.hpp"
#include "blockipm/model.hpp"

namespace blockipm {

/// Structural derivative supports shared by every block, obtained by index
/// propagation through the basis: a conservative superset of the true
/// nonzeros, identical for all blocks.
struct ModelPatterns {
  SparsityPattern jac_g;  // n_x x n_d
  SparsityPattern jac_h;  // m x n_d
  SparsityPattern hess;   // n_d x n_d, symmetric
};

ModelPatterns detect_sparsity(const BlockNlp& nlp);

/// Pattern split into state / control column (and row) blocks, with gather
/// tables from the unsplit slot numbering.
struct JacSplit {
  SparsityPattern x_pat, u_pat;
  std::vector<index_t> x_src, u_src;  // slot in the unsplit pattern
};
JacSplit split_jacobian(const SparsityPattern& j, index_t n_x);

struct HessSplit {
  SparsityPattern xx, xu, uu;
  // source slot pairs (entry, mirror) in the full pattern; decompressed
  // blocks are the average of the two, so they are exactly symmetric.
  std::vector<std::pair<index_t, index_t>> xx_src, xu_src, uu_src;
};
HessSplit split_hessian(const SparsityPattern& h, index_t n_x);

/// Everything M-independent needed to run batched derivative sweeps: the
/// detected patterns, one coloring for the stacked [g; h] Jacobian (the basis
/// duals serve both products), one Hessian coloring, and the slot routing
/// tables for decompression.
struct AdPlan {
  ModelPatterns patterns;
  SparsityPattern jac_stacked;  // (n_x + m) x n_d
  Coloring jac_coloring;        // of jac_stacked
  Coloring hess_coloring;       // of patterns.hess
  index_t p_jac = 0, p_hess = 0;

  std::vector<index_t> g_lane;  // per jac_g slot: tangent lane
  std::vector<index_t> h_lane;  // per jac_h slot
  std::vector<index_t> hess_lane;  // per hess slot (used for state rows)
  // (control row, lane) -> full hess slot, -1 where structurally zero
  std::vector<index_t> u_route;

  JacSplit g_split, h_split;
  HessSplit w_split;
};

AdPlan make_ad_plan(const BlockNlp& nlp);

/// Exact tangent-element budget of the derivative workspaces:
///   (n_x + n_b + n_d) M p_jac  for the Jacobian sweep
/// + (2 n_x + n_d + n_b) M p_hess for the forward-over-reverse sweep.
count_t dual_buffer_elements(const BlockDims& dims, index_t M, index_t p_jac, index_t p_hess);

/// Per-group buffers for a batch of M blocks. The dual (tangent-bearing)
/// buffers are exactly the ones the accounting formula promises; everything
/// else is plain value storage.
class AdWorkspace {
 public:
  AdWorkspace(const BlockNlp& nlp, const AdPlan& plan, index_t M);

  index_t batch() const { return M_; }
  count_t dual_tangent_elements() const;

  // batch_eval buffers (no tangents)
  DualBatch ein, epsi;
  // Jacobian sweep: inputs, basis, g output
  DualBatch jin, jpsi, jout;
  // Hessian sweep: inputs, basis, staged equality multipliers, state adjoint
  DualBatch hin, hpsi, hmult, hxbar;

  // value scratch (not part of the dual accounting)
  Matrix w_weights;   // n_b x M combined multiplier weights
  Matrix jac_g_vals;  // nnz(jac_g) x M
  Matrix jac_h_vals;  // nnz(jac_h) x M
  Matrix hess_vals;   // nnz(hess) x M
  Matrix u_grad;      // n_u x M

 private:
  index_t M_;
};

/// Values of (f_i, g_i, h_i) for blocks [block_begin, block_begin + M);
/// column c of X holds the state of block block_begin + c. Computed as
/// L Psi(X, u) through the shared basis.
void batch_eval(const BlockNlp& nlp, const Matrix& X, const Vector& u, index_t block_begin,
                AdWorkspace& ws, Vector& f, Matrix& g, Matrix& h);

/// Batched colored Jacobians: seeds p_jac tangent lanes, evaluates the basis
/// duals once, and decompresses the M per-block sparse Jacobians, all sharing
/// the plan's patterns. Also returns the function values for free.
/// Outputs are nnz x M matrices for the split patterns in the plan.
void batch_jacobian(const BlockNlp& nlp, const Matrix& X, const Vector& u, index_t block_begin,
                    const AdPlan& plan, AdWorkspace& ws, Vector& f, Matrix& g, Matrix& h,
                    Matrix& gx, Matrix& gu, Matrix& hx, Matrix& hu);

/// Batched Lagrangian Hessian blocks for weights obj_weight * f_i + y_i' g_i
/// + z_i' h_i, by forward mode over the hand-coded basis adjoint. Outputs the
/// split blocks W_xx, W_xu, W_uu (per-block columns; W_uu contributions are
/// summed by the caller) plus the Lagrangian gradient per block.
void batch_hessian(const BlockNlp& nlp, const Matrix& X, const Vector& u, index_t block_begin,
                   const Matrix& y, const Matrix& z, double obj_weight, const AdPlan& plan,
                   AdWorkspace& ws, Matrix& wxx, Matrix& wxu, Matrix& wuu, Matrix& grad_lag);

/// Shared-pattern derivative values for all N blocks plus function values;
/// the storage the KKT strategies consume.
struct DerivativeBundle {
  AdPlan plan;  // copies the plan for self-containment
  Vector f;     // N
  Matrix g, h;  // n_x x N, m x N
  Matrix gx, gu, hx, hu;      // nnz x N
  Matrix wxx, wxu, wuu;       // nnz x N
  Matrix grad_lag;            // n_d x N, gradient of obj_weight f + y'g + z'h
  double obj_weight = 1.0;

  double objective() const;  // sum of f
};

/// Evaluate the whole bundle for one contiguous block range with the given
/// multipliers (single-group convenience path; the engine runs per group).
void eval_bundle_range(const BlockNlp& nlp, const AdPlan& plan, AdWorkspace& ws,
                       const Matrix& X, const Vector& u, const Matrix& y, const Matrix& z,
                       double obj_weight, index_t block_begin, DerivativeBundle& out);

DerivativeBundle make_bundle(const BlockNlp& nlp, const AdPlan& plan);

/// Residuals of the mu-perturbed KKT system assembled from an evaluated
/// bundle (obj_weight must be 1). kkt_error() is this plus the evaluation.
KktResiduals assemble_residuals(const BlockNlp& nlp, const Iterate& it, double mu,
                                const DerivativeBundle& d);

}  // namespace blockipm
