#pragma once

#include <memory>
#include <string>

#include "blockipm/basis.hpp"
#include "blockipm/sparse.hpp"
#include "blockipm/types.hpp"

namespace blockipm {

/// A block-structured NLP
///   min sum_i f_i(x_i, u)   s.t.  g_i(x_i, u) = 0,  h_i(x_i, u) + s_i = 0,
/// with bounds on x_i, u and the slacks s_i. Every block shares one basis
/// kernel and the sparse maps L_f, L_g, L_h (f = L_f psi, g = L_g psi,
/// h = L_h psi); scenario data lives inside the kernel as per-block
/// constants. Immutable after construction and shareable across workers.
///
/// Ranged inequalities l <= c(x,u) <= r are expressed as one h row with slack
/// bounds [-r, -l]; the classic one-sided h <= 0 is the special case s >= 0.
struct BlockNlp {
  BlockDims dims;
  std::shared_ptr<const BasisKernel> basis;
  SparseMatrix L_f;  // 1 x n_b
  SparseMatrix L_g;  // n_x x n_b
  SparseMatrix L_h;  // m x n_b
  Bounds x_bounds;   // n_x, shared across blocks
  Bounds u_bounds;   // n_u
  Bounds s_bounds;   // m, shared across blocks
  Vector x_start;    // optional warm start (empty = zeros)
  Vector u_start;
  std::string name;

  void validate() const;
};

/// Full primal-dual point. Bound multipliers are kept two-sided (lower/upper
/// per bounded entry); when only lower bounds exist the lower side is the
/// paper-style (kappa, nu, lambda) and the upper side stays empty at zero.
/// Entries whose bound is infinite carry no multiplier term at all.
struct Iterate {
  Matrix x;  // n_x x N
  Vector u;  // n_u
  Matrix s;  // m x N
  Matrix y;  // n_x x N, equality multipliers
  Matrix z;  // m x N, inequality multipliers
  Matrix kappa_lo, kappa_up;  // n_x x N
  Matrix nu_lo, nu_up;        // m x N
  Vector lambda_lo, lambda_up;  // n_u

  static Iterate zeros(const BlockDims& d);
  /// All bounded primals strictly inside their bounds and every multiplier of
  /// a finite bound strictly positive.
  bool strictly_interior(const BlockNlp& nlp) const;
};

/// Residuals of the mu-perturbed KKT system; complementarity is the inf-norm
/// over all products (v - l) m_lo - mu and (r - v) m_up - mu.
struct KktResiduals {
  Matrix stationarity_x;  // n_x x N
  Vector stationarity_u;  // n_u
  Matrix stationarity_s;  // m x N
  Matrix primal_g;        // n_x x N
  Matrix primal_h;        // m x N
  double complementarity = 0;

  double inf_norm() const;
  double stationarity_norm() const;
  double primal_norm() const;
};

/// (nvar, ncon) of the assembled problem: N*n_x + n_u primal variables
/// (slacks excluded) and N*(n_x + m) constraints.
std::pair<count_t, count_t> total_dims(const BlockNlp& nlp);

/// L(x,u,s; y,z,kappa,nu,lambda) = sum_i [ f_i + y_i'g_i + z_i'(h_i + s_i)
///   - kappa_i'x_i - nu_i's_i ] - lambda'u, generalized to two-sided bounds
/// (lower multipliers enter with the paper's sign, upper ones opposite).
double eval_lagrangian(const BlockNlp& nlp, const Iterate& it);

/// Residuals of the perturbed KKT system at `it`; mu = 0 gives the
/// unperturbed optimality system.
KktResiduals kkt_error(const BlockNlp& nlp, const Iterate& it, double mu);

}  // namespace blockipm
