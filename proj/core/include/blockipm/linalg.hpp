#pragma once

#include <memory>
#include <vector>

#include "blockipm/sparse.hpp"

namespace blockipm {

/// Per-block LU factors of a block-diagonal operator diag(G_x^1, ..., G_x^M),
/// all blocks square n_x x n_x. Blocks with n_x <= dense_threshold use dense
/// LU with partial pivoting; larger blocks use a sparse LU (P G_x Q = L U)
/// whose symbolic analysis is shared across blocks since they share one
/// sparsity pattern. Immutable after construction; solves are concurrent-safe.
class BlockDiagFactor {
 public:
  static constexpr index_t kDenseThreshold = 64;

  /// Blocks given as a shared pattern plus per-block values (column b of
  /// `vals` holds block b's nnz values).
  static BlockDiagFactor factor(const SparsityPattern& pat, const Matrix& vals,
                                index_t block_offset = 0);

  index_t block_dim() const { return n_; }
  index_t blocks() const { return M_; }

  /// X = G_x^{-1} B (or G_x^{-T} B): B is dense (n_x * M) x k, rows grouped by
  /// block. Counts 2 triangular-solve passes and 2 permutation products on
  /// `counters` when given. ncols < 0 solves all columns, otherwise only the
  /// leading ncols (ragged last tile).
  void solve(Matrix& B, bool transpose, OpCounters* counters = nullptr,
             index_t ncols = -1) const;
  /// Convenience: solve for a single block's right-hand sides.
  void solve_block(index_t b, Matrix& B, bool transpose) const;

  ~BlockDiagFactor();
  BlockDiagFactor(BlockDiagFactor&&) noexcept;
  BlockDiagFactor& operator=(BlockDiagFactor&&) noexcept;

 private:
  BlockDiagFactor();
  struct Impl;
  std::unique_ptr<Impl> impl_;
  index_t n_ = 0, M_ = 0;
};

/// Factorization of a dense symmetric matrix with inertia. Tries Cholesky
/// first; falls back to Bunch-Kaufman pivoting when not positive definite.
class DenseSymFactor {
 public:
  static DenseSymFactor factor(Matrix a);

  index_t dim() const { return index_t(a_.rows()); }
  index_t positive() const { return pos_; }
  index_t negative() const { return neg_; }
  index_t zero() const { return zero_; }
  bool positive_definite() const { return cholesky_; }

  void solve(Matrix& b) const;
  void solve(Vector& b) const;

 private:
  Matrix a_;
  std::vector<int> ipiv_;
  bool cholesky_ = false;
  index_t pos_ = 0, neg_ = 0, zero_ = 0;
};

/// Sparse symmetric indefinite factorization: fill-reducing (AMD) ordered
/// LDL' with 1x1 pivots and static pivot perturbation (tiny pivots are
/// replaced by +/- eps * scale and counted). Inertia is read off D, i.e. it
/// is the inertia of the perturbed matrix; solves run optional residual
/// refinement against the original matrix when perturbations occurred.
class SparseSymFactor {
 public:
  struct Options {
    double pivot_tol = 1e-13;   // on the equilibrated matrix
    int max_refine = 10;        // refinement steps when perturbed
    double refine_tol = 5e-15;  // relative residual target
  };

  /// `a` must have a symmetric pattern (full storage, both triangles).
  /// `expected_sign`, when given (+1/-1 per row), steers the static pivot
  /// perturbation of near-zero pivots so saddle systems keep their
  /// structural inertia (the KKT layout knows which rows are dual).
  static SparseSymFactor factor(const SparseMatrix& a, const Options& opts,
                                const std::vector<int>* expected_sign = nullptr);
  static SparseSymFactor factor(const SparseMatrix& a) { return factor(a, Options()); }

  index_t dim() const { return n_; }
  index_t positive() const { return pos_; }
  index_t negative() const { return neg_; }
  index_t zero() const { return zero_; }
  index_t perturbed_pivots() const { return perturbed_; }
  count_t factor_nnz() const { return lp_.empty() ? 0 : lp_[size_t(n_)]; }

  /// Solves in place; returns the final relative residual (a solve-quality
  /// signal the regularization loop uses to reject unstable factorizations).
  double solve(Vector& b) const;

 private:
  index_t n_ = 0;
  std::vector<index_t> perm_, iperm_;          // fill-reducing permutation
  std::vector<double> scal_;                   // symmetric equilibration
  std::vector<index_t> lp_, li_;               // L pattern (CSC, strict lower)
  std::vector<double> lx_, d_;                 // L values, D diagonal
  SparseMatrix a_full_;                        // original (full) for refinement
  index_t pos_ = 0, neg_ = 0, zero_ = 0, perturbed_ = 0;
  Options opts_;
};

/// Factor a batch of square sparse blocks sharing one pattern.
BlockDiagFactor factor_block_diag(const SparsityPattern& pat, const Matrix& vals,
                                  index_t block_offset = 0);

DenseSymFactor factor_dense_sym(Matrix a);
SparseSymFactor factor_sparse_sym(const SparseMatrix& a,
                                  const SparseSymFactor::Options& opts = SparseSymFactor::Options{});

}  // namespace blockipm
