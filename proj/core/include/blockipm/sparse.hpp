#pragma once

#include <utility>
#include <vector>

#include "blockipm/types.hpp"

namespace blockipm {

/// Structural nonzero pattern in compressed-row form. Column indices are
/// sorted and unique within each row; explicit zeros are permitted as values
/// are stored separately.
struct SparsityPattern {
  index_t rows = 0, cols = 0;
  std::vector<index_t> row_ptr;  // size rows+1
  std::vector<index_t> col_ind;  // size nnz

  index_t nnz() const { return index_t(col_ind.size()); }

  static SparsityPattern from_coords(index_t rows, index_t cols,
                                     std::vector<std::pair<index_t, index_t>> coords);
  static SparsityPattern dense(index_t rows, index_t cols);
  static SparsityPattern diagonal(index_t n);

  /// Slot of entry (i, j), or -1 if it is not structural.
  index_t find(index_t i, index_t j) const;
  bool is_symmetric() const;
  SparsityPattern transposed() const;
  void validate() const;
};

/// CSR matrix with values. The pattern is owned; batched users share one
/// SparsityPattern across blocks and keep per-block value arrays instead.
struct SparseMatrix {
  index_t rows = 0, cols = 0;
  std::vector<index_t> row_ptr;
  std::vector<index_t> col_ind;
  std::vector<double> val;

  index_t nnz() const { return index_t(col_ind.size()); }
  static SparseMatrix from_triplets(index_t rows, index_t cols,
                                    std::vector<std::pair<std::pair<index_t, index_t>, double>> t);
  static SparseMatrix from_pattern(const SparsityPattern& p, const double* values);
  static SparseMatrix identity(index_t n);
  SparsityPattern pattern() const;

  /// y += alpha * A x
  void gaxpy(const double* x, double* y, double alpha = 1.0) const;
  /// y += alpha * A' x
  void gaxpy_transpose(const double* x, double* y, double alpha = 1.0) const;
  Matrix to_dense() const;
};

/// K = W + H' diag(sigma) H with the union sparsity pattern (symmetric if W is).
SparseMatrix spgemm_condense(const SparseMatrix& W, const SparseMatrix& H, const Vector& sigma);

/// Symbolic form of K = W + A' diag(sigma) B (A, B sharing row space): union
/// pattern plus a slot program so per-block numeric passes skip symbolic
/// work. The symmetric case is A == B == H.
struct CondensePlan {
  SparsityPattern out;                  // pattern of W + A' S B
  std::vector<index_t> w_slot;          // for each W nnz: its slot in out
  // Entries (r, a) of A and (r, b) of B contribute A(r,a)*sigma(r)*B(r,b)
  // to out(a, b).
  struct Triple {
    index_t ka, kb;  // slots in A.val / B.val
    index_t r;       // shared row (sigma index)
    index_t out_slot;
  };
  std::vector<Triple> triples;
};
CondensePlan plan_condense(const SparsityPattern& W, const SparsityPattern& A,
                           const SparsityPattern& B);
void run_condense(const CondensePlan& plan, const double* w_val, const double* a_val,
                  const double* b_val, const double* sigma, double* out_val);

}  // namespace blockipm
