#pragma once

#include <cmath>
#include <vector>

#include "blockipm/types.hpp"

namespace blockipm {

/// A batch of n dual-number entries evaluated across M columns (one column per
/// block) carrying p tangent lanes each. Values are laid out [entry][column],
/// tangents [entry][lane][column], so every elementary operation is a tight
/// loop over the M contiguous columns.
///
/// Arithmetic follows the dual rule per (column, lane):
///   (a + eps a')(b + eps b') = ab + eps (a b' + a' b).
class DualBatch {
 public:
  DualBatch() = default;
  DualBatch(index_t n, index_t M, index_t p)
      : n_(n), M_(M), p_(p), val_(size_t(n) * M, 0.0), tan_(size_t(n) * p * M, 0.0) {}

  index_t entries() const { return n_; }
  index_t columns() const { return M_; }
  index_t lanes() const { return p_; }

  double* v(index_t i) { return val_.data() + size_t(i) * M_; }
  const double* v(index_t i) const { return val_.data() + size_t(i) * M_; }
  double* t(index_t i, index_t k) { return tan_.data() + (size_t(i) * p_ + k) * M_; }
  const double* t(index_t i, index_t k) const {
    return tan_.data() + (size_t(i) * p_ + k) * M_;
  }

  count_t tangent_elements() const { return count_t(n_) * M_ * p_; }
  count_t elements() const { return count_t(n_) * M_ * (1 + p_); }

  void set_zero() {
    std::fill(val_.begin(), val_.end(), 0.0);
    std::fill(tan_.begin(), tan_.end(), 0.0);
  }

 private:
  index_t n_ = 0, M_ = 0, p_ = 0;
  std::vector<double> val_, tan_;
};

// Entry-level operations; io/ia/ib index entries within the batches. All
// batches must share (M, p). In-place use (out aliasing an operand) is safe:
// each column reads its operands before writing.

void db_set_const(DualBatch& out, index_t io, double c);
void db_set_const_per_column(DualBatch& out, index_t io, const double* c);
void db_copy(DualBatch& out, index_t io, const DualBatch& a, index_t ia);
void db_add(DualBatch& out, index_t io, const DualBatch& a, index_t ia, const DualBatch& b, index_t ib);
void db_sub(DualBatch& out, index_t io, const DualBatch& a, index_t ia, const DualBatch& b, index_t ib);
void db_scale(DualBatch& out, index_t io, double c);
void db_scale_per_column(DualBatch& out, index_t io, const double* c);
void db_mul(DualBatch& out, index_t io, const DualBatch& a, index_t ia, const DualBatch& b, index_t ib);
void db_square(DualBatch& out, index_t io, const DualBatch& a, index_t ia);
void db_sin(DualBatch& out, index_t io, const DualBatch& a, index_t ia);
void db_cos(DualBatch& out, index_t io, const DualBatch& a, index_t ia);
/// out += c * a
void db_axpy(DualBatch& out, index_t io, double c, const DualBatch& a, index_t ia);
/// out += c[col] * a, per-column coefficients
void db_axpy_per_column(DualBatch& out, index_t io, const double* c, const DualBatch& a, index_t ia);
/// out = av^2 + bv^2 with matching tangent rule (used for squared flow magnitudes)
void db_sum_of_squares(DualBatch& out, index_t io, const DualBatch& a, index_t ia,
                       const DualBatch& b, index_t ib);
/// out += w[col] * a * b  (adjoint accumulation: w carries no tangents)
void db_waxpby(DualBatch& out, index_t io, const double* w, const DualBatch& a, index_t ia,
               const DualBatch& b, index_t ib);
/// out += w[col] * a      (adjoint accumulation for linear terms)
void db_waxpy(DualBatch& out, index_t io, const double* w, const DualBatch& a, index_t ia);

}  // namespace blockipm
