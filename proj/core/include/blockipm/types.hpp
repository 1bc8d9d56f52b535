#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace blockipm {

using index_t = std::int32_t;
using count_t = std::int64_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Sizes of a block-structured problem: N scenario blocks, each with n_x
/// states and m inequalities, coupled through n_u shared controls. n_b is the
/// width of the nonlinear basis the block functions are linear in.
struct BlockDims {
  index_t N = 1;
  index_t n_x = 1;
  index_t n_u = 1;
  index_t m = 0;
  index_t n_b = 1;

  index_t n_d() const { return n_x + n_u; }
  count_t nvar_primal() const { return count_t(N) * n_x + n_u; }
  count_t ncon() const { return count_t(N) * (count_t(n_x) + m); }

  void validate() const {
    if (N < 1 || n_x < 1 || n_u < 1 || n_b < 1 || m < 0)
      throw std::invalid_argument("BlockDims: N, n_x, n_u, n_b must be >= 1 and m >= 0");
  }
};

/// Elementwise variable bounds; +/-inf marks an absent side.
struct Bounds {
  std::vector<double> lower;
  std::vector<double> upper;

  static Bounds free(index_t n) {
    Bounds b;
    b.lower.assign(size_t(n), -kInf);
    b.upper.assign(size_t(n), kInf);
    return b;
  }
  static Bounds nonneg(index_t n) {
    Bounds b;
    b.lower.assign(size_t(n), 0.0);
    b.upper.assign(size_t(n), kInf);
    return b;
  }
  index_t size() const { return index_t(lower.size()); }
};

/// Column-major dense matrix. Columns are the natural per-block unit, so
/// block i's data is the contiguous range col(i).
class Matrix {
 public:
  Matrix() = default;
  Matrix(index_t rows, index_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(size_t(rows) * cols, fill) {}

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  double& operator()(index_t i, index_t j) { return a_[size_t(j) * rows_ + i]; }
  double operator()(index_t i, index_t j) const { return a_[size_t(j) * rows_ + i]; }
  double* col(index_t j) { return a_.data() + size_t(j) * rows_; }
  const double* col(index_t j) const { return a_.data() + size_t(j) * rows_; }
  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  size_t size() const { return a_.size(); }
  void set_zero() { a_.assign(a_.size(), 0.0); }

 private:
  index_t rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

using Vector = std::vector<double>;

double inf_norm(const Vector& v);
double inf_norm(const Matrix& m);

/// Structured-product and triangular-solve counters used by the reduction
/// instrumentation and exported to the bench reporter.
struct OpCounters {
  count_t spsm = 0;   // block-triangular solve passes
  count_t spmm = 0;   // structured products (incl. permutation applications)
  count_t tiles = 0;  // reduction tiles processed
  OpCounters& operator+=(const OpCounters& o) {
    spsm += o.spsm;
    spmm += o.spmm;
    tiles += o.tiles;
    return *this;
  }
};

struct SingularBlockError : std::runtime_error {
  index_t block;
  explicit SingularBlockError(index_t b)
      : std::runtime_error("singular block " + std::to_string(b)), block(b) {}
};

struct NonFiniteError : std::runtime_error {
  index_t block;
  NonFiniteError(const std::string& what, index_t b)
      : std::runtime_error(what + " (block " + std::to_string(b) + ")"), block(b) {}
};

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace blockipm
