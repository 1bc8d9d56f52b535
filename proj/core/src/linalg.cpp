#include "blockipm/linalg.hpp"

#include <cmath>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "blockipm/lapack.hpp"

namespace blockipm {

namespace {

using EigenSparse = Eigen::SparseMatrix<double, Eigen::ColMajor, index_t>;

EigenSparse to_eigen(const SparsityPattern& pat, const double* vals) {
  std::vector<Eigen::Triplet<double, index_t>> trip;
  trip.reserve(size_t(pat.nnz()));
  for (index_t i = 0; i < pat.rows; ++i)
    for (index_t k = pat.row_ptr[size_t(i)]; k < pat.row_ptr[size_t(i) + 1]; ++k)
      trip.emplace_back(i, pat.col_ind[size_t(k)], vals[k]);
  EigenSparse m(pat.rows, pat.cols);
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

double block_max_abs(const Matrix& vals, index_t b) {
  double mx = 0;
  const double* v = vals.col(b);
  for (index_t k = 0; k < vals.rows(); ++k) mx = std::max(mx, std::abs(v[k]));
  return mx;
}

}  // namespace

struct BlockDiagFactor::Impl {
  bool dense = true;
  index_t block_offset = 0;
  // dense path
  std::vector<Matrix> lu;
  std::vector<std::vector<int>> ipiv;
  // sparse path: one solver per block, symbolic analysis shared
  std::vector<std::unique_ptr<Eigen::SparseLU<EigenSparse>>> slu;
};

BlockDiagFactor::BlockDiagFactor() : impl_(new Impl) {}
BlockDiagFactor::~BlockDiagFactor() = default;
BlockDiagFactor::BlockDiagFactor(BlockDiagFactor&&) noexcept = default;
BlockDiagFactor& BlockDiagFactor::operator=(BlockDiagFactor&&) noexcept = default;

BlockDiagFactor BlockDiagFactor::factor(const SparsityPattern& pat, const Matrix& vals,
                                        index_t block_offset) {
  if (pat.rows != pat.cols) throw DimensionError("factor_block_diag: blocks must be square");
  BlockDiagFactor f;
  f.n_ = pat.rows;
  f.M_ = vals.cols();
  f.impl_->block_offset = block_offset;
  f.impl_->dense = pat.rows <= kDenseThreshold;

  if (f.impl_->dense) {
    f.impl_->lu.reserve(size_t(f.M_));
    f.impl_->ipiv.resize(size_t(f.M_));
    for (index_t b = 0; b < f.M_; ++b) {
      Matrix a(f.n_, f.n_);
      for (index_t i = 0; i < pat.rows; ++i)
        for (index_t k = pat.row_ptr[size_t(i)]; k < pat.row_ptr[size_t(i) + 1]; ++k)
          a(i, pat.col_ind[size_t(k)]) += vals(k, b);
      const double scale = block_max_abs(vals, b);
      if (!lapack::lu_factor(a, f.impl_->ipiv[size_t(b)]))
        throw SingularBlockError(block_offset + b);
      for (index_t i = 0; i < f.n_; ++i)
        if (std::abs(a(i, i)) < 1e-12 * std::max(scale, 1e-300))
          throw SingularBlockError(block_offset + b);
      f.impl_->lu.push_back(std::move(a));
    }
  } else {
    f.impl_->slu.resize(size_t(f.M_));
    for (index_t b = 0; b < f.M_; ++b) {
      EigenSparse a = to_eigen(pat, vals.col(b));
      auto solver = std::make_unique<Eigen::SparseLU<EigenSparse>>();
      solver->isSymmetric(false);
      solver->analyzePattern(a);
      solver->factorize(a);
      if (solver->info() != Eigen::Success) throw SingularBlockError(block_offset + b);
      f.impl_->slu[size_t(b)] = std::move(solver);
    }
  }
  return f;
}

void BlockDiagFactor::solve_block(index_t b, Matrix& B, bool transpose) const {
  if (impl_->dense) {
    lapack::lu_solve(impl_->lu[size_t(b)], impl_->ipiv[size_t(b)], B, transpose);
  } else {
    Eigen::Map<Eigen::MatrixXd> rhs(B.data(), B.rows(), B.cols());
    if (!transpose) {
      rhs = impl_->slu[size_t(b)]->solve(Eigen::MatrixXd(rhs)).eval();
    } else {
      rhs = impl_->slu[size_t(b)]->transpose().solve(Eigen::MatrixXd(rhs)).eval();
    }
    if (impl_->slu[size_t(b)]->info() != Eigen::Success)
      throw SingularBlockError(impl_->block_offset + b);
  }
}

void BlockDiagFactor::solve(Matrix& B, bool transpose, OpCounters* counters,
                            index_t ncols) const {
  if (B.rows() != count_t(n_) * M_) throw DimensionError("solve_block_diag: rhs rows");
  const index_t k = ncols < 0 ? B.cols() : ncols;
  Matrix blk(n_, k);
  for (index_t b = 0; b < M_; ++b) {
    for (index_t j = 0; j < k; ++j)
      std::copy(B.col(j) + size_t(b) * n_, B.col(j) + size_t(b) * n_ + n_, blk.col(j));
    solve_block(b, blk, transpose);
    for (index_t j = 0; j < k; ++j)
      std::copy(blk.col(j), blk.col(j) + n_, B.col(j) + size_t(b) * n_);
  }
  if (counters) {
    counters->spsm += 2;  // one L pass + one U pass over the block diagonal
    counters->spmm += 2;  // the two permutation applications
  }
}

BlockDiagFactor factor_block_diag(const SparsityPattern& pat, const Matrix& vals,
                                  index_t block_offset) {
  return BlockDiagFactor::factor(pat, vals, block_offset);
}

DenseSymFactor DenseSymFactor::factor(Matrix a) {
  if (a.rows() != a.cols()) throw DimensionError("factor_dense_sym: not square");
  DenseSymFactor f;
  Matrix chol = a;
  if (lapack::cholesky_factor(chol)) {
    f.a_ = std::move(chol);
    f.cholesky_ = true;
    f.pos_ = a.rows();
    f.neg_ = f.zero_ = 0;
    return f;
  }
  f.a_ = std::move(a);
  if (!lapack::bunch_kaufman_factor(f.a_, f.ipiv_))
    throw std::runtime_error("factor_dense_sym: zero pivot");
  lapack::bunch_kaufman_inertia(f.a_, f.ipiv_, &f.pos_, &f.neg_, &f.zero_);
  return f;
}

void DenseSymFactor::solve(Matrix& b) const {
  if (cholesky_)
    lapack::cholesky_solve(a_, b);
  else
    lapack::bunch_kaufman_solve(a_, ipiv_, b);
}

void DenseSymFactor::solve(Vector& b) const {
  Matrix m(index_t(b.size()), 1);
  std::copy(b.begin(), b.end(), m.col(0));
  solve(m);
  std::copy(m.col(0), m.col(0) + m.rows(), b.begin());
}

DenseSymFactor factor_dense_sym(Matrix a) { return DenseSymFactor::factor(std::move(a)); }

SparseSymFactor factor_sparse_sym(const SparseMatrix& a, const SparseSymFactor::Options& opts) {
  return SparseSymFactor::factor(a, opts);
}

}  // namespace blockipm
