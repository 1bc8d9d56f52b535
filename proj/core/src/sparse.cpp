#include "blockipm/sparse.hpp"

#include <algorithm>
#include <cmath>

namespace blockipm {

double inf_norm(const Vector& v) {
  double n = 0;
  for (double x : v) n = std::max(n, std::abs(x));
  return n;
}

double inf_norm(const Matrix& m) {
  double n = 0;
  for (size_t i = 0; i < m.size(); ++i) n = std::max(n, std::abs(m.data()[i]));
  return n;
}

SparsityPattern SparsityPattern::from_coords(index_t rows, index_t cols,
                                             std::vector<std::pair<index_t, index_t>> coords) {
  std::sort(coords.begin(), coords.end());
  coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
  SparsityPattern p;
  p.rows = rows;
  p.cols = cols;
  p.row_ptr.assign(size_t(rows) + 1, 0);
  p.col_ind.reserve(coords.size());
  for (auto& [i, j] : coords) {
    if (i < 0 || i >= rows || j < 0 || j >= cols)
      throw DimensionError("SparsityPattern: coordinate out of range");
    p.row_ptr[size_t(i) + 1]++;
    p.col_ind.push_back(j);
  }
  for (index_t i = 0; i < rows; ++i) p.row_ptr[size_t(i) + 1] += p.row_ptr[size_t(i)];
  return p;
}

SparsityPattern SparsityPattern::dense(index_t rows, index_t cols) {
  SparsityPattern p;
  p.rows = rows;
  p.cols = cols;
  p.row_ptr.resize(size_t(rows) + 1);
  p.col_ind.resize(size_t(rows) * cols);
  for (index_t i = 0; i <= rows; ++i) p.row_ptr[size_t(i)] = i * cols;
  for (index_t i = 0; i < rows; ++i)
    for (index_t j = 0; j < cols; ++j) p.col_ind[size_t(i) * cols + j] = j;
  return p;
}

SparsityPattern SparsityPattern::diagonal(index_t n) {
  SparsityPattern p;
  p.rows = p.cols = n;
  p.row_ptr.resize(size_t(n) + 1);
  p.col_ind.resize(size_t(n));
  for (index_t i = 0; i <= n; ++i) p.row_ptr[size_t(i)] = i;
  for (index_t i = 0; i < n; ++i) p.col_ind[size_t(i)] = i;
  return p;
}

index_t SparsityPattern::find(index_t i, index_t j) const {
  auto lo = col_ind.begin() + row_ptr[size_t(i)];
  auto hi = col_ind.begin() + row_ptr[size_t(i) + 1];
  auto it = std::lower_bound(lo, hi, j);
  if (it == hi || *it != j) return -1;
  return index_t(it - col_ind.begin());
}

bool SparsityPattern::is_symmetric() const {
  if (rows != cols) return false;
  for (index_t i = 0; i < rows; ++i)
    for (index_t k = row_ptr[size_t(i)]; k < row_ptr[size_t(i) + 1]; ++k)
      if (find(col_ind[size_t(k)], i) < 0) return false;
  return true;
}

SparsityPattern SparsityPattern::transposed() const {
  std::vector<std::pair<index_t, index_t>> coords;
  coords.reserve(col_ind.size());
  for (index_t i = 0; i < rows; ++i)
    for (index_t k = row_ptr[size_t(i)]; k < row_ptr[size_t(i) + 1]; ++k)
      coords.emplace_back(col_ind[size_t(k)], i);
  return from_coords(cols, rows, std::move(coords));
}

void SparsityPattern::validate() const {
  if (index_t(row_ptr.size()) != rows + 1) throw DimensionError("pattern: bad row_ptr");
  for (index_t i = 0; i < rows; ++i) {
    for (index_t k = row_ptr[size_t(i)]; k < row_ptr[size_t(i) + 1]; ++k) {
      index_t j = col_ind[size_t(k)];
      if (j < 0 || j >= cols) throw DimensionError("pattern: column out of range");
      if (k > row_ptr[size_t(i)] && col_ind[size_t(k) - 1] >= j)
        throw DimensionError("pattern: columns not sorted-unique");
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(
    index_t rows, index_t cols,
    std::vector<std::pair<std::pair<index_t, index_t>, double>> t) {
  std::stable_sort(t.begin(), t.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(size_t(rows) + 1, 0);
  for (size_t k = 0; k < t.size(); ++k) {
    if (k > 0 && t[k].first == t[k - 1].first) {
      m.val.back() += t[k].second;  // duplicates accumulate
      continue;
    }
    m.row_ptr[size_t(t[k].first.first) + 1]++;
    m.col_ind.push_back(t[k].first.second);
    m.val.push_back(t[k].second);
  }
  for (index_t i = 0; i < rows; ++i) m.row_ptr[size_t(i) + 1] += m.row_ptr[size_t(i)];
  return m;
}

SparseMatrix SparseMatrix::from_pattern(const SparsityPattern& p, const double* values) {
  SparseMatrix m;
  m.rows = p.rows;
  m.cols = p.cols;
  m.row_ptr = p.row_ptr;
  m.col_ind = p.col_ind;
  m.val.assign(values, values + p.nnz());
  return m;
}

SparseMatrix SparseMatrix::identity(index_t n) {
  SparseMatrix m;
  m.rows = m.cols = n;
  m.row_ptr.resize(size_t(n) + 1);
  m.col_ind.resize(size_t(n));
  m.val.assign(size_t(n), 1.0);
  for (index_t i = 0; i <= n; ++i) m.row_ptr[size_t(i)] = i;
  for (index_t i = 0; i < n; ++i) m.col_ind[size_t(i)] = i;
  return m;
}

SparsityPattern SparseMatrix::pattern() const {
  SparsityPattern p;
  p.rows = rows;
  p.cols = cols;
  p.row_ptr = row_ptr;
  p.col_ind = col_ind;
  return p;
}

void SparseMatrix::gaxpy(const double* x, double* y, double alpha) const {
  for (index_t i = 0; i < rows; ++i) {
    double acc = 0;
    for (index_t k = row_ptr[size_t(i)]; k < row_ptr[size_t(i) + 1]; ++k)
      acc += val[size_t(k)] * x[col_ind[size_t(k)]];
    y[i] += alpha * acc;
  }
}

void SparseMatrix::gaxpy_transpose(const double* x, double* y, double alpha) const {
  for (index_t i = 0; i < rows; ++i) {
    const double xi = alpha * x[i];
    if (xi == 0.0) continue;
    for (index_t k = row_ptr[size_t(i)]; k < row_ptr[size_t(i) + 1]; ++k)
      y[col_ind[size_t(k)]] += val[size_t(k)] * xi;
  }
}

Matrix SparseMatrix::to_dense() const {
  Matrix d(rows, cols);
  for (index_t i = 0; i < rows; ++i)
    for (index_t k = row_ptr[size_t(i)]; k < row_ptr[size_t(i) + 1]; ++k)
      d(i, col_ind[size_t(k)]) += val[size_t(k)];
  return d;
}

CondensePlan plan_condense(const SparsityPattern& W, const SparsityPattern& A,
                           const SparsityPattern& B) {
  if (W.rows != A.cols || W.cols != B.cols || A.rows != B.rows)
    throw DimensionError("plan_condense: shapes not conformable");
  std::vector<std::pair<index_t, index_t>> coords;
  for (index_t i = 0; i < W.rows; ++i)
    for (index_t k = W.row_ptr[size_t(i)]; k < W.row_ptr[size_t(i) + 1]; ++k)
      coords.emplace_back(i, W.col_ind[size_t(k)]);
  for (index_t r = 0; r < A.rows; ++r)
    for (index_t ka = A.row_ptr[size_t(r)]; ka < A.row_ptr[size_t(r) + 1]; ++ka)
      for (index_t kb = B.row_ptr[size_t(r)]; kb < B.row_ptr[size_t(r) + 1]; ++kb)
        coords.emplace_back(A.col_ind[size_t(ka)], B.col_ind[size_t(kb)]);

  CondensePlan plan;
  plan.out = SparsityPattern::from_coords(W.rows, W.cols, std::move(coords));
  plan.w_slot.reserve(size_t(W.nnz()));
  for (index_t i = 0; i < W.rows; ++i)
    for (index_t k = W.row_ptr[size_t(i)]; k < W.row_ptr[size_t(i) + 1]; ++k)
      plan.w_slot.push_back(plan.out.find(i, W.col_ind[size_t(k)]));
  for (index_t r = 0; r < A.rows; ++r)
    for (index_t ka = A.row_ptr[size_t(r)]; ka < A.row_ptr[size_t(r) + 1]; ++ka)
      for (index_t kb = B.row_ptr[size_t(r)]; kb < B.row_ptr[size_t(r) + 1]; ++kb) {
        CondensePlan::Triple t;
        t.ka = ka;
        t.kb = kb;
        t.r = r;
        t.out_slot = plan.out.find(A.col_ind[size_t(ka)], B.col_ind[size_t(kb)]);
        plan.triples.push_back(t);
      }
  return plan;
}

void run_condense(const CondensePlan& plan, const double* w_val, const double* a_val,
                  const double* b_val, const double* sigma, double* out_val) {
  std::fill(out_val, out_val + plan.out.nnz(), 0.0);
  for (size_t k = 0; k < plan.w_slot.size(); ++k) out_val[plan.w_slot[k]] += w_val[k];
  for (const auto& t : plan.triples)
    out_val[t.out_slot] += a_val[t.ka] * sigma[t.r] * b_val[t.kb];
}

SparseMatrix spgemm_condense(const SparseMatrix& W, const SparseMatrix& H, const Vector& sigma) {
  if (index_t(sigma.size()) != H.rows)
    throw DimensionError("spgemm_condense: sigma size mismatch");
  CondensePlan plan = plan_condense(W.pattern(), H.pattern(), H.pattern());
  SparseMatrix K;
  K.rows = plan.out.rows;
  K.cols = plan.out.cols;
  K.row_ptr = plan.out.row_ptr;
  K.col_ind = plan.out.col_ind;
  K.val.assign(size_t(plan.out.nnz()), 0.0);
  run_condense(plan, W.val.data(), H.val.data(), H.val.data(), sigma.data(), K.val.data());
  return K;
}

}  // namespace blockipm
