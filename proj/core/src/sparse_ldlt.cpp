#include <cmath>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

#include "blockipm/linalg.hpp"

namespace blockipm {

namespace {

// Fill-reducing ordering of the symmetric pattern; returns p such that the
// factored matrix is B(i, j) = A(p[i], p[j]).
std::vector<index_t> amd_order(const SparseMatrix& a) {
  using ES = Eigen::SparseMatrix<double, Eigen::ColMajor, index_t>;
  std::vector<Eigen::Triplet<double, index_t>> trip;
  trip.reserve(size_t(a.nnz()));
  for (index_t i = 0; i < a.rows; ++i)
    for (index_t k = a.row_ptr[size_t(i)]; k < a.row_ptr[size_t(i) + 1]; ++k)
      trip.emplace_back(i, a.col_ind[size_t(k)], 1.0);
  ES m(a.rows, a.cols);
  m.setFromTriplets(trip.begin(), trip.end());

  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, index_t> pinv;
  Eigen::AMDOrdering<index_t> amd;
  amd(m.selfadjointView<Eigen::Lower>(), pinv);
  return std::vector<index_t>(pinv.indices().data(), pinv.indices().data() + a.rows);
}

}  // namespace

SparseSymFactor SparseSymFactor::factor(const SparseMatrix& a, const Options& opts,
                                        const std::vector<int>* expected_sign) {
  if (a.rows != a.cols) throw DimensionError("factor_sparse_sym: not square");
  SparseSymFactor f;
  f.n_ = a.rows;
  f.opts_ = opts;
  f.a_full_ = a;
  const index_t n = a.rows;

  f.perm_ = amd_order(a);
  f.iperm_.assign(size_t(n), 0);
  for (index_t i = 0; i < n; ++i) f.iperm_[size_t(f.perm_[size_t(i)])] = i;

  // Symmetric equilibration: d_i = 1/sqrt(max |A(i,:)|). Pivot thresholds on
  // the scaled matrix are then scale-free, which matters for barrier KKT
  // matrices whose Sigma entries span many orders of magnitude.
  f.scal_.assign(size_t(n), 1.0);
  for (index_t i = 0; i < n; ++i) {
    double rmax = 0;
    for (index_t k = a.row_ptr[size_t(i)]; k < a.row_ptr[size_t(i) + 1]; ++k)
      rmax = std::max(rmax, std::abs(a.val[size_t(k)]));
    f.scal_[size_t(i)] = rmax > 0 ? 1.0 / std::sqrt(rmax) : 1.0;
  }

  // Permuted scaled upper triangle in column-access form: column k's upper
  // entries are row perm[k]'s entries mapped through iperm, filtered to <= k.
  std::vector<std::vector<std::pair<index_t, double>>> upper(static_cast<size_t>(n));
  for (index_t i = 0; i < n; ++i)
    for (index_t k = a.row_ptr[size_t(i)]; k < a.row_ptr[size_t(i) + 1]; ++k) {
      const index_t j = a.col_ind[size_t(k)];
      const double v = a.val[size_t(k)] * f.scal_[size_t(i)] * f.scal_[size_t(j)];
      const index_t pi = f.iperm_[size_t(i)], pj = f.iperm_[size_t(j)];
      if (pi <= pj) upper[size_t(pj)].emplace_back(pi, v);
    }
  const double piv_floor = opts.pivot_tol;

  // Symbolic pass: elimination tree and column counts.
  std::vector<index_t> parent(static_cast<size_t>(n), -1);
  std::vector<index_t> flag(static_cast<size_t>(n), -1);
  std::vector<index_t> lnz(static_cast<size_t>(n), 0);
  for (index_t k = 0; k < n; ++k) {
    flag[size_t(k)] = k;
    for (const auto& [i0, v] : upper[size_t(k)]) {
      (void)v;
      index_t i = i0;
      while (i < k && flag[size_t(i)] != k) {
        if (parent[size_t(i)] == -1) parent[size_t(i)] = k;
        lnz[size_t(i)]++;
        flag[size_t(i)] = k;
        i = parent[size_t(i)];
      }
    }
  }
  f.lp_.assign(size_t(n) + 1, 0);
  for (index_t i = 0; i < n; ++i) f.lp_[size_t(i) + 1] = f.lp_[size_t(i)] + lnz[size_t(i)];
  f.li_.assign(size_t(f.lp_[size_t(n)]), 0);
  f.lx_.assign(size_t(f.lp_[size_t(n)]), 0.0);
  f.d_.assign(size_t(n), 0.0);

  // Numeric pass (up-looking).
  std::vector<double> y(size_t(n), 0.0);
  std::vector<index_t> pattern(static_cast<size_t>(n), 0);
  std::vector<index_t> next(static_cast<size_t>(n), 0);
  std::fill(flag.begin(), flag.end(), -1);
  for (index_t k = 0; k < n; ++k) {
    index_t top = n;
    flag[size_t(k)] = k;
    double dk = 0;
    for (const auto& [i0, v] : upper[size_t(k)]) {
      if (i0 == k) {
        dk += v;
        continue;
      }
      y[size_t(i0)] += v;
      index_t len = 0;
      index_t i = i0;
      while (flag[size_t(i)] != k) {
        pattern[size_t(len)] = i;
        ++len;
        flag[size_t(i)] = k;
        i = parent[size_t(i)];
      }
      while (len > 0) pattern[size_t(--top)] = pattern[size_t(--len)];
    }
    for (index_t t = top; t < n; ++t) {
      const index_t i = pattern[size_t(t)];
      const double yi = y[size_t(i)];
      y[size_t(i)] = 0;
      const double lki = yi / f.d_[size_t(i)];
      for (index_t p = f.lp_[size_t(i)]; p < f.lp_[size_t(i)] + next[size_t(i)]; ++p)
        y[size_t(f.li_[size_t(p)])] -= f.lx_[size_t(p)] * yi;
      dk -= lki * yi;
      f.li_[size_t(f.lp_[size_t(i)] + next[size_t(i)])] = k;
      f.lx_[size_t(f.lp_[size_t(i)] + next[size_t(i)])] = lki;
      next[size_t(i)]++;
    }
    if (std::abs(dk) < piv_floor) {
      double sign = (dk < 0) ? -1.0 : 1.0;
      if (expected_sign) sign = (*expected_sign)[size_t(f.perm_[size_t(k)])] < 0 ? -1.0 : 1.0;
      dk = sign * piv_floor;
      f.perturbed_++;
    }
    f.d_[size_t(k)] = dk;
    if (dk > 0)
      f.pos_++;
    else
      f.neg_++;
  }
  return f;
}

double SparseSymFactor::solve(Vector& b) const {
  if (index_t(b.size()) != n_) throw DimensionError("sparse solve: rhs size");
  Vector x0 = b;
  auto one_solve = [&](const Vector& rhs, Vector& out) {
    Vector t(static_cast<size_t>(n_));
    for (index_t i = 0; i < n_; ++i)
      t[size_t(i)] = scal_[size_t(perm_[size_t(i)])] * rhs[size_t(perm_[size_t(i)])];
    for (index_t j = 0; j < n_; ++j) {
      const double tj = t[size_t(j)];
      if (tj != 0.0)
        for (index_t p = lp_[size_t(j)]; p < lp_[size_t(j) + 1]; ++p)
          t[size_t(li_[size_t(p)])] -= lx_[size_t(p)] * tj;
    }
    for (index_t j = 0; j < n_; ++j) t[size_t(j)] /= d_[size_t(j)];
    for (index_t j = n_ - 1; j >= 0; --j) {
      double acc = t[size_t(j)];
      for (index_t p = lp_[size_t(j)]; p < lp_[size_t(j) + 1]; ++p)
        acc -= lx_[size_t(p)] * t[size_t(li_[size_t(p)])];
      t[size_t(j)] = acc;
    }
    out.assign(size_t(n_), 0.0);
    for (index_t i = 0; i < n_; ++i)
      out[size_t(perm_[size_t(i)])] = scal_[size_t(perm_[size_t(i)])] * t[size_t(i)];
  };

  Vector x;
  one_solve(x0, x);
  // Refinement against the original matrix with the residual accumulated in
  // extended precision: recovers solution accuracy lost to ill-conditioned
  // barrier systems as well as to static pivot perturbations.
  const double bnorm = std::max(inf_norm(x0), 1e-300);
  Vector r(static_cast<size_t>(n_), 0.0);
  Vector dx;
  auto residual = [&]() {
    for (index_t i = 0; i < n_; ++i) {
      long double acc = x0[size_t(i)];
      for (index_t k = a_full_.row_ptr[size_t(i)]; k < a_full_.row_ptr[size_t(i) + 1]; ++k)
        acc -= static_cast<long double>(a_full_.val[size_t(k)]) *
               static_cast<long double>(x[size_t(a_full_.col_ind[size_t(k)])]);
      r[size_t(i)] = double(acc);
    }
    return inf_norm(r) / bnorm;
  };
  double rel = residual();
  int stalls = 0;
  for (int it = 0; it < opts_.max_refine && rel > opts_.refine_tol; ++it) {
    one_solve(r, dx);
    Vector x_prev = x;
    for (index_t i = 0; i < n_; ++i) x[size_t(i)] += dx[size_t(i)];
    const double rel_new = residual();
    if (rel_new < rel) {
      rel = rel_new;
      stalls = 0;
    } else {
      x = std::move(x_prev);  // keep the better iterate
      (void)residual();
      if (++stalls >= 2) break;
    }
  }
  b = std::move(x);
  return rel;
}

}  // namespace blockipm
