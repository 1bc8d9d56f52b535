#include "blockipm/lapack.hpp"

#include <cmath>
#include <stdexcept>

#include <lapacke.h>

namespace blockipm::lapack {

bool lu_factor(Matrix& a, std::vector<int>& ipiv) {
  const int n = a.rows();
  ipiv.assign(size_t(n), 0);
  const int info =
      LAPACKE_dgetrf(LAPACK_COL_MAJOR, n, a.cols(), a.data(), n, ipiv.data());
  if (info < 0) throw std::runtime_error("dgetrf: bad argument");
  return info == 0;
}

void lu_solve(const Matrix& lu, const std::vector<int>& ipiv, Matrix& b, bool transpose) {
  const int n = lu.rows();
  const int info = LAPACKE_dgetrs(LAPACK_COL_MAJOR, transpose ? 'T' : 'N', n, b.cols(),
                                  lu.data(), n, ipiv.data(), b.data(), n);
  if (info != 0) throw std::runtime_error("dgetrs failed");
}

bool cholesky_factor(Matrix& a) {
  const int n = a.rows();
  const int info = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L', n, a.data(), n);
  if (info < 0) throw std::runtime_error("dpotrf: bad argument");
  return info == 0;
}

void cholesky_solve(const Matrix& chol, Matrix& b) {
  const int n = chol.rows();
  const int info =
      LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', n, b.cols(), chol.data(), n, b.data(), n);
  if (info != 0) throw std::runtime_error("dpotrs failed");
}

bool bunch_kaufman_factor(Matrix& a, std::vector<int>& ipiv) {
  const int n = a.rows();
  ipiv.assign(size_t(n), 0);
  const int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, a.data(), n, ipiv.data());
  if (info < 0) throw std::runtime_error("dsytrf: bad argument");
  return info == 0;
}

void bunch_kaufman_solve(const Matrix& f, const std::vector<int>& ipiv, Matrix& b) {
  const int n = f.rows();
  const int info = LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', n, b.cols(), f.data(), n,
                                  ipiv.data(), b.data(), n);
  if (info != 0) throw std::runtime_error("dsytrs failed");
}

void bunch_kaufman_inertia(const Matrix& f, const std::vector<int>& ipiv, index_t* pos,
                           index_t* neg, index_t* zero) {
  const int n = f.rows();
  index_t np = 0, nn = 0, nz = 0;
  for (int k = 0; k < n;) {
    if (ipiv[size_t(k)] > 0) {
      const double d = f(k, k);
      if (d > 0)
        ++np;
      else if (d < 0)
        ++nn;
      else
        ++nz;
      ++k;
    } else {
      // 2x2 block [a b; b c]; Bunch-Kaufman 2x2 pivots are indefinite, but
      // classify by det/trace to stay exact.
      const double a = f(k, k), c = f(k + 1, k + 1), b = f(k + 1, k);
      const double det = a * c - b * b;
      if (det < 0) {
        ++np;
        ++nn;
      } else if (det > 0) {
        if (a + c > 0)
          np += 2;
        else
          nn += 2;
      } else {
        ++nz;
        if (a + c > 0)
          ++np;
        else if (a + c < 0)
          ++nn;
        else
          ++nz;
      }
      k += 2;
    }
  }
  *pos = np;
  *neg = nn;
  *zero = nz;
}

Vector sym_eigenvalues(Matrix a) {
  const int n = a.rows();
  Vector w(static_cast<size_t>(n));
  const int info = LAPACKE_dsyev(LAPACK_COL_MAJOR, 'N', 'L', n, a.data(), n, w.data());
  if (info != 0) throw std::runtime_error("dsyev failed");
  return w;
}

}  // namespace blockipm::lapack
