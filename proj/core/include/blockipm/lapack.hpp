#pragma once

#include "blockipm/types.hpp"

namespace blockipm::lapack {

/// Dense LU with partial pivoting (dgetrf). Returns false on an exactly
/// singular pivot.
bool lu_factor(Matrix& a, std::vector<int>& ipiv);
void lu_solve(const Matrix& lu, const std::vector<int>& ipiv, Matrix& b, bool transpose);

/// Cholesky of a symmetric positive definite matrix (dpotrf, lower).
bool cholesky_factor(Matrix& a);
void cholesky_solve(const Matrix& chol, Matrix& b);

/// Bunch-Kaufman symmetric indefinite factorization (dsytrf, lower).
bool bunch_kaufman_factor(Matrix& a, std::vector<int>& ipiv);
void bunch_kaufman_solve(const Matrix& f, const std::vector<int>& ipiv, Matrix& b);
/// Inertia (n+, n-, n0) from the block-diagonal D of a dsytrf factorization.
void bunch_kaufman_inertia(const Matrix& f, const std::vector<int>& ipiv, index_t* pos,
                           index_t* neg, index_t* zero);

/// Eigenvalues of a symmetric matrix (dsyev), ascending.
Vector sym_eigenvalues(Matrix a);

}  // namespace blockipm::lapack
