#include <doctest.h>

#include <cmath>
#include <random>

#include "blockipm/linalg.hpp"
#include "support/oracles.hpp"

using namespace blockipm;
using namespace testsupport;

namespace {

SparseMatrix random_sym(index_t n, index_t extra, std::uint64_t seed, double diag_shift) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::pair<std::pair<index_t, index_t>, double>> t;
  for (index_t i = 0; i < n; ++i) t.push_back({{i, i}, diag_shift + u(rng)});
  for (index_t k = 0; k < extra; ++k) {
    index_t i = index_t(rng() % size_t(n)), j = index_t(rng() % size_t(n));
    if (i == j) continue;
    const double v = u(rng);
    t.push_back({{i, j}, v});
    t.push_back({{j, i}, v});
  }
  return SparseMatrix::from_triplets(n, n, t);
}

double solve_residual(const SparseMatrix& a, const Vector& x, const Vector& b) {
  Vector r = b;
  for (index_t i = 0; i < a.rows; ++i) {
    double acc = 0;
    for (index_t k = a.row_ptr[size_t(i)]; k < a.row_ptr[size_t(i) + 1]; ++k)
      acc += a.val[size_t(k)] * x[size_t(a.col_ind[size_t(k)])];
    r[size_t(i)] -= acc;
  }
  return inf_norm(r) / std::max(1e-300, inf_norm(b));
}

// KKT-style saddle matrix [[H, G'],[G, 0]] with H spd-ish sparse.
SparseMatrix random_kkt(index_t n, index_t mrows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::pair<std::pair<index_t, index_t>, double>> t;
  for (index_t i = 0; i < n; ++i) t.push_back({{i, i}, 2.0 + u(rng)});
  for (index_t k = 0; k < 2 * n; ++k) {
    index_t i = index_t(rng() % size_t(n)), j = index_t(rng() % size_t(n));
    if (i == j) continue;
    const double v = 0.3 * u(rng);
    t.push_back({{i, j}, v});
    t.push_back({{j, i}, v});
  }
  for (index_t r = 0; r < mrows; ++r) {
    for (int k = 0; k < 3; ++k) {
      index_t j = index_t(rng() % size_t(n));
      const double v = u(rng);
      t.push_back({{n + r, j}, v});
      t.push_back({{j, n + r}, v});
    }
  }
  return SparseMatrix::from_triplets(n + mrows, n + mrows, t);
}

}  // namespace

TEST_CASE("block-diagonal LU: identity blocks give exact solves") {
  auto pat = SparsityPattern::diagonal(4);
  Matrix vals(4, 3, 1.0);
  auto f = factor_block_diag(pat, vals);
  Matrix b(12, 2);
  for (index_t i = 0; i < 12; ++i)
    for (index_t j = 0; j < 2; ++j) b(i, j) = double(i + j);
  Matrix x = b;
  f.solve(x, false);
  for (index_t i = 0; i < 12; ++i)
    for (index_t j = 0; j < 2; ++j) CHECK(x(i, j) == b(i, j));
}

TEST_CASE("block-diagonal LU: residual oracle on random diagonally dominant blocks") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const index_t n = 10, M = 5;
  auto pat = SparsityPattern::dense(n, n);
  Matrix vals(pat.nnz(), M);
  for (index_t b = 0; b < M; ++b)
    for (index_t i = 0; i < n; ++i)
      for (index_t j = 0; j < n; ++j)
        vals(i * n + j, b) = (i == j) ? 12.0 + u(rng) : u(rng);
  auto f = factor_block_diag(pat, vals);

  for (bool transpose : {false, true}) {
    Matrix rhs(n * M, 2);
    for (size_t k = 0; k < rhs.size(); ++k) rhs.data()[k] = u(rng);
    Matrix x = rhs;
    f.solve(x, transpose);
    // multiply back per block
    double err = 0;
    for (index_t b = 0; b < M; ++b)
      for (index_t j = 0; j < 2; ++j)
        for (index_t i = 0; i < n; ++i) {
          double acc = 0;
          for (index_t c = 0; c < n; ++c)
            acc += (transpose ? vals(c * n + i, b) : vals(i * n + c, b)) * x(b * n + c, j);
          err = std::max(err, std::abs(acc - rhs(b * n + i, j)));
        }
    CHECK(err <= 1e-10 * inf_norm(rhs));
  }
}

TEST_CASE("block-diagonal LU: zero row reports the singular block index") {
  auto pat = SparsityPattern::dense(3, 3);
  Matrix vals(9, 2, 1.0);
  for (index_t j = 0; j < 3; ++j) vals(3 + j, 1) = 0.0;  // zero row in block 1
  for (index_t i = 0; i < 3; ++i) vals(i * 3 + i, 0) += 3.0;
  try {
    factor_block_diag(pat, vals, 10);
    FAIL("expected SingularBlockError");
  } catch (const SingularBlockError& e) {
    CHECK(e.block == 11);  // offset 10 + block 1
  }
}

TEST_CASE("block-diagonal solve equals independent per-block solves bitwise") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  const index_t n = 6, M = 4;
  auto pat = SparsityPattern::dense(n, n);
  Matrix vals(pat.nnz(), M);
  for (size_t k = 0; k < vals.size(); ++k) vals.data()[k] = u(rng);
  for (index_t b = 0; b < M; ++b)
    for (index_t i = 0; i < n; ++i) vals(i * n + i, b) += 8.0;
  auto f = factor_block_diag(pat, vals);
  Matrix rhs(n * M, 3);
  for (size_t k = 0; k < rhs.size(); ++k) rhs.data()[k] = u(rng);

  Matrix batched = rhs;
  f.solve(batched, false);
  for (index_t b = 0; b < M; ++b) {
    Matrix single(n, 3);
    for (index_t j = 0; j < 3; ++j)
      std::copy(rhs.col(j) + size_t(b) * n, rhs.col(j) + size_t(b) * n + n, single.col(j));
    f.solve_block(b, single, false);
    for (index_t j = 0; j < 3; ++j)
      for (index_t i = 0; i < n; ++i) CHECK(single(i, j) == batched(b * n + i, j));
  }
}

TEST_CASE("sparse LU path (blocks above the dense threshold)") {
  // A 80x80 sparse block: tridiagonal plus a few extras, well conditioned.
  const index_t n = 80;
  std::vector<std::pair<index_t, index_t>> coords;
  for (index_t i = 0; i < n; ++i) {
    coords.emplace_back(i, i);
    if (i > 0) {
      coords.emplace_back(i, i - 1);
      coords.emplace_back(i - 1, i);
    }
  }
  auto pat = SparsityPattern::from_coords(n, n, coords);
  Matrix vals(pat.nnz(), 2);
  for (index_t b = 0; b < 2; ++b)
    for (index_t i = 0; i < pat.nnz(); ++i) vals(i, b) = -1.0;
  for (index_t b = 0; b < 2; ++b)
    for (index_t i = 0; i < n; ++i) vals(pat.find(i, i), b) = 4.0 + b;
  auto f = factor_block_diag(pat, vals);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (bool transpose : {false, true}) {
    Matrix rhs(2 * n, 1);
    for (size_t k = 0; k < rhs.size(); ++k) rhs.data()[k] = u(rng);
    Matrix x = rhs;
    f.solve(x, transpose);
    double err = 0;
    for (index_t b = 0; b < 2; ++b)
      for (index_t i = 0; i < n; ++i) {
        double acc = 0;
        for (index_t k = pat.row_ptr[size_t(i)]; k < pat.row_ptr[size_t(i) + 1]; ++k) {
          const index_t j = pat.col_ind[size_t(k)];
          acc += vals(k, b) * x(b * n + (transpose ? 0 : j), 0) * (transpose ? 0 : 1);
        }
        if (transpose) {
          acc = 0;
          for (index_t r = 0; r < n; ++r) {
            const index_t slot = pat.find(r, i);
            if (slot >= 0) acc += vals(slot, b) * x(b * n + r, 0);
          }
        }
        err = std::max(err, std::abs(acc - rhs(b * n + i, 0)));
      }
    CHECK(err <= 1e-10 * inf_norm(rhs));
  }
}

TEST_CASE("dense symmetric factor: identity and diag(1,-1) inertia") {
  Matrix eye(3, 3);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  auto f = factor_dense_sym(eye);
  CHECK(f.positive() == 3);
  CHECK(f.negative() == 0);
  CHECK(f.zero() == 0);
  CHECK(f.positive_definite());

  Matrix d(2, 2);
  d(0, 0) = 1;
  d(1, 1) = -1;
  auto g = factor_dense_sym(d);
  CHECK(g.positive() == 1);
  CHECK(g.negative() == 1);
}

TEST_CASE("dense symmetric factor: SPD solve residual") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  const index_t n = 24;
  Matrix a(n, n);
  for (index_t i = 0; i < n; ++i) {
    a(i, i) = n + 1.0;
    for (index_t j = 0; j < i; ++j) {
      a(i, j) = u(rng);
      a(j, i) = a(i, j);
    }
  }
  auto f = factor_dense_sym(a);
  CHECK(f.positive_definite());
  Vector b(static_cast<size_t>(n), 0.0);
  for (auto& v : b) v = u(rng);
  Vector x = b;
  f.solve(x);
  Vector r = b;
  for (index_t i = 0; i < n; ++i)
    for (index_t j = 0; j < n; ++j) r[size_t(i)] -= a(i, j) * x[size_t(j)];
  CHECK(inf_norm(r) <= 1e-10 * inf_norm(b));
}

TEST_CASE("dense symmetric inertia matches eigenvalue signs on random instances") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const index_t n = 4 + index_t(rng() % 20);
    Matrix a(n, n);
    for (index_t i = 0; i < n; ++i) {
      a(i, i) = 2 * u(rng);
      for (index_t j = 0; j < i; ++j) {
        a(i, j) = u(rng);
        a(j, i) = a(i, j);
      }
    }
    auto f = factor_dense_sym(a);
    index_t pos, neg, zero;
    eig_inertia(a, &pos, &neg, &zero);
    if (zero == 0) {  // skip near-singular draws, sign counting is exact only away from 0
      CHECK(f.positive() == pos);
      CHECK(f.negative() == neg);
    }
  }
}

TEST_CASE("sparse LDLT: diagonal matrix inertia is the sign count") {
  auto a = SparseMatrix::from_triplets(
      4, 4, {{{0, 0}, 2.0}, {{1, 1}, -3.0}, {{2, 2}, 0.5}, {{3, 3}, -1.0}});
  auto f = factor_sparse_sym(a);
  CHECK(f.positive() == 2);
  CHECK(f.negative() == 2);
  CHECK(f.zero() == 0);
}

TEST_CASE("sparse LDLT: solve residual on random symmetric systems") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const index_t n = 30 + index_t(rng() % 30);
    auto a = random_sym(n, 3 * n, 1000 + std::uint64_t(trial), trial % 2 ? 6.0 : 0.0);
    auto f = factor_sparse_sym(a);
    Vector b(static_cast<size_t>(n));
    for (auto& v : b) v = u(rng);
    Vector x = b;
    f.solve(x);
    CHECK(solve_residual(a, x, b) <= 1e-8);
  }
}

TEST_CASE("sparse LDLT: saddle systems solve accurately and report exact inertia") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const index_t n = 25, mrows = 12;
    auto a = random_kkt(n, mrows, 500 + std::uint64_t(trial));
    auto f = factor_sparse_sym(a);
    Vector b(static_cast<size_t>(n + mrows));
    for (auto& v : b) v = u(rng);
    Vector x = b;
    f.solve(x);
    CHECK(solve_residual(a, x, b) <= 1e-8);

    index_t pos, neg, zero;
    eig_inertia(a.to_dense(), &pos, &neg, &zero);
    if (zero == 0) {
      CHECK(f.positive() == pos);
      CHECK(f.negative() == neg);
    }
  }
}

TEST_CASE("sparse LDLT: wide barrier-style diagonal spreads solve accurately") {
  // late-barrier Sigma spreads on the primal block (all positive diagonals)
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-1, 1);
  const index_t n = 40, mrows = 20;
  auto a = random_kkt(n, mrows, 9001);
  for (index_t i = 0; i < n; ++i) {
    const index_t slot = a.pattern().find(i, i);
    a.val[size_t(slot)] += (i % 2 ? 1e6 : 1e-4);
  }
  auto f = factor_sparse_sym(a);
  Vector b(static_cast<size_t>(n + mrows), 0.0);
  for (auto& v : b) v = u(rng);
  Vector x = b;
  f.solve(x);
  CHECK(solve_residual(a, x, b) <= 1e-8);
}

TEST_CASE("sparse LDLT: the solve reports its true residual on hostile matrices") {
  // tiny diagonals among O(1) off-diagonals defeat 1x1 pivoting by design;
  // the contract is that solve() returns an honest quality signal, which the
  // step computation uses to escalate regularization.
  std::mt19937_64 rng(321);
  std::uniform_real_distribution<double> u(-1, 1);
  const index_t n = 40, mrows = 20;
  auto a = random_kkt(n, mrows, 9001);
  for (index_t i = 0; i < n; ++i)
    a.val[size_t(a.pattern().find(i, i))] = (i % 2 ? 1e8 : 1e-8) * (1.0 + 0.1 * u(rng));
  auto f = factor_sparse_sym(a);
  Vector b(static_cast<size_t>(n + mrows), 0.0);
  for (auto& v : b) v = u(rng);
  Vector x = b;
  const double reported = f.solve(x);
  const double actual = solve_residual(a, x, b);
  CHECK(reported == doctest::Approx(actual).epsilon(1e-6));
}
