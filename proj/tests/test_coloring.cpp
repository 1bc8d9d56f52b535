#include <doctest.h>

#include <random>

#include "blockipm/coloring.hpp"

using namespace blockipm;

TEST_CASE("diagonal pattern needs one color") {
  auto c = color_jacobian(SparsityPattern::diagonal(7));
  CHECK(c.num_colors == 1);
}

TEST_CASE("dense pattern needs n colors") {
  auto c = color_jacobian(SparsityPattern::dense(6, 6));
  CHECK(c.num_colors == 6);
}

TEST_CASE("arrowhead n=5: no 1-coloring exists, greedy finds 2") {
  // diagonal plus dense last column
  std::vector<std::pair<index_t, index_t>> coords;
  for (index_t i = 0; i < 5; ++i) {
    coords.emplace_back(i, i);
    coords.emplace_back(i, 4);
  }
  auto p = SparsityPattern::from_coords(5, 5, coords);
  auto c = color_jacobian(p);
  CHECK(c.num_colors == 2);

  // exhaustive check: with one color, every pair sharing a row collides;
  // rows 0..3 contain columns {i, 4}, so a single color is invalid.
  Coloring one;
  one.column_color.assign(5, 0);
  one.num_colors = 1;
  CHECK_THROWS(validate_and_build_recovery(p, one));
}

TEST_CASE("greedy color count bounded by max conflict degree + 1") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const index_t rows = 15, cols = 12;
    std::vector<std::pair<index_t, index_t>> coords;
    for (int k = 0; k < 40; ++k)
      coords.emplace_back(index_t(rng() % rows), index_t(rng() % cols));
    auto p = SparsityPattern::from_coords(rows, cols, coords);
    auto c = color_jacobian(p);

    // conflict degree per column
    std::vector<std::vector<index_t>> rowcols(rows);
    for (index_t i = 0; i < rows; ++i)
      for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k)
        rowcols[size_t(i)].push_back(p.col_ind[size_t(k)]);
    index_t max_deg = 0;
    for (index_t j = 0; j < cols; ++j) {
      std::vector<char> seen(cols, 0);
      index_t deg = 0;
      for (const auto& rc : rowcols) {
        bool has = false;
        for (index_t col : rc) has |= (col == j);
        if (!has) continue;
        for (index_t col : rc)
          if (col != j && !seen[size_t(col)]) {
            seen[size_t(col)] = 1;
            ++deg;
          }
      }
      max_deg = std::max(max_deg, deg);
    }
    CHECK(c.num_colors <= max_deg + 1);
  }
}

TEST_CASE("hessian coloring: diagonal 1 color, tridiagonal <= 3, dense 3x3 = 3") {
  CHECK(color_hessian(SparsityPattern::diagonal(6)).num_colors == 1);

  std::vector<std::pair<index_t, index_t>> tri;
  for (index_t i = 0; i < 6; ++i) {
    tri.emplace_back(i, i);
    if (i > 0) {
      tri.emplace_back(i, i - 1);
      tri.emplace_back(i - 1, i);
    }
  }
  auto c = color_hessian(SparsityPattern::from_coords(6, 6, tri));
  CHECK(c.num_colors <= 3);

  CHECK(color_hessian(SparsityPattern::dense(3, 3)).num_colors == 3);
}

TEST_CASE("hessian coloring rejects asymmetric patterns") {
  auto p = SparsityPattern::from_coords(3, 3, {{0, 1}, {1, 1}, {2, 2}, {0, 0}});
  CHECK_THROWS(color_hessian(p));
}

TEST_CASE("recovery table maps every nonzero to its column's color") {
  std::mt19937_64 rng(5);
  std::vector<std::pair<index_t, index_t>> coords;
  for (int k = 0; k < 30; ++k) coords.emplace_back(index_t(rng() % 10), index_t(rng() % 8));
  auto p = SparsityPattern::from_coords(10, 8, coords);
  auto c = color_jacobian(p);
  for (index_t i = 0; i < p.rows; ++i)
    for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k)
      CHECK(c.recovery[size_t(k)] == c.column_color[size_t(p.col_ind[size_t(k)])]);
}
