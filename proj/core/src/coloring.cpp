#include "blockipm/coloring.hpp"

#include <algorithm>
#include <stdexcept>

namespace blockipm {

namespace {

Coloring greedy_distance2(const SparsityPattern& p) {
  const index_t n = p.cols;
  Coloring c;
  c.column_color.assign(size_t(n), -1);

  // Row -> columns adjacency.
  std::vector<std::vector<index_t>> row_cols(static_cast<size_t>(p.rows));
  for (index_t i = 0; i < p.rows; ++i) {
    auto& rc = row_cols[size_t(i)];
    rc.assign(p.col_ind.begin() + p.row_ptr[size_t(i)],
              p.col_ind.begin() + p.row_ptr[size_t(i) + 1]);
  }
  // Column -> rows adjacency.
  std::vector<std::vector<index_t>> col_rows(static_cast<size_t>(n));
  for (index_t i = 0; i < p.rows; ++i)
    for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k)
      col_rows[size_t(p.col_ind[size_t(k)])].push_back(i);

  std::vector<index_t> forbidden(size_t(n), -1);
  index_t num_colors = 0;
  for (index_t j = 0; j < n; ++j) {
    for (index_t r : col_rows[size_t(j)])
      for (index_t other : row_cols[size_t(r)])
        if (other != j && c.column_color[size_t(other)] >= 0)
          forbidden[size_t(c.column_color[size_t(other)])] = j;
    index_t color = 0;
    while (color < num_colors && forbidden[size_t(color)] == j) ++color;
    c.column_color[size_t(j)] = color;
    num_colors = std::max(num_colors, color + 1);
  }
  c.num_colors = num_colors;
  return c;
}

}  // namespace

void validate_and_build_recovery(const SparsityPattern& p, Coloring& c) {
  if (index_t(c.column_color.size()) != p.cols)
    throw DimensionError("coloring does not match pattern width");
  // (row, color) must identify at most one column per row.
  std::vector<index_t> seen(size_t(c.num_colors), -1);
  c.recovery.assign(size_t(p.nnz()), -1);
  for (index_t i = 0; i < p.rows; ++i) {
    for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k) {
      index_t color = c.column_color[size_t(p.col_ind[size_t(k)])];
      if (color < 0 || color >= c.num_colors)
        throw std::runtime_error("coloring: color index out of range");
      if (seen[size_t(color)] == i)
        throw std::runtime_error("coloring: recovery collision in row " + std::to_string(i));
      seen[size_t(color)] = i;
      c.recovery[size_t(k)] = color;
    }
  }
}

Coloring color_jacobian(const SparsityPattern& p) {
  Coloring c = greedy_distance2(p);
  validate_and_build_recovery(p, c);
  return c;
}

Coloring color_hessian(const SparsityPattern& p) {
  if (!p.is_symmetric()) throw std::invalid_argument("color_hessian: pattern not symmetric");
  Coloring c = greedy_distance2(p);
  validate_and_build_recovery(p, c);
  return c;
}

}  // namespace blockipm
