#pragma once

#include <vector>

#include "blockipm/sparse.hpp"

namespace blockipm {

/// Column grouping for compressed derivative evaluation: structurally
/// overlapping columns never share a color, so seeding one tangent lane per
/// color recovers every nonzero from a unique (row, color) slot.
struct Coloring {
  std::vector<index_t> column_color;  // color per column
  index_t num_colors = 0;
  // recovery[slot] = lane that holds pattern nonzero `slot`; built as
  // color(col(slot)) and validated collision-free at construction.
  std::vector<index_t> recovery;

  index_t lanes() const { return num_colors; }
};

/// Greedy distance-2 coloring of the column-intersection graph, columns
/// visited in natural order, ties broken by lowest available color.
Coloring color_jacobian(const SparsityPattern& p);

/// Symmetric-safe coloring for Hessian recovery. Distance-2 on the symmetric
/// pattern, which is a valid star coloring; recovery reads the upper-triangle
/// slot and mirrors, so decompressed Hessians are exactly symmetric.
Coloring color_hessian(const SparsityPattern& p);

/// Throws if two columns sharing a row carry the same color (recovery
/// collision), otherwise fills the recovery table.
void validate_and_build_recovery(const SparsityPattern& p, Coloring& c);

}  // namespace blockipm
