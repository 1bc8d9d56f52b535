#pragma once

#include <memory>
#include <vector>

#include "blockipm/dual.hpp"
#include "blockipm/sparse.hpp"

namespace blockipm {

/// Receives adjoint contributions for control-row inputs (index >= n_x).
/// State rows accumulate into a dense dual buffer instead; control rows are
/// streamed so the Hessian workspace stays at its advertised size.
class AdjointUSink {
 public:
  virtual ~AdjointUSink() = default;
  /// Accumulate a contribution to the adjoint of control input `u_row` for
  /// column `col`: value `v` plus `p` tangents in `t` (may be null if p == 0).
  virtual void add(index_t u_row, index_t col, double v, const double* t) = 0;
};

/// The shared nonlinear basis psi: R^{n_x} x R^{n_u} -> R^{n_b} that every
/// block's (f_i, g_i, h_i) depends on linearly. All blocks share one
/// expression structure; scenario data enters as per-block constants held by
/// the kernel. Implementations provide a hand-coded adjoint so second-order
/// batches run forward-over-reverse without a tape.
class BasisKernel {
 public:
  virtual ~BasisKernel() = default;

  virtual index_t num_inputs() const = 0;   // n_d = n_x + n_u
  virtual index_t num_outputs() const = 0;  // n_b
  virtual index_t num_blocks() const = 0;   // N

  /// Input indices each basis entry depends on (first derivative support).
  virtual void jacobian_deps(std::vector<std::vector<index_t>>& deps) const = 0;
  /// Input indices entering nonlinearly (second derivative support); the
  /// Hessian pattern is the union of deps x deps over all entries.
  virtual void hessian_deps(std::vector<std::vector<index_t>>& deps) const = 0;

  /// Evaluate psi for columns [block_begin, block_begin + in.columns()).
  /// `in` holds the n_d inputs, `out` receives the n_b basis entries; p may
  /// be zero for plain value evaluation.
  virtual void eval(const DualBatch& in, DualBatch& out, index_t block_begin) const = 0;

  /// Forward-over-reverse sweep: given inputs `in`, the forward basis duals
  /// `psi` from eval(), and per-column weights w (n_b x M, column-major, no
  /// tangents), accumulate the weighted adjoint grad psi(in)' w. State rows
  /// (< n_x) go into xbar (n_x entries); control rows stream through `usink`.
  virtual void adjoint(const DualBatch& in, const DualBatch& psi, const Matrix& w,
                       DualBatch& xbar, AdjointUSink& usink, index_t block_begin,
                       index_t n_x) const = 0;
};

/// Generic degree-<=2 monomial kernel: each basis entry is
/// scale_i(block) * { 1 | v_a | v_a v_b } over the stacked inputs (x, u).
/// Per-block scales are the scenario-data hook; the default scale is 1.
class PolyKernel final : public BasisKernel {
 public:
  struct Lane {
    enum Kind { constant, linear, bilinear } kind = constant;
    index_t a = -1, b = -1;       // input indices (bilinear allows a == b)
    double coef = 1.0;            // shared coefficient
    std::vector<double> scale;    // optional per-block factor (size N or empty)
  };

  PolyKernel(index_t n_inputs, index_t n_blocks, std::vector<Lane> lanes);

  index_t num_inputs() const override { return n_in_; }
  index_t num_outputs() const override { return index_t(lanes_.size()); }
  index_t num_blocks() const override { return n_blocks_; }
  void jacobian_deps(std::vector<std::vector<index_t>>& deps) const override;
  void hessian_deps(std::vector<std::vector<index_t>>& deps) const override;
  void eval(const DualBatch& in, DualBatch& out, index_t block_begin) const override;
  void adjoint(const DualBatch& in, const DualBatch& psi, const Matrix& w, DualBatch& xbar,
               AdjointUSink& usink, index_t block_begin, index_t n_x) const override;

 private:
  double block_scale(const Lane& l, index_t block) const {
    return l.scale.empty() ? l.coef : l.coef * l.scale[size_t(block)];
  }
  index_t n_in_ = 0, n_blocks_ = 0;
  std::vector<Lane> lanes_;
};

}  // namespace blockipm
