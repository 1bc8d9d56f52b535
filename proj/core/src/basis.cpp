#include "blockipm/basis.hpp"

#include <stdexcept>

namespace blockipm {

PolyKernel::PolyKernel(index_t n_inputs, index_t n_blocks, std::vector<Lane> lanes)
    : n_in_(n_inputs), n_blocks_(n_blocks), lanes_(std::move(lanes)) {
  for (const auto& l : lanes_) {
    if (l.kind != Lane::constant && (l.a < 0 || l.a >= n_in_))
      throw std::invalid_argument("PolyKernel: lane input a out of range");
    if (l.kind == Lane::bilinear && (l.b < 0 || l.b >= n_in_))
      throw std::invalid_argument("PolyKernel: lane input b out of range");
    if (!l.scale.empty() && index_t(l.scale.size()) != n_blocks_)
      throw std::invalid_argument("PolyKernel: per-block scale size mismatch");
  }
}

void PolyKernel::jacobian_deps(std::vector<std::vector<index_t>>& deps) const {
  deps.assign(lanes_.size(), {});
  for (size_t j = 0; j < lanes_.size(); ++j) {
    const Lane& l = lanes_[j];
    if (l.kind == Lane::linear) deps[j] = {l.a};
    if (l.kind == Lane::bilinear) {
      deps[j] = {l.a};
      if (l.b != l.a) deps[j].push_back(l.b);
    }
  }
}

void PolyKernel::hessian_deps(std::vector<std::vector<index_t>>& deps) const {
  deps.assign(lanes_.size(), {});
  for (size_t j = 0; j < lanes_.size(); ++j) {
    const Lane& l = lanes_[j];
    if (l.kind == Lane::bilinear) {
      deps[j] = {l.a};
      if (l.b != l.a) deps[j].push_back(l.b);
    }
  }
}

void PolyKernel::eval(const DualBatch& in, DualBatch& out, index_t block_begin) const {
  const index_t M = in.columns();
  std::vector<double> sc(static_cast<size_t>(M));
  for (size_t j = 0; j < lanes_.size(); ++j) {
    const Lane& l = lanes_[j];
    for (index_t c = 0; c < M; ++c) sc[size_t(c)] = block_scale(l, block_begin + c);
    switch (l.kind) {
      case Lane::constant:
        db_set_const_per_column(out, index_t(j), sc.data());
        break;
      case Lane::linear:
        db_copy(out, index_t(j), in, l.a);
        db_scale_per_column(out, index_t(j), sc.data());
        break;
      case Lane::bilinear:
        db_mul(out, index_t(j), in, l.a, in, l.b);
        db_scale_per_column(out, index_t(j), sc.data());
        break;
    }
  }
}

void PolyKernel::adjoint(const DualBatch& in, const DualBatch& /*psi*/, const Matrix& w,
                         DualBatch& xbar, AdjointUSink& usink, index_t block_begin,
                         index_t n_x) const {
  const index_t M = in.columns();
  const index_t p = in.lanes();
  std::vector<double> wc(static_cast<size_t>(M));
  std::vector<double> tan(static_cast<size_t>(p));

  auto emit = [&](index_t row, const DualBatch& src, index_t is, const double* weight) {
    // contribution = weight[col] * src entry (a dual)
    if (row < n_x) {
      db_axpy_per_column(xbar, row, weight, src, is);
    } else {
      const double* sv = src.v(is);
      for (index_t c = 0; c < M; ++c) {
        for (index_t k = 0; k < p; ++k) tan[size_t(k)] = weight[c] * src.t(is, k)[c];
        usink.add(row - n_x, c, weight[c] * sv[c], p ? tan.data() : nullptr);
      }
    }
  };
  auto emit_const = [&](index_t row, const double* weight) {
    // contribution = weight[col] * 1 (no tangents)
    if (row < n_x) {
      double* xv = xbar.v(row);
      for (index_t c = 0; c < M; ++c) xv[c] += weight[c];
    } else {
      for (index_t c = 0; c < M; ++c) usink.add(row - n_x, c, weight[c], nullptr);
    }
  };

  for (size_t j = 0; j < lanes_.size(); ++j) {
    const Lane& l = lanes_[j];
    if (l.kind == Lane::constant) continue;
    for (index_t c = 0; c < M; ++c)
      wc[size_t(c)] = w(index_t(j), c) * block_scale(l, block_begin + c);
    if (l.kind == Lane::linear) {
      emit_const(l.a, wc.data());
    } else if (l.a == l.b) {
      // d(v^2) = 2 v dv
      std::vector<double> w2 = wc;
      for (double& x : w2) x *= 2.0;
      emit(l.a, in, l.a, w2.data());
    } else {
      emit(l.a, in, l.b, wc.data());
      emit(l.b, in, l.a, wc.data());
    }
  }
}

}  // namespace blockipm
