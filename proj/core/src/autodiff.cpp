#include "blockipm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace blockipm {

namespace {

void check_finite_batch(const DualBatch& b, index_t block_begin, const char* what) {
  for (index_t i = 0; i < b.entries(); ++i) {
    const double* v = b.v(i);
    for (index_t c = 0; c < b.columns(); ++c)
      if (!std::isfinite(v[c])) throw NonFiniteError(what, block_begin + c);
    for (index_t k = 0; k < b.lanes(); ++k) {
      const double* t = b.t(i, k);
      for (index_t c = 0; c < b.columns(); ++c)
        if (!std::isfinite(t[c])) throw NonFiniteError(what, block_begin + c);
    }
  }
}

/// out = L * psi over dual batches (values and every tangent lane).
void spmm_dual(const SparseMatrix& L, const DualBatch& psi, DualBatch& out) {
  const index_t M = psi.columns(), p = psi.lanes();
  for (index_t i = 0; i < L.rows; ++i) {
    double* ov = out.v(i);
    std::fill(ov, ov + M, 0.0);
    for (index_t k = 0; k < p; ++k) std::fill(out.t(i, k), out.t(i, k) + M, 0.0);
    for (index_t e = L.row_ptr[size_t(i)]; e < L.row_ptr[size_t(i) + 1]; ++e) {
      const double a = L.val[size_t(e)];
      const index_t j = L.col_ind[size_t(e)];
      const double* pv = psi.v(j);
      for (index_t c = 0; c < M; ++c) ov[c] += a * pv[c];
      for (index_t k = 0; k < p; ++k) {
        double* ot = out.t(i, k);
        const double* pt = psi.t(j, k);
        for (index_t c = 0; c < M; ++c) ot[c] += a * pt[c];
      }
    }
  }
}

void load_inputs(const BlockNlp& nlp, const Matrix& X, const Vector& u, DualBatch& in) {
  const index_t n_x = nlp.dims.n_x, n_u = nlp.dims.n_u, M = in.columns();
  if (X.rows() != n_x || X.cols() != M || index_t(u.size()) != n_u)
    throw DimensionError("batch inputs do not match dims");
  for (index_t i = 0; i < n_x; ++i) {
    double* v = in.v(i);
    for (index_t c = 0; c < M; ++c) v[c] = X(i, c);
  }
  for (index_t i = 0; i < n_u; ++i) {
    double* v = in.v(n_x + i);
    for (index_t c = 0; c < M; ++c) v[c] = u[size_t(i)];
  }
}

void seed_tangents(DualBatch& in, const Coloring& col) {
  const index_t M = in.columns();
  for (index_t i = 0; i < in.entries(); ++i)
    for (index_t k = 0; k < in.lanes(); ++k) {
      double* t = in.t(i, k);
      const double s = (col.column_color[size_t(i)] == k) ? 1.0 : 0.0;
      for (index_t c = 0; c < M; ++c) t[c] = s;
    }
}

class HessSink final : public AdjointUSink {
 public:
  HessSink(Matrix& hess_vals, Matrix& u_grad, const std::vector<index_t>& u_route, index_t p)
      : hess_vals_(hess_vals), u_grad_(u_grad), u_route_(u_route), p_(p) {}

  void add(index_t u_row, index_t col, double v, const double* t) override {
    u_grad_(u_row, col) += v;
    if (!t) return;
    const index_t* route = u_route_.data() + size_t(u_row) * p_;
    for (index_t k = 0; k < p_; ++k) {
      const index_t slot = route[k];
      if (slot >= 0) hess_vals_(slot, col) += t[k];
    }
  }

 private:
  Matrix& hess_vals_;
  Matrix& u_grad_;
  const std::vector<index_t>& u_route_;
  index_t p_;
};

}  // namespace

ModelPatterns detect_sparsity(const BlockNlp& nlp) {
  nlp.validate();
  std::vector<std::vector<index_t>> jdeps, hdeps;
  nlp.basis->jacobian_deps(jdeps);
  nlp.basis->hessian_deps(hdeps);
  const index_t n_d = nlp.dims.n_d();

  auto jac_of = [&](const SparseMatrix& L) {
    std::vector<std::pair<index_t, index_t>> coords;
    for (index_t i = 0; i < L.rows; ++i)
      for (index_t e = L.row_ptr[size_t(i)]; e < L.row_ptr[size_t(i) + 1]; ++e)
        for (index_t d : jdeps[size_t(L.col_ind[size_t(e)])]) coords.emplace_back(i, d);
    return SparsityPattern::from_coords(L.rows, n_d, std::move(coords));
  };

  ModelPatterns p;
  p.jac_g = jac_of(nlp.L_g);
  p.jac_h = jac_of(nlp.L_h);

  // Any lane referenced by L_f, L_g or L_h can carry weight in the Lagrangian.
  std::vector<char> used(size_t(nlp.dims.n_b), 0);
  for (const SparseMatrix* L : {&nlp.L_f, &nlp.L_g, &nlp.L_h})
    for (index_t j : L->col_ind) used[size_t(j)] = 1;
  std::vector<std::pair<index_t, index_t>> coords;
  for (index_t j = 0; j < nlp.dims.n_b; ++j) {
    if (!used[size_t(j)]) continue;
    for (index_t a : hdeps[size_t(j)])
      for (index_t b : hdeps[size_t(j)]) coords.emplace_back(a, b);
  }
  p.hess = SparsityPattern::from_coords(n_d, n_d, std::move(coords));
  return p;
}

JacSplit split_jacobian(const SparsityPattern& j, index_t n_x) {
  JacSplit s;
  std::vector<std::pair<index_t, index_t>> xc, uc;
  for (index_t i = 0; i < j.rows; ++i)
    for (index_t k = j.row_ptr[size_t(i)]; k < j.row_ptr[size_t(i) + 1]; ++k) {
      const index_t c = j.col_ind[size_t(k)];
      if (c < n_x)
        xc.emplace_back(i, c);
      else
        uc.emplace_back(i, c - n_x);
    }
  s.x_pat = SparsityPattern::from_coords(j.rows, n_x, xc);
  s.u_pat = SparsityPattern::from_coords(j.rows, j.cols - n_x, uc);
  s.x_src.resize(size_t(s.x_pat.nnz()));
  s.u_src.resize(size_t(s.u_pat.nnz()));
  for (index_t i = 0; i < j.rows; ++i)
    for (index_t k = j.row_ptr[size_t(i)]; k < j.row_ptr[size_t(i) + 1]; ++k) {
      const index_t c = j.col_ind[size_t(k)];
      if (c < n_x)
        s.x_src[size_t(s.x_pat.find(i, c))] = k;
      else
        s.u_src[size_t(s.u_pat.find(i, c - n_x))] = k;
    }
  return s;
}

HessSplit split_hessian(const SparsityPattern& h, index_t n_x) {
  HessSplit s;
  const index_t n_u = h.cols - n_x;
  std::vector<std::pair<index_t, index_t>> xx, xu, uu;
  for (index_t i = 0; i < h.rows; ++i)
    for (index_t k = h.row_ptr[size_t(i)]; k < h.row_ptr[size_t(i) + 1]; ++k) {
      const index_t c = h.col_ind[size_t(k)];
      if (i < n_x && c < n_x) xx.emplace_back(i, c);
      if (i < n_x && c >= n_x) xu.emplace_back(i, c - n_x);
      if (i >= n_x && c >= n_x) uu.emplace_back(i - n_x, c - n_x);
    }
  s.xx = SparsityPattern::from_coords(n_x, n_x, xx);
  s.xu = SparsityPattern::from_coords(n_x, n_u, xu);
  s.uu = SparsityPattern::from_coords(n_u, n_u, uu);
  auto mirror = [&](index_t i, index_t c) { return h.find(c, i); };
  s.xx_src.resize(size_t(s.xx.nnz()));
  s.xu_src.resize(size_t(s.xu.nnz()));
  s.uu_src.resize(size_t(s.uu.nnz()));
  for (index_t i = 0; i < h.rows; ++i)
    for (index_t k = h.row_ptr[size_t(i)]; k < h.row_ptr[size_t(i) + 1]; ++k) {
      const index_t c = h.col_ind[size_t(k)];
      if (i < n_x && c < n_x) s.xx_src[size_t(s.xx.find(i, c))] = {k, mirror(i, c)};
      if (i < n_x && c >= n_x) s.xu_src[size_t(s.xu.find(i, c - n_x))] = {k, mirror(i, c)};
      if (i >= n_x && c >= n_x) s.uu_src[size_t(s.uu.find(i - n_x, c - n_x))] = {k, mirror(i, c)};
    }
  return s;
}

AdPlan make_ad_plan(const BlockNlp& nlp) {
  AdPlan plan;
  plan.patterns = detect_sparsity(nlp);
  const index_t n_x = nlp.dims.n_x, n_d = nlp.dims.n_d();

  // Stack g over h so one seeding serves both Jacobians.
  std::vector<std::pair<index_t, index_t>> coords;
  const auto& jg = plan.patterns.jac_g;
  const auto& jh = plan.patterns.jac_h;
  for (index_t i = 0; i < jg.rows; ++i)
    for (index_t k = jg.row_ptr[size_t(i)]; k < jg.row_ptr[size_t(i) + 1]; ++k)
      coords.emplace_back(i, jg.col_ind[size_t(k)]);
  for (index_t i = 0; i < jh.rows; ++i)
    for (index_t k = jh.row_ptr[size_t(i)]; k < jh.row_ptr[size_t(i) + 1]; ++k)
      coords.emplace_back(jg.rows + i, jh.col_ind[size_t(k)]);
  plan.jac_stacked = SparsityPattern::from_coords(jg.rows + jh.rows, n_d, std::move(coords));

  plan.jac_coloring = color_jacobian(plan.jac_stacked);
  plan.hess_coloring = color_hessian(plan.patterns.hess);
  plan.p_jac = plan.jac_coloring.num_colors;
  plan.p_hess = plan.hess_coloring.num_colors;

  auto lane_of = [&](const SparsityPattern& p, const Coloring& col) {
    std::vector<index_t> lanes(size_t(p.nnz()));
    for (index_t i = 0; i < p.rows; ++i)
      for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k)
        lanes[size_t(k)] = col.column_color[size_t(p.col_ind[size_t(k)])];
    return lanes;
  };
  plan.g_lane = lane_of(plan.patterns.jac_g, plan.jac_coloring);
  plan.h_lane = lane_of(plan.patterns.jac_h, plan.jac_coloring);
  plan.hess_lane = lane_of(plan.patterns.hess, plan.hess_coloring);

  const index_t n_u = n_d - n_x;
  plan.u_route.assign(size_t(n_u) * plan.p_hess, -1);
  const auto& hp = plan.patterns.hess;
  for (index_t r = n_x; r < n_d; ++r)
    for (index_t k = hp.row_ptr[size_t(r)]; k < hp.row_ptr[size_t(r) + 1]; ++k) {
      const index_t lane = plan.hess_lane[size_t(k)];
      plan.u_route[size_t(r - n_x) * plan.p_hess + lane] = k;
    }

  plan.g_split = split_jacobian(plan.patterns.jac_g, n_x);
  plan.h_split = split_jacobian(plan.patterns.jac_h, n_x);
  plan.w_split = split_hessian(plan.patterns.hess, n_x);
  return plan;
}

count_t dual_buffer_elements(const BlockDims& dims, index_t M, index_t p_jac, index_t p_hess) {
  const count_t n_x = dims.n_x, n_b = dims.n_b, n_d = dims.n_d();
  return (n_x + n_b + n_d) * M * p_jac + (2 * n_x + n_d + n_b) * M * p_hess;
}

AdWorkspace::AdWorkspace(const BlockNlp& nlp, const AdPlan& plan, index_t M)
    : ein(nlp.dims.n_d(), M, 0),
      epsi(nlp.dims.n_b, M, 0),
      jin(nlp.dims.n_d(), M, plan.p_jac),
      jpsi(nlp.dims.n_b, M, plan.p_jac),
      jout(nlp.dims.n_x, M, plan.p_jac),
      hin(nlp.dims.n_d(), M, plan.p_hess),
      hpsi(nlp.dims.n_b, M, plan.p_hess),
      hmult(nlp.dims.n_x, M, plan.p_hess),
      hxbar(nlp.dims.n_x, M, plan.p_hess),
      w_weights(nlp.dims.n_b, M),
      jac_g_vals(plan.patterns.jac_g.nnz(), M),
      jac_h_vals(plan.patterns.jac_h.nnz(), M),
      hess_vals(plan.patterns.hess.nnz(), M),
      u_grad(nlp.dims.n_u, M),
      M_(M) {}

count_t AdWorkspace::dual_tangent_elements() const {
  return jin.tangent_elements() + jpsi.tangent_elements() + jout.tangent_elements() +
         hin.tangent_elements() + hpsi.tangent_elements() + hmult.tangent_elements() +
         hxbar.tangent_elements();
}

void batch_eval(const BlockNlp& nlp, const Matrix& X, const Vector& u, index_t block_begin,
                AdWorkspace& ws, Vector& f, Matrix& g, Matrix& h) {
  const index_t M = ws.batch();
  load_inputs(nlp, X, u, ws.ein);
  nlp.basis->eval(ws.ein, ws.epsi, block_begin);
  check_finite_batch(ws.epsi, block_begin, "non-finite basis output");

  f.assign(size_t(M), 0.0);
  g = Matrix(nlp.dims.n_x, M);
  h = Matrix(nlp.dims.m, M);
  for (index_t e = nlp.L_f.row_ptr[0]; e < nlp.L_f.row_ptr[1]; ++e) {
    const double a = nlp.L_f.val[size_t(e)];
    const double* pv = ws.epsi.v(nlp.L_f.col_ind[size_t(e)]);
    for (index_t c = 0; c < M; ++c) f[size_t(c)] += a * pv[c];
  }
  auto product_values = [&](const SparseMatrix& L, Matrix& out) {
    for (index_t i = 0; i < L.rows; ++i)
      for (index_t e = L.row_ptr[size_t(i)]; e < L.row_ptr[size_t(i) + 1]; ++e) {
        const double a = L.val[size_t(e)];
        const double* pv = ws.epsi.v(L.col_ind[size_t(e)]);
        for (index_t c = 0; c < M; ++c) out(i, c) += a * pv[c];
      }
  };
  product_values(nlp.L_g, g);
  product_values(nlp.L_h, h);
}

void batch_jacobian(const BlockNlp& nlp, const Matrix& X, const Vector& u, index_t block_begin,
                    const AdPlan& plan, AdWorkspace& ws, Vector& f, Matrix& g, Matrix& h,
                    Matrix& gx, Matrix& gu, Matrix& hx, Matrix& hu) {
  const index_t M = ws.batch();
  load_inputs(nlp, X, u, ws.jin);
  seed_tangents(ws.jin, plan.jac_coloring);
  nlp.basis->eval(ws.jin, ws.jpsi, block_begin);
  check_finite_batch(ws.jpsi, block_begin, "non-finite basis output");
  // g and its compressed Jacobian in one product over duals
  spmm_dual(nlp.L_g, ws.jpsi, ws.jout);

  f.assign(size_t(M), 0.0);
  g = Matrix(nlp.dims.n_x, M);
  h = Matrix(nlp.dims.m, M);
  for (index_t e = nlp.L_f.row_ptr[0]; e < nlp.L_f.row_ptr[1]; ++e) {
    const double a = nlp.L_f.val[size_t(e)];
    const double* pv = ws.jpsi.v(nlp.L_f.col_ind[size_t(e)]);
    for (index_t c = 0; c < M; ++c) f[size_t(c)] += a * pv[c];
  }
  for (index_t i = 0; i < nlp.dims.n_x; ++i) {
    const double* v = ws.jout.v(i);
    for (index_t c = 0; c < M; ++c) g(i, c) = v[c];
  }

  // Decompress G from the g-output duals.
  const auto& jg = plan.patterns.jac_g;
  for (index_t i = 0; i < jg.rows; ++i)
    for (index_t k = jg.row_ptr[size_t(i)]; k < jg.row_ptr[size_t(i) + 1]; ++k) {
      const double* t = ws.jout.t(i, plan.g_lane[size_t(k)]);
      for (index_t c = 0; c < M; ++c) ws.jac_g_vals(k, c) = t[c];
    }

  // h values and H slots stream straight from the basis duals.
  ws.jac_h_vals.set_zero();
  const auto& jh = plan.patterns.jac_h;
  for (index_t i = 0; i < nlp.L_h.rows; ++i) {
    for (index_t e = nlp.L_h.row_ptr[size_t(i)]; e < nlp.L_h.row_ptr[size_t(i) + 1]; ++e) {
      const double a = nlp.L_h.val[size_t(e)];
      const index_t j = nlp.L_h.col_ind[size_t(e)];
      const double* pv = ws.jpsi.v(j);
      for (index_t c = 0; c < M; ++c) h(i, c) += a * pv[c];
      for (index_t k = jh.row_ptr[size_t(i)]; k < jh.row_ptr[size_t(i) + 1]; ++k) {
        const double* t = ws.jpsi.t(j, plan.h_lane[size_t(k)]);
        for (index_t c = 0; c < M; ++c) ws.jac_h_vals(k, c) += a * t[c];
      }
    }
  }

  auto gather = [&](const std::vector<index_t>& src, const Matrix& all, Matrix& out) {
    out = Matrix(index_t(src.size()), M);
    for (size_t s = 0; s < src.size(); ++s)
      for (index_t c = 0; c < M; ++c) out(index_t(s), c) = all(src[s], c);
  };
  gather(plan.g_split.x_src, ws.jac_g_vals, gx);
  gather(plan.g_split.u_src, ws.jac_g_vals, gu);
  gather(plan.h_split.x_src, ws.jac_h_vals, hx);
  gather(plan.h_split.u_src, ws.jac_h_vals, hu);
}

void batch_hessian(const BlockNlp& nlp, const Matrix& X, const Vector& u, index_t block_begin,
                   const Matrix& y, const Matrix& z, double obj_weight, const AdPlan& plan,
                   AdWorkspace& ws, Matrix& wxx, Matrix& wxu, Matrix& wuu, Matrix& grad_lag) {
  const index_t M = ws.batch();
  const index_t n_x = nlp.dims.n_x, n_d = nlp.dims.n_d();
  load_inputs(nlp, X, u, ws.hin);
  seed_tangents(ws.hin, plan.hess_coloring);
  nlp.basis->eval(ws.hin, ws.hpsi, block_begin);
  check_finite_batch(ws.hpsi, block_begin, "non-finite basis output");

  // Stage the equality multipliers as duals (zero tangents) and build the
  // combined basis weights w = obj_weight L_f' + L_g' y + L_h' z.
  for (index_t i = 0; i < n_x; ++i) {
    double* v = ws.hmult.v(i);
    for (index_t c = 0; c < M; ++c) v[c] = y(i, c);
    for (index_t k = 0; k < ws.hmult.lanes(); ++k)
      std::fill(ws.hmult.t(i, k), ws.hmult.t(i, k) + M, 0.0);
  }
  ws.w_weights.set_zero();
  for (index_t e = nlp.L_f.row_ptr[0]; e < nlp.L_f.row_ptr[1]; ++e) {
    const index_t j = nlp.L_f.col_ind[size_t(e)];
    const double a = obj_weight * nlp.L_f.val[size_t(e)];
    for (index_t c = 0; c < M; ++c) ws.w_weights(j, c) += a;
  }
  for (index_t i = 0; i < nlp.L_g.rows; ++i) {
    const double* yv = ws.hmult.v(i);
    for (index_t e = nlp.L_g.row_ptr[size_t(i)]; e < nlp.L_g.row_ptr[size_t(i) + 1]; ++e) {
      const index_t j = nlp.L_g.col_ind[size_t(e)];
      const double a = nlp.L_g.val[size_t(e)];
      for (index_t c = 0; c < M; ++c) ws.w_weights(j, c) += a * yv[c];
    }
  }
  for (index_t i = 0; i < nlp.L_h.rows; ++i)
    for (index_t e = nlp.L_h.row_ptr[size_t(i)]; e < nlp.L_h.row_ptr[size_t(i) + 1]; ++e) {
      const index_t j = nlp.L_h.col_ind[size_t(e)];
      const double a = nlp.L_h.val[size_t(e)];
      for (index_t c = 0; c < M; ++c) ws.w_weights(j, c) += a * z(i, c);
    }

  ws.hxbar.set_zero();
  ws.hess_vals.set_zero();
  ws.u_grad.set_zero();
  HessSink sink(ws.hess_vals, ws.u_grad, plan.u_route, plan.p_hess);
  nlp.basis->adjoint(ws.hin, ws.hpsi, ws.w_weights, ws.hxbar, sink, block_begin, n_x);
  check_finite_batch(ws.hxbar, block_begin, "non-finite adjoint");

  // State rows decompress from the dense adjoint duals.
  const auto& hp = plan.patterns.hess;
  for (index_t r = 0; r < n_x; ++r)
    for (index_t k = hp.row_ptr[size_t(r)]; k < hp.row_ptr[size_t(r) + 1]; ++k) {
      const double* t = ws.hxbar.t(r, plan.hess_lane[size_t(k)]);
      for (index_t c = 0; c < M; ++c) ws.hess_vals(k, c) = t[c];
    }

  grad_lag = Matrix(n_d, M);
  for (index_t r = 0; r < n_x; ++r) {
    const double* v = ws.hxbar.v(r);
    for (index_t c = 0; c < M; ++c) grad_lag(r, c) = v[c];
  }
  for (index_t r = 0; r < n_d - n_x; ++r)
    for (index_t c = 0; c < M; ++c) grad_lag(n_x + r, c) = ws.u_grad(r, c);

  // Split with mirror averaging: exactly symmetric by construction.
  auto gather_sym = [&](const std::vector<std::pair<index_t, index_t>>& src, Matrix& out) {
    out = Matrix(index_t(src.size()), M);
    for (size_t s = 0; s < src.size(); ++s)
      for (index_t c = 0; c < M; ++c)
        out(index_t(s), c) =
            0.5 * (ws.hess_vals(src[s].first, c) + ws.hess_vals(src[s].second, c));
  };
  gather_sym(plan.w_split.xx_src, wxx);
  gather_sym(plan.w_split.xu_src, wxu);
  gather_sym(plan.w_split.uu_src, wuu);
}

double DerivativeBundle::objective() const {
  double s = 0;
  for (double v : f) s += v;
  return s;
}

DerivativeBundle make_bundle(const BlockNlp& nlp, const AdPlan& plan) {
  DerivativeBundle d;
  d.plan = plan;
  const BlockDims& dm = nlp.dims;
  d.f.assign(size_t(dm.N), 0.0);
  d.g = Matrix(dm.n_x, dm.N);
  d.h = Matrix(dm.m, dm.N);
  d.gx = Matrix(plan.g_split.x_pat.nnz(), dm.N);
  d.gu = Matrix(plan.g_split.u_pat.nnz(), dm.N);
  d.hx = Matrix(plan.h_split.x_pat.nnz(), dm.N);
  d.hu = Matrix(plan.h_split.u_pat.nnz(), dm.N);
  d.wxx = Matrix(plan.w_split.xx.nnz(), dm.N);
  d.wxu = Matrix(plan.w_split.xu.nnz(), dm.N);
  d.wuu = Matrix(plan.w_split.uu.nnz(), dm.N);
  d.grad_lag = Matrix(dm.n_d(), dm.N);
  return d;
}

KktResiduals assemble_residuals(const BlockNlp& nlp, const Iterate& it, double mu,
                                const DerivativeBundle& d) {
  const BlockDims& dm = nlp.dims;
  KktResiduals r;
  r.stationarity_x = Matrix(dm.n_x, dm.N);
  r.stationarity_u.assign(size_t(dm.n_u), 0.0);
  r.stationarity_s = Matrix(dm.m, dm.N);
  r.primal_g = d.g;
  r.primal_h = Matrix(dm.m, dm.N);

  for (index_t b = 0; b < dm.N; ++b) {
    for (index_t i = 0; i < dm.n_x; ++i)
      r.stationarity_x(i, b) = d.grad_lag(i, b) - it.kappa_lo(i, b) + it.kappa_up(i, b);
    for (index_t i = 0; i < dm.n_u; ++i)
      r.stationarity_u[size_t(i)] += d.grad_lag(dm.n_x + i, b);
    for (index_t i = 0; i < dm.m; ++i) {
      r.stationarity_s(i, b) = it.z(i, b) - it.nu_lo(i, b) + it.nu_up(i, b);
      r.primal_h(i, b) = d.h(i, b) + it.s(i, b);
    }
  }
  for (index_t i = 0; i < dm.n_u; ++i)
    r.stationarity_u[size_t(i)] += -it.lambda_lo[size_t(i)] + it.lambda_up[size_t(i)];

  double comp = 0;
  auto comp_1 = [&](double v, double lo, double up, double m_lo, double m_up) {
    if (std::isfinite(lo)) comp = std::max(comp, std::abs((v - lo) * m_lo - mu));
    if (std::isfinite(up)) comp = std::max(comp, std::abs((up - v) * m_up - mu));
  };
  for (index_t b = 0; b < dm.N; ++b) {
    for (index_t i = 0; i < dm.n_x; ++i)
      comp_1(it.x(i, b), nlp.x_bounds.lower[size_t(i)], nlp.x_bounds.upper[size_t(i)],
             it.kappa_lo(i, b), it.kappa_up(i, b));
    for (index_t i = 0; i < dm.m; ++i)
      comp_1(it.s(i, b), nlp.s_bounds.lower[size_t(i)], nlp.s_bounds.upper[size_t(i)],
             it.nu_lo(i, b), it.nu_up(i, b));
  }
  for (index_t i = 0; i < dm.n_u; ++i)
    comp_1(it.u[size_t(i)], nlp.u_bounds.lower[size_t(i)], nlp.u_bounds.upper[size_t(i)],
           it.lambda_lo[size_t(i)], it.lambda_up[size_t(i)]);
  r.complementarity = comp;
  return r;
}

void eval_bundle_range(const BlockNlp& nlp, const AdPlan& plan, AdWorkspace& ws,
                       const Matrix& X, const Vector& u, const Matrix& y, const Matrix& z,
                       double obj_weight, index_t block_begin, DerivativeBundle& out) {
  const index_t M = ws.batch();
  Vector f;
  Matrix g, h, gx, gu, hx, hu, wxx, wxu, wuu, grad;
  Matrix Xg(nlp.dims.n_x, M), yg(nlp.dims.n_x, M), zg(nlp.dims.m, M);
  for (index_t c = 0; c < M; ++c) {
    std::copy(X.col(block_begin + c), X.col(block_begin + c) + nlp.dims.n_x, Xg.col(c));
    std::copy(y.col(block_begin + c), y.col(block_begin + c) + nlp.dims.n_x, yg.col(c));
    std::copy(z.col(block_begin + c), z.col(block_begin + c) + nlp.dims.m, zg.col(c));
  }
  batch_jacobian(nlp, Xg, u, block_begin, plan, ws, f, g, h, gx, gu, hx, hu);
  batch_hessian(nlp, Xg, u, block_begin, yg, zg, obj_weight, plan, ws, wxx, wxu, wuu, grad);

  for (index_t c = 0; c < M; ++c) {
    const index_t b = block_begin + c;
    out.f[size_t(b)] = f[size_t(c)];
    auto copy_col = [&](const Matrix& src, Matrix& dst) {
      std::copy(src.col(c), src.col(c) + src.rows(), dst.col(b));
    };
    copy_col(g, out.g);
    copy_col(h, out.h);
    copy_col(gx, out.gx);
    copy_col(gu, out.gu);
    copy_col(hx, out.hx);
    copy_col(hu, out.hu);
    copy_col(wxx, out.wxx);
    copy_col(wxu, out.wxu);
    copy_col(wuu, out.wuu);
    copy_col(grad, out.grad_lag);
  }
}

}  // namespace blockipm
