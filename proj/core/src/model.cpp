#include "blockipm/model.hpp"

#include <algorithm>
#include <cmath>

#include "blockipm/autodiff.hpp"

namespace blockipm {

void BlockNlp::validate() const {
  dims.validate();
  if (!basis) throw std::invalid_argument("BlockNlp: missing basis kernel");
  if (basis->num_inputs() != dims.n_d() || basis->num_outputs() != dims.n_b ||
      basis->num_blocks() != dims.N)
    throw DimensionError("BlockNlp: basis kernel does not match dims");
  if (L_f.rows != 1 || L_f.cols != dims.n_b) throw DimensionError("BlockNlp: L_f shape");
  if (L_g.rows != dims.n_x || L_g.cols != dims.n_b) throw DimensionError("BlockNlp: L_g shape");
  if (L_h.rows != dims.m || L_h.cols != dims.n_b) throw DimensionError("BlockNlp: L_h shape");
  if (x_bounds.size() != dims.n_x || u_bounds.size() != dims.n_u || s_bounds.size() != dims.m)
    throw DimensionError("BlockNlp: bounds sizes");
}

Iterate Iterate::zeros(const BlockDims& d) {
  Iterate it;
  it.x = Matrix(d.n_x, d.N);
  it.u.assign(size_t(d.n_u), 0.0);
  it.s = Matrix(d.m, d.N);
  it.y = Matrix(d.n_x, d.N);
  it.z = Matrix(d.m, d.N);
  it.kappa_lo = Matrix(d.n_x, d.N);
  it.kappa_up = Matrix(d.n_x, d.N);
  it.nu_lo = Matrix(d.m, d.N);
  it.nu_up = Matrix(d.m, d.N);
  it.lambda_lo.assign(size_t(d.n_u), 0.0);
  it.lambda_up.assign(size_t(d.n_u), 0.0);
  return it;
}

namespace {

bool interior_1(double v, double lo, double up, double m_lo, double m_up) {
  if (std::isfinite(lo) && (v <= lo || m_lo <= 0)) return false;
  if (std::isfinite(up) && (v >= up || m_up <= 0)) return false;
  return true;
}

}  // namespace

bool Iterate::strictly_interior(const BlockNlp& nlp) const {
  const BlockDims& d = nlp.dims;
  for (index_t b = 0; b < d.N; ++b) {
    for (index_t i = 0; i < d.n_x; ++i)
      if (!interior_1(x(i, b), nlp.x_bounds.lower[size_t(i)], nlp.x_bounds.upper[size_t(i)],
                      kappa_lo(i, b), kappa_up(i, b)))
        return false;
    for (index_t i = 0; i < d.m; ++i)
      if (!interior_1(s(i, b), nlp.s_bounds.lower[size_t(i)], nlp.s_bounds.upper[size_t(i)],
                      nu_lo(i, b), nu_up(i, b)))
        return false;
  }
  for (index_t i = 0; i < d.n_u; ++i)
    if (!interior_1(u[size_t(i)], nlp.u_bounds.lower[size_t(i)], nlp.u_bounds.upper[size_t(i)],
                    lambda_lo[size_t(i)], lambda_up[size_t(i)]))
      return false;
  return true;
}

double KktResiduals::inf_norm() const {
  return std::max({blockipm::inf_norm(stationarity_x), blockipm::inf_norm(stationarity_u),
                   blockipm::inf_norm(stationarity_s), blockipm::inf_norm(primal_g),
                   blockipm::inf_norm(primal_h), complementarity});
}

double KktResiduals::stationarity_norm() const {
  return std::max({blockipm::inf_norm(stationarity_x), blockipm::inf_norm(stationarity_u),
                   blockipm::inf_norm(stationarity_s)});
}

double KktResiduals::primal_norm() const {
  return std::max(blockipm::inf_norm(primal_g), blockipm::inf_norm(primal_h));
}

std::pair<count_t, count_t> total_dims(const BlockNlp& nlp) {
  return {nlp.dims.nvar_primal(), nlp.dims.ncon()};
}

double eval_lagrangian(const BlockNlp& nlp, const Iterate& it) {
  nlp.validate();
  const BlockDims& d = nlp.dims;
  if (it.x.rows() != d.n_x || it.x.cols() != d.N || index_t(it.u.size()) != d.n_u ||
      it.s.rows() != d.m)
    throw DimensionError("eval_lagrangian: iterate does not match dims");

  AdWorkspace ws(nlp, make_ad_plan(nlp), d.N);
  Vector f;
  Matrix g, h;
  batch_eval(nlp, it.x, it.u, 0, ws, f, g, h);

  double L = 0;
  for (index_t b = 0; b < d.N; ++b) {
    L += f[size_t(b)];
    for (index_t i = 0; i < d.n_x; ++i) L += it.y(i, b) * g(i, b);
    for (index_t i = 0; i < d.m; ++i) L += it.z(i, b) * (h(i, b) + it.s(i, b));
    for (index_t i = 0; i < d.n_x; ++i) {
      const double lo = nlp.x_bounds.lower[size_t(i)], up = nlp.x_bounds.upper[size_t(i)];
      if (std::isfinite(lo)) L -= it.kappa_lo(i, b) * (it.x(i, b) - lo);
      if (std::isfinite(up)) L -= it.kappa_up(i, b) * (up - it.x(i, b));
    }
    for (index_t i = 0; i < d.m; ++i) {
      const double lo = nlp.s_bounds.lower[size_t(i)], up = nlp.s_bounds.upper[size_t(i)];
      if (std::isfinite(lo)) L -= it.nu_lo(i, b) * (it.s(i, b) - lo);
      if (std::isfinite(up)) L -= it.nu_up(i, b) * (up - it.s(i, b));
    }
  }
  for (index_t i = 0; i < d.n_u; ++i) {
    const double lo = nlp.u_bounds.lower[size_t(i)], up = nlp.u_bounds.upper[size_t(i)];
    if (std::isfinite(lo)) L -= it.lambda_lo[size_t(i)] * (it.u[size_t(i)] - lo);
    if (std::isfinite(up)) L -= it.lambda_up[size_t(i)] * (up - it.u[size_t(i)]);
  }
  return L;
}

KktResiduals kkt_error(const BlockNlp& nlp, const Iterate& it, double mu) {
  AdPlan plan = make_ad_plan(nlp);
  AdWorkspace ws(nlp, plan, nlp.dims.N);
  DerivativeBundle d = make_bundle(nlp, plan);
  eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);
  return assemble_residuals(nlp, it, mu, d);
}

}  // namespace blockipm
