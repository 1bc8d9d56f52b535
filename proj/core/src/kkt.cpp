#include "blockipm/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace blockipm {

const char* to_string(KktStrategy s) {
  switch (s) {
    case KktStrategy::augmented: return "augmented";
    case KktStrategy::condensed: return "condensed";
    case KktStrategy::reduced: return "reduced";
  }
  return "?";
}

std::optional<KktStrategy> strategy_from_string(const std::string& s) {
  if (s == "augmented") return KktStrategy::augmented;
  if (s == "condensed") return KktStrategy::condensed;
  if (s == "reduced") return KktStrategy::reduced;
  return std::nullopt;
}

namespace {

void pat_gaxpy(const SparsityPattern& p, const double* val, const double* x, double* y,
               double alpha = 1.0) {
  for (index_t i = 0; i < p.rows; ++i) {
    double acc = 0;
    for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k)
      acc += val[k] * x[p.col_ind[size_t(k)]];
    y[i] += alpha * acc;
  }
}

void pat_gaxpy_t(const SparsityPattern& p, const double* val, const double* x, double* y,
                 double alpha = 1.0) {
  for (index_t i = 0; i < p.rows; ++i) {
    const double xi = alpha * x[i];
    if (xi == 0.0) continue;
    for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k)
      y[p.col_ind[size_t(k)]] += val[k] * xi;
  }
}

// Sigma += m_lo/(v-l) + m_up/(u-v); r += -mu/(v-l) + mu/(u-v).
void bound_terms(double v, double lo, double up, double m_lo, double m_up, double mu,
                 double* sigma, double* r) {
  if (std::isfinite(lo)) {
    const double sl = v - lo;
    if (sl <= 0) throw NonInteriorError("iterate not strictly interior");
    *sigma += m_lo / sl;
    *r -= mu / sl;
  }
  if (std::isfinite(up)) {
    const double su = up - v;
    if (su <= 0) throw NonInteriorError("iterate not strictly interior");
    *sigma += m_up / su;
    *r += mu / su;
  }
}

}  // namespace

AugmentedSystem assemble_augmented(const BlockNlp& nlp, const Iterate& it, double mu,
                                   const DerivativeBundle& d) {
  const BlockDims& dm = nlp.dims;
  AugmentedSystem s;
  s.nlp = &nlp;
  s.d = &d;
  s.mu = mu;
  s.sigma_x = Matrix(dm.n_x, dm.N);
  s.sigma_u.assign(size_t(dm.n_u), 0.0);
  s.sigma_s = Matrix(dm.m, dm.N);
  s.r1x = Matrix(dm.n_x, dm.N);
  s.r1u.assign(size_t(dm.n_u), 0.0);
  s.r2 = Matrix(dm.m, dm.N);
  s.r3 = d.g;
  s.r4 = Matrix(dm.m, dm.N);

  for (index_t b = 0; b < dm.N; ++b) {
    for (index_t i = 0; i < dm.n_x; ++i) {
      double sig = 0, r = d.grad_lag(i, b);
      bound_terms(it.x(i, b), nlp.x_bounds.lower[size_t(i)], nlp.x_bounds.upper[size_t(i)],
                  it.kappa_lo(i, b), it.kappa_up(i, b), mu, &sig, &r);
      s.sigma_x(i, b) = sig;
      s.r1x(i, b) = r;
    }
    for (index_t i = 0; i < dm.m; ++i) {
      double sig = 0, r = it.z(i, b);
      bound_terms(it.s(i, b), nlp.s_bounds.lower[size_t(i)], nlp.s_bounds.upper[size_t(i)],
                  it.nu_lo(i, b), it.nu_up(i, b), mu, &sig, &r);
      s.sigma_s(i, b) = sig;
      s.r2(i, b) = r;
      s.r4(i, b) = d.h(i, b) + it.s(i, b);
    }
    for (index_t i = 0; i < dm.n_u; ++i) s.r1u[size_t(i)] += d.grad_lag(dm.n_x + i, b);
  }
  for (index_t i = 0; i < dm.n_u; ++i) {
    double sig = 0, r = 0;
    bound_terms(it.u[size_t(i)], nlp.u_bounds.lower[size_t(i)], nlp.u_bounds.upper[size_t(i)],
                it.lambda_lo[size_t(i)], it.lambda_up[size_t(i)], mu, &sig, &r);
    s.sigma_u[size_t(i)] += sig;
    s.r1u[size_t(i)] += r;
  }
  return s;
}

CondenseWork make_condense_work(const AdPlan& plan) {
  CondenseWork w;
  w.xx = plan_condense(plan.w_split.xx, plan.h_split.x_pat, plan.h_split.x_pat);
  w.xu = plan_condense(plan.w_split.xu, plan.h_split.x_pat, plan.h_split.u_pat);
  w.uu = plan_condense(plan.w_split.uu, plan.h_split.u_pat, plan.h_split.u_pat);
  return w;
}

CondensedSystem condense(const AugmentedSystem& sys) {
  return condense(sys, make_condense_work(sys.d->plan));
}

CondensedSystem condense(const AugmentedSystem& sys, const CondenseWork& work) {
  const BlockNlp& nlp = *sys.nlp;
  const DerivativeBundle& d = *sys.d;
  const BlockDims& dm = nlp.dims;

  CondensedSystem c;
  c.nlp = sys.nlp;
  c.d = sys.d;
  c.mu = sys.mu;
  c.sigma_x = sys.sigma_x;
  c.sigma_u = sys.sigma_u;
  c.sigma_s = sys.sigma_s;
  c.r2 = sys.r2;
  c.r4 = sys.r4;
  c.delta_w = sys.delta_w;
  c.delta_c = sys.delta_c;

  for (index_t b = 0; b < dm.N; ++b)
    for (index_t i = 0; i < dm.m; ++i)
      if (!(sys.sigma_s(i, b) > 0))
        throw NonInteriorError("condense: Sigma_s not positive (zero slack gap)");

  c.kxx_p = work.xx.out;
  c.kxu_p = work.xu.out;
  c.kuu_p = work.uu.out;
  c.kxx = Matrix(c.kxx_p.nnz(), dm.N);
  c.kxu = Matrix(c.kxu_p.nnz(), dm.N);
  c.kuu = Matrix(c.kuu_p.nnz(), dm.N);
  c.rhat1 = Matrix(dm.n_x, dm.N);
  c.rhat2 = sys.r1u;
  c.rhat3 = sys.r3;

  Vector t(static_cast<size_t>(dm.m));
  for (index_t b = 0; b < dm.N; ++b) {
    run_condense(work.xx, d.wxx.col(b), d.hx.col(b), d.hx.col(b), sys.sigma_s.col(b),
                 c.kxx.col(b));
    run_condense(work.xu, d.wxu.col(b), d.hx.col(b), d.hu.col(b), sys.sigma_s.col(b),
                 c.kxu.col(b));
    run_condense(work.uu, d.wuu.col(b), d.hu.col(b), d.hu.col(b), sys.sigma_s.col(b),
                 c.kuu.col(b));
    for (index_t i = 0; i < dm.m; ++i)
      t[size_t(i)] = sys.sigma_s(i, b) * sys.r4(i, b) - sys.r2(i, b);
    std::copy(sys.r1x.col(b), sys.r1x.col(b) + dm.n_x, c.rhat1.col(b));
    pat_gaxpy_t(d.plan.h_split.x_pat, d.hx.col(b), t.data(), c.rhat1.col(b));
    pat_gaxpy_t(d.plan.h_split.u_pat, d.hu.col(b), t.data(), c.rhat2.data());
  }
  return c;
}

void recover_slack_dual(const CondensedSystem& sys, Step& step) {
  const BlockDims& dm = sys.nlp->dims;
  const DerivativeBundle& d = *sys.d;
  step.pz = Matrix(dm.m, dm.N);
  step.ps = Matrix(dm.m, dm.N);
  Vector hp(size_t(dm.m));
  for (index_t b = 0; b < dm.N; ++b) {
    std::fill(hp.begin(), hp.end(), 0.0);
    pat_gaxpy(d.plan.h_split.x_pat, d.hx.col(b), step.px.col(b), hp.data());
    pat_gaxpy(d.plan.h_split.u_pat, d.hu.col(b), step.pu.data(), hp.data());
    for (index_t i = 0; i < dm.m; ++i) {
      const double pz = sys.sigma_s(i, b) * (hp[size_t(i)] + sys.r4(i, b)) - sys.r2(i, b);
      step.pz(i, b) = pz;
      step.ps(i, b) = -(sys.r2(i, b) + pz) / sys.sigma_s(i, b);
    }
  }
}

BlockDiagFactor factor_gx_range(const CondensedSystem& sys, index_t lo, index_t hi) {
  const DerivativeBundle& d = *sys.d;
  Matrix vals(d.plan.g_split.x_pat.nnz(), hi - lo);
  for (index_t b = lo; b < hi; ++b)
    std::copy(d.gx.col(b), d.gx.col(b) + d.gx.rows(), vals.col(b - lo));
  return factor_block_diag(d.plan.g_split.x_pat, vals, lo);
}

namespace {

struct GroupReduce {
  Matrix khat;
  Vector rhs;
  count_t workspace_elements = 0;
  OpCounters counters;
};

// Per-group reduced right-hand side:
//   sum_b [ Gu' Gx^{-T} (rhat1 - Kxx~ a) + Kxu' a ],  a = Gx^{-1} rhat3.
Vector reduce_rhs_group(const CondensedSystem& sys, const BlockDiagFactor& facts, index_t lo,
                        index_t hi, bool deterministic) {
  const BlockDims& dm = sys.nlp->dims;
  const DerivativeBundle& d = *sys.d;
  const index_t n_x = dm.n_x, n_u = dm.n_u;
  const double dw = sys.delta_w;
  const auto& gu_p = d.plan.g_split.u_pat;

  auto rhs_leaf = [&](index_t b) {
    Matrix a(n_x, 1);
    std::copy(sys.rhat3.col(b), sys.rhat3.col(b) + n_x, a.col(0));
    facts.solve_block(b - lo, a, false);
    Matrix t(n_x, 1);
    std::copy(sys.rhat1.col(b), sys.rhat1.col(b) + n_x, t.col(0));
    pat_gaxpy(sys.kxx_p, sys.kxx.col(b), a.col(0), t.col(0), -1.0);
    for (index_t i = 0; i < n_x; ++i) t(i, 0) -= (sys.sigma_x(i, b) + dw) * a(i, 0);
    facts.solve_block(b - lo, t, true);
    Vector out(static_cast<size_t>(n_u), 0.0);
    pat_gaxpy_t(gu_p, d.gu.col(b), t.col(0), out.data());
    pat_gaxpy_t(sys.kxu_p, sys.kxu.col(b), a.col(0), out.data());
    return out;
  };
  auto addv = [](Vector a, Vector b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
  };
  if (deterministic) return range_tree<Vector>(lo, hi, rhs_leaf, addv);
  Vector acc = rhs_leaf(lo);
  for (index_t b = lo + 1; b < hi; ++b) acc = addv(std::move(acc), rhs_leaf(b));
  return acc;
}

// Residual of the augmented system at a step, as row-block vectors with
// extended-precision accumulation, plus its relative norm. Used for the
// step-level refinement that maps condensed/reduced solves back onto the
// unreduced system at full accuracy.
struct AugResVec {
  Matrix r1x;
  Vector r1u;
  Matrix r2, r3, r4;
  double rel = 0;
};

AugResVec augmented_residual_vec(const AugmentedSystem& sys, const Step& step) {
  const BlockNlp& nlp = *sys.nlp;
  const DerivativeBundle& d = *sys.d;
  const BlockDims& dm = nlp.dims;
  AugResVec out;
  out.r1x = Matrix(dm.n_x, dm.N);
  out.r1u.assign(static_cast<size_t>(dm.n_u), 0.0);
  out.r2 = Matrix(dm.m, dm.N);
  out.r3 = Matrix(dm.n_x, dm.N);
  out.r4 = Matrix(dm.m, dm.N);

  std::vector<long double> xu(static_cast<size_t>(dm.n_u), 0.0L);
  std::vector<long double> tx(static_cast<size_t>(dm.n_x));
  std::vector<long double> tm(static_cast<size_t>(dm.m));

  auto pat_acc = [&](const SparsityPattern& p, const double* val, const double* x,
                     std::vector<long double>& y, double alpha) {
    for (index_t i = 0; i < p.rows; ++i) {
      long double acc = 0;
      for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k)
        acc += static_cast<long double>(val[k]) * x[p.col_ind[size_t(k)]];
      y[size_t(i)] += alpha * acc;
    }
  };
  auto pat_acc_t = [&](const SparsityPattern& p, const double* val, const double* x,
                       std::vector<long double>& y, double alpha) {
    for (index_t i = 0; i < p.rows; ++i) {
      const long double xi = alpha * static_cast<long double>(x[i]);
      if (xi == 0.0L) continue;
      for (index_t k = p.row_ptr[size_t(i)]; k < p.row_ptr[size_t(i) + 1]; ++k)
        y[size_t(p.col_ind[size_t(k)])] += static_cast<long double>(val[k]) * xi;
    }
  };

  for (index_t i = 0; i < dm.n_u; ++i)
    xu[size_t(i)] = static_cast<long double>(sys.r1u[size_t(i)]) +
                    (sys.sigma_u[size_t(i)] + sys.delta_w) * step.pu[size_t(i)];

  for (index_t b = 0; b < dm.N; ++b) {
    std::fill(tx.begin(), tx.end(), 0.0L);
    pat_acc(d.plan.w_split.xx, d.wxx.col(b), step.px.col(b), tx, 1.0);
    pat_acc(d.plan.w_split.xu, d.wxu.col(b), step.pu.data(), tx, 1.0);
    pat_acc_t(d.plan.g_split.x_pat, d.gx.col(b), step.py.col(b), tx, 1.0);
    pat_acc_t(d.plan.h_split.x_pat, d.hx.col(b), step.pz.col(b), tx, 1.0);
    for (index_t i = 0; i < dm.n_x; ++i)
      out.r1x(i, b) = double(tx[size_t(i)] +
                             (sys.sigma_x(i, b) + sys.delta_w) * step.px(i, b) +
                             sys.r1x(i, b));

    { // u-row contributions of this block
      std::vector<long double> tu(static_cast<size_t>(dm.n_u), 0.0L);
      const auto& wxu = d.plan.w_split.xu;
      for (index_t i = 0; i < wxu.rows; ++i)
        for (index_t k = wxu.row_ptr[size_t(i)]; k < wxu.row_ptr[size_t(i) + 1]; ++k)
          tu[size_t(wxu.col_ind[size_t(k)])] +=
              static_cast<long double>(d.wxu(k, b)) * step.px(i, b);
      pat_acc(d.plan.w_split.uu, d.wuu.col(b), step.pu.data(), tu, 1.0);
      pat_acc_t(d.plan.g_split.u_pat, d.gu.col(b), step.py.col(b), tu, 1.0);
      pat_acc_t(d.plan.h_split.u_pat, d.hu.col(b), step.pz.col(b), tu, 1.0);
      for (index_t i = 0; i < dm.n_u; ++i) xu[size_t(i)] += tu[size_t(i)];
    }

    for (index_t i = 0; i < dm.m; ++i)
      out.r2(i, b) = double(static_cast<long double>(sys.sigma_s(i, b)) * step.ps(i, b) +
                            step.pz(i, b) + sys.r2(i, b));

    std::fill(tx.begin(), tx.end(), 0.0L);
    pat_acc(d.plan.g_split.x_pat, d.gx.col(b), step.px.col(b), tx, 1.0);
    pat_acc(d.plan.g_split.u_pat, d.gu.col(b), step.pu.data(), tx, 1.0);
    for (index_t i = 0; i < dm.n_x; ++i)
      out.r3(i, b) = double(tx[size_t(i)] - sys.delta_c * step.py(i, b) + sys.r3(i, b));

    std::fill(tm.begin(), tm.end(), 0.0L);
    pat_acc(d.plan.h_split.x_pat, d.hx.col(b), step.px.col(b), tm, 1.0);
    pat_acc(d.plan.h_split.u_pat, d.hu.col(b), step.pu.data(), tm, 1.0);
    for (index_t i = 0; i < dm.m; ++i)
      out.r4(i, b) = double(tm[size_t(i)] + step.ps(i, b) - sys.delta_c * step.pz(i, b) +
                            sys.r4(i, b));
  }
  for (index_t i = 0; i < dm.n_u; ++i) out.r1u[size_t(i)] = double(xu[size_t(i)]);

  const double scale = std::max({1.0, inf_norm(sys.r1x), inf_norm(sys.r1u), inf_norm(sys.r2),
                                 inf_norm(sys.r3), inf_norm(sys.r4)});
  out.rel = std::max({inf_norm(out.r1x), inf_norm(out.r1u), inf_norm(out.r2),
                      inf_norm(out.r3), inf_norm(out.r4)}) /
            scale;
  return out;
}

// Re-condense only the right-hand side of `c` from residual row vectors.
void substitute_rhs(CondensedSystem& c, const AugResVec& rho) {
  const BlockDims& dm = c.nlp->dims;
  const DerivativeBundle& d = *c.d;
  c.r2 = rho.r2;
  c.r4 = rho.r4;
  c.rhat1 = Matrix(dm.n_x, dm.N);
  c.rhat2 = rho.r1u;
  c.rhat3 = rho.r3;
  Vector t(static_cast<size_t>(dm.m));
  for (index_t b = 0; b < dm.N; ++b) {
    for (index_t i = 0; i < dm.m; ++i)
      t[size_t(i)] = c.sigma_s(i, b) * rho.r4(i, b) - rho.r2(i, b);
    std::copy(rho.r1x.col(b), rho.r1x.col(b) + dm.n_x, c.rhat1.col(b));
    pat_gaxpy_t(d.plan.h_split.x_pat, d.hx.col(b), t.data(), c.rhat1.col(b));
    pat_gaxpy_t(d.plan.h_split.u_pat, d.hu.col(b), t.data(), c.rhat2.data());
  }
}

void add_step(Step& a, const Step& q, double coeff) {
  for (size_t k = 0; k < a.px.size(); ++k) a.px.data()[k] += coeff * q.px.data()[k];
  for (size_t k = 0; k < a.pu.size(); ++k) a.pu[k] += coeff * q.pu[k];
  for (size_t k = 0; k < a.ps.size(); ++k) a.ps.data()[k] += coeff * q.ps.data()[k];
  for (size_t k = 0; k < a.py.size(); ++k) a.py.data()[k] += coeff * q.py.data()[k];
  for (size_t k = 0; k < a.pz.size(); ++k) a.pz.data()[k] += coeff * q.pz.data()[k];
}

// Local reduction of one contiguous group [lo, hi): Khat^{lo:hi} = Z' K Z and
// the per-block rhs contributions, combined over blocks with the fixed tree
// in deterministic mode.
GroupReduce reduce_group(const CondensedSystem& sys, const BlockDiagFactor& facts, index_t lo,
                         index_t hi, index_t n_batch, bool deterministic) {
  const BlockDims& dm = sys.nlp->dims;
  const DerivativeBundle& d = *sys.d;
  const index_t n_x = dm.n_x, n_u = dm.n_u, M = hi - lo;
  const double dw = sys.delta_w;
  const auto& gu_p = d.plan.g_split.u_pat;

  GroupReduce res;
  res.khat = Matrix(n_u, n_u);
  res.rhs.assign(size_t(n_u), 0.0);
  ReduceWorkspace ws(M, n_x, n_u, n_batch);
  res.workspace_elements = ws.elements();

  for (index_t j0 = 0; j0 < n_u; j0 += n_batch) {
    const index_t w = std::min<index_t>(n_batch, n_u - j0);

    // Step 1: T_x = -G_x^{-1} (G_u V), V the Cartesian columns [j0, j0+w).
    ws.T_x.set_zero();
    for (index_t b = lo; b < hi; ++b) {
      const double* gu = d.gu.col(b);
      const index_t off = (b - lo) * n_x;
      for (index_t i = 0; i < gu_p.rows; ++i)
        for (index_t k = gu_p.row_ptr[size_t(i)]; k < gu_p.row_ptr[size_t(i) + 1]; ++k) {
          const index_t c = gu_p.col_ind[size_t(k)];
          if (c >= j0 && c < j0 + w) ws.T_x(off + i, c - j0) += gu[k];
        }
    }
    res.counters.spmm += 1;
    facts.solve(ws.T_x, false, &res.counters, w);
    for (index_t j = 0; j < w; ++j) {
      double* col = ws.T_x.col(j);
      for (index_t i = 0; i < M * n_x; ++i) col[i] = -col[i];
    }

    // Step 2: L_x = Kxx~ T_x + Kxu V (state rows of K [T_x; V]).
    for (index_t j = 0; j < w; ++j) std::fill(ws.L_x.col(j), ws.L_x.col(j) + M * n_x, 0.0);
    for (index_t b = lo; b < hi; ++b) {
      const index_t off = (b - lo) * n_x;
      for (index_t j = 0; j < w; ++j) {
        pat_gaxpy(sys.kxx_p, sys.kxx.col(b), ws.T_x.col(j) + off, ws.L_x.col(j) + off);
        for (index_t i = 0; i < n_x; ++i)
          ws.L_x(off + i, j) += (sys.sigma_x(i, b) + dw) * ws.T_x(off + i, j);
      }
      // + Kxu V: tile columns of kxu
      for (index_t i = 0; i < sys.kxu_p.rows; ++i)
        for (index_t k = sys.kxu_p.row_ptr[size_t(i)]; k < sys.kxu_p.row_ptr[size_t(i) + 1];
             ++k) {
          const index_t c = sys.kxu_p.col_ind[size_t(k)];
          if (c >= j0 && c < j0 + w) ws.L_x(off + i, c - j0) += sys.kxu(k, b);
        }
    }
    res.counters.spmm += 1;

    // Step 3: Y = G_x^{-T} L_x, then per-block slices
    //   Khat_tile^b = Kxu^b' T_x^b + Kuu^b V - Gu^b' Y^b.
    facts.solve(ws.L_x, true, &res.counters, w);
    res.counters.spmm += 1;

    auto block_slice = [&](index_t b) {
      const index_t off = (b - lo) * n_x;
      Matrix slice(n_u, w);
      for (index_t j = 0; j < w; ++j) {
        std::fill(ws.L_u.col(j), ws.L_u.col(j) + n_u, 0.0);
        pat_gaxpy_t(sys.kxu_p, sys.kxu.col(b), ws.T_x.col(j) + off, ws.L_u.col(j));
        pat_gaxpy_t(gu_p, d.gu.col(b), ws.L_x.col(j) + off, ws.L_u.col(j), -1.0);
      }
      for (index_t i = 0; i < sys.kuu_p.rows; ++i)
        for (index_t k = sys.kuu_p.row_ptr[size_t(i)]; k < sys.kuu_p.row_ptr[size_t(i) + 1];
             ++k) {
          const index_t c = sys.kuu_p.col_ind[size_t(k)];
          if (c >= j0 && c < j0 + w) ws.L_u(i, c - j0) += sys.kuu(k, b);
        }
      for (index_t j = 0; j < w; ++j)
        std::copy(ws.L_u.col(j), ws.L_u.col(j) + n_u, slice.col(j));
      return slice;
    };
    auto add = [](Matrix a, Matrix b) {
      for (size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
      return a;
    };
    Matrix tile = deterministic ? range_tree<Matrix>(lo, hi, block_slice, add)
                                : [&] {
                                    Matrix acc = block_slice(lo);
                                    for (index_t b = lo + 1; b < hi; ++b)
                                      acc = add(std::move(acc), block_slice(b));
                                    return acc;
                                  }();
    for (index_t j = 0; j < w; ++j)
      std::copy(tile.col(j), tile.col(j) + n_u, res.khat.col(j0 + j));
    res.counters.tiles += 1;
  }

  res.rhs = reduce_rhs_group(sys, facts, lo, hi, deterministic);
  return res;
}

ReducedSystem finish_reduce(const CondensedSystem& sys, std::vector<GroupReduce> groups,
                            index_t n_batch, ReduceOrder order) {
  ReducedSystem red;
  red.n_batch = n_batch;
  std::vector<Matrix> kparts;
  std::vector<Vector> rparts;
  for (auto& g : groups) {
    kparts.push_back(std::move(g.khat));
    rparts.push_back(std::move(g.rhs));
    red.workspace_elements += g.workspace_elements;
    red.counters += g.counters;
  }
  red.khat = all_reduce_sum(std::move(kparts), order);
  red.rhs = all_reduce_sum(std::move(rparts), order);
  const index_t n_u = sys.nlp->dims.n_u;
  for (index_t i = 0; i < n_u; ++i) {
    red.khat(i, i) += sys.sigma_u[size_t(i)] + sys.delta_w;
    red.rhs[size_t(i)] -= sys.rhat2[size_t(i)];
  }
  return red;
}

}  // namespace

ReducedSystem reduce(const CondensedSystem& sys, const BlockDiagFactor& facts, index_t n_batch) {
  std::vector<GroupReduce> groups;
  groups.push_back(reduce_group(sys, facts, 0, sys.nlp->dims.N, n_batch, true));
  return finish_reduce(sys, std::move(groups), n_batch, ReduceOrder::deterministic);
}

ReducedSystem reduce(const CondensedSystem& sys, const Partition& part,
                     const std::vector<BlockDiagFactor>& group_facts, index_t n_batch,
                     Executor& exec) {
  auto groups = exec.map_blocks(part, [&](index_t g, index_t lo, index_t hi) {
    return reduce_group(sys, group_facts[size_t(g)], lo, hi, n_batch, exec.deterministic());
  });
  return finish_reduce(sys, std::move(groups), n_batch, exec.mode().order);
}

void recover_state_adjoint(const CondensedSystem& sys, const Partition& part,
                           const std::vector<BlockDiagFactor>& group_facts, Step& step) {
  const BlockDims& dm = sys.nlp->dims;
  const DerivativeBundle& d = *sys.d;
  step.px = Matrix(dm.n_x, dm.N);
  step.py = Matrix(dm.n_x, dm.N);
  for (index_t g = 0; g < part.groups(); ++g) {
    auto [lo, hi] = part.ranges[size_t(g)];
    for (index_t b = lo; b < hi; ++b) {
      Matrix v(dm.n_x, 1);
      std::copy(sys.rhat3.col(b), sys.rhat3.col(b) + dm.n_x, v.col(0));
      pat_gaxpy(d.plan.g_split.u_pat, d.gu.col(b), step.pu.data(), v.col(0));
      group_facts[size_t(g)].solve_block(b - lo, v, false);
      for (index_t i = 0; i < dm.n_x; ++i) step.px(i, b) = -v(i, 0);

      Matrix t(dm.n_x, 1);
      std::copy(sys.rhat1.col(b), sys.rhat1.col(b) + dm.n_x, t.col(0));
      pat_gaxpy(sys.kxx_p, sys.kxx.col(b), step.px.col(b), t.col(0));
      for (index_t i = 0; i < dm.n_x; ++i)
        t(i, 0) += (sys.sigma_x(i, b) + sys.delta_w) * step.px(i, b);
      pat_gaxpy(sys.kxu_p, sys.kxu.col(b), step.pu.data(), t.col(0));
      group_facts[size_t(g)].solve_block(b - lo, t, true);
      for (index_t i = 0; i < dm.n_x; ++i) step.py(i, b) = -t(i, 0);
    }
  }
}

void recover_state_adjoint(const CondensedSystem& sys, const BlockDiagFactor& facts, Step& step) {
  const BlockDims& dm = sys.nlp->dims;
  const DerivativeBundle& d = *sys.d;
  step.px = Matrix(dm.n_x, dm.N);
  step.py = Matrix(dm.n_x, dm.N);
  for (index_t b = 0; b < dm.N; ++b) {
    Matrix v(dm.n_x, 1);
    std::copy(sys.rhat3.col(b), sys.rhat3.col(b) + dm.n_x, v.col(0));
    pat_gaxpy(d.plan.g_split.u_pat, d.gu.col(b), step.pu.data(), v.col(0));
    facts.solve_block(b, v, false);
    for (index_t i = 0; i < dm.n_x; ++i) step.px(i, b) = -v(i, 0);

    Matrix t(dm.n_x, 1);
    std::copy(sys.rhat1.col(b), sys.rhat1.col(b) + dm.n_x, t.col(0));
    pat_gaxpy(sys.kxx_p, sys.kxx.col(b), step.px.col(b), t.col(0));
    for (index_t i = 0; i < dm.n_x; ++i)
      t(i, 0) += (sys.sigma_x(i, b) + sys.delta_w) * step.px(i, b);
    pat_gaxpy(sys.kxu_p, sys.kxu.col(b), step.pu.data(), t.col(0));
    facts.solve_block(b, t, true);
    for (index_t i = 0; i < dm.n_x; ++i) step.py(i, b) = -t(i, 0);
  }
}

ArrowheadBlocks make_arrowhead(const CondensedSystem& sys) {
  const BlockDims& dm = sys.nlp->dims;
  const DerivativeBundle& d = *sys.d;
  const index_t n_x = dm.n_x, n_u = dm.n_u;
  ArrowheadBlocks ab;
  ab.a0 = Matrix(n_u, n_u);
  for (index_t i = 0; i < sys.kuu_p.rows; ++i)
    for (index_t k = sys.kuu_p.row_ptr[size_t(i)]; k < sys.kuu_p.row_ptr[size_t(i) + 1]; ++k)
      for (index_t b = 0; b < dm.N; ++b)
        ab.a0(i, sys.kuu_p.col_ind[size_t(k)]) += sys.kuu(k, b);
  for (index_t i = 0; i < n_u; ++i) ab.a0(i, i) += sys.sigma_u[size_t(i)] + sys.delta_w;

  for (index_t b = 0; b < dm.N; ++b) {
    Matrix a(2 * n_x, 2 * n_x);
    for (index_t i = 0; i < sys.kxx_p.rows; ++i)
      for (index_t k = sys.kxx_p.row_ptr[size_t(i)]; k < sys.kxx_p.row_ptr[size_t(i) + 1]; ++k)
        a(i, sys.kxx_p.col_ind[size_t(k)]) += sys.kxx(k, b);
    for (index_t i = 0; i < n_x; ++i) a(i, i) += sys.sigma_x(i, b) + sys.delta_w;
    const auto& gxp = d.plan.g_split.x_pat;
    for (index_t i = 0; i < gxp.rows; ++i)
      for (index_t k = gxp.row_ptr[size_t(i)]; k < gxp.row_ptr[size_t(i) + 1]; ++k) {
        const index_t c = gxp.col_ind[size_t(k)];
        a(n_x + i, c) += d.gx(k, b);
        a(c, n_x + i) += d.gx(k, b);
      }
    ab.ai.push_back(std::move(a));

    Matrix bb(n_u, 2 * n_x);
    for (index_t i = 0; i < sys.kxu_p.rows; ++i)
      for (index_t k = sys.kxu_p.row_ptr[size_t(i)]; k < sys.kxu_p.row_ptr[size_t(i) + 1]; ++k)
        bb(sys.kxu_p.col_ind[size_t(k)], i) += sys.kxu(k, b);
    const auto& gup = d.plan.g_split.u_pat;
    for (index_t i = 0; i < gup.rows; ++i)
      for (index_t k = gup.row_ptr[size_t(i)]; k < gup.row_ptr[size_t(i) + 1]; ++k)
        bb(gup.col_ind[size_t(k)], n_x + i) += d.gu(k, b);
    ab.bi.push_back(std::move(bb));
  }
  return ab;
}

Matrix schur_oracle(const ArrowheadBlocks& blocks) {
  const index_t n_u = blocks.a0.rows();
  Matrix s = blocks.a0;
  for (size_t b = 0; b < blocks.ai.size(); ++b) {
    const Matrix& bi = blocks.bi[b];
    const index_t na = blocks.ai[b].rows();
    Matrix rhs(na, n_u);
    for (index_t i = 0; i < na; ++i)
      for (index_t j = 0; j < n_u; ++j) rhs(i, j) = bi(j, i);
    DenseSymFactor f = factor_dense_sym(blocks.ai[b]);
    if (f.zero() > 0) throw LinearSolveError("schur_oracle: singular A_i block");
    f.solve(rhs);
    for (index_t i = 0; i < n_u; ++i)
      for (index_t j = 0; j < n_u; ++j) {
        double acc = 0;
        for (index_t k = 0; k < na; ++k) acc += bi(i, k) * rhs(k, j);
        s(i, j) -= acc;
      }
  }
  return s;
}

namespace {

// Global sparse assembly of the augmented system in the order
// [x blocks, u, s blocks, y blocks, z blocks].
SparseMatrix build_augmented_matrix(const AugmentedSystem& s) {
  const BlockNlp& nlp = *s.nlp;
  const DerivativeBundle& d = *s.d;
  const BlockDims& dm = nlp.dims;
  const index_t N = dm.N, n_x = dm.n_x, n_u = dm.n_u, m = dm.m;
  const count_t off_u = count_t(N) * n_x;
  const count_t off_s = off_u + n_u;
  const count_t off_y = off_s + count_t(N) * m;
  const count_t off_z = off_y + count_t(N) * n_x;
  const count_t dim = off_z + count_t(N) * m;

  std::vector<std::pair<std::pair<index_t, index_t>, double>> t;
  auto put = [&](count_t i, count_t j, double v) {
    t.push_back({{index_t(i), index_t(j)}, v});
  };

  for (index_t b = 0; b < N; ++b) {
    const count_t bx = count_t(b) * n_x, bs = off_s + count_t(b) * m,
                  by = off_y + count_t(b) * n_x, bz = off_z + count_t(b) * m;
    const auto& wxx = d.plan.w_split.xx;
    for (index_t i = 0; i < wxx.rows; ++i)
      for (index_t k = wxx.row_ptr[size_t(i)]; k < wxx.row_ptr[size_t(i) + 1]; ++k)
        put(bx + i, bx + wxx.col_ind[size_t(k)], d.wxx(k, b));
    const auto& wxu = d.plan.w_split.xu;
    for (index_t i = 0; i < wxu.rows; ++i)
      for (index_t k = wxu.row_ptr[size_t(i)]; k < wxu.row_ptr[size_t(i) + 1]; ++k) {
        put(bx + i, off_u + wxu.col_ind[size_t(k)], d.wxu(k, b));
        put(off_u + wxu.col_ind[size_t(k)], bx + i, d.wxu(k, b));
      }
    const auto& wuu = d.plan.w_split.uu;
    for (index_t i = 0; i < wuu.rows; ++i)
      for (index_t k = wuu.row_ptr[size_t(i)]; k < wuu.row_ptr[size_t(i) + 1]; ++k)
        put(off_u + i, off_u + wuu.col_ind[size_t(k)], d.wuu(k, b));
    for (index_t i = 0; i < n_x; ++i) put(bx + i, bx + i, s.sigma_x(i, b) + s.delta_w);
    for (index_t i = 0; i < m; ++i) put(bs + i, bs + i, s.sigma_s(i, b));

    const auto& gx = d.plan.g_split.x_pat;
    for (index_t i = 0; i < gx.rows; ++i)
      for (index_t k = gx.row_ptr[size_t(i)]; k < gx.row_ptr[size_t(i) + 1]; ++k) {
        put(by + i, bx + gx.col_ind[size_t(k)], d.gx(k, b));
        put(bx + gx.col_ind[size_t(k)], by + i, d.gx(k, b));
      }
    const auto& gu = d.plan.g_split.u_pat;
    for (index_t i = 0; i < gu.rows; ++i)
      for (index_t k = gu.row_ptr[size_t(i)]; k < gu.row_ptr[size_t(i) + 1]; ++k) {
        put(by + i, off_u + gu.col_ind[size_t(k)], d.gu(k, b));
        put(off_u + gu.col_ind[size_t(k)], by + i, d.gu(k, b));
      }
    const auto& hx = d.plan.h_split.x_pat;
    for (index_t i = 0; i < hx.rows; ++i)
      for (index_t k = hx.row_ptr[size_t(i)]; k < hx.row_ptr[size_t(i) + 1]; ++k) {
        put(bz + i, bx + hx.col_ind[size_t(k)], d.hx(k, b));
        put(bx + hx.col_ind[size_t(k)], bz + i, d.hx(k, b));
      }
    const auto& hu = d.plan.h_split.u_pat;
    for (index_t i = 0; i < hu.rows; ++i)
      for (index_t k = hu.row_ptr[size_t(i)]; k < hu.row_ptr[size_t(i) + 1]; ++k) {
        put(bz + i, off_u + hu.col_ind[size_t(k)], d.hu(k, b));
        put(off_u + hu.col_ind[size_t(k)], bz + i, d.hu(k, b));
      }
    for (index_t i = 0; i < m; ++i) {
      put(bs + i, bz + i, 1.0);
      put(bz + i, bs + i, 1.0);
    }
    for (index_t i = 0; i < n_x; ++i) put(by + i, by + i, -s.delta_c);
    for (index_t i = 0; i < m; ++i) put(bz + i, bz + i, -s.delta_c);
  }
  for (index_t i = 0; i < n_u; ++i) put(off_u + i, off_u + i, s.sigma_u[size_t(i)] + s.delta_w);

  return SparseMatrix::from_triplets(index_t(dim), index_t(dim), std::move(t));
}

Vector augmented_rhs(const AugmentedSystem& s) {
  const BlockDims& dm = s.nlp->dims;
  const index_t N = dm.N, n_x = dm.n_x, n_u = dm.n_u, m = dm.m;
  const count_t off_u = count_t(N) * n_x;
  const count_t off_s = off_u + n_u;
  const count_t off_y = off_s + count_t(N) * m;
  const count_t off_z = off_y + count_t(N) * n_x;
  Vector r(size_t(off_z + count_t(N) * m));
  for (index_t b = 0; b < N; ++b)
    for (index_t i = 0; i < n_x; ++i) r[size_t(b * n_x + i)] = s.r1x(i, b);
  for (index_t i = 0; i < n_u; ++i) r[size_t(off_u + i)] = s.r1u[size_t(i)];
  for (index_t b = 0; b < N; ++b)
    for (index_t i = 0; i < m; ++i) r[size_t(off_s + b * m + i)] = s.r2(i, b);
  for (index_t b = 0; b < N; ++b)
    for (index_t i = 0; i < n_x; ++i) r[size_t(off_y + b * n_x + i)] = s.r3(i, b);
  for (index_t b = 0; b < N; ++b)
    for (index_t i = 0; i < m; ++i) r[size_t(off_z + b * m + i)] = s.r4(i, b);
  return r;
}

Step unpack_augmented(const AugmentedSystem& s, const Vector& p) {
  const BlockDims& dm = s.nlp->dims;
  const index_t N = dm.N, n_x = dm.n_x, n_u = dm.n_u, m = dm.m;
  const count_t off_u = count_t(N) * n_x;
  const count_t off_s = off_u + n_u;
  const count_t off_y = off_s + count_t(N) * m;
  const count_t off_z = off_y + count_t(N) * n_x;
  Step st;
  st.px = Matrix(n_x, N);
  st.pu.assign(size_t(n_u), 0.0);
  st.ps = Matrix(m, N);
  st.py = Matrix(n_x, N);
  st.pz = Matrix(m, N);
  for (index_t b = 0; b < N; ++b) {
    for (index_t i = 0; i < n_x; ++i) {
      st.px(i, b) = p[size_t(b * n_x + i)];
      st.py(i, b) = p[size_t(off_y + b * n_x + i)];
    }
    for (index_t i = 0; i < m; ++i) {
      st.ps(i, b) = p[size_t(off_s + b * m + i)];
      st.pz(i, b) = p[size_t(off_z + b * m + i)];
    }
  }
  for (index_t i = 0; i < n_u; ++i) st.pu[size_t(i)] = p[size_t(off_u + i)];
  return st;
}

template <typename Attempt>
Step inertia_loop(const RegSchedule& reg, double mu, double& delta_w_last, StepInfo* info,
                  Attempt&& attempt) {
  bool saw_zero = false;
  std::optional<Step> res = attempt(0.0, 0.0, &saw_zero);
  double dw = 0, dc = 0;
  int corr = 0;
  if (!res) {
    dc = saw_zero ? reg.delta_c_bar * std::pow(mu, reg.mu_power) : 0.0;
    dw = (delta_w_last == 0) ? reg.delta_w0
                             : std::max(reg.delta_w_min, delta_w_last * reg.kappa_minus);
    for (;;) {
      ++corr;
      res = attempt(dw, dc, &saw_zero);
      if (res) {
        delta_w_last = dw;
        break;
      }
      if (saw_zero && dc == 0.0) dc = reg.delta_c_bar * std::pow(mu, reg.mu_power);
      dw *= (delta_w_last == 0) ? reg.kappa_plus_emergency : reg.kappa_plus;
      if (dw > reg.delta_w_max)
        throw LinearSolveError("inertia correction: regularization budget exhausted");
    }
  }
  if (info) {
    info->delta_w = dw;
    info->delta_c = dc;
    info->corrections = corr;
  }
  return std::move(*res);
}

}  // namespace

Step solve_augmented_once(const AugmentedSystem& sys) {
  SparseMatrix A = build_augmented_matrix(sys);
  SparseSymFactor f = factor_sparse_sym(A);
  Vector rhs = augmented_rhs(sys);
  for (double& v : rhs) v = -v;
  f.solve(rhs);
  return unpack_augmented(sys, rhs);
}

Step solve_augmented(AugmentedSystem& sys, const RegSchedule& reg, double& delta_w_last,
                     StepInfo* info) {
  const BlockDims& dm = sys.nlp->dims;
  const count_t n_pos = count_t(dm.N) * (dm.n_x + dm.m) + dm.n_u;
  const count_t n_neg = count_t(dm.N) * (dm.n_x + dm.m);
  // Near-zero pivots are perturbed toward the structural sign of their row,
  // so the reported inertia stays meaningful at any barrier conditioning.
  std::vector<int> signs(static_cast<size_t>(sys.dim()), 1);
  {
    const count_t dual_begin = count_t(dm.N) * (dm.n_x + dm.m) + dm.n_u;
    for (count_t i = dual_begin; i < sys.dim(); ++i) signs[size_t(i)] = -1;
  }
  int quality_rejections = 0;
  auto attempt = [&](double dw, double dc, bool* saw_zero) -> std::optional<Step> {
    sys.delta_w = dw;
    sys.delta_c = dc;
    SparseMatrix A = build_augmented_matrix(sys);
    SparseSymFactor f = SparseSymFactor::factor(A, SparseSymFactor::Options{}, &signs);
    const bool inertia_ok =
        f.positive() == n_pos && f.negative() == n_neg && f.zero() == 0;
    *saw_zero = f.zero() > 0;
    if (!inertia_ok) return std::nullopt;
    Vector rhs = augmented_rhs(sys);
    for (double& v : rhs) v = -v;
    const double rel = f.solve(rhs);
    // an unstable factorization gets two regularized retries, then the best
    // effort step goes to the globalization rather than escalating forever
    if (!(rel <= 1e-6) && quality_rejections < 2) {
      ++quality_rejections;
      *saw_zero = true;
      return std::nullopt;
    }
    return unpack_augmented(sys, rhs);
  };
  return inertia_loop(reg, sys.mu, delta_w_last, info, attempt);
}

namespace {

// Condensed global matrix in the order [x blocks, u, y blocks].
SparseMatrix build_condensed_matrix(const CondensedSystem& c) {
  const BlockDims& dm = c.nlp->dims;
  const DerivativeBundle& d = *c.d;
  const index_t N = dm.N, n_x = dm.n_x, n_u = dm.n_u;
  const count_t off_u = count_t(N) * n_x;
  const count_t off_y = off_u + n_u;
  const count_t dim = off_y + count_t(N) * n_x;

  std::vector<std::pair<std::pair<index_t, index_t>, double>> t;
  auto put = [&](count_t i, count_t j, double v) {
    t.push_back({{index_t(i), index_t(j)}, v});
  };
  for (index_t b = 0; b < N; ++b) {
    const count_t bx = count_t(b) * n_x, by = off_y + count_t(b) * n_x;
    for (index_t i = 0; i < c.kxx_p.rows; ++i)
      for (index_t k = c.kxx_p.row_ptr[size_t(i)]; k < c.kxx_p.row_ptr[size_t(i) + 1]; ++k)
        put(bx + i, bx + c.kxx_p.col_ind[size_t(k)], c.kxx(k, b));
    for (index_t i = 0; i < c.kxu_p.rows; ++i)
      for (index_t k = c.kxu_p.row_ptr[size_t(i)]; k < c.kxu_p.row_ptr[size_t(i) + 1]; ++k) {
        put(bx + i, off_u + c.kxu_p.col_ind[size_t(k)], c.kxu(k, b));
        put(off_u + c.kxu_p.col_ind[size_t(k)], bx + i, c.kxu(k, b));
      }
    for (index_t i = 0; i < c.kuu_p.rows; ++i)
      for (index_t k = c.kuu_p.row_ptr[size_t(i)]; k < c.kuu_p.row_ptr[size_t(i) + 1]; ++k)
        put(off_u + i, off_u + c.kuu_p.col_ind[size_t(k)], c.kuu(k, b));
    for (index_t i = 0; i < n_x; ++i) put(bx + i, bx + i, c.sigma_x(i, b) + c.delta_w);

    const auto& gx = d.plan.g_split.x_pat;
    for (index_t i = 0; i < gx.rows; ++i)
      for (index_t k = gx.row_ptr[size_t(i)]; k < gx.row_ptr[size_t(i) + 1]; ++k) {
        put(by + i, bx + gx.col_ind[size_t(k)], d.gx(k, b));
        put(bx + gx.col_ind[size_t(k)], by + i, d.gx(k, b));
      }
    const auto& gu = d.plan.g_split.u_pat;
    for (index_t i = 0; i < gu.rows; ++i)
      for (index_t k = gu.row_ptr[size_t(i)]; k < gu.row_ptr[size_t(i) + 1]; ++k) {
        put(by + i, off_u + gu.col_ind[size_t(k)], d.gu(k, b));
        put(off_u + gu.col_ind[size_t(k)], by + i, d.gu(k, b));
      }
    for (index_t i = 0; i < n_x; ++i) put(by + i, by + i, -c.delta_c);
  }
  for (index_t i = 0; i < n_u; ++i) put(off_u + i, off_u + i, c.sigma_u[size_t(i)] + c.delta_w);
  return SparseMatrix::from_triplets(index_t(dim), index_t(dim), std::move(t));
}

}  // namespace

Step solve_condensed(AugmentedSystem& sys, const CondenseWork& work, const RegSchedule& reg,
                     double& delta_w_last, StepInfo* info) {
  const BlockDims& dm = sys.nlp->dims;
  CondensedSystem c = condense(sys, work);
  const count_t n_pos = count_t(dm.N) * dm.n_x + dm.n_u;
  const count_t n_neg = count_t(dm.N) * dm.n_x;
  std::vector<int> signs(static_cast<size_t>(count_t(dm.N) * 2 * dm.n_x + dm.n_u), 1);
  for (count_t i = count_t(dm.N) * dm.n_x + dm.n_u; i < count_t(signs.size()); ++i)
    signs[size_t(i)] = -1;
  int quality_rejections = 0;
  auto attempt = [&](double dw, double dc, bool* saw_zero) -> std::optional<Step> {
    c.delta_w = dw;
    c.delta_c = dc;
    sys.delta_w = dw;
    sys.delta_c = dc;
    SparseMatrix A = build_condensed_matrix(c);
    SparseSymFactor f = SparseSymFactor::factor(A, SparseSymFactor::Options{}, &signs);
    const bool inertia_ok =
        f.positive() == n_pos && f.negative() == n_neg && f.zero() == 0;
    *saw_zero = f.zero() > 0;
    if (!inertia_ok) return std::nullopt;

    const count_t off_u = count_t(dm.N) * dm.n_x;
    const count_t off_y = off_u + dm.n_u;
    bool bad = false;
    auto solve_with = [&](const CondensedSystem& cc) {
      Vector rhs(size_t(off_y + count_t(dm.N) * dm.n_x));
      for (index_t b = 0; b < dm.N; ++b)
        for (index_t i = 0; i < dm.n_x; ++i) {
          rhs[size_t(b * dm.n_x + i)] = -cc.rhat1(i, b);
          rhs[size_t(off_y + b * dm.n_x + i)] = -cc.rhat3(i, b);
        }
      for (index_t i = 0; i < dm.n_u; ++i) rhs[size_t(off_u + i)] = -cc.rhat2[size_t(i)];
      const double rel = f.solve(rhs);
      if (!(rel <= 1e-6)) bad = true;
      Step st;
      st.px = Matrix(dm.n_x, dm.N);
      st.py = Matrix(dm.n_x, dm.N);
      st.pu.assign(size_t(dm.n_u), 0.0);
      for (index_t b = 0; b < dm.N; ++b)
        for (index_t i = 0; i < dm.n_x; ++i) {
          st.px(i, b) = rhs[size_t(b * dm.n_x + i)];
          st.py(i, b) = rhs[size_t(off_y + b * dm.n_x + i)];
        }
      for (index_t i = 0; i < dm.n_u; ++i) st.pu[size_t(i)] = rhs[size_t(off_u + i)];
      recover_slack_dual(cc, st);
      return st;
    };

    Step st = solve_with(c);
    if (bad && quality_rejections < 2) {
      ++quality_rejections;
      *saw_zero = true;
      return std::nullopt;
    }
    // refinement against the unreduced augmented system
    for (int round = 0; round < 3; ++round) {
      AugResVec rho = augmented_residual_vec(sys, st);
      if (rho.rel <= 1e-12) break;
      CondensedSystem cr = c;
      substitute_rhs(cr, rho);
      Step q = solve_with(cr);
      if (bad) break;
      add_step(st, q, 1.0);
    }
    return st;
  };
  Step st = inertia_loop(reg, sys.mu, delta_w_last, info, attempt);
  sys.delta_w = c.delta_w;
  sys.delta_c = c.delta_c;
  return st;
}

Step solve_reduced(AugmentedSystem& sys, const CondenseWork& work, const RegSchedule& reg,
                   double& delta_w_last, index_t n_batch, Executor& exec, const Partition& part,
                   StepInfo* info) {
  const BlockDims& dm = sys.nlp->dims;
  CondensedSystem c = condense(sys, work);

  std::vector<BlockDiagFactor> facts = exec.map_blocks(
      part, [&](index_t, index_t lo, index_t hi) { return factor_gx_range(c, lo, hi); });

  auto attempt = [&](double dw, double dc, bool* saw_zero) -> std::optional<Step> {
    c.delta_w = dw;
    c.delta_c = dc;  // never applied: the reduction assumes exact G rows
    sys.delta_w = dw;
    sys.delta_c = 0;
    ReducedSystem red = reduce(c, part, facts, n_batch, exec);
    if (info) {
      info->counters += red.counters;
    }
    // the same near-zero-curvature forgiveness the sparse factorizations
    // apply through their pivot floor; refinement removes the shift's effect
    {
      const double shift = 1e-13 * std::max(1.0, inf_norm(red.khat));
      for (index_t i = 0; i < red.khat.rows(); ++i) red.khat(i, i) += shift;
    }
    DenseSymFactor f = factor_dense_sym(red.khat);
    *saw_zero = f.zero() > 0;
    if (f.negative() > 0 || f.zero() > 0) return std::nullopt;

    auto solve_with = [&](const CondensedSystem& cc, const Vector& rhs_sum) {
      Vector pu = rhs_sum;
      for (index_t i = 0; i < dm.n_u; ++i) pu[size_t(i)] -= cc.rhat2[size_t(i)];
      f.solve(pu);
      Step st;
      st.pu = std::move(pu);
      recover_state_adjoint(cc, part, facts, st);
      recover_slack_dual(cc, st);
      return st;
    };
    Vector first_sum = red.rhs;  // already includes -rhat2
    for (index_t i = 0; i < dm.n_u; ++i) first_sum[size_t(i)] += c.rhat2[size_t(i)];
    Step st = solve_with(c, first_sum);

    // refinement against the unreduced augmented system
    for (int round = 0; round < 3; ++round) {
      AugResVec rho = augmented_residual_vec(sys, st);
      if (rho.rel <= 1e-12) break;
      CondensedSystem cr = c;
      substitute_rhs(cr, rho);
      auto parts = exec.map_blocks(part, [&](index_t g, index_t lo, index_t hi) {
        return reduce_rhs_group(cr, facts[size_t(g)], lo, hi, exec.deterministic());
      });
      Vector rhs_sum = all_reduce_sum(std::move(parts), exec.mode().order);
      Step q = solve_with(cr, rhs_sum);
      add_step(st, q, 1.0);
    }
    return st;
  };
  Step st = inertia_loop(reg, sys.mu, delta_w_last, info, attempt);
  sys.delta_w = c.delta_w;
  sys.delta_c = 0;
  return st;
}

double augmented_step_residual(const AugmentedSystem& sys, const Step& step) {
  const BlockNlp& nlp = *sys.nlp;
  const DerivativeBundle& d = *sys.d;
  const BlockDims& dm = nlp.dims;

  double rnorm = 0;
  auto note = [&](double v) { rnorm = std::max(rnorm, std::abs(v)); };

  Vector row_u(size_t(dm.n_u));
  for (index_t i = 0; i < dm.n_u; ++i)
    row_u[size_t(i)] =
        sys.r1u[size_t(i)] + (sys.sigma_u[size_t(i)] + sys.delta_w) * step.pu[size_t(i)];

  Vector tx(size_t(dm.n_x)), tm(size_t(dm.m));
  for (index_t b = 0; b < dm.N; ++b) {
    // row 1 (x block): (W_xx + Sigma_x + dw) p_x + W_xu p_u + G_x' p_y + H_x' p_z + r1x
    std::fill(tx.begin(), tx.end(), 0.0);
    pat_gaxpy(d.plan.w_split.xx, d.wxx.col(b), step.px.col(b), tx.data());
    pat_gaxpy(d.plan.w_split.xu, d.wxu.col(b), step.pu.data(), tx.data());
    pat_gaxpy_t(d.plan.g_split.x_pat, d.gx.col(b), step.py.col(b), tx.data());
    pat_gaxpy_t(d.plan.h_split.x_pat, d.hx.col(b), step.pz.col(b), tx.data());
    for (index_t i = 0; i < dm.n_x; ++i)
      note(tx[size_t(i)] + (sys.sigma_x(i, b) + sys.delta_w) * step.px(i, b) + sys.r1x(i, b));

    // row 1 (u part), accumulated across blocks
    {
      Vector tu(size_t(dm.n_u), 0.0);
      for (index_t i = 0; i < d.plan.w_split.xu.rows; ++i)
        for (index_t k = d.plan.w_split.xu.row_ptr[size_t(i)];
             k < d.plan.w_split.xu.row_ptr[size_t(i) + 1]; ++k)
          tu[size_t(d.plan.w_split.xu.col_ind[size_t(k)])] += d.wxu(k, b) * step.px(i, b);
      pat_gaxpy(d.plan.w_split.uu, d.wuu.col(b), step.pu.data(), tu.data());
      pat_gaxpy_t(d.plan.g_split.u_pat, d.gu.col(b), step.py.col(b), tu.data());
      pat_gaxpy_t(d.plan.h_split.u_pat, d.hu.col(b), step.pz.col(b), tu.data());
      for (index_t i = 0; i < dm.n_u; ++i) row_u[size_t(i)] += tu[size_t(i)];
    }

    // row 2: Sigma_s p_s + p_z + r2
    for (index_t i = 0; i < dm.m; ++i)
      note(sys.sigma_s(i, b) * step.ps(i, b) + step.pz(i, b) + sys.r2(i, b));

    // row 3: G p_d - dc p_y + r3
    std::fill(tx.begin(), tx.end(), 0.0);
    pat_gaxpy(d.plan.g_split.x_pat, d.gx.col(b), step.px.col(b), tx.data());
    pat_gaxpy(d.plan.g_split.u_pat, d.gu.col(b), step.pu.data(), tx.data());
    for (index_t i = 0; i < dm.n_x; ++i)
      note(tx[size_t(i)] - sys.delta_c * step.py(i, b) + sys.r3(i, b));

    // row 4: H p_d + p_s - dc p_z + r4
    std::fill(tm.begin(), tm.end(), 0.0);
    pat_gaxpy(d.plan.h_split.x_pat, d.hx.col(b), step.px.col(b), tm.data());
    pat_gaxpy(d.plan.h_split.u_pat, d.hu.col(b), step.pu.data(), tm.data());
    for (index_t i = 0; i < dm.m; ++i)
      note(tm[size_t(i)] + step.ps(i, b) - sys.delta_c * step.pz(i, b) + sys.r4(i, b));
  }
  for (index_t i = 0; i < dm.n_u; ++i) note(row_u[size_t(i)]);

  double scale = std::max({1.0, inf_norm(sys.r1x), inf_norm(sys.r1u), inf_norm(sys.r2),
                           inf_norm(sys.r3), inf_norm(sys.r4)});
  return rnorm / scale;
}

}  // namespace blockipm
