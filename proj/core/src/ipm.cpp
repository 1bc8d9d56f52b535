#include "blockipm/ipm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace blockipm {

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "Optimal";
    case SolveStatus::max_iter: return "MaxIter";
    case SolveStatus::infeasible: return "Infeasible";
    case SolveStatus::linear_solve_failure: return "LinearSolveFailure";
  }
  return "?";
}

double update_mu(double mu, const IpmOptions& opts) {
  return std::max(opts.tol / 10.0,
                  std::min(opts.kappa_mu * mu, std::pow(mu, opts.theta_mu)));
}

namespace {

double project_start(double start, double lo, double up) {
  if (std::isfinite(lo) && std::isfinite(up)) {
    const double span = up - lo;
    return std::max(lo + 0.1 * span, std::min(up - 0.1 * span, start));
  }
  if (std::isfinite(lo)) return std::max(start, lo + 0.1 * std::max(1.0, std::abs(lo)));
  if (std::isfinite(up)) return std::min(start, up - 0.1 * std::max(1.0, std::abs(up)));
  return start;
}

double project_slack(double target, double lo, double up) {
  double m_lo = std::isfinite(lo) ? 1e-2 * std::max(1.0, std::abs(lo)) : 0.0;
  double m_up = std::isfinite(up) ? 1e-2 * std::max(1.0, std::abs(up)) : 0.0;
  if (std::isfinite(lo) && std::isfinite(up)) {
    const double span = up - lo;
    m_lo = std::min(m_lo, 0.45 * span);
    m_up = std::min(m_up, 0.45 * span);
  }
  double v = target;
  if (std::isfinite(up)) v = std::min(v, up - m_up);
  if (std::isfinite(lo)) v = std::max(v, lo + m_lo);
  return v;
}

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

Iterate initial_iterate(const BlockNlp& nlp, const IpmOptions& opts) {
  nlp.validate();
  const BlockDims& d = nlp.dims;
  Iterate it = Iterate::zeros(d);

  for (index_t i = 0; i < d.n_x; ++i) {
    const double start = nlp.x_start.empty() ? 0.0 : nlp.x_start[size_t(i)];
    const double v =
        project_start(start, nlp.x_bounds.lower[size_t(i)], nlp.x_bounds.upper[size_t(i)]);
    for (index_t b = 0; b < d.N; ++b) it.x(i, b) = v;
  }
  for (index_t i = 0; i < d.n_u; ++i) {
    const double start = nlp.u_start.empty() ? 0.0 : nlp.u_start[size_t(i)];
    it.u[size_t(i)] =
        project_start(start, nlp.u_bounds.lower[size_t(i)], nlp.u_bounds.upper[size_t(i)]);
  }

  // Slacks track -h at the start point, then are pushed inside their bounds.
  if (d.m > 0) {
    AdPlan plan;  // batch_eval needs no colorings; a zero-lane workspace suffices
    AdWorkspace ws(nlp, plan, d.N);
    Vector f;
    Matrix g, h;
    batch_eval(nlp, it.x, it.u, 0, ws, f, g, h);
    for (index_t b = 0; b < d.N; ++b)
      for (index_t i = 0; i < d.m; ++i)
        it.s(i, b) = project_slack(-h(i, b), nlp.s_bounds.lower[size_t(i)],
                                   nlp.s_bounds.upper[size_t(i)]);
  }

  auto init_mults = [&](double v, double lo, double up, double* m_lo, double* m_up) {
    *m_lo = std::isfinite(lo) ? opts.mu0 / (v - lo) : 0.0;
    *m_up = std::isfinite(up) ? opts.mu0 / (up - v) : 0.0;
  };
  for (index_t b = 0; b < d.N; ++b) {
    for (index_t i = 0; i < d.n_x; ++i)
      init_mults(it.x(i, b), nlp.x_bounds.lower[size_t(i)], nlp.x_bounds.upper[size_t(i)],
                 &it.kappa_lo(i, b), &it.kappa_up(i, b));
    for (index_t i = 0; i < d.m; ++i)
      init_mults(it.s(i, b), nlp.s_bounds.lower[size_t(i)], nlp.s_bounds.upper[size_t(i)],
                 &it.nu_lo(i, b), &it.nu_up(i, b));
  }
  for (index_t i = 0; i < d.n_u; ++i)
    init_mults(it.u[size_t(i)], nlp.u_bounds.lower[size_t(i)], nlp.u_bounds.upper[size_t(i)],
               &it.lambda_lo[size_t(i)], &it.lambda_up[size_t(i)]);
  return it;
}

BoundSteps BoundSteps::compute(const BlockNlp& nlp, const Iterate& it, const Step& step,
                               double mu) {
  const BlockDims& d = nlp.dims;
  BoundSteps bs;
  bs.kappa_lo = Matrix(d.n_x, d.N);
  bs.kappa_up = Matrix(d.n_x, d.N);
  bs.nu_lo = Matrix(d.m, d.N);
  bs.nu_up = Matrix(d.m, d.N);
  bs.lambda_lo.assign(size_t(d.n_u), 0.0);
  bs.lambda_up.assign(size_t(d.n_u), 0.0);

  auto pair_steps = [&](double v, double pv, double lo, double up, double m_lo, double m_up,
                        double* out_lo, double* out_up) {
    *out_lo = std::isfinite(lo) ? mu / (v - lo) - m_lo - m_lo / (v - lo) * pv : 0.0;
    *out_up = std::isfinite(up) ? mu / (up - v) - m_up + m_up / (up - v) * pv : 0.0;
  };
  for (index_t b = 0; b < d.N; ++b) {
    for (index_t i = 0; i < d.n_x; ++i)
      pair_steps(it.x(i, b), step.px(i, b), nlp.x_bounds.lower[size_t(i)],
                 nlp.x_bounds.upper[size_t(i)], it.kappa_lo(i, b), it.kappa_up(i, b),
                 &bs.kappa_lo(i, b), &bs.kappa_up(i, b));
    for (index_t i = 0; i < d.m; ++i)
      pair_steps(it.s(i, b), step.ps(i, b), nlp.s_bounds.lower[size_t(i)],
                 nlp.s_bounds.upper[size_t(i)], it.nu_lo(i, b), it.nu_up(i, b),
                 &bs.nu_lo(i, b), &bs.nu_up(i, b));
  }
  for (index_t i = 0; i < d.n_u; ++i)
    pair_steps(it.u[size_t(i)], step.pu[size_t(i)], nlp.u_bounds.lower[size_t(i)],
               nlp.u_bounds.upper[size_t(i)], it.lambda_lo[size_t(i)], it.lambda_up[size_t(i)],
               &bs.lambda_lo[size_t(i)], &bs.lambda_up[size_t(i)]);
  return bs;
}

StepSizes fraction_to_boundary(const BlockNlp& nlp, const Iterate& it, const Step& step,
                               const BoundSteps& bs, double tau) {
  const BlockDims& d = nlp.dims;
  StepSizes a;
  auto cap_primal = [&](double v, double pv, double lo, double up) {
    if (std::isfinite(lo) && pv < 0) a.alpha_primal = std::min(a.alpha_primal, -tau * (v - lo) / pv);
    if (std::isfinite(up) && pv > 0) a.alpha_primal = std::min(a.alpha_primal, tau * (up - v) / pv);
  };
  auto cap_dual = [&](double m, double pm) {
    if (pm < 0 && m > 0) a.alpha_dual = std::min(a.alpha_dual, -tau * m / pm);
  };
  for (index_t b = 0; b < d.N; ++b) {
    for (index_t i = 0; i < d.n_x; ++i) {
      cap_primal(it.x(i, b), step.px(i, b), nlp.x_bounds.lower[size_t(i)],
                 nlp.x_bounds.upper[size_t(i)]);
      cap_dual(it.kappa_lo(i, b), bs.kappa_lo(i, b));
      cap_dual(it.kappa_up(i, b), bs.kappa_up(i, b));
    }
    for (index_t i = 0; i < d.m; ++i) {
      cap_primal(it.s(i, b), step.ps(i, b), nlp.s_bounds.lower[size_t(i)],
                 nlp.s_bounds.upper[size_t(i)]);
      cap_dual(it.nu_lo(i, b), bs.nu_lo(i, b));
      cap_dual(it.nu_up(i, b), bs.nu_up(i, b));
    }
  }
  for (index_t i = 0; i < d.n_u; ++i) {
    cap_primal(it.u[size_t(i)], step.pu[size_t(i)], nlp.u_bounds.lower[size_t(i)],
               nlp.u_bounds.upper[size_t(i)]);
    cap_dual(it.lambda_lo[size_t(i)], bs.lambda_lo[size_t(i)]);
    cap_dual(it.lambda_up[size_t(i)], bs.lambda_up[size_t(i)]);
  }
  return a;
}

Step compute_step(const BlockNlp& nlp, const Iterate& it, double mu, const DerivativeBundle& d,
                  KktStrategy strategy, const IpmOptions& opts, Executor& exec,
                  double& delta_w_last, StepInfo* info) {
  AugmentedSystem sys = assemble_augmented(nlp, it, mu, d);
  switch (strategy) {
    case KktStrategy::augmented:
      return solve_augmented(sys, opts.reg, delta_w_last, info);
    case KktStrategy::condensed: {
      CondenseWork work = make_condense_work(d.plan);
      return solve_condensed(sys, work, opts.reg, delta_w_last, info);
    }
    case KktStrategy::reduced: {
      CondenseWork work = make_condense_work(d.plan);
      Partition part = partition(nlp.dims.N, std::min<index_t>(opts.groups, nlp.dims.N));
      return solve_reduced(sys, work, opts.reg, delta_w_last, opts.n_batch, exec, part, info);
    }
  }
  throw std::logic_error("unknown strategy");
}

namespace {

struct Engine {
  const BlockNlp& nlp;
  Executor& exec;
  const IpmOptions& opts;
  Partition part;
  AdPlan plan;
  CondenseWork cwork;
  std::vector<std::unique_ptr<AdWorkspace>> ws;
  DerivativeBundle bundle;
  DerivativeBundle bundle_trial;  // scratch for full-step acceptance
  bool bundle_fresh = false;      // bundle already evaluated at the iterate

  Engine(const BlockNlp& n, Executor& e, const IpmOptions& o)
      : nlp(n),
        exec(e),
        opts(o),
        part(partition(n.dims.N, std::min<index_t>(o.groups, n.dims.N))),
        plan(make_ad_plan(n)),
        cwork(make_condense_work(plan)),
        bundle(make_bundle(n, plan)),
        bundle_trial(make_bundle(n, plan)) {
    for (index_t g = 0; g < part.groups(); ++g)
      ws.push_back(std::make_unique<AdWorkspace>(nlp, plan, part.group_size(g)));
  }

  count_t dual_elements() const {
    count_t total = 0;
    for (const auto& w : ws) total += w->dual_tangent_elements();
    return total;
  }

  void eval_bundle_into(const Iterate& it, DerivativeBundle& out) {
    exec.map_blocks(part, [&](index_t g, index_t lo, index_t /*hi*/) {
      eval_bundle_range(nlp, plan, *ws[size_t(g)], it.x, it.u, it.y, it.z, 1.0, lo, out);
      return 0;
    });
  }

  void eval_bundle(const Iterate& it) { eval_bundle_into(it, bundle); }

  // f, g, h values only (line-search trials).
  void eval_values(const Matrix& X, const Vector& u, Vector& f, Matrix& g, Matrix& h) {
    f.assign(size_t(nlp.dims.N), 0.0);
    g = Matrix(nlp.dims.n_x, nlp.dims.N);
    h = Matrix(nlp.dims.m, nlp.dims.N);
    exec.map_blocks(part, [&](index_t gi, index_t lo, index_t hi) {
      Vector fg;
      Matrix gg, hg, Xg(nlp.dims.n_x, hi - lo);
      for (index_t b = lo; b < hi; ++b)
        std::copy(X.col(b), X.col(b) + nlp.dims.n_x, Xg.col(b - lo));
      batch_eval(nlp, Xg, u, lo, *ws[size_t(gi)], fg, gg, hg);
      for (index_t b = lo; b < hi; ++b) {
        f[size_t(b)] = fg[size_t(b - lo)];
        std::copy(gg.col(b - lo), gg.col(b - lo) + nlp.dims.n_x, g.col(b));
        std::copy(hg.col(b - lo), hg.col(b - lo) + nlp.dims.m, h.col(b));
      }
      return 0;
    });
  }
};

double l1_constraint_violation(const BlockNlp& nlp, const Matrix& g, const Matrix& h,
                               const Matrix& s) {
  double v = 0;
  for (index_t b = 0; b < nlp.dims.N; ++b) {
    for (index_t i = 0; i < nlp.dims.n_x; ++i) v += std::abs(g(i, b));
    for (index_t i = 0; i < nlp.dims.m; ++i) v += std::abs(h(i, b) + s(i, b));
  }
  return v;
}

double barrier_term(const BlockNlp& nlp, const Iterate& it, double mu) {
  if (mu == 0) return 0;
  double t = 0;
  auto add = [&](double v, double lo, double up) {
    if (std::isfinite(lo)) t -= std::log(v - lo);
    if (std::isfinite(up)) t -= std::log(up - v);
  };
  for (index_t b = 0; b < nlp.dims.N; ++b) {
    for (index_t i = 0; i < nlp.dims.n_x; ++i)
      add(it.x(i, b), nlp.x_bounds.lower[size_t(i)], nlp.x_bounds.upper[size_t(i)]);
    for (index_t i = 0; i < nlp.dims.m; ++i)
      add(it.s(i, b), nlp.s_bounds.lower[size_t(i)], nlp.s_bounds.upper[size_t(i)]);
  }
  for (index_t i = 0; i < nlp.dims.n_u; ++i)
    add(it.u[size_t(i)], nlp.u_bounds.lower[size_t(i)], nlp.u_bounds.upper[size_t(i)]);
  return mu * t;
}

// Barrier-gradient directional term: sum over bounded entries of
// -mu p/(v-l) + mu p/(u-v).
double barrier_directional(const BlockNlp& nlp, const Iterate& it, const Step& step, double mu) {
  double t = 0;
  auto add = [&](double v, double pv, double lo, double up) {
    if (std::isfinite(lo)) t -= mu * pv / (v - lo);
    if (std::isfinite(up)) t += mu * pv / (up - v);
  };
  for (index_t b = 0; b < nlp.dims.N; ++b) {
    for (index_t i = 0; i < nlp.dims.n_x; ++i)
      add(it.x(i, b), step.px(i, b), nlp.x_bounds.lower[size_t(i)],
          nlp.x_bounds.upper[size_t(i)]);
    for (index_t i = 0; i < nlp.dims.m; ++i)
      add(it.s(i, b), step.ps(i, b), nlp.s_bounds.lower[size_t(i)],
          nlp.s_bounds.upper[size_t(i)]);
  }
  for (index_t i = 0; i < nlp.dims.n_u; ++i)
    add(it.u[size_t(i)], step.pu[size_t(i)], nlp.u_bounds.lower[size_t(i)],
        nlp.u_bounds.upper[size_t(i)]);
  return t;
}

// Objective directional derivative grad f . p from the Lagrangian gradient
// (obj_weight 1): grad f = grad_lag - G'y - H'z per block.
double objective_directional(const BlockNlp& nlp, const DerivativeBundle& d, const Iterate& it,
                             const Step& step) {
  const BlockDims& dm = nlp.dims;
  double t = 0;
  Vector gf(size_t(dm.n_d()));
  for (index_t b = 0; b < dm.N; ++b) {
    for (index_t i = 0; i < dm.n_d(); ++i) gf[size_t(i)] = d.grad_lag(i, b);
    // subtract G' y
    const auto& gxp = d.plan.g_split.x_pat;
    for (index_t i = 0; i < gxp.rows; ++i)
      for (index_t k = gxp.row_ptr[size_t(i)]; k < gxp.row_ptr[size_t(i) + 1]; ++k)
        gf[size_t(gxp.col_ind[size_t(k)])] -= d.gx(k, b) * it.y(i, b);
    const auto& gup = d.plan.g_split.u_pat;
    for (index_t i = 0; i < gup.rows; ++i)
      for (index_t k = gup.row_ptr[size_t(i)]; k < gup.row_ptr[size_t(i) + 1]; ++k)
        gf[size_t(dm.n_x + gup.col_ind[size_t(k)])] -= d.gu(k, b) * it.y(i, b);
    const auto& hxp = d.plan.h_split.x_pat;
    for (index_t i = 0; i < hxp.rows; ++i)
      for (index_t k = hxp.row_ptr[size_t(i)]; k < hxp.row_ptr[size_t(i) + 1]; ++k)
        gf[size_t(hxp.col_ind[size_t(k)])] -= d.hx(k, b) * it.z(i, b);
    const auto& hup = d.plan.h_split.u_pat;
    for (index_t i = 0; i < hup.rows; ++i)
      for (index_t k = hup.row_ptr[size_t(i)]; k < hup.row_ptr[size_t(i) + 1]; ++k)
        gf[size_t(dm.n_x + hup.col_ind[size_t(k)])] -= d.hu(k, b) * it.z(i, b);

    for (index_t i = 0; i < dm.n_x; ++i) t += gf[size_t(i)] * step.px(i, b);
    for (index_t i = 0; i < dm.n_u; ++i) t += gf[size_t(dm.n_x + i)] * step.pu[size_t(i)];
  }
  return t;
}

// IPOPT-style scaled optimality error.
struct ScaledError {
  double total, stationarity, primal, comp;
};

ScaledError scaled_error(const BlockNlp& nlp, const Iterate& it, const KktResiduals& r) {
  const BlockDims& d = nlp.dims;
  double mult_sum = 0;
  count_t mult_count = 0;
  auto acc = [&](double m) {
    mult_sum += std::abs(m);
    mult_count += 1;
  };
  for (index_t b = 0; b < d.N; ++b) {
    for (index_t i = 0; i < d.n_x; ++i) {
      acc(it.y(i, b));
      if (std::isfinite(nlp.x_bounds.lower[size_t(i)])) acc(it.kappa_lo(i, b));
      if (std::isfinite(nlp.x_bounds.upper[size_t(i)])) acc(it.kappa_up(i, b));
    }
    for (index_t i = 0; i < d.m; ++i) {
      acc(it.z(i, b));
      if (std::isfinite(nlp.s_bounds.lower[size_t(i)])) acc(it.nu_lo(i, b));
      if (std::isfinite(nlp.s_bounds.upper[size_t(i)])) acc(it.nu_up(i, b));
    }
  }
  for (index_t i = 0; i < d.n_u; ++i) {
    if (std::isfinite(nlp.u_bounds.lower[size_t(i)])) acc(it.lambda_lo[size_t(i)]);
    if (std::isfinite(nlp.u_bounds.upper[size_t(i)])) acc(it.lambda_up[size_t(i)]);
  }
  const double s_max = 100.0;
  const double avg = mult_count ? mult_sum / double(mult_count) : 0.0;
  const double s_d = std::max(s_max, avg) / s_max;

  ScaledError e;
  e.stationarity = r.stationarity_norm() / s_d;
  e.primal = r.primal_norm();
  e.comp = r.complementarity / s_d;
  e.total = std::max({e.stationarity, e.primal, e.comp});
  return e;
}

void apply_step(const BlockNlp& nlp, Iterate& it, const Step& step, const BoundSteps& bs,
                double ap, double ad, double mu) {
  const BlockDims& d = nlp.dims;
  // All duals (constraint and bound multipliers) take the dual
  // fraction-to-boundary step: after a barrier update the multipliers must
  // re-center even when the primal step is merit-limited.
  for (index_t b = 0; b < d.N; ++b) {
    for (index_t i = 0; i < d.n_x; ++i) {
      it.x(i, b) += ap * step.px(i, b);
      it.y(i, b) += ad * step.py(i, b);
      it.kappa_lo(i, b) += ad * bs.kappa_lo(i, b);
      it.kappa_up(i, b) += ad * bs.kappa_up(i, b);
    }
    for (index_t i = 0; i < d.m; ++i) {
      it.s(i, b) += ap * step.ps(i, b);
      it.z(i, b) += ad * step.pz(i, b);
      it.nu_lo(i, b) += ad * bs.nu_lo(i, b);
      it.nu_up(i, b) += ad * bs.nu_up(i, b);
    }
  }
  for (index_t i = 0; i < d.n_u; ++i) {
    it.u[size_t(i)] += ap * step.pu[size_t(i)];
    it.lambda_lo[size_t(i)] += ad * bs.lambda_lo[size_t(i)];
    it.lambda_up[size_t(i)] += ad * bs.lambda_up[size_t(i)];
  }

  // Multiplier safeguard: keep bound multipliers within kappa_sigma of the
  // primal-dual estimate mu / gap so Sigma stays consistent with mu.
  const double ks = 1e10;
  auto clip = [&](double v, double lo, double up, double* m_lo, double* m_up) {
    if (std::isfinite(lo)) {
      const double c = mu / (v - lo);
      *m_lo = std::min(std::max(*m_lo, c / ks), c * ks);
    }
    if (std::isfinite(up)) {
      const double c = mu / (up - v);
      *m_up = std::min(std::max(*m_up, c / ks), c * ks);
    }
  };
  for (index_t b = 0; b < d.N; ++b) {
    for (index_t i = 0; i < d.n_x; ++i)
      clip(it.x(i, b), nlp.x_bounds.lower[size_t(i)], nlp.x_bounds.upper[size_t(i)],
           &it.kappa_lo(i, b), &it.kappa_up(i, b));
    for (index_t i = 0; i < d.m; ++i)
      clip(it.s(i, b), nlp.s_bounds.lower[size_t(i)], nlp.s_bounds.upper[size_t(i)],
           &it.nu_lo(i, b), &it.nu_up(i, b));
  }
  for (index_t i = 0; i < d.n_u; ++i)
    clip(it.u[size_t(i)], nlp.u_bounds.lower[size_t(i)], nlp.u_bounds.upper[size_t(i)],
         &it.lambda_lo[size_t(i)], &it.lambda_up[size_t(i)]);
}

}  // namespace

SolveResult solve(const BlockNlp& nlp, Executor& exec, const IpmOptions& opts) {
  nlp.validate();
  const auto t_start = Clock::now();
  Engine eng(nlp, exec, opts);
  const BlockDims& dm = nlp.dims;

  SolveResult out;
  out.dual_elements = eng.dual_elements();
  out.reduce_workspace = 0;
  for (index_t g = 0; g < eng.part.groups(); ++g)
    out.reduce_workspace +=
        (2 * count_t(eng.part.group_size(g)) * dm.n_x + dm.n_u) * opts.n_batch;

  Iterate it = initial_iterate(nlp, opts);
  double mu = opts.mu0;
  double delta_w_last = 0;
  double penalty = 1.0;
  KktStrategy strategy = opts.strategy;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    IterationLog log;
    log.iter = iter;
    const auto t_iter = Clock::now();

    auto t_ad0 = Clock::now();
    if (!eng.bundle_fresh) eng.eval_bundle(it);
    eng.bundle_fresh = false;
    log.t_ad += seconds_since(t_ad0);

    KktResiduals res0 = assemble_residuals(nlp, it, 0.0, eng.bundle);
    ScaledError e0 = scaled_error(nlp, it, res0);
    log.objective = eng.bundle.objective();
    log.inf_pr = e0.primal;
    log.inf_du = e0.stationarity;
    log.complementarity = res0.complementarity;

    if (e0.total <= opts.tol) {
      log.mu = mu;
      log.t_total = seconds_since(t_iter);
      log.t_other = std::max(0.0, log.t_total - log.t_ad - log.t_kkt);
      out.logs.push_back(log);
      out.status = SolveStatus::optimal;
      out.iterate = it;
      out.objective = log.objective;
      out.final_residuals = res0;
      break;
    }

    // Barrier subproblem convergence and monotone mu decreases.
    for (;;) {
      KktResiduals res_mu = assemble_residuals(nlp, it, mu, eng.bundle);
      ScaledError emu = scaled_error(nlp, it, res_mu);
      if (emu.total <= opts.kappa_eps * mu && mu > opts.tol / 10.0) {
        mu = update_mu(mu, opts);
        continue;
      }
      break;
    }
    log.mu = mu;

    // Newton step via the selected strategy, with the reduced -> augmented
    // fallback when a state Jacobian block is singular.
    Step step;
    StepInfo sinfo;
    auto t_kkt0 = Clock::now();
    try {
      step = compute_step(nlp, it, mu, eng.bundle, strategy, opts, exec, delta_w_last, &sinfo);
    } catch (const SingularBlockError&) {
      if (!(strategy == KktStrategy::reduced && opts.allow_fallback)) throw;
      log.fallback = true;
      step = compute_step(nlp, it, mu, eng.bundle, KktStrategy::augmented, opts, exec,
                          delta_w_last, &sinfo);
    }
    log.t_kkt += seconds_since(t_kkt0);
    log.corrections = sinfo.corrections;
    out.counters += sinfo.counters;

    if (opts.check_step_residual) {
      AugmentedSystem sys = assemble_augmented(nlp, it, mu, eng.bundle);
      sys.delta_w = sinfo.delta_w;
      sys.delta_c = sinfo.delta_c;
      out.max_step_residual =
          std::max(out.max_step_residual, augmented_step_residual(sys, step));
    }

    BoundSteps bs = BoundSteps::compute(nlp, it, step, mu);
    StepSizes caps = fraction_to_boundary(nlp, it, step, bs, opts.tau);

    // Full-step primal-dual acceptance: take the fraction-to-boundary step
    // outright when it contracts the perturbed KKT error; near the central
    // path this restores unit steps the l1 merit cannot see (it prices only
    // primal quantities).
    {
      KktResiduals res_mu = assemble_residuals(nlp, it, mu, eng.bundle);
      const double theta0 = scaled_error(nlp, it, res_mu).total;
      Iterate trial = it;
      apply_step(nlp, trial, step, bs, caps.alpha_primal, caps.alpha_dual, mu);
      auto t_pd = Clock::now();
      bool ok = true;
      double theta1 = kInf;
      try {
        eng.eval_bundle_into(trial, eng.bundle_trial);
        theta1 =
            scaled_error(nlp, trial, assemble_residuals(nlp, trial, mu, eng.bundle_trial)).total;
      } catch (const NonFiniteError&) {
        ok = false;
      }
      log.t_ad += seconds_since(t_pd);
      if (ok && theta1 <= 0.99 * theta0) {
        it = std::move(trial);
        std::swap(eng.bundle, eng.bundle_trial);
        eng.bundle_fresh = true;
        log.alpha_primal = caps.alpha_primal;
        log.alpha_dual = caps.alpha_dual;
        log.t_total = seconds_since(t_iter);
        log.t_other = std::max(0.0, log.t_total - log.t_ad - log.t_kkt);
        out.logs.push_back(log);
        if (opts.verbose)
          std::printf(
              "it %3d  obj %.8e  pr %.2e  du %.2e  mu %.1e  a %.2e/%.2e  corr %d dw %.1e pd\n",
              iter, log.objective, log.inf_pr, log.inf_du, log.mu, log.alpha_primal,
              log.alpha_dual, sinfo.corrections, sinfo.delta_w);
        if (iter == opts.max_iter - 1) {
          out.status = SolveStatus::max_iter;
          out.iterate = it;
          out.objective = log.objective;
          out.final_residuals = res0;
        }
        continue;
      }
    }

    // l1 merit with Armijo backtracking. The penalty is re-estimated each
    // iteration from the step's multiplier estimates: it must dominate them
    // for descent, but a stale large value strangles later steps.
    const double viol0 = l1_constraint_violation(nlp, eng.bundle.g, eng.bundle.h, it.s);
    double mult_norm = 0;
    for (index_t b = 0; b < dm.N; ++b) {
      for (index_t i = 0; i < dm.n_x; ++i)
        mult_norm = std::max(mult_norm, std::abs(it.y(i, b) + step.py(i, b)));
      for (index_t i = 0; i < dm.m; ++i)
        mult_norm = std::max(mult_norm, std::abs(it.z(i, b) + step.pz(i, b)));
    }
    penalty = 1.2 * mult_norm + 0.1;

    const double bar0 = barrier_term(nlp, it, mu);
    const double phi0 = eng.bundle.objective() + bar0 + penalty * viol0;
    const double dird = objective_directional(nlp, eng.bundle, it, step) +
                        barrier_directional(nlp, it, step, mu) - penalty * viol0;
    // Acceptance slack at the rounding noise of the merit's terms (the merit
    // value itself may cancel to zero at convergence).
    double phi_scale = 1.0 + std::abs(bar0) + penalty * viol0;
    for (double v : eng.bundle.f) phi_scale += std::abs(v);
    const double relax = 1e-13 * phi_scale;

    const double c1 = 1e-4;
    double alpha = caps.alpha_primal;
    bool accepted = false;
    Iterate trial = it;
    Vector tf;
    Matrix tg, th;
    for (int ls = 0; ls < 60; ++ls) {
      trial = it;
      for (index_t b = 0; b < dm.N; ++b) {
        for (index_t i = 0; i < dm.n_x; ++i) trial.x(i, b) += alpha * step.px(i, b);
        for (index_t i = 0; i < dm.m; ++i) trial.s(i, b) += alpha * step.ps(i, b);
      }
      for (index_t i = 0; i < dm.n_u; ++i) trial.u[size_t(i)] += alpha * step.pu[size_t(i)];

      auto t_ls = Clock::now();
      bool finite = true;
      try {
        eng.eval_values(trial.x, trial.u, tf, tg, th);
      } catch (const NonFiniteError&) {
        finite = false;
      }
      log.t_ad += seconds_since(t_ls);
      if (finite) {
        double obj = 0;
        for (double v : tf) obj += v;
        const double phi =
            obj + barrier_term(nlp, trial, mu) + penalty * l1_constraint_violation(nlp, tg, th, trial.s);
        if (phi <= phi0 + c1 * alpha * std::min(dird, 0.0) + relax) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
      if (alpha < 1e-12) break;
    }
    if (!accepted) {
      out.status = SolveStatus::infeasible;  // StepTooSmall: restoration not implemented
      out.iterate = it;
      out.objective = eng.bundle.objective();
      out.final_residuals = res0;
      out.logs.push_back(log);
      break;
    }

    apply_step(nlp, it, step, bs, alpha, caps.alpha_dual, mu);
    log.alpha_primal = alpha;
    log.alpha_dual = caps.alpha_dual;
    log.t_total = seconds_since(t_iter);
    log.t_other = std::max(0.0, log.t_total - log.t_ad - log.t_kkt);
    out.logs.push_back(log);

    if (opts.verbose)
      std::printf("it %3d  obj %.8e  pr %.2e  du %.2e  mu %.1e  a %.2e/%.2e  corr %d dw %.1e\n",
                  iter, log.objective, log.inf_pr, log.inf_du, log.mu, log.alpha_primal,
                  log.alpha_dual, sinfo.corrections, sinfo.delta_w);

    if (iter == opts.max_iter - 1) {
      out.status = SolveStatus::max_iter;
      out.iterate = it;
      out.objective = log.objective;
      out.final_residuals = res0;
    }
  }
  if (out.logs.empty()) {
    out.iterate = it;
    out.status = SolveStatus::max_iter;
  }

  for (const auto& l : out.logs) {
    out.t_ad += l.t_ad;
    out.t_kkt += l.t_kkt;
  }
  out.t_total = seconds_since(t_start);
  return out;
}

}  // namespace blockipm
