// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Each check pins its tolerance in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "blockipm/driver.hpp"
#include "blockipm/ipm.hpp"
#include "blockipm/opf.hpp"

using namespace blockipm;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", idx, name,
              detail.empty() ? "" : " -- ", detail.c_str());
  if (!pass) ++g_failures;
}

std::string data_path(const char* name) { return std::string(BLOCKIPM_DATA_DIR) + "/" + name; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Random well-posed block instance for the Schur identity: convex-ish
// quadratic basis (SPD-perturbed K) and diagonally dominant G_x.
BlockNlp random_instance(index_t N, index_t n_x, index_t n_u, index_t m, std::uint64_t seed) {
  using L = PolyKernel::Lane;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.1, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const index_t nd = n_x + n_u;
  std::vector<L> lanes;
  lanes.push_back({L::constant, -1, -1, 1.0, {}});
  for (index_t i = 0; i < nd; ++i) lanes.push_back({L::linear, i, -1, 1.0, {}});
  for (index_t i = 0; i < nd; ++i) {
    std::vector<double> scale(static_cast<size_t>(N));
    for (auto& s : scale) s = 0.8 + 0.4 * u01(rng);
    lanes.push_back({L::bilinear, i, i, 1.0, scale});
  }
  BlockNlp nlp;
  nlp.dims = {N, n_x, n_u, m, index_t(lanes.size())};
  nlp.basis = std::make_shared<PolyKernel>(nd, N, lanes);
  using T = std::pair<std::pair<index_t, index_t>, double>;
  std::vector<T> tf, tg, th;
  for (index_t i = 0; i < nd; ++i) {
    tf.push_back({{0, 1 + nd + i}, 0.5 + u01(rng)});  // SPD-perturbed curvature
    tf.push_back({{0, 1 + i}, sym(rng)});
  }
  for (index_t r = 0; r < n_x; ++r) {
    tg.push_back({{r, 1 + r}, 3.0 + u01(rng)});  // nonsingular G_x
    tg.push_back({{r, 1 + index_t(rng() % size_t(n_x))}, 0.4 * sym(rng)});
    tg.push_back({{r, 1 + n_x + index_t(rng() % size_t(n_u))}, sym(rng)});
    tg.push_back({{r, 0}, 0.3 * sym(rng)});
  }
  for (index_t r = 0; r < m; ++r) {
    th.push_back({{r, 1 + index_t(rng() % size_t(nd))}, sym(rng)});
    th.push_back({{r, 0}, -1.0 - u01(rng)});
  }
  nlp.L_f = SparseMatrix::from_triplets(1, nlp.dims.n_b, tf);
  nlp.L_g = SparseMatrix::from_triplets(n_x, nlp.dims.n_b, tg);
  nlp.L_h = SparseMatrix::from_triplets(m, nlp.dims.n_b, th);
  nlp.x_bounds = Bounds::free(n_x);
  nlp.u_bounds = Bounds::nonneg(n_u);
  nlp.s_bounds = Bounds::nonneg(m);
  nlp.x_start.assign(size_t(n_x), 0.1);
  nlp.u_start.assign(size_t(n_u), 0.5);
  return nlp;
}

Iterate interior_point(const BlockNlp& nlp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.2, 0.8);
  Iterate it = Iterate::zeros(nlp.dims);
  const BlockDims& d = nlp.dims;
  for (index_t b = 0; b < d.N; ++b) {
    for (index_t i = 0; i < d.n_x; ++i) {
      it.x(i, b) = -0.5 + u01(rng);
      it.y(i, b) = -1.0 + 2 * u01(rng);
    }
    for (index_t i = 0; i < d.m; ++i) {
      it.s(i, b) = 0.2 + u01(rng);
      it.z(i, b) = -1.0 + 2 * u01(rng);
      it.nu_lo(i, b) = u01(rng);
    }
  }
  for (index_t i = 0; i < d.n_u; ++i) {
    it.u[size_t(i)] = 0.2 + u01(rng);
    it.lambda_lo[size_t(i)] = u01(rng);
  }
  return it;
}

struct EvalAt {
  AdPlan plan;
  DerivativeBundle bundle;
  EvalAt(const BlockNlp& nlp, const Iterate& it) : plan(make_ad_plan(nlp)) {
    AdWorkspace ws(nlp, plan, nlp.dims.N);
    bundle = make_bundle(nlp, plan);
    eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, bundle);
  }
};

// ---------------------------------------------------------------- criterion 1
void criterion_schur_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0;
  int ran = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const index_t N = 1 + index_t(rng() % 8);
    const index_t n_x = 2 + index_t(rng() % 19);   // <= 20
    const index_t n_u = 1 + index_t(rng() % 10);   // <= 10
    const index_t m = index_t(rng() % 5);
    BlockNlp nlp = random_instance(N, n_x, n_u, m, 5000 + std::uint64_t(trial));
    Iterate it = interior_point(nlp, 6000 + std::uint64_t(trial));
    EvalAt e(nlp, it);
    AugmentedSystem sys = assemble_augmented(nlp, it, 0.1, e.bundle);
    CondensedSystem c = condense(sys);
    BlockDiagFactor facts = factor_gx_range(c, 0, N);
    ReducedSystem red = reduce(c, facts, 4);
    Matrix s = schur_oracle(make_arrowhead(c));
    double err = 0;
    for (size_t k = 0; k < s.size(); ++k)
      err = std::max(err, std::abs(s.data()[k] - red.khat.data()[k]));
    worst = std::max(worst, err / std::max(1.0, inf_norm(red.khat)));
    ++ran;
  }
  const double el = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d instances, worst rel err %.2e (tol 1e-9), %.1fs", ran,
                worst, el);
  report(1, "Schur identity: reduce matches the blockwise oracle", worst <= 1e-9 && el < 10.0,
         buf);
}

// ---------------------------------------------------------------- criterion 2
void criterion_strategy_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  Executor exec({2, ReduceOrder::deterministic});

  for (const char* file : {"case9.m", "case118.m"}) {
    for (index_t N : {index_t(1), index_t(4)}) {
      auto cs = opf::parse_matpower_file(data_path(file));
      auto scen = opf::generate_scenarios(cs, N, 0.0, {}, 0);
      BlockNlp nlp = opf::build_block_opf(cs, scen);
      IpmOptions opts;
      opts.tol = 1e-8;

      // first five steps compared at shared iterates along a reference run
      AdPlan plan = make_ad_plan(nlp);
      AdWorkspace ws(nlp, plan, N);
      DerivativeBundle d = make_bundle(nlp, plan);
      Iterate it = initial_iterate(nlp, opts);
      double mu = opts.mu0;
      double dwl_ref = 0;
      for (int step_i = 0; step_i < 5; ++step_i) {
        eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);
        double dwl_a = dwl_ref, dwl_c = dwl_ref, dwl_r = dwl_ref;
        Step sa = compute_step(nlp, it, mu, d, KktStrategy::augmented, opts, exec, dwl_a);
        Step sc = compute_step(nlp, it, mu, d, KktStrategy::condensed, opts, exec, dwl_c);
        Step sr = compute_step(nlp, it, mu, d, KktStrategy::reduced, opts, exec, dwl_r);
        double num = 0, den = 1.0;
        auto acc = [&](const Matrix& x, const Matrix& yv) {
          for (size_t k = 0; k < x.size(); ++k) {
            num = std::max(num, std::abs(x.data()[k] - yv.data()[k]));
            den = std::max(den, std::abs(x.data()[k]));
          }
        };
        acc(sa.px, sc.px);
        acc(sa.px, sr.px);
        for (size_t k = 0; k < sa.pu.size(); ++k) {
          num = std::max({num, std::abs(sa.pu[k] - sc.pu[k]), std::abs(sa.pu[k] - sr.pu[k])});
          den = std::max(den, std::abs(sa.pu[k]));
        }
        if (num / den > 1e-7) {
          pass = false;
          detail = std::string(file) + " N=" + std::to_string(N) + " step " +
                   std::to_string(step_i) + " p_d diff " + std::to_string(num / den);
        }
        // advance the reference run by one full IPM iteration
        dwl_ref = dwl_a;
        BoundSteps bs = BoundSteps::compute(nlp, it, sa, mu);
        StepSizes a = fraction_to_boundary(nlp, it, sa, bs, opts.tau);
        const double ap = 0.9 * a.alpha_primal;
        for (index_t b = 0; b < N; ++b) {
          for (index_t i = 0; i < nlp.dims.n_x; ++i) {
            it.x(i, b) += ap * sa.px(i, b);
            it.y(i, b) += ap * sa.py(i, b);
            it.kappa_lo(i, b) += a.alpha_dual * bs.kappa_lo(i, b);
            it.kappa_up(i, b) += a.alpha_dual * bs.kappa_up(i, b);
          }
          for (index_t i = 0; i < nlp.dims.m; ++i) {
            it.s(i, b) += ap * sa.ps(i, b);
            it.z(i, b) += ap * sa.pz(i, b);
            it.nu_lo(i, b) += a.alpha_dual * bs.nu_lo(i, b);
            it.nu_up(i, b) += a.alpha_dual * bs.nu_up(i, b);
          }
        }
        for (index_t i = 0; i < nlp.dims.n_u; ++i) {
          it.u[size_t(i)] += ap * sa.pu[size_t(i)];
          it.lambda_lo[size_t(i)] += a.alpha_dual * bs.lambda_lo[size_t(i)];
          it.lambda_up[size_t(i)] += a.alpha_dual * bs.lambda_up[size_t(i)];
        }
      }

      // full solves: all strategies Optimal with matching objectives
      double objs[3];
      int k = 0;
      for (auto s : {KktStrategy::augmented, KktStrategy::condensed, KktStrategy::reduced}) {
        IpmOptions o;
        o.tol = 1e-8;
        o.strategy = s;
        SolveResult r = solve(nlp, exec, o);
        if (r.status != SolveStatus::optimal) {
          pass = false;
          detail = std::string(file) + " N=" + std::to_string(N) + " " + to_string(s) +
                   " status " + to_string(r.status);
        }
        objs[k++] = r.objective;
      }
      for (int i = 1; i < 3; ++i)
        if (std::abs(objs[i] - objs[0]) / std::max(1.0, std::abs(objs[0])) > 1e-6) {
          pass = false;
          detail = std::string(file) + " N=" + std::to_string(N) + " objective mismatch";
        }
    }
  }
  const double el = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s%s%.0fs", detail.c_str(), detail.empty() ? "" : "; ", el);
  report(2, "strategy equivalence: steps within 1e-7, objectives within 1e-6",
         pass && el < 120.0, buf);
}

// ---------------------------------------------------------------- criterion 3
void criterion_dimensions() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  struct T1 {
    const char* file;
    count_t bus, lines, gens, n_x, n_u;
  };
  const T1 table1[] = {
      {"case118.m", 118, 186, 54, 181, 107},
      {"case1354pegase.m", 1354, 1991, 260, 2447, 519},
      {"case2869pegase.m", 2869, 4582, 510, 5227, 1019},
      {"case9241pegase.m", 9241, 16049, 1445, 17036, 2889},
  };
  for (const auto& r : table1) {
    auto cs = opf::parse_matpower_file(data_path(r.file));
    auto d = opf::case_dims(cs, 1);
    if (d.buses != r.bus || d.branches != r.lines || d.gens != r.gens || d.n_x != r.n_x ||
        d.n_u != r.n_u) {
      pass = false;
      detail = std::string(r.file) + " table-1 row mismatch";
    }
  }
  struct T3 {
    const char* file;
    index_t N;
    count_t nvar, ncon;
    double khat_mib;
  };
  const T3 table3[] = {
      {"case1354pegase.m", 8, 20095, 53520, 2.1},
      {"case2869pegase.m", 8, 42835, 119216, 7.9},
      {"case9241pegase.m", 8, 139177, 404640, 63.7},
  };
  for (const auto& r : table3) {
    auto cs = opf::parse_matpower_file(data_path(r.file));
    auto d = opf::case_dims(cs, r.N);
    const double mib = std::round(10.0 * double(d.khat_bytes) / (1024.0 * 1024.0)) / 10.0;
    if (d.nvar != r.nvar || d.ncon != r.ncon || mib != r.khat_mib) {
      pass = false;
      detail = std::string(r.file) + " table-3 row mismatch";
    }
  }
  {
    // the N = 512 instance: dimension arithmetic only, never assembled
    auto cs = opf::parse_matpower_file(data_path("case1354pegase.m"));
    auto d = opf::case_dims(cs, 512);
    if (d.nvar != 1253383) {
      pass = false;
      detail = "1354pegase N=512 nvar mismatch";
    }
    if (d.ncon != count_t(512) * (2447 + 4243)) {
      pass = false;
      detail = "1354pegase N=512 ncon formula mismatch";
    }
  }
  const double el = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s%s%.1fs", detail.c_str(), detail.empty() ? "" : "; ", el);
  report(3, "dimension tables reproduced exactly", pass && el < 30.0, buf);
}

// ---------------------------------------------------------------- criterion 4
void criterion_ad_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  for (const char* file : {"case9.m", "case118.m"}) {
    auto cs = opf::parse_matpower_file(data_path(file));
    auto scen = opf::generate_scenarios(cs, 2, 0.0, {}, 0);
    BlockNlp nlp = opf::build_block_opf(cs, scen);
    const BlockDims& dm = nlp.dims;
    AdPlan plan = make_ad_plan(nlp);
    AdWorkspace ws(nlp, plan, dm.N);

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unit(0.25, 0.75);
    for (int pt = 0; pt < 5; ++pt) {
      Matrix X(dm.n_x, dm.N);
      Vector u(static_cast<size_t>(dm.n_u), 0.0);
      for (index_t i = 0; i < dm.n_x; ++i) {
        const double lo = nlp.x_bounds.lower[size_t(i)], up = nlp.x_bounds.upper[size_t(i)];
        const double v = std::isfinite(lo) ? lo + unit(rng) * (up - lo) : -0.2 + 0.4 * unit(rng);
        for (index_t b = 0; b < dm.N; ++b) X(i, b) = v;
      }
      for (index_t i = 0; i < dm.n_u; ++i) {
        const double lo = nlp.u_bounds.lower[size_t(i)], up = nlp.u_bounds.upper[size_t(i)];
        u[size_t(i)] = lo + unit(rng) * (up - lo);
      }

      // Jacobians vs FD
      Vector f;
      Matrix g, h, gx, gu, hx, hu;
      batch_jacobian(nlp, X, u, 0, plan, ws, f, g, h, gx, gu, hx, hu);
      const double fstep = 1e-6;
      Vector fp, fm;
      Matrix gp, hp, gm, hm;
      AdWorkspace wse(nlp, plan, dm.N);
      double worst = 0;
      for (index_t din = 0; din < dm.n_d(); ++din) {
        Matrix Xp = X, Xm = X;
        Vector up = u, um = u;
        if (din < dm.n_x) {
          Xp(din, 0) += fstep;
          Xm(din, 0) -= fstep;
        } else {
          up[size_t(din - dm.n_x)] += fstep;
          um[size_t(din - dm.n_x)] -= fstep;
        }
        batch_eval(nlp, Xp, up, 0, wse, fp, gp, hp);
        batch_eval(nlp, Xm, um, 0, wse, fm, gm, hm);
        for (index_t r = 0; r < dm.n_x; ++r) {
          const index_t k = plan.patterns.jac_g.find(r, din);
          const double ad = k >= 0 ? (din < dm.n_x ? gx(plan.g_split.x_pat.find(r, din), 0)
                                                   : gu(plan.g_split.u_pat.find(r, din - dm.n_x), 0))
                                   : 0.0;
          const double fd = (gp(r, 0) - gm(r, 0)) / (2 * fstep);
          worst = std::max(worst, std::abs(ad - fd) / std::max({1.0, std::abs(ad)}));
        }
        for (index_t r = 0; r < dm.m; ++r) {
          const index_t k = plan.patterns.jac_h.find(r, din);
          const double ad = k >= 0 ? (din < dm.n_x ? hx(plan.h_split.x_pat.find(r, din), 0)
                                                   : hu(plan.h_split.u_pat.find(r, din - dm.n_x), 0))
                                   : 0.0;
          const double fd = (hp(r, 0) - hm(r, 0)) / (2 * fstep);
          worst = std::max(worst, std::abs(ad - fd) / std::max({1.0, std::abs(ad)}));
        }
      }
      if (worst > 1e-5) {
        pass = false;
        detail = std::string(file) + " jacobian-vs-FD " + std::to_string(worst);
      }

      // Hessian vs FD of the gradient, plus exact symmetry
      std::uniform_real_distribution<double> m2(-1.0, 1.0);
      Matrix y(dm.n_x, dm.N), z(dm.m, dm.N);
      for (size_t k = 0; k < y.size(); ++k) y.data()[k] = m2(rng);
      for (size_t k = 0; k < z.size(); ++k) z.data()[k] = m2(rng);
      Matrix wxx, wxu, wuu, grad0;
      batch_hessian(nlp, X, u, 0, y, z, 1.0, plan, ws, wxx, wxu, wuu, grad0);
      Matrix hess0 = ws.hess_vals;
      double asym = 0;
      const auto& hpat = plan.patterns.hess;
      for (index_t i = 0; i < hpat.rows; ++i)
        for (index_t k = hpat.row_ptr[size_t(i)]; k < hpat.row_ptr[size_t(i) + 1]; ++k) {
          const index_t j = hpat.col_ind[size_t(k)];
          // symmetry of the split (recovered) blocks
          double wij = 0, wji = 0;
          const index_t n_x = dm.n_x;
          auto read = [&](index_t r, index_t c) {
            if (r < n_x && c < n_x) return wxx(plan.w_split.xx.find(r, c), 0);
            if (r < n_x) return wxu(plan.w_split.xu.find(r, c - n_x), 0);
            if (c >= n_x) return wuu(plan.w_split.uu.find(r - n_x, c - n_x), 0);
            return wxu(plan.w_split.xu.find(c, r - n_x), 0);
          };
          wij = read(i, j);
          wji = read(j, i);
          asym = std::max(asym, std::abs(wij - wji));
        }
      if (asym > 1e-12) {
        pass = false;
        detail = std::string(file) + " hessian asymmetry " + std::to_string(asym);
      }
      const double hstep = 1e-5;
      double worsth = 0;
      Matrix gradp, gradm;
      for (index_t din = 0; din < dm.n_d(); ++din) {
        Matrix Xp = X, Xm = X;
        Vector up = u, um = u;
        if (din < dm.n_x) {
          Xp(din, 0) += hstep;
          Xm(din, 0) -= hstep;
        } else {
          up[size_t(din - dm.n_x)] += hstep;
          um[size_t(din - dm.n_x)] -= hstep;
        }
        batch_hessian(nlp, Xp, up, 0, y, z, 1.0, plan, ws, wxx, wxu, wuu, gradp);
        batch_hessian(nlp, Xm, um, 0, y, z, 1.0, plan, ws, wxx, wxu, wuu, gradm);
        for (index_t r = 0; r < dm.n_d(); ++r) {
          const index_t k = hpat.find(r, din);
          const double ad = k >= 0 ? hess0(k, 0) : 0.0;
          const double fd = (gradp(r, 0) - gradm(r, 0)) / (2 * hstep);
          worsth = std::max(worsth, std::abs(ad - fd) / std::max({1.0, std::abs(ad)}));
        }
      }
      if (worsth > 1e-5) {
        pass = false;
        detail = std::string(file) + " hessian-vs-FD " + std::to_string(worsth);
      }
    }

    // batch-size invariance, bitwise: M = N run vs per-block runs
    {
      std::mt19937_64 rng2(11);
      std::uniform_real_distribution<double> unit2(0.3, 0.7);
      Matrix X(dm.n_x, dm.N);
      Vector u(static_cast<size_t>(dm.n_u), 0.0);
      for (index_t i = 0; i < dm.n_x; ++i)
        for (index_t b = 0; b < dm.N; ++b)
          X(i, b) = std::isfinite(nlp.x_bounds.lower[size_t(i)])
                        ? nlp.x_bounds.lower[size_t(i)] +
                              unit2(rng2) * (nlp.x_bounds.upper[size_t(i)] -
                                             nlp.x_bounds.lower[size_t(i)])
                        : 0.1 * unit2(rng2);
      for (index_t i = 0; i < dm.n_u; ++i)
        u[size_t(i)] = nlp.u_bounds.lower[size_t(i)] +
                       unit2(rng2) * (nlp.u_bounds.upper[size_t(i)] -
                                      nlp.u_bounds.lower[size_t(i)]);
      Vector fN;
      Matrix gN, hN, gxN, guN, hxN, huN;
      batch_jacobian(nlp, X, u, 0, plan, ws, fN, gN, hN, gxN, guN, hxN, huN);
      for (index_t b = 0; b < dm.N; ++b) {
        AdWorkspace ws1(nlp, plan, 1);
        Matrix Xb(dm.n_x, 1);
        std::copy(X.col(b), X.col(b) + dm.n_x, Xb.col(0));
        Vector f1;
        Matrix g1, h1, gx1, gu1, hx1, hu1;
        batch_jacobian(nlp, Xb, u, b, plan, ws1, f1, g1, h1, gx1, gu1, hx1, hu1);
        bool same = f1[0] == fN[size_t(b)];
        for (index_t k = 0; k < gxN.rows() && same; ++k) same = gx1(k, 0) == gxN(k, b);
        for (index_t k = 0; k < huN.rows() && same; ++k) same = hu1(k, 0) == huN(k, b);
        if (!same) {
          pass = false;
          detail = std::string(file) + " batch-size invariance not bitwise";
        }
      }
    }
  }
  const double el = seconds_since(t0);
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s%s%.1fs", detail.c_str(), detail.empty() ? "" : "; ", el);
  report(4, "AD matches finite differences; symmetric; batch invariant", pass && el < 60.0,
         buf);
}

// ---------------------------------------------------------------- criterion 5
void criterion_memory_scaling() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  auto cs = opf::parse_matpower_file(data_path("case118.m"));
  auto scen = opf::generate_scenarios(cs, 16, 0.0, {}, 0);
  BlockNlp nlp = opf::build_block_opf(cs, scen);
  AdPlan plan = make_ad_plan(nlp);

  for (index_t M : {index_t(16), index_t(8)}) {
    AdWorkspace ws(nlp, plan, M);
    const count_t expect = dual_buffer_elements(nlp.dims, M, plan.p_jac, plan.p_hess);
    if (ws.dual_tangent_elements() != expect) {
      pass = false;
      detail = "dual buffer accounting mismatch at M=" + std::to_string(M);
    }
  }
  // halving M exactly halves the dual-buffer count
  if (dual_buffer_elements(nlp.dims, 16, plan.p_jac, plan.p_hess) !=
      2 * dual_buffer_elements(nlp.dims, 8, plan.p_jac, plan.p_hess)) {
    pass = false;
    detail = "dual buffer halving violated";
  }
  // reduction workspace: exact formula at M and M/2
  {
    Iterate it = initial_iterate(nlp, IpmOptions{});
    EvalAt e(nlp, it);
    AugmentedSystem sys = assemble_augmented(nlp, it, 0.1, e.bundle);
    CondensedSystem c = condense(sys);
    const index_t n_batch = 8;
    for (index_t G : {index_t(1), index_t(2)}) {
      Partition part = partition(16, G);
      Executor exec({2, ReduceOrder::deterministic});
      std::vector<BlockDiagFactor> facts;
      for (index_t g = 0; g < G; ++g)
        facts.push_back(factor_gx_range(c, part.ranges[size_t(g)].first,
                                        part.ranges[size_t(g)].second));
      ReducedSystem red = reduce(c, part, facts, n_batch, exec);
      const count_t M = 16 / G;
      const count_t expect = G * (2 * M * count_t(nlp.dims.n_x) + nlp.dims.n_u) * n_batch;
      if (red.workspace_elements != expect) {
        pass = false;
        detail = "reduce workspace accounting mismatch at G=" + std::to_string(G);
      }
    }
  }
  const double el = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s%s%.1fs", detail.c_str(), detail.empty() ? "" : "; ", el);
  report(5, "memory accounting equals the stated formulas exactly", pass && el < 5.0, buf);
}

// ---------------------------------------------------------------- criterion 6
void criterion_determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = true;
  std::string detail;
  auto cs = opf::parse_matpower_file(data_path("case118.m"));
  auto scen = opf::generate_scenarios(cs, 16, 0.05, {}, 3);
  BlockNlp nlp = opf::build_block_opf(cs, scen);

  std::vector<SolveResult> results;
  for (index_t G : {index_t(1), index_t(2), index_t(4)}) {
    Executor exec({2, ReduceOrder::deterministic});
    IpmOptions opts;
    opts.strategy = KktStrategy::reduced;
    opts.groups = G;
    results.push_back(solve(nlp, exec, opts));
    if (results.back().status != SolveStatus::optimal) {
      pass = false;
      detail = "G=" + std::to_string(G) + " not optimal";
    }
  }
  for (size_t r = 1; r < results.size(); ++r) {
    bool same = results[r].logs.size() == results[0].logs.size() &&
                results[r].objective == results[0].objective;
    for (size_t k = 0; same && k < results[0].iterate.u.size(); ++k)
      same = results[r].iterate.u[k] == results[0].iterate.u[k];
    for (size_t k = 0; same && k < results[0].iterate.x.size(); ++k)
      same = results[r].iterate.x.data()[k] == results[0].iterate.x.data()[k];
    if (!same) {
      pass = false;
      detail = "results differ between G=1 and G=" + std::to_string(r == 1 ? 2 : 4);
    }
  }
  const double el = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "iters=%zu %s%s%.1fs", results[0].logs.size(), detail.c_str(),
                detail.empty() ? "" : "; ", el);
  report(6, "case118 N=16 solve bitwise identical for G in {1,2,4}", pass && el < 120.0, buf);
}

// ---------------------------------------------------------------- criterion 7
void criterion_operation_accounting() {
  const auto t0 = std::chrono::steady_clock::now();
  BlockNlp nlp = random_instance(4, 6, 5, 3, 42);
  Iterate it = interior_point(nlp, 43);
  EvalAt e(nlp, it);
  AugmentedSystem sys = assemble_augmented(nlp, it, 0.1, e.bundle);
  CondensedSystem c = condense(sys);
  BlockDiagFactor facts = factor_gx_range(c, 0, 4);
  bool pass = true;
  std::string detail;
  for (index_t nb : {index_t(1), index_t(2), index_t(5)}) {
    ReducedSystem red = reduce(c, facts, nb);
    const count_t tiles = (5 + nb - 1) / nb;
    if (red.counters.tiles != tiles || red.counters.spsm != 4 * tiles ||
        red.counters.spmm != 7 * tiles) {
      pass = false;
      detail = "n_batch=" + std::to_string(nb) + ": got " + std::to_string(red.counters.spsm) +
               " spsm / " + std::to_string(red.counters.spmm) + " spmm over " +
               std::to_string(red.counters.tiles) + " tiles";
    }
  }
  const double el = seconds_since(t0);
  report(7, "reduction performs exactly 4 SpSM and 7 SpMM per tile", pass,
         detail.empty() ? std::string() : detail + " " + std::to_string(el) + "s");
}

// ---------------------------------------------------------------- criterion 8
void criterion_recovery_residuals() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cs = opf::parse_matpower_file(data_path("case9.m"));
  auto scen = opf::generate_scenarios(cs, 2, 0.0, {}, 0);
  BlockNlp nlp = opf::build_block_opf(cs, scen);
  Executor exec({1, ReduceOrder::deterministic});
  IpmOptions opts;
  opts.strategy = KktStrategy::reduced;
  opts.check_step_residual = true;
  SolveResult r = solve(nlp, exec, opts);
  const bool pass = r.status == SolveStatus::optimal && r.max_step_residual <= 1e-9;
  char buf[160];
  std::snprintf(buf, sizeof buf, "max augmented residual %.2e over %zu iterations, %.1fs",
                r.max_step_residual, r.logs.size(), seconds_since(t0));
  report(8, "recovered steps satisfy the augmented system at every iteration", pass, buf);
}

// ---------------------------------------------------------------- criterion 9
void criterion_degenerate_replication() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cs = opf::parse_matpower_file(data_path("case9.m"));
  auto s1 = opf::generate_scenarios(cs, 1, 0.0, {}, 0);
  auto s8 = opf::generate_scenarios(cs, 8, 0.0, {}, 0);
  BlockNlp nlp1 = opf::build_block_opf(cs, s1);
  BlockNlp nlp8 = opf::build_block_opf(cs, s8);
  Executor exec({2, ReduceOrder::deterministic});
  IpmOptions opts;
  opts.strategy = KktStrategy::reduced;
  opts.groups = 2;
  SolveResult r1 = solve(nlp1, exec, IpmOptions{});
  SolveResult r8 = solve(nlp8, exec, opts);
  double udiff = 0;
  for (size_t k = 0; k < r1.iterate.u.size(); ++k)
    udiff = std::max(udiff, std::abs(r1.iterate.u[k] - r8.iterate.u[k]));
  const bool pass = r1.status == SolveStatus::optimal && r8.status == SolveStatus::optimal &&
                    udiff <= 1e-5;
  char buf[160];
  std::snprintf(buf, sizeof buf, "max |u_8 - u_1| = %.2e, objectives %.6f / %.6f, %.1fs", udiff,
                r1.objective, r8.objective, seconds_since(t0));
  report(9, "sigma=0, N=8 collapses to the single-scenario solution", pass, buf);
}

}  // namespace

int main() {
  criterion_schur_identity();
  criterion_strategy_equivalence();
  criterion_dimensions();
  criterion_ad_correctness();
  criterion_memory_scaling();
  criterion_determinism();
  criterion_operation_accounting();
  criterion_recovery_residuals();
  criterion_degenerate_replication();
  if (g_failures == 0)
    std::printf("all acceptance criteria passed\n");
  else
    std::printf("%d acceptance criteria FAILED\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
