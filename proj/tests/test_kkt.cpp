#include <doctest.h>

#include <random>

#include "blockipm/ipm.hpp"
#include "support/oracles.hpp"
#include "support/test_kernels.hpp"

using namespace blockipm;
using namespace testsupport;

namespace {

struct Assembled {
  BlockNlp nlp;
  Iterate it;
  AdPlan plan;
  DerivativeBundle bundle;
  AugmentedSystem sys;

  Assembled(BlockNlp n, std::uint64_t seed, double mu) : nlp(std::move(n)) {
    it = random_interior(nlp, seed);
    plan = make_ad_plan(nlp);
    AdWorkspace ws(nlp, plan, nlp.dims.N);
    bundle = make_bundle(nlp, plan);
    eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, bundle);
    sys = assemble_augmented(nlp, it, mu, bundle);
  }
};

double rel_diff(const Vector& a, const Vector& b) {
  double num = 0, den = 1e-300;
  for (size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(a[i] - b[i]));
    den = std::max(den, std::abs(a[i]));
  }
  return num / std::max(den, 1.0);
}

double step_rel_diff(const Step& a, const Step& b) {
  double num = 0, den = 1.0;
  auto acc = [&](const Matrix& x, const Matrix& y) {
    for (size_t i = 0; i < x.size(); ++i) {
      num = std::max(num, std::abs(x.data()[i] - y.data()[i]));
      den = std::max(den, std::abs(x.data()[i]));
    }
  };
  acc(a.px, b.px);
  for (size_t i = 0; i < a.pu.size(); ++i) {
    num = std::max(num, std::abs(a.pu[i] - b.pu[i]));
    den = std::max(den, std::abs(a.pu[i]));
  }
  acc(a.ps, b.ps);
  acc(a.py, b.py);
  acc(a.pz, b.pz);
  return num / den;
}

}  // namespace

TEST_CASE("assemble_augmented: zero rhs at an exact barrier-KKT point") {
  // toy equality problem, exact barrier solution computed by hand:
  // min (x-1)^2 + (u-1)^2 s.t. x = u, x,u >= 0; at the barrier optimum
  // 2(v-1) + 2(v-1) = kappa + lambda with v kappa = v lambda = mu and x=u=v.
  // Solve 4(v-1) = 2 mu / v -> 2v^2 - 2v - mu/... use mu small and Newton.
  const double mu = 1e-3;
  double v = 1.0;
  for (int i = 0; i < 60; ++i) {
    const double fval = 4 * (v - 1) - 2 * mu / v;
    const double fp = 4 + 2 * mu / (v * v);
    v -= fval / fp;
  }
  auto nlp = make_toy_equality(1);
  Iterate it = Iterate::zeros(nlp.dims);
  it.x(0, 0) = v;
  it.u[0] = v;
  it.kappa_lo(0, 0) = mu / v;
  it.lambda_lo[0] = mu / v;
  it.y(0, 0) = 0.0;  // by symmetry the equality multiplier vanishes

  AdPlan plan = make_ad_plan(nlp);
  AdWorkspace ws(nlp, plan, 1);
  DerivativeBundle d = make_bundle(nlp, plan);
  eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);
  AugmentedSystem sys = assemble_augmented(nlp, it, mu, d);
  CHECK(inf_norm(sys.r1x) <= 1e-10);
  CHECK(inf_norm(sys.r1u) <= 1e-10);
  CHECK(inf_norm(sys.r3) <= 1e-12);
}

TEST_CASE("assemble_augmented rejects non-interior iterates") {
  auto nlp = make_toy_equality(1);
  Iterate it = Iterate::zeros(nlp.dims);
  it.x(0, 0) = 0.0;  // on the lower bound
  it.u[0] = 0.5;
  AdPlan plan = make_ad_plan(nlp);
  AdWorkspace ws(nlp, plan, 1);
  DerivativeBundle d = make_bundle(nlp, plan);
  eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);
  CHECK_THROWS_AS(assemble_augmented(nlp, it, 0.1, d), NonInteriorError);
}

TEST_CASE("rhs matches the residual rearrangement at random iterates") {
  for (int trial = 0; trial < 10; ++trial) {
    Assembled a(make_random_block(3, 3, 2, 4, 100 + std::uint64_t(trial)),
                200 + std::uint64_t(trial), 0.05);
    KktResiduals r = assemble_residuals(a.nlp, a.it, 0.0, a.bundle);
    const BlockDims& dm = a.nlp.dims;
    // r1 = stationarity + bound-multiplier terms folded into barrier form:
    // grad_lag - mu/(x-l) + mu/(u-x) = stationarity_x + kappa_lo - kappa_up
    //                                  - mu/(x-l) + mu/(u-x)
    for (index_t b = 0; b < dm.N; ++b)
      for (index_t i = 0; i < dm.n_x; ++i) {
        double expect = r.stationarity_x(i, b) + a.it.kappa_lo(i, b) - a.it.kappa_up(i, b);
        const double lo = a.nlp.x_bounds.lower[size_t(i)],
                     up = a.nlp.x_bounds.upper[size_t(i)];
        if (std::isfinite(lo)) expect -= a.sys.mu / (a.it.x(i, b) - lo);
        if (std::isfinite(up)) expect += a.sys.mu / (up - a.it.x(i, b));
        CHECK(a.sys.r1x(i, b) == doctest::Approx(expect).epsilon(1e-12));
      }
    // r3 and r4 are the primal residuals
    for (index_t b = 0; b < dm.N; ++b) {
      for (index_t i = 0; i < dm.n_x; ++i)
        CHECK(a.sys.r3(i, b) == doctest::Approx(r.primal_g(i, b)).epsilon(1e-13));
      for (index_t i = 0; i < dm.m; ++i)
        CHECK(a.sys.r4(i, b) == doctest::Approx(r.primal_h(i, b)).epsilon(1e-13));
    }
  }
}

TEST_CASE("solve_augmented_once: zero rhs gives zero step") {
  Assembled a(make_random_block(2, 3, 2, 3, 300), 301, 0.1);
  a.sys.r1x.set_zero();
  std::fill(a.sys.r1u.begin(), a.sys.r1u.end(), 0.0);
  a.sys.r2.set_zero();
  a.sys.r3.set_zero();
  a.sys.r4.set_zero();
  Step st = solve_augmented_once(a.sys);
  CHECK(inf_norm(st.px) <= 1e-14);
  CHECK(inf_norm(st.ps) <= 1e-14);
  CHECK(inf_norm(st.py) <= 1e-14);
}

TEST_CASE("solve_augmented_once: 2x2 hand system") {
  // single block, n_x=1, n_u=1, m=0, no bounds; system reduces to
  // [[W, G'],[G, 0]] with W = diag(wxx, wuu) + wxu couplings.
  using L = PolyKernel::Lane;
  std::vector<L> lanes = {
      {L::linear, 0, -1, 1.0, {}},
      {L::linear, 1, -1, 1.0, {}},
      {L::bilinear, 0, 0, 1.0, {}},
      {L::bilinear, 1, 1, 1.0, {}},
  };
  BlockNlp nlp;
  nlp.dims = {1, 1, 1, 0, 4};
  nlp.basis = std::make_shared<PolyKernel>(2, 1, lanes);
  nlp.L_f = SparseMatrix::from_triplets(1, 4, {{{0, 2}, 1.5}, {{0, 3}, 0.5}, {{0, 0}, -1.0}});
  nlp.L_g = SparseMatrix::from_triplets(1, 4, {{{0, 0}, 2.0}, {{0, 1}, 1.0}, });
  nlp.L_h = SparseMatrix::from_triplets(0, 4, {});
  nlp.x_bounds = Bounds::free(1);
  nlp.u_bounds = Bounds::free(1);
  nlp.s_bounds = Bounds::free(0);

  Iterate it = Iterate::zeros(nlp.dims);
  it.x(0, 0) = 0.3;
  it.u[0] = -0.2;
  it.y(0, 0) = 0.7;
  AdPlan plan = make_ad_plan(nlp);
  AdWorkspace ws(nlp, plan, 1);
  DerivativeBundle d = make_bundle(nlp, plan);
  eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);
  AugmentedSystem sys = assemble_augmented(nlp, it, 0.0, d);
  Step st = solve_augmented_once(sys);

  // hand elimination of [[3, 0, 2],[0, 1, 1],[2, 1, 0]] p = -r
  // f = 1.5 x^2 + 0.5 u^2 - x? (gradient pieces appear in r1)
  Matrix M(3, 3);
  M(0, 0) = 3;
  M(1, 1) = 1;
  M(0, 2) = M(2, 0) = 2;
  M(1, 2) = M(2, 1) = 1;
  Vector rhs = {-sys.r1x(0, 0), -sys.r1u[0], -sys.r3(0, 0)};
  // Cramer solve
  auto det3 = [](const Matrix& A) {
    return A(0, 0) * (A(1, 1) * A(2, 2) - A(1, 2) * A(2, 1)) -
           A(0, 1) * (A(1, 0) * A(2, 2) - A(1, 2) * A(2, 0)) +
           A(0, 2) * (A(1, 0) * A(2, 1) - A(1, 1) * A(2, 0));
  };
  const double det = det3(M);
  auto col_replaced = [&](index_t c) {
    Matrix A = M;
    for (index_t i = 0; i < 3; ++i) A(i, c) = rhs[size_t(i)];
    return A;
  };
  CHECK(st.px(0, 0) == doctest::Approx(det3(col_replaced(0)) / det).epsilon(1e-10));
  CHECK(st.pu[0] == doctest::Approx(det3(col_replaced(1)) / det).epsilon(1e-10));
  CHECK(st.py(0, 0) == doctest::Approx(det3(col_replaced(2)) / det).epsilon(1e-10));
}

TEST_CASE("condense: H = 0 leaves K = W and rhs unchanged") {
  Assembled a(make_random_block(2, 3, 2, 0, 400), 401, 0.05);  // m = 0
  CondensedSystem c = condense(a.sys);
  const auto& d = a.bundle;
  for (index_t b = 0; b < 2; ++b)
    for (index_t k = 0; k < c.kxx_p.nnz(); ++k) {
      // K pattern is a superset; match via coordinates
      const index_t i = [&] {
        for (index_t r = 0; r < c.kxx_p.rows; ++r)
          if (c.kxx_p.row_ptr[size_t(r)] <= k && k < c.kxx_p.row_ptr[size_t(r) + 1]) return r;
        return index_t(-1);
      }();
      const index_t j = c.kxx_p.col_ind[size_t(k)];
      const index_t wslot = d.plan.w_split.xx.find(i, j);
      CHECK(c.kxx(k, b) == doctest::Approx(wslot >= 0 ? d.wxx(wslot, b) : 0.0));
    }
  for (index_t b = 0; b < 2; ++b)
    for (index_t i = 0; i < 3; ++i)
      CHECK(c.rhat1(i, b) == doctest::Approx(a.sys.r1x(i, b)));
}

TEST_CASE("condense scalar arithmetic: W=3, H=1, Sigma=2, r4=1, r2=0") {
  // one block, one state, one control (unused), one inequality on x
  using L = PolyKernel::Lane;
  std::vector<L> lanes = {
      {L::linear, 0, -1, 1.0, {}},
      {L::linear, 1, -1, 1.0, {}},
      {L::bilinear, 0, 0, 1.0, {}},
  };
  BlockNlp nlp;
  nlp.dims = {1, 1, 1, 1, 3};
  nlp.basis = std::make_shared<PolyKernel>(2, 1, lanes);
  nlp.L_f = SparseMatrix::from_triplets(1, 3, {{{0, 2}, 1.5}});  // f = 1.5 x^2 -> Wxx = 3
  nlp.L_g = SparseMatrix::from_triplets(1, 3, {{{0, 0}, 1.0}, {{0, 1}, 1.0}});
  nlp.L_h = SparseMatrix::from_triplets(1, 3, {{{0, 0}, 1.0}});  // h = x -> Hx = 1
  nlp.x_bounds = Bounds::free(1);
  nlp.u_bounds = Bounds::free(1);
  nlp.s_bounds = Bounds::nonneg(1);

  Iterate it = Iterate::zeros(nlp.dims);
  it.x(0, 0) = 0.4;
  it.u[0] = 0.2;
  it.s(0, 0) = 0.5;
  it.nu_lo(0, 0) = 1.0;  // Sigma_s = nu / s = 2

  AdPlan plan = make_ad_plan(nlp);
  AdWorkspace ws(nlp, plan, 1);
  DerivativeBundle d = make_bundle(nlp, plan);
  eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);
  AugmentedSystem sys = assemble_augmented(nlp, it, 0.0, d);
  CHECK(sys.sigma_s(0, 0) == doctest::Approx(2.0));
  // force the example's rhs values
  sys.r2(0, 0) = 0.0;
  sys.r4(0, 0) = 1.0;
  const double r1 = sys.r1x(0, 0);
  CondensedSystem c = condense(sys);
  CHECK(c.kxx(c.kxx_p.find(0, 0), 0) == doctest::Approx(5.0));  // K = W + H'SH = 3 + 2
  CHECK(c.rhat1(0, 0) == doctest::Approx(r1 + 2.0));            // r1 + H'(S r4 - r2)
}

TEST_CASE("recover_slack_dual scalar check and zero propagation") {
  Assembled a(make_random_block(1, 2, 1, 3, 500), 501, 0.1);
  CondensedSystem c = condense(a.sys);
  SUBCASE("zero inputs give zero recovery") {
    Step st;
    st.px = Matrix(2, 1);
    st.pu = {0.0};
    c.r2.set_zero();
    c.r4.set_zero();
    recover_slack_dual(c, st);
    CHECK(inf_norm(st.pz) == 0.0);
    CHECK(inf_norm(st.ps) == 0.0);
  }
}

TEST_CASE("condensed solve satisfies the full augmented system") {
  for (int trial = 0; trial < 8; ++trial) {
    Assembled a(make_random_block(3, 3, 2, 4, 600 + std::uint64_t(trial)),
                700 + std::uint64_t(trial), 0.05);
    CondenseWork work = make_condense_work(a.plan);
    double dwl = 0;
    Step st = solve_condensed(a.sys, work, RegSchedule{}, dwl);
    CHECK(augmented_step_residual(a.sys, st) <= 1e-10);
  }
}

TEST_CASE("reduce: scalar hand case Khat = 3 and schur oracle agreement") {
  // N=1: G_x = 2, G_u = 1, K = [[4, 1],[1, 3]] (x, u blocks)
  using L = PolyKernel::Lane;
  std::vector<L> lanes = {
      {L::linear, 0, -1, 1.0, {}},
      {L::linear, 1, -1, 1.0, {}},
      {L::bilinear, 0, 0, 1.0, {}},
      {L::bilinear, 1, 1, 1.0, {}},
      {L::bilinear, 0, 1, 1.0, {}},
  };
  BlockNlp nlp;
  nlp.dims = {1, 1, 1, 0, 5};
  nlp.basis = std::make_shared<PolyKernel>(2, 1, lanes);
  // f = 2 x^2 + 1.5 u^2 + x u  ->  W = [[4, 1],[1, 3]]
  nlp.L_f = SparseMatrix::from_triplets(
      1, 5, {{{0, 2}, 2.0}, {{0, 3}, 1.5}, {{0, 4}, 1.0}});
  nlp.L_g = SparseMatrix::from_triplets(1, 5, {{{0, 0}, 2.0}, {{0, 1}, 1.0}});
  nlp.L_h = SparseMatrix::from_triplets(0, 5, {});
  nlp.x_bounds = Bounds::free(1);
  nlp.u_bounds = Bounds::free(1);
  nlp.s_bounds = Bounds::free(0);

  Iterate it = Iterate::zeros(nlp.dims);
  it.x(0, 0) = 0.1;
  it.u[0] = 0.2;
  AdPlan plan = make_ad_plan(nlp);
  AdWorkspace ws(nlp, plan, 1);
  DerivativeBundle d = make_bundle(nlp, plan);
  eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);
  AugmentedSystem sys = assemble_augmented(nlp, it, 0.0, d);
  CondensedSystem c = condense(sys);

  BlockDiagFactor facts = factor_gx_range(c, 0, 1);
  ReducedSystem red = reduce(c, facts, 1);
  CHECK(red.khat(0, 0) == doctest::Approx(3.0).epsilon(1e-12));

  ArrowheadBlocks ab = make_arrowhead(c);
  Matrix s = schur_oracle(ab);
  CHECK(s(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("A_i inverse closed form: A_i * A_i^{-1} = I") {
  // the 2x2 block arrowhead inverse [[0, Gx^{ -1}],[Gx^{-T}, -Gx^{-T} Kxx Gx^{-1}]]
  const double gx = 2.0, kxx = 4.0;
  Matrix A(2, 2), Ainv(2, 2);
  A(0, 0) = kxx;
  A(0, 1) = gx;
  A(1, 0) = gx;
  A(1, 1) = 0;
  Ainv(0, 0) = 0;
  Ainv(0, 1) = 1 / gx;
  Ainv(1, 0) = 1 / gx;
  Ainv(1, 1) = -kxx / (gx * gx);
  for (index_t i = 0; i < 2; ++i)
    for (index_t j = 0; j < 2; ++j) {
      double acc = 0;
      for (index_t k = 0; k < 2; ++k) acc += A(i, k) * Ainv(k, j);
      CHECK(acc == doctest::Approx(i == j ? 1.0 : 0.0));
    }
}

TEST_CASE("reduce with G_u = 0 gives Khat = K_uu part") {
  // when G_u = 0 the Z state rows vanish; Khat = sum Kuu + sigma_u
  auto base = make_random_block(2, 3, 2, 3, 800);
  // rebuild L_g dropping all u columns
  std::vector<std::pair<std::pair<index_t, index_t>, double>> tg;
  for (index_t i = 0; i < base.L_g.rows; ++i)
    for (index_t k = base.L_g.row_ptr[size_t(i)]; k < base.L_g.row_ptr[size_t(i) + 1]; ++k) {
      // PolyKernel lanes: keep only lanes whose deps are x-only
      tg.push_back({{i, base.L_g.col_ind[size_t(k)]}, base.L_g.val[size_t(k)]});
    }
  // keep only lanes 1..n_x (linear in x) and squares of x
  std::vector<std::pair<std::pair<index_t, index_t>, double>> tg2;
  for (auto& e : tg) {
    const index_t lane = e.first.second;
    const index_t nd = base.dims.n_d();
    const bool xlane = (lane >= 1 && lane <= base.dims.n_x) ||
                       (lane > nd && lane <= nd + base.dims.n_x);
    if (xlane || lane == 0) tg2.push_back(e);
  }
  base.L_g = SparseMatrix::from_triplets(base.dims.n_x, base.dims.n_b, tg2);

  Assembled a(std::move(base), 801, 0.1);
  CondensedSystem c = condense(a.sys);
  CHECK(a.plan.g_split.u_pat.nnz() == 0);
  BlockDiagFactor facts = factor_gx_range(c, 0, 2);
  ReducedSystem red = reduce(c, facts, 2);
  // oracle: Khat from the arrowhead with B_i = [K_xu; 0]'
  Matrix s = schur_oracle(make_arrowhead(c));
  double err = 0;
  for (size_t k = 0; k < s.size(); ++k)
    err = std::max(err, std::abs(s.data()[k] - red.khat.data()[k]));
  CHECK(err <= 1e-9 * std::max(1.0, inf_norm(red.khat)));
}

TEST_CASE("schur identity on 100 seeded random instances") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const index_t N = 1 + index_t(rng() % 8);
    const index_t n_x = 2 + index_t(rng() % 5);
    const index_t n_u = 1 + index_t(rng() % 4);
    const index_t m = index_t(rng() % 4);
    Assembled a(make_random_block(N, n_x, n_u, m, 900 + std::uint64_t(trial)),
                1000 + std::uint64_t(trial), 0.1);
    CondensedSystem c = condense(a.sys);
    BlockDiagFactor facts = factor_gx_range(c, 0, N);
    ReducedSystem red = reduce(c, facts, 3);
    Matrix s = schur_oracle(make_arrowhead(c));
    double err = 0;
    for (size_t k = 0; k < s.size(); ++k)
      err = std::max(err, std::abs(s.data()[k] - red.khat.data()[k]));
    CHECK(err <= 1e-9 * std::max(1.0, inf_norm(red.khat)));
    // symmetry of Khat
    double asym = 0;
    for (index_t i = 0; i < n_u; ++i)
      for (index_t j = 0; j < n_u; ++j)
        asym = std::max(asym, std::abs(red.khat(i, j) - red.khat(j, i)));
    CHECK(asym <= 1e-10 * std::max(1.0, inf_norm(red.khat)));
  }
}

TEST_CASE("reduce is invariant to the tile width") {
  Assembled a(make_random_block(3, 4, 5, 3, 1100), 1101, 0.05);
  CondensedSystem c = condense(a.sys);
  BlockDiagFactor facts = factor_gx_range(c, 0, 3);
  ReducedSystem full = reduce(c, facts, 5);  // n_batch = n_u
  for (index_t nb : {1, 2, 3}) {
    ReducedSystem tiled = reduce(c, facts, nb);
    double err = 0;
    for (size_t k = 0; k < full.khat.size(); ++k)
      err = std::max(err, std::abs(full.khat.data()[k] - tiled.khat.data()[k]));
    CHECK(err <= 1e-12 * std::max(1.0, inf_norm(full.khat)));
    CHECK(rel_diff(full.rhs, tiled.rhs) <= 1e-12);
  }
}

TEST_CASE("operation accounting: 4 spsm and 7 spmm per reduction tile") {
  Assembled a(make_random_block(4, 3, 4, 2, 1200), 1201, 0.1);
  CondensedSystem c = condense(a.sys);
  BlockDiagFactor facts = factor_gx_range(c, 0, 4);
  for (index_t nb : {1, 2, 4}) {
    ReducedSystem red = reduce(c, facts, nb);
    const count_t tiles = (4 + nb - 1) / nb;  // ceil(n_u / nb)
    CHECK(red.counters.tiles == tiles);
    CHECK(red.counters.spsm == 4 * tiles);
    CHECK(red.counters.spmm == 7 * tiles);
  }
}

TEST_CASE("reduced workspace accounting is exact") {
  const index_t N = 6, n_x = 3, n_u = 4;
  Assembled a(make_random_block(N, n_x, n_u, 2, 1300), 1301, 0.1);
  CondensedSystem c = condense(a.sys);
  for (index_t nb : {1, 3}) {
    SUBCASE("single group") {
      BlockDiagFactor facts = factor_gx_range(c, 0, N);
      ReducedSystem red = reduce(c, facts, nb);
      CHECK(red.workspace_elements == (2 * count_t(N) * n_x + n_u) * nb);
    }
  }
}

TEST_CASE("recover_state_adjoint: zero case and condensed residual") {
  Assembled a(make_random_block(2, 3, 2, 3, 1400), 1401, 0.1);
  CondensedSystem c = condense(a.sys);
  BlockDiagFactor facts = factor_gx_range(c, 0, 2);

  SUBCASE("pu = 0 and rhat3 = 0 give px = 0") {
    CondensedSystem c0 = c;
    c0.rhat3.set_zero();
    Step st;
    st.pu.assign(2, 0.0);
    recover_state_adjoint(c0, facts, st);
    CHECK(inf_norm(st.px) <= 1e-14);
  }

  SUBCASE("full reduced pipeline satisfies the augmented system") {
    ReducedSystem red = reduce(c, facts, 2);
    DenseSymFactor f = factor_dense_sym(red.khat);
    REQUIRE(f.zero() == 0);
    Vector pu = red.rhs;
    f.solve(pu);
    Step st;
    st.pu = pu;
    recover_state_adjoint(c, facts, st);
    recover_slack_dual(c, st);
    CHECK(augmented_step_residual(a.sys, st) <= 1e-9);
  }
}

TEST_CASE("strategy equivalence on random interior iterates") {
  Executor exec({1, ReduceOrder::deterministic});
  for (int trial = 0; trial < 6; ++trial) {
    auto nlp = make_random_block(3, 3, 2, 4, 1500 + std::uint64_t(trial));
    Iterate it = random_interior(nlp, 1600 + std::uint64_t(trial));
    AdPlan plan = make_ad_plan(nlp);
    AdWorkspace ws(nlp, plan, 3);
    DerivativeBundle d = make_bundle(nlp, plan);
    eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);

    IpmOptions opts;
    double dwl_a = 0, dwl_c = 0, dwl_r = 0;
    Step sa = compute_step(nlp, it, 0.05, d, KktStrategy::augmented, opts, exec, dwl_a);
    Step sc = compute_step(nlp, it, 0.05, d, KktStrategy::condensed, opts, exec, dwl_c);
    Step sr = compute_step(nlp, it, 0.05, d, KktStrategy::reduced, opts, exec, dwl_r);
    CHECK(step_rel_diff(sa, sc) <= 1e-7);
    CHECK(step_rel_diff(sa, sr) <= 1e-7);
  }
}

TEST_CASE("singular G_x propagates SingularBlock from the reduced path") {
  auto nlp = make_random_block(2, 2, 1, 0, 1700);
  // zero out the state part of g in block layout: make L_g rows not touch x
  std::vector<std::pair<std::pair<index_t, index_t>, double>> tg;
  for (index_t i = 0; i < nlp.dims.n_x; ++i)
    tg.push_back({{i, 1 + nlp.dims.n_x}, 1.0});  // depend on u only
  nlp.L_g = SparseMatrix::from_triplets(nlp.dims.n_x, nlp.dims.n_b, tg);
  Iterate it = random_interior(nlp, 1701);
  AdPlan plan = make_ad_plan(nlp);
  AdWorkspace ws(nlp, plan, 2);
  DerivativeBundle d = make_bundle(nlp, plan);
  eval_bundle_range(nlp, plan, ws, it.x, it.u, it.y, it.z, 1.0, 0, d);
  AugmentedSystem sys = assemble_augmented(nlp, it, 0.1, d);
  CondensedSystem c = condense(sys);
  CHECK_THROWS_AS(factor_gx_range(c, 0, 2), SingularBlockError);
}
