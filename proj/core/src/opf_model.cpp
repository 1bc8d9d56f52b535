#include <cmath>
#include <map>
#include <stdexcept>

#include "blockipm/opf.hpp"

namespace blockipm::opf {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct BranchCoef {
  index_t from, to;      // bus indices
  double gff, bff, gft, bft, gtf, btf, gtt, btt;
  double rate2;          // squared per-unit flow limit, <= 0 when unlimited
};

// Admittance coefficients of one branch in MATPOWER conventions.
BranchCoef branch_coef(const CaseData& cs, const BranchRow& br,
                       const std::map<int, index_t>& bus_of_id) {
  BranchCoef c{};
  c.from = bus_of_id.at(br.from);
  c.to = bus_of_id.at(br.to);
  const double den = br.r * br.r + br.x * br.x;
  const double gs = br.r / den, bs = -br.x / den;
  const double bc = br.b;
  const double tap = (br.tap == 0.0) ? 1.0 : br.tap;
  const double shift = br.shift * kPi / 180.0;
  // Yff = (ys + j bc/2) / tap^2, Yft = -ys / conj(t), Ytf = -ys / t, Ytt = ys + j bc/2
  c.gff = gs / (tap * tap);
  c.bff = (bs + bc / 2.0) / (tap * tap);
  const double cs_ = std::cos(shift), sn = std::sin(shift);
  // -ys * e^{j shift} / tap
  c.gft = -(gs * cs_ - bs * sn) / tap;
  c.bft = -(gs * sn + bs * cs_) / tap;
  // -ys * e^{-j shift} / tap
  c.gtf = -(gs * cs_ + bs * sn) / tap;
  c.btf = -(-gs * sn + bs * cs_) / tap;
  c.gtt = gs;
  c.btt = bs + bc / 2.0;
  const double rate = br.rateA / cs.baseMVA;
  c.rate2 = br.rateA > 0 ? rate * rate : 0.0;
  return c;
}

struct Layout {
  // basis lane offsets
  index_t const1 = 0;
  index_t vv = 1;         // + bus
  index_t br = 0;         // + 4*l: cff, ctt, wc, ws
  index_t sq = 0;         // + 2*l: sqf, sqt
  index_t pd = 0, qd = 0; // + bus
  index_t pg = 0, pg2 = 0;  // + live gen
  index_t n_b = 0;

  index_t cff(index_t l) const { return br + 4 * l; }
  index_t ctt(index_t l) const { return br + 4 * l + 1; }
  index_t wc(index_t l) const { return br + 4 * l + 2; }
  index_t ws(index_t l) const { return br + 4 * l + 3; }
  index_t sqf(index_t l) const { return sq + 2 * l; }
  index_t sqt(index_t l) const { return sq + 2 * l + 1; }
};

Layout make_layout(index_t nbus, index_t nbranch, index_t ngen) {
  Layout L;
  L.vv = 1;
  L.br = L.vv + nbus;
  L.sq = L.br + 4 * nbranch;
  L.pd = L.sq + 2 * nbranch;
  L.qd = L.pd + nbus;
  L.pg = L.qd + nbus;
  L.pg2 = L.pg + ngen;
  L.n_b = L.pg2 + ngen;
  return L;
}

// Inputs of the polar kernel: x = [theta | v_pq], u = [pg | v_gen].
struct InputMap {
  index_t n_x = 0, n_u = 0;
  std::vector<index_t> theta;  // bus -> input index or -1 (reference)
  std::vector<index_t> vmag;   // bus -> input index (x or n_x + u region)
  std::vector<index_t> pgen;   // live gen -> input index or -1 (slack)
};

/// The shared AC power-flow basis: per-branch polar monomials scaled by the
/// scenario branch status, per-bus squared magnitudes, squared apparent
/// flows, scenario load constants, generator injections, and the dependent
/// slack active power with its square.
class PolarBasisKernel final : public BasisKernel {
 public:
  PolarBasisKernel(Layout lay, InputMap im, std::vector<BranchCoef> br, Vector gs_sh,
                   Vector bs_sh, Matrix pd, Matrix qd, Matrix status, index_t ref_bus,
                   double gs_ref, std::vector<index_t> ref_branches_from,
                   std::vector<index_t> ref_branches_to, std::vector<index_t> ref_other_gens,
                   index_t slack_gen, index_t n_blocks)
      : lay_(lay),
        im_(im),
        br_(std::move(br)),
        gs_sh_(std::move(gs_sh)),
        bs_sh_(std::move(bs_sh)),
        pd_(std::move(pd)),
        qd_(std::move(qd)),
        status_(std::move(status)),
        ref_bus_(ref_bus),
        gs_ref_(gs_ref),
        ref_from_(std::move(ref_branches_from)),
        ref_to_(std::move(ref_branches_to)),
        ref_other_gens_(std::move(ref_other_gens)),
        slack_gen_(slack_gen),
        n_blocks_(n_blocks) {}

  index_t num_inputs() const override { return im_.n_x + im_.n_u; }
  index_t num_outputs() const override { return lay_.n_b; }
  index_t num_blocks() const override { return n_blocks_; }

  void jacobian_deps(std::vector<std::vector<index_t>>& deps) const override;
  void hessian_deps(std::vector<std::vector<index_t>>& deps) const override;
  void eval(const DualBatch& in, DualBatch& out, index_t block_begin) const override;
  void adjoint(const DualBatch& in, const DualBatch& psi, const Matrix& w, DualBatch& xbar,
               AdjointUSink& usink, index_t block_begin, index_t n_x) const override;

 private:
  std::vector<index_t> branch_inputs(const BranchCoef& c) const {
    std::vector<index_t> v;
    if (im_.theta[size_t(c.from)] >= 0) v.push_back(im_.theta[size_t(c.from)]);
    if (im_.theta[size_t(c.to)] >= 0) v.push_back(im_.theta[size_t(c.to)]);
    v.push_back(im_.vmag[size_t(c.from)]);
    v.push_back(im_.vmag[size_t(c.to)]);
    return v;
  }

  Layout lay_;
  InputMap im_;
  std::vector<BranchCoef> br_;
  Vector gs_sh_, bs_sh_;   // per-bus shunt (pu)
  Matrix pd_, qd_;         // nbus x N scenario loads (pu)
  Matrix status_;          // nbranch x N scenario branch status
  index_t ref_bus_;
  double gs_ref_;
  std::vector<index_t> ref_from_, ref_to_;  // live branches touching the ref bus
  std::vector<index_t> ref_other_gens_;     // live gens at the ref bus besides the slack
  index_t slack_gen_;
  index_t n_blocks_;
};

void PolarBasisKernel::jacobian_deps(std::vector<std::vector<index_t>>& deps) const {
  deps.assign(size_t(lay_.n_b), {});
  const index_t nbus = index_t(im_.theta.size());
  for (index_t b = 0; b < nbus; ++b) deps[size_t(lay_.vv + b)] = {im_.vmag[size_t(b)]};
  for (size_t l = 0; l < br_.size(); ++l) {
    const auto& c = br_[l];
    deps[size_t(lay_.cff(index_t(l)))] = {im_.vmag[size_t(c.from)]};
    deps[size_t(lay_.ctt(index_t(l)))] = {im_.vmag[size_t(c.to)]};
    auto all = branch_inputs(c);
    deps[size_t(lay_.wc(index_t(l)))] = all;
    deps[size_t(lay_.ws(index_t(l)))] = all;
    deps[size_t(lay_.sqf(index_t(l)))] = all;
    deps[size_t(lay_.sqt(index_t(l)))] = all;
  }
  for (size_t g = 0; g < im_.pgen.size(); ++g) {
    if (index_t(g) == slack_gen_) continue;
    deps[size_t(lay_.pg + index_t(g))] = {im_.pgen[g]};
    deps[size_t(lay_.pg2 + index_t(g))] = {im_.pgen[g]};
  }
  // slack generator: depends on the reference-bus voltage, every branch
  // monomial input at the reference bus, and the other reference-bus gens
  std::vector<index_t> sd = {im_.vmag[size_t(ref_bus_)]};
  for (index_t l : ref_from_)
    for (index_t i : branch_inputs(br_[size_t(l)])) sd.push_back(i);
  for (index_t l : ref_to_)
    for (index_t i : branch_inputs(br_[size_t(l)])) sd.push_back(i);
  for (index_t g : ref_other_gens_) sd.push_back(im_.pgen[size_t(g)]);
  std::sort(sd.begin(), sd.end());
  sd.erase(std::unique(sd.begin(), sd.end()), sd.end());
  deps[size_t(lay_.pg + slack_gen_)] = sd;
  deps[size_t(lay_.pg2 + slack_gen_)] = sd;
}

void PolarBasisKernel::hessian_deps(std::vector<std::vector<index_t>>& deps) const {
  jacobian_deps(deps);
  // Linear lanes carry no curvature.
  for (size_t g = 0; g < im_.pgen.size(); ++g) {
    if (index_t(g) == slack_gen_) continue;
    deps[size_t(lay_.pg + index_t(g))].clear();
  }
  // The slack lane is linear in the other reference gens; its square is not.
  auto& sl = deps[size_t(lay_.pg + slack_gen_)];
  std::vector<index_t> nl;
  for (index_t i : sl) {
    bool is_other_gen = false;
    for (index_t g : ref_other_gens_)
      if (im_.pgen[size_t(g)] == i) is_other_gen = true;
    if (!is_other_gen) nl.push_back(i);
  }
  sl = nl;
}

void PolarBasisKernel::eval(const DualBatch& in, DualBatch& out, index_t block_begin) const {
  const index_t M = in.columns();
  const index_t nbus = index_t(im_.theta.size());
  std::vector<double> percol(static_cast<size_t>(M));

  db_set_const(out, lay_.const1, 1.0);
  for (index_t b = 0; b < nbus; ++b) db_square(out, lay_.vv + b, in, im_.vmag[size_t(b)]);

  for (size_t l = 0; l < br_.size(); ++l) {
    const auto& c = br_[l];
    const index_t cff = lay_.cff(index_t(l)), ctt = lay_.ctt(index_t(l)),
                  wc = lay_.wc(index_t(l)), ws = lay_.ws(index_t(l));
    const index_t thf = im_.theta[size_t(c.from)], tht = im_.theta[size_t(c.to)];
    const index_t ivf = im_.vmag[size_t(c.from)], ivt = im_.vmag[size_t(c.to)];

    // wc <- theta_f - theta_t (reference angle is the constant 0)
    if (thf >= 0 && tht >= 0) {
      db_sub(out, wc, in, thf, in, tht);
    } else if (thf >= 0) {
      db_copy(out, wc, in, thf);
    } else if (tht >= 0) {
      db_copy(out, wc, in, tht);
      db_scale(out, wc, -1.0);
    } else {
      db_set_const(out, wc, 0.0);
    }
    db_sin(out, ws, out, wc);
    db_cos(out, wc, out, wc);
    db_mul(out, ctt, in, ivf, in, ivt);  // staging: v_f v_t
    db_mul(out, wc, out, wc, out, ctt);
    db_mul(out, ws, out, ws, out, ctt);
    db_square(out, cff, in, ivf);
    db_square(out, ctt, in, ivt);

    for (index_t j = 0; j < M; ++j) percol[size_t(j)] = status_(index_t(l), block_begin + j);
    db_scale_per_column(out, cff, percol.data());
    db_scale_per_column(out, ctt, percol.data());
    db_scale_per_column(out, wc, percol.data());
    db_scale_per_column(out, ws, percol.data());

    // sq lanes: P^2 + Q^2 from the freshly computed monomials
    auto flow_sq = [&](index_t dst, index_t m_self, double a1, double a2, double a3, double b1,
                       double b2, double b3) {
      const index_t p = in.lanes();
      const double* av = out.v(m_self);
      const double* bv = out.v(wc);
      const double* cv = out.v(ws);
      double* dv = out.v(dst);
      for (index_t k = 0; k < p; ++k) {
        const double* at = out.t(m_self, k);
        const double* bt = out.t(wc, k);
        const double* ct = out.t(ws, k);
        double* dt = out.t(dst, k);
        for (index_t j = 0; j < M; ++j) {
          const double P = a1 * av[j] + a2 * bv[j] + a3 * cv[j];
          const double Q = b1 * av[j] + b2 * bv[j] + b3 * cv[j];
          const double Pt = a1 * at[j] + a2 * bt[j] + a3 * ct[j];
          const double Qt = b1 * at[j] + b2 * bt[j] + b3 * ct[j];
          dt[j] = 2.0 * (P * Pt + Q * Qt);
        }
      }
      for (index_t j = 0; j < M; ++j) {
        const double P = a1 * av[j] + a2 * bv[j] + a3 * cv[j];
        const double Q = b1 * av[j] + b2 * bv[j] + b3 * cv[j];
        dv[j] = P * P + Q * Q;
      }
    };
    flow_sq(lay_.sqf(index_t(l)), cff, c.gff, c.gft, c.bft, -c.bff, -c.bft, c.gft);
    flow_sq(lay_.sqt(index_t(l)), ctt, c.gtt, c.gtf, -c.btf, -c.btt, -c.btf, -c.gtf);
  }

  for (index_t b = 0; b < nbus; ++b) {
    for (index_t j = 0; j < M; ++j) percol[size_t(j)] = pd_(b, block_begin + j);
    db_set_const_per_column(out, lay_.pd + b, percol.data());
    for (index_t j = 0; j < M; ++j) percol[size_t(j)] = qd_(b, block_begin + j);
    db_set_const_per_column(out, lay_.qd + b, percol.data());
  }

  for (size_t g = 0; g < im_.pgen.size(); ++g) {
    if (index_t(g) == slack_gen_) continue;
    db_copy(out, lay_.pg + index_t(g), in, im_.pgen[g]);
    db_square(out, lay_.pg2 + index_t(g), in, im_.pgen[g]);
  }

  // Dependent slack active power:
  //   p_slack = Pd_ref + Gs_ref vv_ref + sum of branch P flows at ref - other gens.
  {
    const index_t sl = lay_.pg + slack_gen_;
    db_copy(out, sl, out, lay_.pd + ref_bus_);
    db_axpy(out, sl, gs_ref_, out, lay_.vv + ref_bus_);
    for (index_t l : ref_from_) {
      const auto& c = br_[size_t(l)];
      db_axpy(out, sl, c.gff, out, lay_.cff(l));
      db_axpy(out, sl, c.gft, out, lay_.wc(l));
      db_axpy(out, sl, c.bft, out, lay_.ws(l));
    }
    for (index_t l : ref_to_) {
      const auto& c = br_[size_t(l)];
      db_axpy(out, sl, c.gtt, out, lay_.ctt(l));
      db_axpy(out, sl, c.gtf, out, lay_.wc(l));
      db_axpy(out, sl, -c.btf, out, lay_.ws(l));
    }
    for (index_t g : ref_other_gens_) db_axpy(out, sl, -1.0, out, lay_.pg + g);
    db_square(out, lay_.pg2 + slack_gen_, out, sl);
  }
}

void PolarBasisKernel::adjoint(const DualBatch& in, const DualBatch& psi, const Matrix& w,
                               DualBatch& xbar, AdjointUSink& usink, index_t block_begin,
                               index_t n_x) const {
  const index_t M = in.columns();
  const index_t p = in.lanes();
  const index_t nbus = index_t(im_.theta.size());

  // per-column dual scalars: value + p tangents in reusable scratch
  std::vector<double> scratch(size_t(p) * 12);
  auto slot = [&](int s) { return scratch.data() + size_t(s) * p; };

  auto emit = [&](index_t row, index_t col, double v, const double* t) {
    if (row < n_x) {
      xbar.v(row)[col] += v;
      for (index_t k = 0; k < p; ++k) xbar.t(row, k)[col] += t ? t[k] : 0.0;
    } else {
      usink.add(row - n_x, col, v, t);
    }
  };

  // Effective slack weight: w(sl) + w(sl2) * 2 psi_sl, a dual scalar.
  const index_t sl_lane = lay_.pg + slack_gen_;
  const index_t sl2_lane = lay_.pg2 + slack_gen_;
  auto slack_weight = [&](index_t j, double* wv, double* wt) {
    const double w2 = w(sl2_lane, j);
    *wv = w(sl_lane, j) + w2 * 2.0 * psi.v(sl_lane)[j];
    for (index_t k = 0; k < p; ++k) wt[k] = w2 * 2.0 * psi.t(sl_lane, k)[j];
  };

  // vv lanes (and the slack's shunt term at the reference bus).
  for (index_t b = 0; b < nbus; ++b) {
    const index_t lane = lay_.vv + b;
    const index_t iv = im_.vmag[size_t(b)];
    const bool is_ref = (b == ref_bus_);
    double* wt = slot(0);
    double* ct = slot(1);
    for (index_t j = 0; j < M; ++j) {
      double wv = w(lane, j);
      std::fill(wt, wt + p, 0.0);
      if (is_ref) {
        double sv;
        slack_weight(j, &sv, ct);
        wv += gs_ref_ * sv;
        for (index_t k = 0; k < p; ++k) wt[k] += gs_ref_ * ct[k];
      }
      if (wv == 0.0 && !is_ref) continue;
      // contribution 2 v w (dual product)
      const double vv = in.v(iv)[j];
      double outv = 2.0 * vv * wv;
      double* ot = slot(2);
      for (index_t k = 0; k < p; ++k)
        ot[k] = 2.0 * (vv * wt[k] + in.t(iv, k)[j] * wv);
      emit(iv, j, outv, ot);
    }
  }

  // Branch lanes: fold the squared-flow chain (and the slack flow chain at
  // the reference bus) into dual monomial weights, then push one branch's
  // four inputs at once.
  for (size_t l = 0; l < br_.size(); ++l) {
    const auto& c = br_[l];
    const index_t thf = im_.theta[size_t(c.from)], tht = im_.theta[size_t(c.to)];
    const index_t ivf = im_.vmag[size_t(c.from)], ivt = im_.vmag[size_t(c.to)];
    const index_t lcff = lay_.cff(index_t(l)), lctt = lay_.ctt(index_t(l)),
                  lwc = lay_.wc(index_t(l)), lws = lay_.ws(index_t(l));
    bool at_ref_from = false, at_ref_to = false;
    for (index_t rl : ref_from_) at_ref_from |= (rl == index_t(l));
    for (index_t rl : ref_to_) at_ref_to |= (rl == index_t(l));

    double* wcff_t = slot(0);
    double* wctt_t = slot(1);
    double* wwc_t = slot(2);
    double* wws_t = slot(3);
    double* tmp = slot(4);
    double* ot = slot(5);

    for (index_t j = 0; j < M; ++j) {
      const double st = status_(index_t(l), block_begin + j);
      if (st == 0.0) continue;  // outaged: every lane and derivative is zero

      double wcff = w(lcff, j), wctt = w(lctt, j), wwc = w(lwc, j), wws = w(lws, j);
      std::fill(wcff_t, wcff_t + p, 0.0);
      std::fill(wctt_t, wctt_t + p, 0.0);
      std::fill(wwc_t, wwc_t + p, 0.0);
      std::fill(wws_t, wws_t + p, 0.0);

      // squared-flow chains: dsq = 2 P dP + 2 Q dQ with P, Q duals read from
      // the forward monomial lanes
      const double wsqf = w(lay_.sqf(index_t(l)), j);
      if (wsqf != 0.0) {
        const double Pv = c.gff * psi.v(lcff)[j] + c.gft * psi.v(lwc)[j] + c.bft * psi.v(lws)[j];
        const double Qv =
            -c.bff * psi.v(lcff)[j] - c.bft * psi.v(lwc)[j] + c.gft * psi.v(lws)[j];
        for (index_t k = 0; k < p; ++k) {
          const double Pt = c.gff * psi.t(lcff, k)[j] + c.gft * psi.t(lwc, k)[j] +
                            c.bft * psi.t(lws, k)[j];
          const double Qt = -c.bff * psi.t(lcff, k)[j] - c.bft * psi.t(lwc, k)[j] +
                            c.gft * psi.t(lws, k)[j];
          wcff_t[k] += wsqf * 2.0 * (Pt * c.gff + Qt * -c.bff);
          wwc_t[k] += wsqf * 2.0 * (Pt * c.gft + Qt * -c.bft);
          wws_t[k] += wsqf * 2.0 * (Pt * c.bft + Qt * c.gft);
        }
        wcff += wsqf * 2.0 * (Pv * c.gff + Qv * -c.bff);
        wwc += wsqf * 2.0 * (Pv * c.gft + Qv * -c.bft);
        wws += wsqf * 2.0 * (Pv * c.bft + Qv * c.gft);
      }
      const double wsqt = w(lay_.sqt(index_t(l)), j);
      if (wsqt != 0.0) {
        const double Pv = c.gtt * psi.v(lctt)[j] + c.gtf * psi.v(lwc)[j] - c.btf * psi.v(lws)[j];
        const double Qv =
            -c.btt * psi.v(lctt)[j] - c.btf * psi.v(lwc)[j] - c.gtf * psi.v(lws)[j];
        for (index_t k = 0; k < p; ++k) {
          const double Pt = c.gtt * psi.t(lctt, k)[j] + c.gtf * psi.t(lwc, k)[j] -
                            c.btf * psi.t(lws, k)[j];
          const double Qt = -c.btt * psi.t(lctt, k)[j] - c.btf * psi.t(lwc, k)[j] -
                            c.gtf * psi.t(lws, k)[j];
          wctt_t[k] += wsqt * 2.0 * (Pt * c.gtt + Qt * -c.btt);
          wwc_t[k] += wsqt * 2.0 * (Pt * c.gtf + Qt * -c.btf);
          wws_t[k] += wsqt * 2.0 * (Pt * -c.btf + Qt * -c.gtf);
        }
        wctt += wsqt * 2.0 * (Pv * c.gtt + Qv * -c.btt);
        wwc += wsqt * 2.0 * (Pv * c.gtf + Qv * -c.btf);
        wws += wsqt * 2.0 * (Pv * -c.btf + Qv * -c.gtf);
      }

      // slack active-power chain for branches touching the reference bus
      if (at_ref_from || at_ref_to) {
        double sv;
        slack_weight(j, &sv, tmp);
        if (at_ref_from) {
          wcff += c.gff * sv;
          wwc += c.gft * sv;
          wws += c.bft * sv;
          for (index_t k = 0; k < p; ++k) {
            wcff_t[k] += c.gff * tmp[k];
            wwc_t[k] += c.gft * tmp[k];
            wws_t[k] += c.bft * tmp[k];
          }
        }
        if (at_ref_to) {
          wctt += c.gtt * sv;
          wwc += c.gtf * sv;
          wws += -c.btf * sv;
          for (index_t k = 0; k < p; ++k) {
            wctt_t[k] += c.gtt * tmp[k];
            wwc_t[k] += c.gtf * tmp[k];
            wws_t[k] += -c.btf * tmp[k];
          }
        }
      }

      // monomial duals from the inputs
      const double vf = in.v(ivf)[j], vt = in.v(ivt)[j];
      double dthv = 0;
      if (thf >= 0) dthv += in.v(thf)[j];
      if (tht >= 0) dthv -= in.v(tht)[j];
      const double co = std::cos(dthv), si = std::sin(dthv);
      // dth tangents in tmp
      for (index_t k = 0; k < p; ++k) {
        double d = 0;
        if (thf >= 0) d += in.t(thf, k)[j];
        if (tht >= 0) d -= in.t(tht, k)[j];
        tmp[k] = d;
      }

      // cff = st vf^2
      if (!(wcff == 0.0)) {
        double v = 2.0 * st * vf * wcff;
        for (index_t k = 0; k < p; ++k)
          ot[k] = 2.0 * st * (vf * wcff_t[k] + in.t(ivf, k)[j] * wcff);
        emit(ivf, j, v, ot);
      } else {
        bool any = false;
        for (index_t k = 0; k < p; ++k) any |= (wcff_t[k] != 0.0);
        if (any) {
          for (index_t k = 0; k < p; ++k)
            ot[k] = 2.0 * st * (vf * wcff_t[k] + in.t(ivf, k)[j] * wcff);
          emit(ivf, j, 2.0 * st * vf * wcff, ot);
        }
      }
      // ctt = st vt^2
      {
        double v = 2.0 * st * vt * wctt;
        bool any = (wctt != 0.0);
        for (index_t k = 0; k < p; ++k) any |= (wctt_t[k] != 0.0);
        if (any) {
          for (index_t k = 0; k < p; ++k)
            ot[k] = 2.0 * st * (vt * wctt_t[k] + in.t(ivt, k)[j] * wctt);
          emit(ivt, j, v, ot);
        }
      }

      bool any_w = (wwc != 0.0) || (wws != 0.0);
      for (index_t k = 0; k < p && !any_w; ++k)
        any_w = (wwc_t[k] != 0.0) || (wws_t[k] != 0.0);
      if (!any_w) continue;

      // wc = st vf vt cos, ws = st vf vt sin
      // d/dvf: st (vt cos) wwc + st (vt sin) wws
      {
        const double fv = st * (vt * co * wwc + vt * si * wws);
        for (index_t k = 0; k < p; ++k) {
          const double vt_t = in.t(ivt, k)[j];
          const double co_t = -si * tmp[k];
          const double si_t = co * tmp[k];
          ot[k] = st * ((vt_t * co + vt * co_t) * wwc + (vt_t * si + vt * si_t) * wws) +
                  st * (vt * co * wwc_t[k] + vt * si * wws_t[k]);
        }
        emit(ivf, j, fv, ot);
      }
      // d/dvt
      {
        const double fv = st * (vf * co * wwc + vf * si * wws);
        for (index_t k = 0; k < p; ++k) {
          const double vf_t = in.t(ivf, k)[j];
          const double co_t = -si * tmp[k];
          const double si_t = co * tmp[k];
          ot[k] = st * ((vf_t * co + vf * co_t) * wwc + (vf_t * si + vf * si_t) * wws) +
                  st * (vf * co * wwc_t[k] + vf * si * wws_t[k]);
        }
        emit(ivt, j, fv, ot);
      }
      // d/dth_f = -st vf vt sin wwc + st vf vt cos wws; d/dth_t is the negative
      if (thf >= 0 || tht >= 0) {
        const double base = st * vf * vt;
        const double fv = base * (-si * wwc + co * wws);
        for (index_t k = 0; k < p; ++k) {
          const double vf_t = in.t(ivf, k)[j];
          const double vt_t = in.t(ivt, k)[j];
          const double base_t = st * (vf_t * vt + vf * vt_t);
          const double co_t = -si * tmp[k];
          const double si_t = co * tmp[k];
          ot[k] = base_t * (-si * wwc + co * wws) + base * (-si_t * wwc + co_t * wws) +
                  base * (-si * wwc_t[k] + co * wws_t[k]);
        }
        if (thf >= 0) emit(thf, j, fv, ot);
        if (tht >= 0) {
          for (index_t k = 0; k < p; ++k) ot[k] = -ot[k];
          emit(tht, j, -fv, ot);
        }
      }
    }
  }

  // Generator lanes.
  for (size_t g = 0; g < im_.pgen.size(); ++g) {
    if (index_t(g) == slack_gen_) continue;
    const index_t lane = lay_.pg + index_t(g);
    const index_t lane2 = lay_.pg2 + index_t(g);
    const index_t iu = im_.pgen[g];
    bool at_ref = false;
    for (index_t rg : ref_other_gens_) at_ref |= (rg == index_t(g));
    double* ot = slot(0);
    double* st_ = slot(1);
    for (index_t j = 0; j < M; ++j) {
      double wv = w(lane, j) + w(lane2, j) * 2.0 * in.v(iu)[j];
      std::fill(ot, ot + p, 0.0);
      for (index_t k = 0; k < p; ++k) ot[k] = w(lane2, j) * 2.0 * in.t(iu, k)[j];
      if (at_ref) {
        double sv;
        slack_weight(j, &sv, st_);
        wv -= sv;
        for (index_t k = 0; k < p; ++k) ot[k] -= st_[k];
      }
      bool any = (wv != 0.0);
      for (index_t k = 0; k < p && !any; ++k) any = (ot[k] != 0.0);
      if (any) emit(iu, j, wv, ot);
    }
  }
  (void)block_begin;
}

}  // namespace

OpfVariableMap variable_map(const CaseData& cs) {
  OpfVariableMap vm;
  const index_t nbus = index_t(cs.bus.size());
  std::map<int, index_t> bus_of_id;
  for (index_t b = 0; b < nbus; ++b) bus_of_id[cs.bus[size_t(b)].id] = b;

  const index_t ref = index_t(cs.ref_bus_index());
  std::vector<char> is_gen_bus(size_t(nbus), 0);
  for (size_t g = 0; g < cs.gen.size(); ++g) {
    if (!cs.gen[g].status) continue;
    vm.gen_bus.push_back(bus_of_id.at(cs.gen[g].bus));
    is_gen_bus[size_t(bus_of_id.at(cs.gen[g].bus))] = 1;
  }
  for (size_t l = 0; l < cs.branch.size(); ++l)
    if (cs.branch[l].status) vm.live_branch.push_back(index_t(l));

  // slack = first in-service generator at the reference bus
  vm.slack_gen = -1;
  for (size_t g = 0; g < vm.gen_bus.size(); ++g)
    if (vm.gen_bus[g] == ref && vm.slack_gen < 0) vm.slack_gen = index_t(g);
  if (vm.slack_gen < 0)
    throw ParseError("reference bus has no in-service generator", 0);

  vm.theta_of_bus.assign(size_t(nbus), -1);
  vm.vx_of_bus.assign(size_t(nbus), -1);
  vm.vu_of_bus.assign(size_t(nbus), -1);
  vm.pg_of_gen.assign(vm.gen_bus.size(), -1);

  index_t ix = 0;
  for (index_t b = 0; b < nbus; ++b)
    if (b != ref) vm.theta_of_bus[size_t(b)] = ix++;
  for (index_t b = 0; b < nbus; ++b)
    if (!is_gen_bus[size_t(b)]) vm.vx_of_bus[size_t(b)] = ix++;
  vm.n_x = ix;

  index_t iu = 0;
  for (size_t g = 0; g < vm.gen_bus.size(); ++g)
    if (index_t(g) != vm.slack_gen) vm.pg_of_gen[g] = iu++;
  for (index_t b = 0; b < nbus; ++b)
    if (is_gen_bus[size_t(b)]) vm.vu_of_bus[size_t(b)] = iu++;
  vm.n_u = iu;
  return vm;
}

BlockNlp build_block_opf(const CaseData& cs, const ScenarioSet& scen) {
  const OpfVariableMap vm = variable_map(cs);
  const index_t nbus = index_t(cs.bus.size());
  const index_t N = scen.N;
  if (N < 1) throw std::invalid_argument("build_block_opf: need at least one scenario");
  if (scen.multipliers.rows() != nbus || scen.multipliers.cols() != N)
    throw DimensionError("build_block_opf: scenario multipliers shape");
  const double base = cs.baseMVA;
  const index_t ref = index_t(cs.ref_bus_index());

  std::map<int, index_t> bus_of_id;
  for (index_t b = 0; b < nbus; ++b) bus_of_id[cs.bus[size_t(b)].id] = b;

  // live generators (order matching variable_map)
  std::vector<index_t> live_gen;
  for (size_t g = 0; g < cs.gen.size(); ++g)
    if (cs.gen[g].status) live_gen.push_back(index_t(g));
  const index_t ngen = index_t(live_gen.size());
  const index_t L = index_t(vm.live_branch.size());

  std::vector<BranchCoef> coef;
  coef.reserve(size_t(L));
  for (index_t l : vm.live_branch) coef.push_back(branch_coef(cs, cs.branch[size_t(l)], bus_of_id));

  const Layout lay = make_layout(nbus, L, ngen);

  InputMap im;
  im.n_x = vm.n_x;
  im.n_u = vm.n_u;
  im.theta = vm.theta_of_bus;
  im.vmag.assign(size_t(nbus), -1);
  for (index_t b = 0; b < nbus; ++b)
    im.vmag[size_t(b)] = vm.vx_of_bus[size_t(b)] >= 0 ? vm.vx_of_bus[size_t(b)]
                                                      : vm.n_x + vm.vu_of_bus[size_t(b)];
  im.pgen.assign(size_t(ngen), -1);
  for (index_t g = 0; g < ngen; ++g)
    if (vm.pg_of_gen[size_t(g)] >= 0) im.pgen[size_t(g)] = vm.n_x + vm.pg_of_gen[size_t(g)];

  // scenario data in per-unit
  Matrix pd(nbus, N), qd(nbus, N), status(L, N);
  for (index_t b = 0; b < nbus; ++b)
    for (index_t s = 0; s < N; ++s) {
      pd(b, s) = cs.bus[size_t(b)].Pd / base * scen.multipliers(b, s);
      qd(b, s) = cs.bus[size_t(b)].Qd / base * scen.multipliers(b, s);
    }
  for (index_t l = 0; l < L; ++l)
    for (index_t s = 0; s < N; ++s) status(l, s) = 1.0;
  for (index_t s = 0; s < index_t(scen.outages.size()) && s < N; ++s)
    for (index_t out : scen.outages[size_t(s)]) {
      index_t live = -1;
      for (index_t l = 0; l < L; ++l)
        if (vm.live_branch[size_t(l)] == out) live = l;
      if (live < 0) throw std::invalid_argument("scenario outage names an out-of-service branch");
      status(live, s) = 0.0;
    }

  Vector gs_sh(static_cast<size_t>(nbus), 0.0);
  Vector bs_sh(static_cast<size_t>(nbus), 0.0);
  for (index_t b = 0; b < nbus; ++b) {
    gs_sh[size_t(b)] = cs.bus[size_t(b)].Gs / base;
    bs_sh[size_t(b)] = cs.bus[size_t(b)].Bs / base;
  }

  std::vector<index_t> ref_from, ref_to, ref_other;
  for (index_t l = 0; l < L; ++l) {
    if (coef[size_t(l)].from == ref) ref_from.push_back(l);
    if (coef[size_t(l)].to == ref) ref_to.push_back(l);
  }
  for (index_t g = 0; g < ngen; ++g)
    if (vm.gen_bus[size_t(g)] == ref && g != vm.slack_gen) ref_other.push_back(g);

  auto kernel = std::make_shared<PolarBasisKernel>(
      lay, im, coef, gs_sh, bs_sh, std::move(pd), std::move(qd), std::move(status), ref,
      gs_sh[size_t(ref)], ref_from, ref_to, ref_other, vm.slack_gen, N);

  // --- L_g: active balance at non-ref buses, reactive balance at PQ buses.
  using T = std::pair<std::pair<index_t, index_t>, double>;
  std::vector<T> tg, th, tf;
  const index_t m_rows = 2 * L + index_t([&] {
                           index_t cnt = 0;
                           for (index_t b = 0; b < nbus; ++b)
                             if (vm.vu_of_bus[size_t(b)] >= 0) ++cnt;
                           return cnt;
                         }()) +
                         1;

  index_t grow = 0;
  std::vector<index_t> p_row_of_bus(size_t(nbus), -1), q_row_of_bus(size_t(nbus), -1);
  for (index_t b = 0; b < nbus; ++b)
    if (b != ref) p_row_of_bus[size_t(b)] = grow++;
  for (index_t b = 0; b < nbus; ++b)
    if (vm.vu_of_bus[size_t(b)] < 0) q_row_of_bus[size_t(b)] = grow++;
  if (grow != vm.n_x) throw std::logic_error("opf builder: g row count mismatch");

  // active/reactive injection terms of one branch end, added to rows
  auto add_p_inj = [&](std::vector<T>& t, index_t row, index_t l, bool from_side, double sgn) {
    const auto& c = coef[size_t(l)];
    if (from_side) {
      t.push_back({{row, lay.cff(l)}, sgn * c.gff});
      t.push_back({{row, lay.wc(l)}, sgn * c.gft});
      t.push_back({{row, lay.ws(l)}, sgn * c.bft});
    } else {
      t.push_back({{row, lay.ctt(l)}, sgn * c.gtt});
      t.push_back({{row, lay.wc(l)}, sgn * c.gtf});
      t.push_back({{row, lay.ws(l)}, sgn * -c.btf});
    }
  };
  auto add_q_inj = [&](std::vector<T>& t, index_t row, index_t l, bool from_side, double sgn) {
    const auto& c = coef[size_t(l)];
    if (from_side) {
      t.push_back({{row, lay.cff(l)}, sgn * -c.bff});
      t.push_back({{row, lay.wc(l)}, sgn * -c.bft});
      t.push_back({{row, lay.ws(l)}, sgn * c.gft});
    } else {
      t.push_back({{row, lay.ctt(l)}, sgn * -c.btt});
      t.push_back({{row, lay.wc(l)}, sgn * -c.btf});
      t.push_back({{row, lay.ws(l)}, sgn * -c.gtf});
    }
  };

  for (index_t b = 0; b < nbus; ++b) {
    const index_t pr = p_row_of_bus[size_t(b)];
    if (pr >= 0) {
      for (index_t g = 0; g < ngen; ++g)
        if (vm.gen_bus[size_t(g)] == b) tg.push_back({{pr, lay.pg + g}, 1.0});
      tg.push_back({{pr, lay.pd + b}, -1.0});
      tg.push_back({{pr, lay.vv + b}, -gs_sh[size_t(b)]});
    }
    const index_t qr = q_row_of_bus[size_t(b)];
    if (qr >= 0) {
      tg.push_back({{qr, lay.qd + b}, -1.0});
      tg.push_back({{qr, lay.vv + b}, bs_sh[size_t(b)]});
    }
  }
  for (index_t l = 0; l < L; ++l) {
    const auto& c = coef[size_t(l)];
    const index_t pf = p_row_of_bus[size_t(c.from)], pt = p_row_of_bus[size_t(c.to)];
    const index_t qf = q_row_of_bus[size_t(c.from)], qt = q_row_of_bus[size_t(c.to)];
    if (pf >= 0) add_p_inj(tg, pf, l, true, -1.0);
    if (pt >= 0) add_p_inj(tg, pt, l, false, -1.0);
    if (qf >= 0) add_q_inj(tg, qf, l, true, -1.0);
    if (qt >= 0) add_q_inj(tg, qt, l, false, -1.0);
  }

  // --- L_h and slack bounds.
  Bounds s_bounds = Bounds::free(m_rows);
  for (index_t l = 0; l < L; ++l) {
    th.push_back({{l, lay.sqf(l)}, 1.0});
    th.push_back({{L + l, lay.sqt(l)}, 1.0});
    if (coef[size_t(l)].rate2 > 0) {
      s_bounds.lower[size_t(l)] = -coef[size_t(l)].rate2;
      s_bounds.lower[size_t(L + l)] = -coef[size_t(l)].rate2;
    }
  }
  index_t hr = 2 * L;
  for (index_t b = 0; b < nbus; ++b) {
    if (vm.vu_of_bus[size_t(b)] < 0) continue;
    // reactive generation at this bus: Qd + Q_inj (linear in the basis)
    th.push_back({{hr, lay.qd + b}, 1.0});
    th.push_back({{hr, lay.vv + b}, -bs_sh[size_t(b)]});
    for (index_t l = 0; l < L; ++l) {
      if (coef[size_t(l)].from == b) add_q_inj(th, hr, l, true, 1.0);
      if (coef[size_t(l)].to == b) add_q_inj(th, hr, l, false, 1.0);
    }
    double qmin = 0, qmax = 0;
    for (index_t g = 0; g < ngen; ++g)
      if (vm.gen_bus[size_t(g)] == b) {
        qmin += cs.gen[size_t(live_gen[size_t(g)])].Qmin / base;
        qmax += cs.gen[size_t(live_gen[size_t(g)])].Qmax / base;
      }
    s_bounds.lower[size_t(hr)] = -qmax;
    s_bounds.upper[size_t(hr)] = -qmin;
    ++hr;
  }
  // slack generator active power
  th.push_back({{hr, lay.pg + vm.slack_gen}, 1.0});
  {
    const auto& g = cs.gen[size_t(live_gen[size_t(vm.slack_gen)])];
    s_bounds.lower[size_t(hr)] = -g.Pmax / base;
    s_bounds.upper[size_t(hr)] = -g.Pmin / base;
  }
  ++hr;
  if (hr != m_rows) throw std::logic_error("opf builder: h row count mismatch");

  // --- L_f: averaged polynomial costs.
  const double avg = 1.0 / double(N);
  for (index_t g = 0; g < ngen; ++g) {
    const index_t gi = live_gen[size_t(g)];
    double c2 = 0, c1 = 0, c0 = 0;
    if (size_t(gi) < cs.gencost.size()) {
      const auto& gc = cs.gencost[size_t(gi)];
      if (gc.ncost >= 3) {
        c2 = gc.coef[size_t(gc.ncost - 3)];
        c1 = gc.coef[size_t(gc.ncost - 2)];
        c0 = gc.coef[size_t(gc.ncost - 1)];
      } else if (gc.ncost == 2) {
        c1 = gc.coef[0];
        c0 = gc.coef[1];
      } else if (gc.ncost == 1) {
        c0 = gc.coef[0];
      }
    }
    if (c2 != 0) tf.push_back({{0, lay.pg2 + g}, avg * c2 * base * base});
    if (c1 != 0) tf.push_back({{0, lay.pg + g}, avg * c1 * base});
    if (c0 != 0) tf.push_back({{0, lay.const1}, avg * c0});
  }

  BlockNlp nlp;
  nlp.dims.N = N;
  nlp.dims.n_x = vm.n_x;
  nlp.dims.n_u = vm.n_u;
  nlp.dims.m = m_rows;
  nlp.dims.n_b = lay.n_b;
  nlp.basis = kernel;
  nlp.L_f = SparseMatrix::from_triplets(1, lay.n_b, std::move(tf));
  nlp.L_g = SparseMatrix::from_triplets(vm.n_x, lay.n_b, std::move(tg));
  nlp.L_h = SparseMatrix::from_triplets(m_rows, lay.n_b, std::move(th));

  nlp.x_bounds = Bounds::free(vm.n_x);
  nlp.u_bounds = Bounds::free(vm.n_u);
  nlp.s_bounds = s_bounds;
  nlp.x_start.assign(size_t(vm.n_x), 0.0);
  nlp.u_start.assign(size_t(vm.n_u), 0.0);
  for (index_t b = 0; b < nbus; ++b) {
    const auto& bus = cs.bus[size_t(b)];
    if (vm.theta_of_bus[size_t(b)] >= 0)
      nlp.x_start[size_t(vm.theta_of_bus[size_t(b)])] = bus.Va * kPi / 180.0;
    if (vm.vx_of_bus[size_t(b)] >= 0) {
      nlp.x_bounds.lower[size_t(vm.vx_of_bus[size_t(b)])] = bus.Vmin;
      nlp.x_bounds.upper[size_t(vm.vx_of_bus[size_t(b)])] = bus.Vmax;
      nlp.x_start[size_t(vm.vx_of_bus[size_t(b)])] = bus.Vm > 0 ? bus.Vm : 1.0;
    }
    if (vm.vu_of_bus[size_t(b)] >= 0) {
      nlp.u_bounds.lower[size_t(vm.vu_of_bus[size_t(b)])] = bus.Vmin;
      nlp.u_bounds.upper[size_t(vm.vu_of_bus[size_t(b)])] = bus.Vmax;
      nlp.u_start[size_t(vm.vu_of_bus[size_t(b)])] = 1.0;
    }
  }
  for (index_t g = 0; g < ngen; ++g) {
    const auto& gen = cs.gen[size_t(live_gen[size_t(g)])];
    if (vm.pg_of_gen[size_t(g)] >= 0) {
      nlp.u_bounds.lower[size_t(vm.pg_of_gen[size_t(g)])] = gen.Pmin / base;
      nlp.u_bounds.upper[size_t(vm.pg_of_gen[size_t(g)])] = gen.Pmax / base;
      nlp.u_start[size_t(vm.pg_of_gen[size_t(g)])] = gen.Pg / base;
    }
    if (vm.vu_of_bus[size_t(vm.gen_bus[size_t(g)])] >= 0 && gen.Vg > 0)
      nlp.u_start[size_t(vm.vu_of_bus[size_t(vm.gen_bus[size_t(g)])])] = gen.Vg;
  }
  nlp.name = cs.name + "_N" + std::to_string(N);
  nlp.validate();
  return nlp;
}

CaseDims case_dims(const CaseData& cs, index_t N) {
  const OpfVariableMap vm = variable_map(cs);
  CaseDims d;
  d.buses = count_t(cs.bus.size());
  d.branches = count_t(cs.branch.size());
  d.gens = count_t(cs.gen.size());
  d.n_x = vm.n_x;
  d.n_u = vm.n_u;
  index_t genbus = 0;
  for (index_t b = 0; b < index_t(cs.bus.size()); ++b)
    if (vm.vu_of_bus[size_t(b)] >= 0) ++genbus;
  d.m = 2 * count_t(vm.live_branch.size()) + genbus + 1;
  BlockDims bd;
  bd.N = N;
  bd.n_x = vm.n_x;
  bd.n_u = vm.n_u;
  bd.m = index_t(d.m);
  bd.n_b = 1;
  d.nvar = bd.nvar_primal();
  d.ncon = bd.ncon();
  d.khat_bytes = reduced_matrix_bytes(d.n_u);
  return d;
}

}  // namespace blockipm::opf
