#include "blockipm/driver.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace blockipm {

std::optional<OutputFormat> format_from_string(const std::string& s) {
  if (s == "text") return OutputFormat::text;
  if (s == "csv") return OutputFormat::csv;
  if (s == "json") return OutputFormat::json;
  return std::nullopt;
}

void RunConfig::validate() const {
  if (case_path.empty()) throw std::invalid_argument("no case file given");
  if (scenarios < 1) throw std::invalid_argument("need at least one scenario (N >= 1)");
  if (groups < 1 || groups > scenarios)
    throw std::invalid_argument("groups must satisfy 1 <= G <= N");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (n_batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (!(tol > 0)) throw std::invalid_argument("tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max-iter must be >= 1");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  if (j.contains("case")) cfg.case_path = j["case"].get<std::string>();
  if (j.contains("scenarios")) cfg.scenarios = j["scenarios"].get<index_t>();
  if (j.contains("sigma")) cfg.sigma = j["sigma"].get<double>();
  if (j.contains("contingencies"))
    cfg.contingencies = j["contingencies"].get<std::vector<index_t>>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("strategy")) {
    auto s = strategy_from_string(j["strategy"].get<std::string>());
    if (!s) throw std::invalid_argument("config: unknown strategy");
    cfg.strategy = *s;
  }
  if (j.contains("groups")) cfg.groups = j["groups"].get<index_t>();
  if (j.contains("workers")) cfg.workers = j["workers"].get<index_t>();
  if (j.contains("batch")) cfg.n_batch = j["batch"].get<index_t>();
  if (j.contains("tol")) cfg.tol = j["tol"].get<double>();
  if (j.contains("max_iter")) cfg.max_iter = j["max_iter"].get<int>();
  if (j.contains("format")) {
    auto f = format_from_string(j["format"].get<std::string>());
    if (!f) throw std::invalid_argument("config: unknown format");
    cfg.format = *f;
  }
  if (j.contains("deterministic")) cfg.deterministic = j["deterministic"].get<bool>();
  if (j.contains("scenario_file")) cfg.scenario_file = j["scenario_file"].get<std::string>();
}

namespace {

struct Problem {
  opf::CaseData cs;
  opf::ScenarioSet scen;
  BlockNlp nlp;
};

Problem load_problem(const RunConfig& cfg) {
  Problem p;
  p.cs = opf::parse_matpower_file(cfg.case_path);
  if (!cfg.scenario_file.empty()) {
    std::ifstream in(cfg.scenario_file);
    if (!in) throw std::invalid_argument("cannot open scenario file: " + cfg.scenario_file);
    std::stringstream ss;
    ss << in.rdbuf();
    p.scen = opf::ScenarioSet::from_json(ss.str());
  } else {
    p.scen = opf::generate_scenarios(p.cs, cfg.scenarios, cfg.sigma, cfg.contingencies,
                                     cfg.seed);
  }
  p.nlp = opf::build_block_opf(p.cs, p.scen);
  return p;
}

IpmOptions make_options(const RunConfig& cfg) {
  IpmOptions o;
  o.tol = cfg.tol;
  o.max_iter = cfg.max_iter;
  o.strategy = cfg.strategy;
  o.groups = cfg.groups;
  o.n_batch = cfg.n_batch;
  o.exec.worker_count = cfg.workers;
  o.exec.order = cfg.deterministic ? ReduceOrder::deterministic : ReduceOrder::fast;
  o.verbose = cfg.verbose;
  return o;
}

BenchRow run_one(const RunConfig& cfg, const Problem& p, const SolveResult& r) {
  BenchRow row;
  row.instance = p.cs.name;
  row.N = cfg.scenarios;
  row.strategy = to_string(cfg.strategy);
  row.G = cfg.groups;
  row.iters = int(r.logs.size());
  row.ad_s = r.t_ad;
  row.kkt_s = r.t_kkt;
  row.total_s = r.t_total;
  row.status = to_string(r.status);
  row.objective = r.objective;
  return row;
}

void print_row_text(const BenchRow& row, std::ostream& out) {
  out << row.instance << "  N=" << row.N << "  strategy=" << row.strategy << "  G=" << row.G
      << "  iters=" << row.iters << "  ad=" << row.ad_s << "s  kkt=" << row.kkt_s
      << "s  total=" << row.total_s << "s  status=" << row.status
      << "  objective=" << row.objective << "\n";
}

nlohmann::json row_json(const BenchRow& row) {
  return nlohmann::json{{"instance", row.instance}, {"N", row.N},
                        {"strategy", row.strategy}, {"G", row.G},
                        {"iters", row.iters},       {"ad_s", row.ad_s},
                        {"kkt_s", row.kkt_s},       {"total_s", row.total_s},
                        {"status", row.status},     {"objective", row.objective}};
}

const char* kCsvHeader = "instance,N,strategy,G,iters,ad_s,kkt_s,total_s,status,objective";

void print_row_csv(const BenchRow& row, std::ostream& out) {
  out << row.instance << ',' << row.N << ',' << row.strategy << ',' << row.G << ','
      << row.iters << ',' << row.ad_s << ',' << row.kkt_s << ',' << row.total_s << ','
      << row.status << ',' << row.objective << "\n";
}

}  // namespace

std::string BenchReport::to_csv() const {
  std::ostringstream ss;
  ss << kCsvHeader << "\n";
  for (const auto& r : rows) print_row_csv(r, ss);
  return ss.str();
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["deterministic"] = deterministic;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) j["rows"].push_back(row_json(r));
  return j.dump(2);
}

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Problem p;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitModel;
  }
  try {
    p.cs = opf::parse_matpower_file(cfg.case_path);
  } catch (const std::exception& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitParse;
  }
  SolveResult r;
  try {
    if (!cfg.scenario_file.empty()) {
      std::ifstream in(cfg.scenario_file);
      if (!in) throw std::invalid_argument("cannot open scenario file: " + cfg.scenario_file);
      std::stringstream ss;
      ss << in.rdbuf();
      p.scen = opf::ScenarioSet::from_json(ss.str());
    } else {
      p.scen = opf::generate_scenarios(p.cs, cfg.scenarios, cfg.sigma, cfg.contingencies,
                                       cfg.seed);
    }
    p.nlp = opf::build_block_opf(p.cs, p.scen);
  } catch (const std::exception& e) {
    err << "model error: " << e.what() << "\n";
    return kExitModel;
  }
  try {
    IpmOptions o = make_options(cfg);
    Executor exec(o.exec);
    r = solve(p.nlp, exec, o);
  } catch (const std::exception& e) {
    err << "solver error: " << e.what() << "\n";
    return kExitSolver;
  }

  BenchRow row = run_one(cfg, p, r);
  switch (cfg.format) {
    case OutputFormat::text:
      print_row_text(row, out);
      break;
    case OutputFormat::csv:
      out << kCsvHeader << "\n";
      print_row_csv(row, out);
      break;
    case OutputFormat::json: {
      nlohmann::json j = row_json(row);
      j["scenarios"] = nlohmann::json::parse(p.scen.to_json());
      j["counters"] = {{"spsm", r.counters.spsm},
                       {"spmm", r.counters.spmm},
                       {"tiles", r.counters.tiles}};
      j["dual_elements"] = r.dual_elements;
      j["reduce_workspace_elements"] = r.reduce_workspace;
      out << j.dump(2) << "\n";
      break;
    }
  }
  return r.status == SolveStatus::optimal ? kExitOk : kExitSolver;
}

int cmd_dims(const std::string& case_path, index_t N, OutputFormat fmt, std::ostream& out,
             std::ostream& err) {
  opf::CaseData cs;
  try {
    cs = opf::parse_matpower_file(case_path);
  } catch (const std::exception& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitParse;
  }
  try {
    const opf::CaseDims d = opf::case_dims(cs, N);
    const double mib = double(d.khat_bytes) / (1024.0 * 1024.0);
    switch (fmt) {
      case OutputFormat::text: {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f", mib);
        out << cs.name << ": buses=" << d.buses << " lines=" << d.branches
            << " gens=" << d.gens << " n_x=" << d.n_x << " n_u=" << d.n_u << " m=" << d.m
            << " N=" << N << " nvar=" << d.nvar << " ncon=" << d.ncon
            << " khat_bytes=" << d.khat_bytes << " (" << buf << " MiB)\n";
        break;
      }
      case OutputFormat::csv:
        out << "case,buses,lines,gens,n_x,n_u,m,N,nvar,ncon,khat_bytes\n"
            << cs.name << ',' << d.buses << ',' << d.branches << ',' << d.gens << ',' << d.n_x
            << ',' << d.n_u << ',' << d.m << ',' << N << ',' << d.nvar << ',' << d.ncon << ','
            << d.khat_bytes << "\n";
        break;
      case OutputFormat::json: {
        nlohmann::json j{{"case", cs.name},    {"buses", d.buses}, {"lines", d.branches},
                         {"gens", d.gens},     {"n_x", d.n_x},     {"n_u", d.n_u},
                         {"m", d.m},           {"N", N},           {"nvar", d.nvar},
                         {"ncon", d.ncon},     {"khat_bytes", d.khat_bytes}};
        out << j.dump(2) << "\n";
        break;
      }
    }
  } catch (const std::exception& e) {
    err << "model error: " << e.what() << "\n";
    return kExitModel;
  }
  return kExitOk;
}

int cmd_check_derivatives(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Problem p;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitModel;
  }
  try {
    p = load_problem(cfg);
  } catch (const opf::ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitParse;
  } catch (const std::exception& e) {
    err << "model error: " << e.what() << "\n";
    return kExitModel;
  }

  const BlockNlp& nlp = p.nlp;
  const BlockDims& dm = nlp.dims;
  AdPlan plan = make_ad_plan(nlp);
  AdWorkspace ws(nlp, plan, dm.N);

  std::mt19937_64 rng(cfg.seed + 1);
  std::uniform_real_distribution<double> unit(0.15, 0.85);
  double worst = 0;
  std::string worst_where = "-";

  for (int point = 0; point < 5; ++point) {
    Matrix X(dm.n_x, dm.N);
    Vector u(size_t(dm.n_u));
    auto sample = [&](double lo, double up, double fallback_lo, double fallback_up) {
      if (std::isfinite(lo) && std::isfinite(up)) return lo + unit(rng) * (up - lo);
      return fallback_lo + unit(rng) * (fallback_up - fallback_lo);
    };
    for (index_t i = 0; i < dm.n_x; ++i) {
      const double v = sample(nlp.x_bounds.lower[size_t(i)], nlp.x_bounds.upper[size_t(i)],
                              -0.3, 0.3);
      for (index_t b = 0; b < dm.N; ++b) X(i, b) = v;
    }
    for (index_t i = 0; i < dm.n_u; ++i)
      u[size_t(i)] = sample(nlp.u_bounds.lower[size_t(i)], nlp.u_bounds.upper[size_t(i)], 0.1,
                            1.0);

    Vector f;
    Matrix g, h, gx, gu, hx, hu;
    batch_jacobian(nlp, X, u, 0, plan, ws, f, g, h, gx, gu, hx, hu);

    // central differences of the stacked residuals w.r.t. every input
    const double step = 1e-6;
    Matrix Xp = X, Xm = X;
    Vector up_ = u, um = u;
    auto eval_fd = [&](index_t input, index_t block, Vector& fp, Matrix& gp, Matrix& hp,
                       Vector& fm, Matrix& gm, Matrix& hm) {
      Xp = X;
      Xm = X;
      up_ = u;
      um = u;
      if (input < dm.n_x) {
        Xp(input, block) += step;
        Xm(input, block) -= step;
      } else {
        up_[size_t(input - dm.n_x)] += step;
        um[size_t(input - dm.n_x)] -= step;
      }
      batch_eval(nlp, Xp, up_, 0, ws, fp, gp, hp);
      batch_eval(nlp, Xm, um, 0, ws, fm, gm, hm);
    };

    Vector fp, fm;
    Matrix gp, hp, gm, hm;
    const index_t b0 = 0;  // all blocks share the pattern; check block 0 of this point
    for (index_t input = 0; input < dm.n_d(); ++input) {
      eval_fd(input, b0, fp, gp, hp, fm, gm, hm);
      auto check = [&](const char* what, index_t row, double ad, double fd) {
        const double scale = std::max({1.0, std::abs(ad), std::abs(fd)});
        const double rel = std::abs(ad - fd) / scale;
        if (rel > worst) {
          worst = rel;
          worst_where = std::string(what) + "[row " + std::to_string(row) + ", input " +
                        std::to_string(input) + "]";
        }
      };
      // gather AD entries for this input column
      const auto& jg = plan.patterns.jac_g;
      for (index_t r = 0; r < jg.rows; ++r) {
        const index_t slot = jg.find(r, input);
        const double ad = slot >= 0 ? ws.jac_g_vals(slot, b0) : 0.0;
        check("jac_g", r, ad, (gp(r, b0) - gm(r, b0)) / (2 * step));
      }
      const auto& jh = plan.patterns.jac_h;
      for (index_t r = 0; r < jh.rows; ++r) {
        const index_t slot = jh.find(r, input);
        const double ad = slot >= 0 ? ws.jac_h_vals(slot, b0) : 0.0;
        check("jac_h", r, ad, (hp(r, b0) - hm(r, b0)) / (2 * step));
      }
    }

    // Lagrangian gradient and Hessian against differences of the adjoint
    // gradient, with random multipliers (catches adjoint faults).
    Matrix y(dm.n_x, dm.N), z(dm.m, dm.N);
    std::uniform_real_distribution<double> mult(-1.0, 1.0);
    for (index_t b = 0; b < dm.N; ++b) {
      for (index_t i = 0; i < dm.n_x; ++i) y(i, b) = mult(rng);
      for (index_t i = 0; i < dm.m; ++i) z(i, b) = mult(rng);
    }
    Matrix wxx, wxu, wuu, grad0;
    batch_hessian(nlp, X, u, 0, y, z, 1.0, plan, ws, wxx, wxu, wuu, grad0);
    Matrix hess0 = ws.hess_vals;  // full-pattern Hessian values of this point

    const double hstep = 1e-5;
    // The scalar Lagrangian can be orders of magnitude larger than its
    // gradient entries, so its central difference needs a wider step to keep
    // cancellation noise below the tolerance.
    const double vstep = 1e-5;
    Matrix Xv = X;
    Vector uv = u;
    for (index_t input = 0; input < dm.n_d(); ++input) {
      // FD of the Lagrangian value checks the gradient (pure adjoint path)
      auto lag_at = [&](double shift) {
        Xv = X;
        uv = u;
        if (input < dm.n_x)
          Xv(input, b0) += shift;
        else
          uv[size_t(input - dm.n_x)] += shift;
        batch_eval(nlp, Xv, uv, 0, ws, fp, gp, hp);
        double L = fp[size_t(b0)];
        for (index_t i = 0; i < dm.n_x; ++i) L += y(i, b0) * gp(i, b0);
        for (index_t i = 0; i < dm.m; ++i) L += z(i, b0) * hp(i, b0);
        return L;
      };
      {
        const double fd = (lag_at(vstep) - lag_at(-vstep)) / (2 * vstep);
        const double ad = grad0(input, b0);
        const double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
        if (rel > worst) {
          worst = rel;
          worst_where = "grad_lag[input " + std::to_string(input) + "]";
        }
      }
      // FD of the gradient checks the Hessian columns
      Matrix Xh = X;
      Vector uh = u;
      if (input < dm.n_x)
        Xh(input, b0) += hstep;
      else
        uh[size_t(input - dm.n_x)] += hstep;
      Matrix gradp;
      batch_hessian(nlp, Xh, uh, 0, y, z, 1.0, plan, ws, wxx, wxu, wuu, gradp);
      if (input < dm.n_x)
        Xh(input, b0) -= 2 * hstep;
      else
        uh[size_t(input - dm.n_x)] -= 2 * hstep;
      Matrix gradm;
      batch_hessian(nlp, Xh, uh, 0, y, z, 1.0, plan, ws, wxx, wxu, wuu, gradm);
      const auto& hpat = plan.patterns.hess;
      for (index_t r = 0; r < dm.n_d(); ++r) {
        const index_t slot = hpat.find(r, input);
        const double ad = slot >= 0 ? hess0(slot, b0) : 0.0;
        const double fd = (gradp(r, b0) - gradm(r, b0)) / (2 * hstep);
        const double rel = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
        if (rel > worst) {
          worst = rel;
          worst_where = "hessian[row " + std::to_string(r) + ", input " +
                        std::to_string(input) + "]";
        }
      }
    }
  }

  out << "max relative derivative error: " << worst << " at " << worst_where << "\n";
  if (!(worst <= 1e-5)) {
    err << "derivative check failed: " << worst << " at " << worst_where << "\n";
    return kExitDerivative;
  }
  return kExitOk;
}

int cmd_bench(const std::vector<RunConfig>& configs, OutputFormat fmt, std::ostream& out,
              std::ostream& err) {
  BenchReport report;
  for (const auto& cfg : configs) {
    report.deterministic = report.deterministic && cfg.deterministic;
    BenchRow row;
    row.instance = cfg.case_path;
    row.N = cfg.scenarios;
    row.strategy = to_string(cfg.strategy);
    row.G = cfg.groups;
    try {
      cfg.validate();
      Problem p = load_problem(cfg);
      IpmOptions o = make_options(cfg);
      Executor exec(o.exec);
      SolveResult r = solve(p.nlp, exec, o);
      row = run_one(cfg, p, r);
    } catch (const std::exception& e) {
      err << "bench row failed (" << cfg.case_path << "): " << e.what() << "\n";
      row.status = "Error";
    }
    report.rows.push_back(row);
  }
  switch (fmt) {
    case OutputFormat::text:
      for (const auto& r : report.rows) print_row_text(r, out);
      break;
    case OutputFormat::csv:
      out << report.to_csv();
      break;
    case OutputFormat::json:
      out << report.to_json() << "\n";
      break;
  }
  return kExitOk;
}

}  // namespace blockipm
