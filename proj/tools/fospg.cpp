// fospg command line: single runs, convergence studies, bound tables,
// Newton iteration counts and the VI oracle comparison.
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fospg/fospg.hpp"
#include "fospg/io.hpp"
#include "fospg/oracle.hpp"

using namespace fospg;
using json = nlohmann::json;

namespace {

struct RunConfig {
  std::string problem = "biactive";
  int p = 1;
  std::optional<int> n;
  int refinements = 3;
  std::optional<std::string> op;
  std::optional<double> eps1, eps2;
  std::optional<std::string> alpha;
  double tol = 1e-8;
  std::string newton = "fixed:1e-10";
  std::string out = ".";
  unsigned seed = 1;
};

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
T json_value(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void apply_json(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, val] : j.items()) {
    if (key == "problem") c.problem = json_value<std::string>(j, "problem");
    else if (key == "p") c.p = json_value<int>(j, "p");
    else if (key == "n") c.n = json_value<int>(j, "n");
    else if (key == "refinements") c.refinements = json_value<int>(j, "refinements");
    else if (key == "operator") c.op = json_value<std::string>(j, "operator");
    else if (key == "eps1") c.eps1 = json_value<double>(j, "eps1");
    else if (key == "eps2") c.eps2 = json_value<double>(j, "eps2");
    else if (key == "alpha") c.alpha = json_value<std::string>(j, "alpha");
    else if (key == "tol") c.tol = json_value<double>(j, "tol");
    else if (key == "newton") c.newton = json_value<std::string>(j, "newton");
    else if (key == "out") c.out = json_value<std::string>(j, "out");
    else if (key == "seed") c.seed = json_value<unsigned>(j, "seed");
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

json config_json(const RunConfig& c, const ProblemSpec& prob, const FospgConfig& fc, int n) {
  json j;
  j["problem"] = prob.name;
  j["p"] = c.p;
  j["n"] = n;
  j["operator"] = to_string(fc.op);
  j["eps1"] = fc.stab.eps1;
  j["eps2"] = fc.stab.eps2;
  j["alpha"] = fc.alpha.str();
  j["tol"] = fc.tol;
  j["newton"] = fc.newton.str();
  return j;
}

/// Problem, solver settings and mesh parameters, validated before any solve.
struct Setup {
  ProblemSpec prob;
  FospgConfig cfg;
  std::vector<int> params;
};

Setup prepare(const RunConfig& c, int levels) {
  Setup s;
  s.prob = make_problem(c.problem);
  const Mesh probe = s.prob.make_mesh(c.n.value_or(s.prob.default_mesh_param));
  check_degree(probe.kind(), c.p);
  if (c.refinements < 0) throw ConfigError("refinement count must be nonnegative");
  s.cfg = default_config(s.prob, c.p);
  if (c.op) s.cfg.op = parse_latent_kind(*c.op);
  if (c.eps1) s.cfg.stab.eps1 = *c.eps1;
  if (c.eps2) s.cfg.stab.eps2 = *c.eps2;
  if (c.alpha) s.cfg.alpha = AlphaSchedule::parse(*c.alpha);
  s.cfg.tol = c.tol;
  s.cfg.newton = NewtonConfig::parse(c.newton);
  s.cfg.validate();
  const LatentOperator op = s.prob.latent(s.cfg.op);
  const Point x = probe.centroid(0);
  op.check_bounds(s.prob.bounds.lo(x), s.prob.bounds.hi(x));
  int n = c.n.value_or(s.prob.default_mesh_param);
  for (int l = 0; l < levels; ++l) {
    s.params.push_back(n);
    n = s.prob.refine_param(n);
  }
  return s;
}

std::string stem(const RunConfig& c) { return c.out + "/" + c.problem + "_p" + std::to_string(c.p); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir);
}

void require_converged(const RunReport& rep, const std::string& what) {
  if (!rep.converged) throw Failure(what + ": solver stopped with status " + rep.status);
}

int cmd_run(const RunConfig& c) {
  const Setup s = prepare(c, 1);
  const int n = s.params[0];
  const Mesh mesh = s.prob.make_mesh(n);
  const Discretization d(mesh, c.p);
  ensure_dir(c.out);
  auto [state, rep] = fospg_solve(d, s.prob, s.cfg);
  const LatentOperator op = s.prob.latent(s.cfg.op);
  const std::string base = stem(c) + "_n" + std::to_string(n);
  write_vtk(base + ".vtk", d, op, state, s.prob.f, s.prob.name + " p=" + std::to_string(c.p));

  nlohmann::ordered_json j;
  j["config"] = config_json(c, s.prob, s.cfg, n);
  j["mesh"] = {{"cells", mesh.num_cells()}, {"facets", mesh.num_facets()}, {"h", mesh.mesh_size()}};
  const DmpScan scan = dmp_scan_latent(d, op, state.psi);
  j["latent_min"] = scan.min;
  j["latent_max"] = scan.max;
  j["mass_max"] = mass_indicator(d, state.q, s.prob.f).max;
  if (s.prob.exact_u) {
    j["err_u"] = l2_error(d, state.u, *s.prob.exact_u);
    j["err_latent"] = latent_l2_error(d, op, state.psi, *s.prob.exact_u);
  }
  if (s.prob.exact_q) j["err_flux"] = flux_l2_error(d, state.q, *s.prob.exact_q);
  j["report"] = report_json(rep);
  std::ofstream(base + ".json") << j.dump(2) << "\n";

  std::cout << s.prob.name << " p=" << c.p << " n=" << n << ": " << rep.status << " after " << rep.outer_iterations
            << " outer iterations, " << rep.linear_solves << " linear solves\n";
  require_converged(rep, "run");
  return 0;
}

int cmd_convergence(const RunConfig& c) {
  const Setup s = prepare(c, c.refinements + 1);
  if (!s.prob.exact_u || !s.prob.exact_q) throw ConfigError("problem " + s.prob.name + " has no exact solution");
  ensure_dir(c.out);
  const LatentOperator op = s.prob.latent(s.cfg.op);
  std::vector<ErrorRecord> recs;
  for (int n : s.params) {
    const Mesh mesh = s.prob.make_mesh(n);
    const Discretization d(mesh, c.p);
    auto [state, rep] = fospg_solve(d, s.prob, s.cfg);
    require_converged(rep, "mesh parameter " + std::to_string(n));
    ErrorRecord r;
    r.h = mesh.mesh_size();
    r.dofs_facet = d.facets().num_free_dofs();
    r.dofs_total = d.flux().size() + 2 * d.scalar().size() + r.dofs_facet;
    r.err_u = l2_error(d, state.u, *s.prob.exact_u);
    r.err_latent = latent_l2_error(d, op, state.psi, *s.prob.exact_u);
    r.err_flux = flux_l2_error(d, state.q, *s.prob.exact_q);
    recs.push_back(r);
    fill_rates(recs);
    const ErrorRecord& e = recs.back();
    std::printf("n=%d h=%.4f err_u=%.3e (%.2f) err_latent=%.3e (%.2f) err_flux=%.3e (%.2f)\n", n, e.h, e.err_u,
                e.rate_u, e.err_latent, e.rate_latent, e.err_flux, e.rate_flux);
  }
  convergence_table(recs).write(stem(c) + "_convergence.csv");
  return 0;
}

int cmd_table1(const RunConfig& c) {
  const Setup s = prepare(c, 1);
  const int n = s.params[0];
  const Mesh mesh = s.prob.make_mesh(n);
  const Discretization d(mesh, c.p);
  ensure_dir(c.out);
  const MixedSolution base = baseline_mixed_solve(d, s.prob);
  const DmpScan bs = dmp_scan(d, base.u, s.prob.bounds);
  auto [state, rep] = fospg_solve(d, s.prob, s.cfg);
  require_converged(rep, "table1");
  const DmpScan fs = dmp_scan_latent(d, s.prob.latent(s.cfg.op), state.psi);
  CsvTable t;
  t.header = {"p", "h", "baseline_min", "baseline_max", "baseline_mass", "fospg_min", "fospg_max", "fospg_mass"};
  t.integer_columns = {0};
  t.rows.push_back({static_cast<double>(c.p), mesh.mesh_size(), bs.min, bs.max,
                    mass_indicator(d, base.q, s.prob.f).max, fs.min, fs.max,
                    mass_indicator(d, state.q, s.prob.f).max});
  t.write(stem(c) + "_table1.csv");
  std::printf("baseline [%.3e, %.6f]  fospg [%.3e, %.6f]\n", bs.min, bs.max, fs.min, fs.max);
  return 0;
}

int cmd_iterations(const RunConfig& c) {
  const Setup s = prepare(c, c.refinements + 1);
  if (!s.prob.exact_q) throw ConfigError("problem " + s.prob.name + " has no exact flux");
  ensure_dir(c.out);
  const NewtonConfig fixed = s.cfg.newton.mode == NewtonMode::fixed ? s.cfg.newton : NewtonConfig{};
  const std::vector<NewtonConfig> modes{NewtonConfig::parse("single"), fixed, NewtonConfig::parse("adaptive")};
  CsvTable t;
  t.header = {"mode", "level", "h", "k", "linear_solves", "du", "err_flux"};
  t.integer_columns = {0, 1, 3, 4};
  for (std::size_t l = 0; l < s.params.size(); ++l) {
    const Mesh mesh = s.prob.make_mesh(s.params[l]);
    const Discretization d(mesh, c.p);
    for (std::size_t m = 0; m < modes.size(); ++m) {
      FospgConfig cfg = s.cfg;
      cfg.newton = modes[m];
      cfg.record_errors = true;
      auto [state, rep] = fospg_solve(d, s.prob, cfg);
      require_converged(rep, modes[m].str() + " on level " + std::to_string(l));
      for (const StepRecord& st : rep.steps)
        t.rows.push_back({static_cast<double>(m), static_cast<double>(l), mesh.mesh_size(),
                          static_cast<double>(st.k), static_cast<double>(st.linear_solves), st.du, st.err_flux});
      std::printf("level %zu h=%.4f %-18s outer=%d solves=%d\n", l, mesh.mesh_size(), modes[m].str().c_str(),
                  rep.outer_iterations, rep.linear_solves);
    }
  }
  t.write(stem(c) + "_iterations.csv");
  return 0;
}

int cmd_oracle(const RunConfig& c) {
  std::mt19937 rng(c.seed);
  std::uniform_real_distribution<double> uf(2.0, 6.0), uh(0.02, 0.08);
  const double f = uf(rng), hi = uh(rng);
  ProblemSpec prob;
  prob.name = "oracle";
  prob.A = DiffusionTensor::identity();
  prob.f = [f](Point) { return f; };
  prob.bounds = Bounds::constant(0.0, hi);
  prob.op = LatentKind::fermi_dirac;
  prob.alpha = AlphaSchedule::geometric(1.0, 4.0);
  const int n = c.n.value_or(2);
  if (n < 1) throw ConfigError("mesh resolution must be positive");
  const Mesh mesh = unit_square_triangles(n);
  const Discretization d(mesh, 0);
  ensure_dir(c.out);

  const OracleResult star = solve_vi_projected_gradient(BoxVI(d, prob), 1e-10);
  if (!star.converged) throw Failure("projected gradient did not converge");
  FospgConfig cfg = default_config(prob, 0);
  if (c.alpha) cfg.alpha = AlphaSchedule::parse(*c.alpha);
  cfg.newton = NewtonConfig::parse(c.newton);
  cfg.tol = 1e-300;
  cfg.max_outer = 1;
  const FospgSystem sys(d, prob, cfg);
  ProximalState state = sys.initial_state();
  const double breg = discrete_bregman(d, sys.op(), star.u, state.u);
  CsvTable t;
  t.header = {"l", "sum_alpha", "err_l2", "bound_ratio"};
  t.integer_columns = {0};
  double err = 0.0, worst = 0.0;
  for (int l = 1; state.sum_alpha < 1e6; ++l) {
    if (l > 10000) throw Failure("step sizes never reach the required sum");
    const RunReport rep = sys.solve(state);
    if (rep.status == "newton-diverged") throw Failure("Newton diverged at step " + std::to_string(l));
    err = sys.l2_difference(state.u, star.u);
    const double ratio = err * err * state.sum_alpha / breg;
    worst = std::max(worst, ratio);
    t.rows.push_back({static_cast<double>(l), state.sum_alpha, err, ratio});
  }
  t.write(c.out + "/oracle_seed" + std::to_string(c.seed) + ".csv");
  std::printf("f=%.4f upper=%.4f cells=%d: final error %.3e, max bound ratio %.3e\n", f, hi, mesh.num_cells(), err,
              worst);
  if (!(err < 1e-4) || !(worst <= 10.0)) throw Failure("proximal iterates do not approach the VI solution");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"First-order proximal Galerkin solver for bound-constrained diffusion"};
  app.require_subcommand(1);
  RunConfig c;
  std::string config_path;
  int n = 0;
  std::string op, alpha;
  double eps1 = 0, eps2 = 0;

  struct Flags {
    CLI::Option *problem, *p, *n, *refinements, *op, *eps1, *eps2, *alpha, *tol, *newton, *out, *seed;
  };
  std::vector<std::pair<CLI::App*, Flags>> subs;
  RunConfig flag;  // values as given on the command line
  const std::pair<const char*, const char*> commands[] = {
      {"run", "solve one problem, write VTK and a JSON report"},
      {"convergence", "errors and observed rates on a refinement sequence"},
      {"table1", "extrema and mass defects of the baseline and FOSPG solutions"},
      {"iterations", "outer iterations and linear solves per Newton mode"},
      {"oracle-check", "compare proximal iterates with the projected-gradient VI solution"}};
  for (const auto& [name, what] : commands) {
    CLI::App* sub = app.add_subcommand(name, what);
    Flags fl;
    sub->add_option("--config", config_path, "JSON file with the same keys as the flags");
    fl.problem = sub->add_option("--problem", flag.problem, "oblique-flow|vertical-faults|punctured|biactive|spherical");
    fl.p = sub->add_option("--p", flag.p, "polynomial degree");
    fl.n = sub->add_option("--n", n, "cells per side, or refinement level for the disk");
    fl.refinements = sub->add_option("--refinements", flag.refinements, "number of refinements in studies");
    fl.op = sub->add_option("--operator", op, "fermi-dirac|algebraic|exp|softplus");
    fl.eps1 = sub->add_option("--eps1", eps1, "stabilization weight of the mass term");
    fl.eps2 = sub->add_option("--eps2", eps2, "stabilization weight of the gradient term");
    fl.alpha = sub->add_option("--alpha", alpha, "const:c or geom:a0,r");
    fl.tol = sub->add_option("--tol", flag.tol, "outer tolerance on ||u^k - u^{k-1}||");
    fl.newton = sub->add_option("--newton", flag.newton, "single|fixed:t|adaptive");
    fl.out = sub->add_option("--out", flag.out, "output directory");
    fl.seed = sub->add_option("--seed", flag.seed, "seed for randomized checks");
    subs.emplace_back(sub, fl);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    CLI::App* sub = nullptr;
    Flags fl{};
    for (auto& [s, f] : subs)
      if (s->parsed()) {
        sub = s;
        fl = f;
      }
    if (!config_path.empty()) apply_json(c, config_path);
    if (fl.problem->count()) c.problem = flag.problem;
    if (fl.p->count()) c.p = flag.p;
    if (fl.n->count()) c.n = n;
    if (fl.refinements->count()) c.refinements = flag.refinements;
    if (fl.op->count()) c.op = op;
    if (fl.eps1->count()) c.eps1 = eps1;
    if (fl.eps2->count()) c.eps2 = eps2;
    if (fl.alpha->count()) c.alpha = alpha;
    if (fl.tol->count()) c.tol = flag.tol;
    if (fl.newton->count()) c.newton = flag.newton;
    if (fl.out->count()) c.out = flag.out;
    if (fl.seed->count()) c.seed = flag.seed;

    const std::string name = sub->get_name();
    if (name == "run") return cmd_run(c);
    if (name == "convergence") return cmd_convergence(c);
    if (name == "table1") return cmd_table1(c);
    if (name == "iterations") return cmd_iterations(c);
    return cmd_oracle(c);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  } catch (const Failure& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 3;
  }
}
