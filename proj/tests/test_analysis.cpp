#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fospg/io.hpp"
#include "fospg/solver.hpp"

using namespace fospg;

namespace {

// int_T l^k for a linear l with vertex values l1, l2, l3:
// 2|T| / ((k+1)(k+2)) times the complete homogeneous symmetric polynomial
double power_integral(double area, double l1, double l2, double l3, int k) {
  double h = 0.0;
  for (int a = 0; a <= k; ++a)
    for (int b = 0; a + b <= k; ++b) h += std::pow(l1, a) * std::pow(l2, b) * std::pow(l3, k - a - b);
  return 2.0 * area * h / ((k + 1.0) * (k + 2.0));
}

}  // namespace

TEST(Analysis, LimiterScalarFormula) {
  const double theta = limiter_theta(0.5, -0.1, 1.2, 0.0, 1.0);
  EXPECT_NEAR(theta, 5.0 / 7.0, 1e-15);
  EXPECT_NEAR(0.5 + theta * (-0.1 - 0.5), 0.0714285714, 1e-9);
  EXPECT_NEAR(0.5 + theta * (1.2 - 0.5), 1.0, 1e-15);
  EXPECT_EQ(limiter_theta(0.5, 0.2, 0.9, 0.0, 1.0), 1.0);
  EXPECT_EQ(limiter_theta(0.3, 0.3, 0.3, 0.0, 1.0), 1.0);
  EXPECT_EQ(limiter_theta(0.3, -5.0, 9.0, -infinity, infinity), 1.0);
}

TEST(Analysis, LimiterKeepsAveragesAndBounds) {
  const Mesh m = unit_square_triangles(4);
  for (int p : {1, 2}) {
    const Discretization d(m, p);
    std::mt19937 rng(3 + p);
    std::uniform_real_distribution<double> u(-0.3, 1.3);
    Eigen::VectorXd v(d.scalar().size());
    for (int i = 0; i < v.size(); ++i) v[i] = u(rng);
    const Bounds b = Bounds::constant(0.0, 1.0);
    const LimiterResult r = limiter(d, v, b);
    const CellTable& ct = d.cell_table();
    const Eigen::Map<const Eigen::VectorXd> w(ct.rule.weights.data(), ct.rule.size());
    for (int c = 0; c < m.num_cells(); ++c) {
      const double before = w.dot(ct.phi * v.segment(d.scalar().offset(c), d.nu()));
      const double after = w.dot(ct.phi * r.u.segment(d.scalar().offset(c), d.nu()));
      if (before <= 0.0 || before >= 0.5) continue;  // average outside the bounds: limiter precondition fails
      EXPECT_NEAR(before, after, 1e-13);
    }
    const DmpScan s0 = dmp_scan(d, v, b);
    const DmpScan s1 = dmp_scan(d, r.u, b);
    EXPECT_GE(s1.min, s0.min);
    EXPECT_LE(s1.max, s0.max);
    for (int c = 0; c < m.num_cells(); ++c) {
      const double avg = w.dot(ct.phi * v.segment(d.scalar().offset(c), d.nu())) / 0.5;
      if (avg <= 0.0 || avg >= 1.0) continue;
      for (const Point& x : sample_points(m.kind(), {&ct.rule})) {
        const double val = d.scalar().eval(r.u, c, x);
        EXPECT_GE(val, -1e-14);
        EXPECT_LE(val, 1.0 + 1e-14);
      }
    }
  }
}

TEST(Analysis, RatesFromSyntheticErrors) {
  const std::vector<double> h{0.4, 0.2, 0.1, 0.05};
  for (double r : {1.0, 2.0, 2.5, 3.0}) {
    std::vector<double> e;
    for (double x : h) e.push_back(3.7 * std::pow(x, r));
    const std::vector<double> rates = observed_rates(h, e);
    EXPECT_TRUE(std::isnan(rates[0]));
    for (std::size_t i = 1; i < rates.size(); ++i) EXPECT_NEAR(rates[i], r, 1e-12);
  }
  std::vector<ErrorRecord> recs(3);
  for (int i = 0; i < 3; ++i) {
    recs[i].h = std::pow(0.5, i);
    recs[i].err_u = std::pow(0.5, 2 * i);
    recs[i].err_latent = std::pow(0.5, 2 * i);
    recs[i].err_flux = std::pow(0.5, i);
  }
  fill_rates(recs);
  EXPECT_NEAR(recs[2].rate_u, 2.0, 1e-12);
  EXPECT_NEAR(recs[2].rate_flux, 1.0, 1e-12);
}

TEST(Analysis, L2ErrorReproduction) {
  const Mesh m = unit_square_triangles(3);
  const Discretization d(m, 1);
  EXPECT_EQ(l2_error(d, Eigen::VectorXd::Zero(d.scalar().size()), [](Point) { return 0.0; }), 0.0);
  const ScalarFn lin = [](Point x) { return 1.0 + 2.0 * x.x - x.y; };
  EXPECT_LT(l2_error(d, l2_project_element(d, lin), lin), 1e-12);
  const Mesh mr = unit_square_rectangles(3);
  const Discretization dr(mr, 2);
  const ScalarFn quad = [](Point x) { return x.x * x.x * x.y * x.y - x.x; };
  EXPECT_LT(l2_error(dr, l2_project_element(dr, quad), quad), 1e-12);
}

TEST(Analysis, QuarticProjectionErrorMatchesExactIntegration) {
  const Mesh m = box_triangles(4, -1.0, 1.0, -1.0, 1.0);
  const Discretization d(m, 0);
  const ScalarFn u = [](Point x) { return std::pow(x.x, 4); };
  const Eigen::VectorXd uh = l2_project_element(d, u);
  double e2 = 0.0;
  for (int c = 0; c < m.num_cells(); ++c) {
    const auto& cv = m.cells()[c];
    const double x1 = m.vertex(cv[0]).x, x2 = m.vertex(cv[1]).x, x3 = m.vertex(cv[2]).x;
    const double area = m.cell_area(c);
    const double i4 = power_integral(area, x1, x2, x3, 4), i8 = power_integral(area, x1, x2, x3, 8);
    EXPECT_NEAR(uh[c], i4 / area, 1e-13);
    e2 += i8 - i4 * i4 / area;
  }
  EXPECT_NEAR(l2_error(d, uh, u), std::sqrt(e2), 1e-10);
}

TEST(Analysis, DmpScanOfZeroLatent) {
  const Mesh m = unit_square_triangles(3);
  const Discretization d(m, 2);
  const LatentOperator op(LatentKind::fermi_dirac, Bounds::constant(0.0, 1.0));
  const DmpScan s = dmp_scan_latent(d, op, Eigen::VectorXd::Zero(d.scalar().size()));
  EXPECT_EQ(s.min, 0.5);
  EXPECT_EQ(s.max, 0.5);
  EXPECT_TRUE(s.violations.empty());
  EXPECT_EQ(s.saturated, 0);
}

TEST(Analysis, BaselineMassIndicator) {
  for (const Mesh& m : {unit_square_triangles(5), unit_square_rectangles(5)}) {
    const Discretization d(m, 0);
    ProblemSpec prob;
    prob.A = DiffusionTensor::identity();
    prob.f = [](Point x) { return 10.0 * std::exp(x.x) * std::cos(4 * x.y); };
    const MixedSolution base = baseline_mixed_solve(d, prob);
    EXPECT_LT(mass_indicator(d, base.q, prob.f).max, 1e-12 * (1.0 + 10.0 * std::exp(1.0)));
    // Far from conservative when the flux is zeroed
    EXPECT_GT(mass_indicator(d, Eigen::VectorXd::Zero(base.q.size()), prob.f).max, 1e-3);
  }
}

TEST(Problems, DataExamples) {
  const ProblemSpec ob = oblique_flow();
  EXPECT_DOUBLE_EQ(ob.g({0.1, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(ob.g({0.25, 0.0}), 0.75);
  EXPECT_DOUBLE_EQ(ob.g({0.9, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(biactive().f({0.5, 0.3}), -3.0);
  EXPECT_DOUBLE_EQ(biactive().f({-0.5, 0.3}), 0.0);

  const SphericalConstants k = spherical_constants();
  EXPECT_NEAR(k.a, 0.34898, 1e-5);
  const ProblemSpec sp = spherical_obstacle();
  EXPECT_DOUBLE_EQ(sp.bounds.lo({0.0, 0.0}), 0.5);
  // value and slope of the two branches agree at the contact radius
  EXPECT_NEAR(k.Q * std::log(k.a), std::sqrt(0.25 - k.a * k.a), 1e-12);
  EXPECT_NEAR(k.Q / k.a, -k.a / std::sqrt(0.25 - k.a * k.a), 1e-10);
  EXPECT_NEAR((*sp.exact_u)({1.0, 0.0}), 0.0, 1e-15);
}

TEST(Problems, RegistryAndCompatibility) {
  for (const std::string& name : problem_names()) {
    const ProblemSpec p = make_problem(name);
    EXPECT_EQ(p.name, name);
    EXPECT_TRUE(check_tensor_bounds(p, 10000)) << name;
    const Mesh m = p.make_mesh(p.default_mesh_param);
    EXPECT_NO_THROW(check_boundary_compatibility(p, m, 2)) << name;
  }
  EXPECT_THROW(make_problem("nowhere"), ConfigError);
  EXPECT_THROW(biactive().make_mesh(5), MeshError);
  ProblemSpec bad = biactive();
  bad.g = [](Point) { return -1.0; };
  EXPECT_THROW(check_boundary_compatibility(bad, bad.make_mesh(4), 1), ConfigError);
}

TEST(Io, ConvergenceCsv) {
  std::vector<ErrorRecord> recs(2);
  recs[0] = {0.5, 10, 20, 1e-1, 2e-1, 3e-1};
  recs[1] = {0.25, 40, 80, 2.5e-2, 5e-2, 1.5e-1};
  fill_rates(recs);
  const std::string csv = convergence_table(recs).str();
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, convergence_header());
  EXPECT_EQ(line, "h,err_u,rate_u,err_latent,rate_latent,err_flux,rate_flux");
  std::getline(in, line);
  EXPECT_EQ(line, "5.0000000000e-01,1.0000000000e-01,0.0000000000e+00,2.0000000000e-01,0.0000000000e+00,"
                  "3.0000000000e-01,0.0000000000e+00");
  std::getline(in, line);
  EXPECT_EQ(line, "2.5000000000e-01,2.5000000000e-02,2.0000000000e+00,5.0000000000e-02,2.0000000000e+00,"
                  "1.5000000000e-01,1.0000000000e+00");
}

TEST(Io, VtkAndJson) {
  const ProblemSpec prob = biactive();
  const Mesh m = prob.make_mesh(2);
  for (int p : {0, 1}) {
    const Discretization d(m, p);
    FospgConfig cfg = default_config(prob, p);
    cfg.max_outer = 4;
    auto [s, rep] = fospg_solve(d, prob, cfg);
    const std::string vtk = vtk_string(d, prob.latent(), s, prob.f, "biactive");
    EXPECT_NE(vtk.find("CELLS 8 32\n"), std::string::npos);
    EXPECT_NE(vtk.find("CELL_TYPES 8\n"), std::string::npos);
    EXPECT_NE(vtk.find(p == 0 ? "CELL_DATA 8\n" : "POINT_DATA 9\n"), std::string::npos);
    const auto j = report_json(rep);
    EXPECT_EQ(j["outer_iterations"].get<int>(), static_cast<int>(j["steps"].size()));
    int solves = 0;
    for (const auto& st : j["steps"]) solves += st["linear_solves"].get<int>();
    EXPECT_EQ(j["linear_solves"].get<int>(), solves);
    EXPECT_TRUE(j["steps"][0]["err_u"].is_null());
  }
}
