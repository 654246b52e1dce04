#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fospg/assembly.hpp"

using namespace fospg;

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

double integrate(const Rule2D& r, const std::function<double(Point)>& f) {
  double s = 0.0;
  for (int i = 0; i < r.size(); ++i) s += r.weights[i] * f(r.points[i]);
  return s;
}

Mesh random_triangle(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  return Mesh::from_cells(CellKind::triangle, {{0.1 + u(rng), u(rng)}, {1.3 + u(rng), 0.2 + u(rng)}, {0.4 + u(rng), 1.1 + u(rng)}},
                          {{0, 1, 2, -1}});
}

}  // namespace

TEST(Quadrature, GaussLegendre) {
  const Rule1D g = gauss_legendre_1d(2);
  double s = 0.0;
  for (int i = 0; i < g.size(); ++i) s += g.weights[i] * g.points[i] * g.points[i];
  EXPECT_NEAR(s, 2.0 / 3.0, 1e-15);
  for (int m = 1; m <= 10; ++m) {
    const Rule1D r = gauss_legendre_1d(m);
    for (int k = 0; k <= 2 * m - 1; ++k) {
      double acc = 0.0;
      for (int i = 0; i < r.size(); ++i) acc += r.weights[i] * std::pow(r.points[i], k);
      EXPECT_NEAR(acc, k % 2 ? 0.0 : 2.0 / (k + 1), 1e-13);
    }
  }
}

TEST(Quadrature, TensorRuleRectangle) {
  const Rule2D r = tensor_rule_rect(1);
  EXPECT_EQ(r.size(), 4);
  EXPECT_NEAR(integrate(r, [](Point x) { return x.x * x.y; }), 0.25, 1e-15);
  for (int p = 0; p <= 2; ++p) {
    const Rule2D t = tensor_rule_rect(p);
    EXPECT_EQ(t.size(), (p + 1) * (p + 1));
    for (int a = 0; a <= 2 * p + 1; ++a)
      for (int b = 0; b <= 2 * p + 1; ++b)
        EXPECT_NEAR(integrate(t, [&](Point x) { return std::pow(x.x, a) * std::pow(x.y, b); }),
                    1.0 / ((a + 1) * (b + 1)), 1e-13);
  }
}

TEST(Quadrature, TriangleRulesExactAndPositive) {
  EXPECT_NEAR(integrate(rule_triangle(2), [](Point x) { return x.x + x.y; }), 1.0 / 3.0, 1e-15);
  for (int order = 0; order <= 10; ++order) {
    const Rule2D r = rule_triangle(order);
    EXPECT_NEAR(r.total_weight(), 0.5, 1e-14);
    for (double w : r.weights) EXPECT_GT(w, 0.0);
    for (int a = 0; a <= order; ++a)
      for (int b = 0; a + b <= order; ++b)
        EXPECT_NEAR(integrate(r, [&](Point x) { return std::pow(x.x, a) * std::pow(x.y, b); }),
                    factorial(a) * factorial(b) / factorial(a + b + 2), 1e-13);
  }
  EXPECT_THROW(rule_triangle(max_triangle_rule_order + 1), ConfigError);
}

TEST(Quadrature, VertexAugmentedTriangle) {
  const Rule2D r = vertex_augmented_triangle();
  for (double w : r.weights) EXPECT_GT(w, 0.0);
  int vertices = 0;
  for (const Point& p : r.points)
    for (const Point& v : reference_vertices(CellKind::triangle))
      if (norm(p - v) == 0.0) ++vertices;
  EXPECT_EQ(vertices, 3);
  for (int a = 0; a <= 2; ++a)
    for (int b = 0; a + b <= 2; ++b)
      EXPECT_NEAR(integrate(r, [&](Point x) { return std::pow(x.x, a) * std::pow(x.y, b); }),
                  factorial(a) * factorial(b) / factorial(a + b + 2), 1e-15);
}

TEST(Basis, LagrangeBasics) {
  const LagrangeBasis p0(CellKind::triangle, 0);
  EXPECT_EQ(p0.size(), 1);
  EXPECT_NEAR(p0.values({0.2, 0.3})[0], 1.0, 1e-15);
  EXPECT_NEAR(p0.gradients({0.2, 0.3}).norm(), 0.0, 1e-15);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (CellKind kind : {CellKind::triangle, CellKind::rectangle})
    for (int p = 0; p <= max_degree(kind); ++p) {
      const LagrangeBasis b(kind, p);
      EXPECT_EQ(b.size(), kind == CellKind::triangle ? (p + 1) * (p + 2) / 2 : (p + 1) * (p + 1));
      EXPECT_TRUE(std::isfinite(b.vandermonde_condition()));
      for (int t = 0; t < 5; ++t) EXPECT_NEAR(b.values({u(rng), u(rng)}).sum(), 1.0, 1e-13);
    }
  EXPECT_THROW(LagrangeBasis(CellKind::triangle, 4), ConfigError);
  EXPECT_THROW(LagrangeBasis(CellKind::rectangle, 3), ConfigError);
}

TEST(Basis, RT0NormalMoments) {
  const RTBasis rt(CellKind::triangle, 0);
  ASSERT_EQ(rt.size(), 3);
  const auto v = reference_vertices(CellKind::triangle);
  const Rule1D g = gauss_legendre_unit(3);
  for (int k = 0; k < 3; ++k) {
    const Point a = v[k], t = v[(k + 1) % 3] - a;
    const Point nu{t.y, -t.x};  // outward, scaled by the edge length
    for (int i = 0; i < 3; ++i) {
      double flux = 0.0;
      const double first = rt.values(a + g.points[0] * t).row(i).dot(Eigen::Vector2d(nu.x, nu.y));
      for (int q = 0; q < g.size(); ++q) {
        const double qn = rt.values(a + g.points[q] * t).row(i).dot(Eigen::Vector2d(nu.x, nu.y));
        EXPECT_NEAR(qn, first, 1e-13);  // constant normal trace
        flux += g.weights[q] * qn;
      }
      EXPECT_NEAR(flux, i == k ? 1.0 : 0.0, 1e-13);
    }
  }
}

TEST(Basis, RTDivergenceAndTraceDegree) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.1, 0.4);
  for (CellKind kind : {CellKind::triangle, CellKind::rectangle})
    for (int p = 0; p <= max_degree(kind); ++p) {
      const RTBasis rt(kind, p);
      EXPECT_EQ(rt.size(), rt_dim(kind, p));
      // components have degree <= 4 in each variable, so one Richardson
      // step on central differences is exact up to roundoff
      auto central = [&rt](Point x, double h) -> Eigen::VectorXd {
        return (rt.values({x.x + h, x.y}).col(0) - rt.values({x.x - h, x.y}).col(0) +
                rt.values({x.x, x.y + h}).col(1) - rt.values({x.x, x.y - h}).col(1)) /
               (2 * h);
      };
      for (int t = 0; t < 4; ++t) {
        const Point x{u(rng), u(rng)};
        const Eigen::VectorXd fd = (4.0 * central(x, 5e-3) - central(x, 1e-2)) / 3.0;
        EXPECT_LT((fd - rt.divergences(x)).cwiseAbs().maxCoeff(), 1e-7);
      }
      // normal traces are polynomials of degree <= p: the Legendre
      // projection of degree p reproduces them
      const auto v = reference_vertices(kind);
      const Rule1D g = gauss_legendre_unit(p + 3);
      for (int k = 0; k < rt.num_facets(); ++k) {
        const Point a = v[k], tan = v[(k + 1) % v.size()] - a;
        const Eigen::Vector2d nu(tan.y, -tan.x);
        for (int i = 0; i < rt.size(); ++i) {
          Eigen::VectorXd c = Eigen::VectorXd::Zero(p + 1);
          for (int q = 0; q < g.size(); ++q)
            for (int m = 0; m <= p; ++m)
              c[m] += g.weights[q] * rt.values(a + g.points[q] * tan).row(i).dot(nu) * shifted_legendre(m, g.points[q]);
          for (int m = 0; m <= p; ++m) c[m] *= 2 * m + 1;
          for (double s : {0.13, 0.5, 0.91}) {
            double fit = 0.0;
            for (int m = 0; m <= p; ++m) fit += c[m] * shifted_legendre(m, s);
            EXPECT_NEAR(fit, rt.values(a + s * tan).row(i).dot(nu), 1e-11);
          }
        }
      }
    }
}

TEST(Assembly, ReferenceTriangleP0) {
  const Mesh m = Mesh::from_cells(CellKind::triangle, {{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2, -1}});
  const Discretization d(m, 0);
  const LocalBlocks b = assemble_local(d, 0, DiffusionTensor::identity());
  EXPECT_NEAR(b.Mu(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(b.G.norm(), 0.0, 1e-15);
}

TEST(Assembly, IntegrationByPartsAndSymmetry) {
  const Mesh m = unit_square_triangles(2);
  for (int p = 0; p <= 3; ++p) {
    const Discretization d(m, p);
    const DiffusionTensor a([](Point x, int) { return rotated_diag(x.x + 0.3 * x.y, 2.0 + x.x, 0.5); }, 0.5, 3.0);
    for (int c = 0; c < m.num_cells(); ++c) {
      const LocalBlocks b = assemble_local(d, c, a);
      const double scale = std::max({b.Div.cwiseAbs().maxCoeff(), b.Fv.cwiseAbs().maxCoeff(), b.G.cwiseAbs().maxCoeff()});
      EXPECT_LT((b.Div - (b.Fv.transpose() - b.G.transpose())).cwiseAbs().maxCoeff(), 1e-13 * scale);
      EXPECT_LT((b.Mq - b.Mq.transpose()).norm(), 1e-14 * b.Mq.norm());
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(b.Mq).eigenvalues().minCoeff(), 0.0);
      EXPECT_GT(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(b.Mu).eigenvalues().minCoeff(), 0.0);
    }
  }
}

TEST(Assembly, FluxMassMatchesDenseQuadrature) {
  std::mt19937 rng(3);
  const Mesh m = random_triangle(rng);
  const Discretization d(m, 1);
  const LocalBlocks b = assemble_local(d, 0, DiffusionTensor::identity());
  const AffineMap map = m.affine_map(0);
  const Rule2D r = rule_triangle(14);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(d.nq(), d.nq());
  for (int q = 0; q < r.size(); ++q) {
    const Eigen::MatrixX2d v = d.flux().basis().values(r.points[q]);
    for (int i = 0; i < d.nq(); ++i)
      for (int j = 0; j < d.nq(); ++j) {
        const Point qi = map.piola({v(i, 0), v(i, 1)}), qj = map.piola({v(j, 0), v(j, 1)});
        ref(i, j) += r.weights[q] * map.det * dot(qi, qj);
      }
  }
  EXPECT_LT((b.Mq - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
}

TEST(Assembly, PiolaDivergence) {
  std::mt19937 rng(8);
  for (int trial = 0; trial < 3; ++trial) {
    const Mesh m = random_triangle(rng);
    const Discretization d(m, 2);
    const AffineMap map = m.affine_map(0);
    const PhysicalTable t = map_table(d.cell_table(), map);
    Eigen::VectorXd coef = Eigen::VectorXd::Random(d.nq());
    const Eigen::VectorXd div = t.divq * coef;
    const double h = 1e-5;
    auto field = [&](Point x) { return eval_flux(d, coef, 0, map.inverse(x)); };
    for (int i = 0; i < t.w.size(); i += 3) {
      const Point x = t.x[i];
      const double fd = (field({x.x + h, x.y}).x - field({x.x - h, x.y}).x + field({x.x, x.y + h}).y -
                         field({x.x, x.y - h}).y) /
                        (2 * h);
      EXPECT_NEAR(fd, div[i], 1e-7 * (1.0 + std::abs(div[i])));
      const double ref_div = d.flux().basis().divergences(d.cell_table().rule.points[i]).dot(coef) / map.det;
      EXPECT_NEAR(div[i], ref_div, 1e-12 * (1.0 + std::abs(ref_div)));
    }
  }
}

TEST(Assembly, NormalTraceContinuity) {
  for (const Mesh& m : {unit_square_triangles(3), unit_square_rectangles(3), polygonal_disk(1)}) {
    for (int p = 0; p <= max_degree(m.kind()); ++p) {
      const Discretization d(m, p);
      const auto ref = reference_vertices(m.kind());
      const int nv = static_cast<int>(ref.size());
      for (int g = 0; g < d.flux().div_size(); g += 7) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(d.flux().div_size());
        e[g] = 1.0;
        const Eigen::VectorXd q = d.flux().to_broken(e);
        std::vector<std::pair<double, double>> pairs;
        // roundoff scale: size of the field inside the cells
        double scale = 0.0;
        for (int c = 0; c < m.num_cells(); ++c)
          for (const Point& r : d.cell_table().rule.points) scale = std::max(scale, norm(eval_flux(d, q, c, r)));
        for (const Facet& f : m.facets()) {
          if (f.on_boundary()) continue;
          for (int i = 0; i <= p; ++i) {
            const double s = (i + 0.5) / (p + 1);
            auto side = [&](int cell, int k, double t) {
              const Point r = ref[k] + t * (ref[(k + 1) % nv] - ref[k]);
              return dot(eval_flux(d, q, cell, r), f.normal);
            };
            pairs.emplace_back(side(f.owner, f.owner_local, s), side(f.neighbor, f.neighbor_local, 1.0 - s));
          }
        }
        for (const auto& [a, b] : pairs) EXPECT_NEAR(a, b, 1e-13 * scale);
      }
    }
  }
}

TEST(Projection, ElementProjection) {
  const Mesh m = Mesh::from_cells(CellKind::triangle, {{0, 0}, {1, 0}, {0, 1}}, {{0, 1, 2, -1}});
  EXPECT_NEAR(l2_project_element(Discretization(m, 0), [](Point x) { return x.x; })[0], 1.0 / 3.0, 1e-14);
  const Mesh sq = unit_square_triangles(3);
  for (int p = 0; p <= 3; ++p) {
    const Discretization d(sq, p);
    const Eigen::VectorXd c = l2_project_element(d, [](Point) { return 2.5; });
    EXPECT_LT((c.array() - 2.5).abs().maxCoeff(), 1e-13);
    // orthogonality of the residual against every basis function
    const ScalarFn f = [](Point x) { return std::sin(3 * x.x) * std::exp(x.y); };
    const Eigen::VectorXd pf = l2_project_element(d, f);
    const CellTable& ct = oversampled_table(d);
    for (int cell = 0; cell < sq.num_cells(); ++cell) {
      const PhysicalTable t = map_table(ct, sq.affine_map(cell));
      const Eigen::VectorXd ph = t.phi * pf.segment(cell * d.nu(), d.nu());
      Eigen::VectorXd r(t.w.size());
      for (int i = 0; i < r.size(); ++i) r[i] = t.w[i] * (f(t.x[i]) - ph[i]);
      EXPECT_LT((t.phi.transpose() * r).cwiseAbs().maxCoeff(), 1e-13);
    }
  }
}

TEST(Projection, FacetProjection) {
  const Mesh m = unit_square_triangles(1);
  int bottom = -1;
  for (int f = 0; f < m.num_facets(); ++f) {
    const Facet& fa = m.facet(f);
    if (m.vertex(fa.v[0]).y == 0.0 && m.vertex(fa.v[1]).y == 0.0) bottom = f;
  }
  ASSERT_GE(bottom, 0);
  const Eigen::VectorXd c = l2_project_facet(m, bottom, 1, [](Point x) { return 1.0 - x.x; });
  auto at = [&](double s) { return c[0] * shifted_legendre(0, s) + c[1] * shifted_legendre(1, s); };
  const bool forward = m.vertex(m.facet(bottom).v[0]).x == 0.0;
  EXPECT_NEAR(at(forward ? 0.0 : 1.0), 1.0, 1e-14);
  EXPECT_NEAR(at(forward ? 1.0 : 0.0), 0.0, 1e-14);
}

TEST(Lifting, DefiningEquations) {
  const Mesh m = unit_square_triangles(2);
  for (int p = 0; p <= 2; ++p) {
    const Discretization d(m, p);
    const DiffusionTensor a([](Point x, int) { return rotated_diag(x.y, 3.0, 0.2); }, 0.2, 3.0);
    const Lifting lift(d, a);
    EXPECT_NEAR(lift.lift(Eigen::VectorXd::Zero(d.scalar().size())).norm(), 0.0, 1e-300);
    EXPECT_NEAR(lift.lift_boundary(Eigen::VectorXd::Zero(d.facets().size())).norm(), 0.0, 1e-300);
    const Eigen::VectorXd u = Eigen::VectorXd::Random(d.scalar().size());
    const Eigen::VectorXd lu = lift.lift(u);
    const Eigen::VectorXd rhs = lift.rhs(u);
    EXPECT_LT((lift.mass() * lu - rhs).norm(), 1e-10 * rhs.norm());
    const Eigen::VectorXd ghat = boundary_projection(d, [](Point x) { return x.x * x.x - x.y; });
    const Eigen::VectorXd lg = lift.lift_boundary(ghat);
    const Eigen::VectorXd rg = lift.rhs_boundary(ghat);
    EXPECT_LT((lift.mass() * lg - rg).norm(), 1e-10 * rg.norm());
  }
}

TEST(Norms, DgNormOfConstant) {
  const Mesh m = unit_square_triangles(4);
  const Discretization d(m, 1);
  EXPECT_DOUBLE_EQ(dg_norm(d, DiffusionTensor::identity(), Eigen::VectorXd::Zero(d.scalar().size())), 0.0);
  const double n = dg_norm(d, DiffusionTensor::identity(), Eigen::VectorXd::Ones(d.scalar().size()));
  double expect = 0.0;
  for (const Facet& f : m.facets())
    if (f.on_boundary()) expect += f.length / f.length;
  EXPECT_NEAR(n * n, expect, 1e-12);
}

TEST(Norms, TripleNormBoundsDgNorm) {
  std::vector<double> min_ratio;
  for (int n : {2, 4, 8}) {
    const Mesh m = unit_square_triangles(n);
    const Discretization d(m, 1);
    double lo = 1e300;
    for (int t = 0; t < 10; ++t) {
      const Eigen::VectorXd q = Eigen::VectorXd::Random(d.flux().size());
      const Eigen::VectorXd u = Eigen::VectorXd::Random(d.scalar().size());
      const Eigen::VectorXd uh = Eigen::VectorXd::Random(d.facets().size());
      const double dg = dg_norm(d, DiffusionTensor::identity(), u);
      lo = std::min(lo, triple_norm(d, DiffusionTensor::identity(), q, u, uh) / dg);
    }
    EXPECT_GT(lo, 0.0);
    min_ratio.push_back(lo);
  }
  for (std::size_t i = 1; i < min_ratio.size(); ++i) EXPECT_GT(min_ratio[i], 0.5 * min_ratio[i - 1]);
}

TEST(Norms, LiftingNormEquivalenceIsMeshStable) {
  const DiffusionTensor a([](Point x, int) { return rotated_diag(0.7 * x.x, 4.0, 1.0); }, 1.0, 4.0);
  std::mt19937 rng(17);
  std::normal_distribution<double> nd;
  std::vector<std::pair<double, double>> ranges;
  for (int n : {4, 8, 16}) {
    const Mesh m = unit_square_triangles(n);
    const Discretization d(m, 0);
    const Lifting lift(d, a);
    double lo = 1e300, hi = 0.0;
    for (int t = 0; t < 20; ++t) {
      Eigen::VectorXd u(d.scalar().size());
      for (int i = 0; i < u.size(); ++i) u[i] = nd(rng);
      const Eigen::VectorXd lu = lift.lift(u);
      const double ratio = dg_norm(d, a, u) / std::sqrt(lu.dot(lift.mass() * lu));
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    ranges.push_back({lo, hi});
  }
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    EXPECT_LT(std::max(ranges[i].first / ranges[i - 1].first, ranges[i - 1].first / ranges[i].first), 2.0);
    EXPECT_LT(std::max(ranges[i].second / ranges[i - 1].second, ranges[i - 1].second / ranges[i].second), 2.0);
  }
}

TEST(Quadrature, TensorGaussLagrangeFunctionsLieInQp) {
  const Mesh m = unit_square_rectangles(1);
  for (int p = 0; p <= 2; ++p) {
    const Discretization d(m, p);
    const Rule2D r = tensor_rule_rect(p);
    const Rule1D g = gauss_legendre_unit(p + 1);
    auto lagrange_1d = [&](int i, double x) {
      double v = 1.0;
      for (int j = 0; j <= p; ++j)
        if (j != i) v *= (x - g.points[j]) / (g.points[i] - g.points[j]);
      return v;
    };
    for (int i = 0; i <= p; ++i)
      for (int j = 0; j <= p; ++j) {
        const ScalarFn f = [&](Point x) { return lagrange_1d(i, x.x) * lagrange_1d(j, x.y); };
        const Eigen::VectorXd c = l2_project_element(d, f);
        for (const Point& x : r.points) EXPECT_NEAR(d.scalar().eval(c, 0, x), f(x), 1e-12);
        for (Point x : {Point{0.17, 0.83}, Point{0.61, 0.29}}) EXPECT_NEAR(d.scalar().eval(c, 0, x), f(x), 1e-12);
      }
  }
}
