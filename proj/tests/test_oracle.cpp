#include <random>

#include <gtest/gtest.h>

#include "fospg/oracle.hpp"
#include "fospg/solver.hpp"

using namespace fospg;

namespace {

ProblemSpec box_problem(double f, double lo, double hi) {
  ProblemSpec p;
  p.name = "box";
  p.A = DiffusionTensor::identity();
  p.f = [f](Point) { return f; };
  p.bounds = {[lo](Point) { return lo; }, [hi](Point) { return hi; }};
  return p;
}

}  // namespace

TEST(Oracle, RejectsHigherDegree) {
  const Mesh m = unit_square_triangles(2);
  const Discretization d(m, 1);
  EXPECT_THROW(BoxVI(d, box_problem(1.0, 0.0, 1.0)), ConfigError);
}

TEST(Oracle, ZeroData) {
  const Mesh m = unit_square_triangles(2);
  const Discretization d(m, 0);
  const BoxVI vi(d, box_problem(0.0, 0.0, infinity));
  const OracleResult r = solve_vi_projected_gradient(vi, 1e-12);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.u.lpNorm<Eigen::Infinity>(), 1e-14);
  EXPECT_LT(r.q.lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(Oracle, InactiveBoxMatchesBaseline) {
  for (int n : {2, 4}) {
    const Mesh m = unit_square_triangles(n);
    const Discretization d(m, 0);
    ProblemSpec prob = box_problem(1.0, -1e6, 1e6);
    prob.g = [](Point x) { return 0.1 * x.x; };
    const BoxVI vi(d, prob);
    const OracleResult r = solve_vi_projected_gradient(vi, 1e-12);
    ASSERT_TRUE(r.converged);
    const MixedSolution base = baseline_mixed_solve(d, prob);
    EXPECT_LT((r.u - base.u).lpNorm<Eigen::Infinity>(), 1e-8) << "n=" << n;
    EXPECT_LT((r.q - base.q).lpNorm<Eigen::Infinity>(), 1e-8) << "n=" << n;
  }
}

TEST(Oracle, Complementarity) {
  // the first box leaves every cell free, the second binds from above
  for (double hi : {infinity, 0.03}) {
    const Mesh m = unit_square_triangles(hi == infinity ? 2 : 4);
    const Discretization d(m, 0);
    const BoxVI vi(d, box_problem(4.0, 0.0, hi));
    const OracleResult r = solve_vi_projected_gradient(vi, 1e-10);
    ASSERT_TRUE(r.converged);
    const Eigen::VectorXd lam = vi.gradient(r.u);
    int active = 0;
    for (int c = 0; c < m.num_cells(); ++c) {
      const bool at_bound = r.u[c] == vi.lower()[c] || r.u[c] == vi.upper()[c];
      if (at_bound) ++active;
      else EXPECT_LT(std::abs(lam[c]), 1e-8) << "cell " << c;
      EXPECT_GE(r.u[c], vi.lower()[c]);
      EXPECT_LE(r.u[c], vi.upper()[c]);
    }
    if (hi == infinity) EXPECT_EQ(active, 0);
    else EXPECT_GT(active, 0);
    EXPECT_LT(kkt_residual(vi, r.u, r.q_div), 1e-8);
  }
}

TEST(Oracle, KktResidualDetectsPerturbationAndBaseline) {
  const Mesh m = unit_square_triangles(4);
  const Discretization d(m, 0);
  const ProblemSpec prob = box_problem(4.0, 0.0, 0.03);
  const BoxVI vi(d, prob);
  const OracleResult r = solve_vi_projected_gradient(vi, 1e-10);
  ASSERT_TRUE(r.converged);
  int cell = -1;
  for (int c = 0; c < m.num_cells() && cell < 0; ++c)
    if (r.u[c] == vi.upper()[c] && std::abs(vi.gradient(r.u)[c]) > 1e-3) cell = c;
  ASSERT_GE(cell, 0);
  Eigen::VectorXd up = r.u;
  up[cell] -= 1e-3;
  EXPECT_GE(kkt_residual(vi, up, r.q_div), 1e-4);

  const MixedSolution base = baseline_mixed_solve(d, prob);
  EXPECT_GT(base.u.maxCoeff(), 0.03);
  const Lifting& lift = vi.lifting();
  const Eigen::VectorXd qdiv = lift.lift(base.u) + lift.lift_boundary(boundary_projection(d, prob.g));
  EXPECT_GT(kkt_residual(vi, base.u, qdiv), 1e-3);
}

TEST(Oracle, EnergyMonotone) {
  const Mesh m = unit_square_triangles(4);
  const Discretization d(m, 0);
  const BoxVI vi(d, box_problem(4.0, 0.0, 0.03));
  const OracleResult r = solve_vi_projected_gradient(vi, 1e-10);
  ASSERT_GT(r.energies.size(), 2u);
  for (std::size_t i = 1; i < r.energies.size(); ++i) EXPECT_LE(r.energies[i], r.energies[i - 1] + 1e-15);
  EXPECT_NEAR(r.energies.back(), vi.energy(r.u), 1e-12);
}

TEST(Oracle, UniqueFromRandomStarts) {
  const Mesh m = unit_square_triangles(4);
  const Discretization d(m, 0);
  const BoxVI vi(d, box_problem(4.0, 0.0, 0.03));
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(0.0, 0.03);
  std::vector<Eigen::VectorXd> sols;
  for (int t = 0; t < 2; ++t) {
    Eigen::VectorXd start(m.num_cells());
    for (int c = 0; c < start.size(); ++c) start[c] = u(rng);
    const OracleResult r = solve_vi_projected_gradient(vi, 1e-10, 20000, start);
    ASSERT_TRUE(r.converged);
    sols.push_back(r.u);
  }
  EXPECT_LT((sols[0] - sols[1]).lpNorm<Eigen::Infinity>(), 1e-7);
}
