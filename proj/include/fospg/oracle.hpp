#pragma once

// Reference solver for the discrete mixed variational inequality at p = 0:
// projected gradient on the reduced energy over a per-cell box.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fospg/assembly.hpp"
#include "fospg/error.hpp"
#include "fospg/problems.hpp"

namespace fospg {

/// Per-cell box constraints at cell centroids, with the problem data.
class BoxVI {
 public:
  BoxVI(const Discretization& d, const ProblemSpec& prob) : d_(&d), prob_(prob), lift_(d, prob.A) {
    if (d.degree() != 0) throw ConfigError("the VI oracle supports p = 0 only");
    const Mesh& mesh = d.mesh();
    lo_.resize(mesh.num_cells());
    hi_.resize(mesh.num_cells());
    area_.resize(mesh.num_cells());
    f_.resize(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) {
      const Point x = mesh.centroid(c);
      lo_[c] = prob.bounds.lo(x);
      hi_[c] = prob.bounds.hi(x);
      if (lo_[c] > hi_[c]) throw ConfigError("empty box in VI oracle");
      area_[c] = mesh.cell_area(c);
      f_[c] = cell_load(d, c, prob.f)[0];
    }
    ghat_ = boundary_projection(d, prob.g);
    lg_ = lift_.lift_boundary(ghat_);
  }

  const Discretization& discretization() const { return *d_; }
  const Lifting& lifting() const { return lift_; }
  const Eigen::VectorXd& lower() const { return lo_; }
  const Eigen::VectorXd& upper() const { return hi_; }
  const Eigen::VectorXd& area() const { return area_; }
  const Eigen::VectorXd& load() const { return f_; }

  Eigen::VectorXd project(const Eigen::VectorXd& v) const { return v.cwiseMax(lo_).cwiseMin(hi_); }

  /// Div-conforming coefficients of q = L(v) + L_Gamma(g).
  Eigen::VectorXd flux(const Eigen::VectorXd& v) const { return lift_.lift(v) + lg_; }

  /// J_h(v) = 1/2 (A^{-1} L v, L v) + (A^{-1} L_Gamma g, L v) - (f, v).
  double energy(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd lv = lift_.lift(v);
    const SparseMatrix& m = lift_.mass();
    return 0.5 * lv.dot(m * lv) + lg_.dot(m * lv) - f_.dot(v);
  }

  /// J_h(v + s) - J_h(v) from the gradient at v; exact for the quadratic
  /// energy and free of the cancellation in differencing two energies.
  double energy_change(const Eigen::VectorXd& g, const Eigen::VectorXd& s) const {
    const Eigen::VectorXd ls = lift_.lift(s);
    return g.dot(s) + 0.5 * ls.dot(lift_.mass() * ls);
  }

  /// g_T = int_T (div(L v + L_Gamma g) - f).
  Eigen::VectorXd gradient(const Eigen::VectorXd& v) const {
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(v.size());
    return lift_.cell_divergence(flux(v), ones) - f_;
  }

  /// Broken RT coefficients of a div-conforming flux.
  Eigen::VectorXd broken(const Eigen::VectorXd& qdiv) const { return d_->flux().to_broken(qdiv); }

  /// Residual of (A^{-1} q, r) - (u, div r) + <g, r.n> = 0 over div-conforming r.
  double flux_residual(const Eigen::VectorXd& u, const Eigen::VectorXd& qdiv) const {
    const Eigen::VectorXd r = lift_.mass() * qdiv - lift_.rhs(u) - lift_.rhs_boundary(ghat_);
    return r.lpNorm<Eigen::Infinity>();
  }

 private:
  const Discretization* d_;
  ProblemSpec prob_;
  Lifting lift_;
  Eigen::VectorXd lo_, hi_, area_, f_, ghat_, lg_;
};

struct OracleResult {
  Eigen::VectorXd u;       // cell values
  Eigen::VectorXd q;       // broken RT coefficients
  Eigen::VectorXd q_div;   // div-conforming coefficients
  int iterations = 0;
  double pg_norm = 0.0;
  bool converged = false;
  std::vector<double> energies;
};

/// Projected gradient with Barzilai-Borwein trial steps and Armijo
/// backtracking (c = 1e-4, halving) until the projected-gradient norm < gtol.
inline OracleResult solve_vi_projected_gradient(const BoxVI& vi, double gtol, int max_iterations = 20000,
                                                std::optional<Eigen::VectorXd> start = std::nullopt) {
  const Eigen::VectorXd& area = vi.area();
  OracleResult r;
  Eigen::VectorXd v = vi.project(start ? *start : Eigen::VectorXd::Zero(area.size()));
  double j = vi.energy(v);
  Eigen::VectorXd g = vi.gradient(v);
  double step = 1.0;
  r.energies.push_back(j);
  auto pg_norm = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& gx) {
    return (x - vi.project(x - gx.cwiseQuotient(area))).norm();
  };
  for (int it = 0; it < max_iterations; ++it) {
    r.pg_norm = pg_norm(v, g);
    if (r.pg_norm < gtol) {
      r.converged = true;
      break;
    }
    double t = step;
    Eigen::VectorXd vn;
    double jn = 0.0;
    for (int ls = 0; ls < 60; ++ls) {
      vn = vi.project(v - t * g.cwiseQuotient(area));
      const double dj = vi.energy_change(g, vn - v);
      jn = j + dj;
      if (dj <= 1e-4 * g.dot(vn - v)) break;
      t *= 0.5;
    }
    const Eigen::VectorXd gn = vi.gradient(vn);
    const Eigen::VectorXd sv = vn - v, yv = (gn - g).cwiseQuotient(area);
    const double sy = sv.dot(yv);
    step = sy > 0.0 ? std::clamp(sv.squaredNorm() / sy, 1e-12, 1e12) : 1.0;
    v = vn;
    g = gn;
    j = jn;
    r.energies.push_back(j);
    r.iterations = it + 1;
  }
  if (!r.converged) r.pg_norm = pg_norm(v, g);
  r.u = v;
  r.q_div = vi.flux(v);
  r.q = vi.broken(r.q_div);
  return r;
}

/// KKT residual of a candidate (u, q): per cell the sign-aware
/// complementarity min(distance to the active bound, |multiplier|), maximized
/// over cells, plus the flux-equation residual.
inline double kkt_residual(const BoxVI& vi, const Eigen::VectorXd& u, const Eigen::VectorXd& q_div) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(u.size());
  const Eigen::VectorXd lam = vi.lifting().cell_divergence(q_div, ones) - vi.load();
  double comp = 0.0;
  for (int c = 0; c < u.size(); ++c) {
    double m = 0.0;
    if (u[c] < vi.lower()[c] || u[c] > vi.upper()[c]) m = std::max(vi.lower()[c] - u[c], u[c] - vi.upper()[c]);
    else if (lam[c] > 0.0) m = std::min(u[c] - vi.lower()[c], lam[c]);
    else m = std::min(vi.upper()[c] - u[c], -lam[c]);
    comp = std::max(comp, m);
  }
  return comp + vi.flux_residual(u, q_div);
}

}  // namespace fospg
