#pragma once

// Error norms, mass-conservation indicator, bound scans, the linear scaling
// limiter, the discrete Bregman distance and convergence-rate extraction.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fospg/assembly.hpp"
#include "fospg/error.hpp"
#include "fospg/latent.hpp"
#include "fospg/mesh.hpp"

namespace fospg {

/// ||u_h - u||_{L2} on an oversampled rule.
inline double l2_error(const Discretization& d, const Eigen::VectorXd& u, const ScalarFn& exact) {
  const Mesh& mesh = d.mesh();
  const CellTable& ct = oversampled_table(d);
  double s = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap m = mesh.affine_map(c);
    const Eigen::VectorXd uh = ct.phi * u.segment(d.scalar().offset(c), d.nu());
    for (int i = 0; i < ct.rule.size(); ++i) {
      const double e = uh[i] - exact(m.map(ct.rule.points[i]));
      s += ct.rule.weights[i] * m.det * e * e;
    }
  }
  return std::sqrt(s);
}

/// ||U(psi_h) - u||_{L2}, with U applied pointwise.
inline double latent_l2_error(const Discretization& d, const LatentOperator& op, const Eigen::VectorXd& psi,
                              const ScalarFn& exact) {
  const Mesh& mesh = d.mesh();
  const CellTable& ct = oversampled_table(d);
  double s = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap m = mesh.affine_map(c);
    const Eigen::VectorXd ph = ct.phi * psi.segment(d.scalar().offset(c), d.nu());
    for (int i = 0; i < ct.rule.size(); ++i) {
      const Point x = m.map(ct.rule.points[i]);
      const double e = op.upsilon(x, ph[i]) - exact(x);
      s += ct.rule.weights[i] * m.det * e * e;
    }
  }
  return std::sqrt(s);
}

/// ||q_h - q||_{L2}; with a tensor, the A^{-1}-weighted norm ||A^{-1/2}(q_h - q)||.
inline double flux_l2_error(const Discretization& d, const Eigen::VectorXd& q, const VectorFn& exact,
                            const DiffusionTensor* a = nullptr) {
  const Mesh& mesh = d.mesh();
  const CellTable& ct = oversampled_table(d);
  double s = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap m = mesh.affine_map(c);
    const PhysicalTable t = map_table(ct, m);
    const Eigen::VectorXd qc = q.segment(d.flux().offset(c), d.nq());
    const Eigen::VectorXd qx = t.qx * qc, qy = t.qy * qc;
    for (int i = 0; i < t.w.size(); ++i) {
      const Point e = Point{qx[i], qy[i]} - exact(t.x[i]);
      const double e2 = a ? dot((*a)(t.x[i], mesh.region(c)).inverse().apply(e), e) : dot(e, e);
      s += t.w[i] * e2;
    }
  }
  return std::sqrt(s);
}

struct MassIndicator {
  Eigen::VectorXd xi;  // |(div q_h - f, 1)_T| per cell
  double max = 0.0;
};

inline MassIndicator mass_indicator(const Discretization& d, const Eigen::VectorXd& q, const ScalarFn& f) {
  const Mesh& mesh = d.mesh();
  const CellTable& ct = oversampled_table(d);
  MassIndicator r;
  r.xi.resize(mesh.num_cells());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap m = mesh.affine_map(c);
    const Eigen::VectorXd dv = ct.divq * q.segment(d.flux().offset(c), d.nq());
    double s = 0.0;
    for (int i = 0; i < ct.rule.size(); ++i) s += ct.rule.weights[i] * (dv[i] - m.det * f(m.map(ct.rule.points[i])));
    r.xi[c] = std::abs(s);
    r.max = std::max(r.max, r.xi[c]);
  }
  return r;
}

/// Reference sample points of a cell: the given rule points plus a
/// 10-per-edge barycentric lattice (triangles) or 10 x 10 grid (rectangles).
inline std::vector<Point> sample_points(CellKind kind, const std::vector<const Rule2D*>& rules) {
  std::vector<Point> pts;
  for (const Rule2D* r : rules) pts.insert(pts.end(), r->points.begin(), r->points.end());
  constexpr int n = 10;
  if (kind == CellKind::triangle) {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i + j < n; ++i) pts.push_back({static_cast<double>(i) / (n - 1), static_cast<double>(j) / (n - 1)});
  } else {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) pts.push_back({static_cast<double>(i) / (n - 1), static_cast<double>(j) / (n - 1)});
  }
  return pts;
}

struct DmpScan {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  std::vector<std::pair<int, Point>> violations;  // (cell, physical point)
  int saturated = 0;                               // samples equal to a bound (latent scans)
};

/// Extrema of a primal field u_h over the sample set, with bound violations.
inline DmpScan dmp_scan(const Discretization& d, const Eigen::VectorXd& u, const Bounds& bounds) {
  const Mesh& mesh = d.mesh();
  const auto pts = sample_points(mesh.kind(), {&d.cell_table().rule, &d.latent_table().rule});
  DmpScan s;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap m = mesh.affine_map(c);
    for (const Point& r : pts) {
      const double v = d.scalar().eval(u, c, r);
      const Point x = m.map(r);
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      if (v < bounds.lo(x) || v > bounds.hi(x)) s.violations.push_back({c, x});
    }
  }
  return s;
}

/// Extrema of U(psi_h) over the sample set; U is applied pointwise.
inline DmpScan dmp_scan_latent(const Discretization& d, const LatentOperator& op, const Eigen::VectorXd& psi) {
  const Mesh& mesh = d.mesh();
  const auto pts = sample_points(mesh.kind(), {&d.cell_table().rule, &d.latent_table().rule});
  DmpScan s;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap m = mesh.affine_map(c);
    for (const Point& r : pts) {
      const Point x = m.map(r);
      const double lo = op.bounds().lo(x), hi = op.bounds().hi(x);
      const double z = d.scalar().eval(psi, c, r);
      const double v = op.upsilon(lo, hi, z);
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      if (v < lo || v > hi) s.violations.push_back({c, x});
      if (op.saturated(lo, hi, z)) ++s.saturated;
    }
  }
  return s;
}

/// Scaling factor theta of the linear scaling limiter for one cell.
inline double limiter_theta(double avg, double m, double big_m, double lo, double hi) {
  double theta = 1.0;
  if (big_m > avg && std::isfinite(hi)) theta = std::min(theta, std::abs((hi - avg) / (big_m - avg)));
  if (m < avg && std::isfinite(lo)) theta = std::min(theta, std::abs((lo - avg) / (m - avg)));
  return theta;
}

struct LimiterResult {
  Eigen::VectorXd u;      // limited coefficients
  Eigen::VectorXd theta;  // per cell
};

/// u~ = avg + theta (u - avg) per cell; nodal coefficients scale the same way
/// because the Lagrange basis is a partition of unity. Bounds are taken at
/// the cell centroid (constant bounds in all uses).
inline LimiterResult limiter(const Discretization& d, const Eigen::VectorXd& u, const Bounds& bounds) {
  const Mesh& mesh = d.mesh();
  const auto pts = sample_points(mesh.kind(), {&d.cell_table().rule, &d.latent_table().rule});
  const CellTable& ct = d.cell_table();
  LimiterResult r{u, Eigen::VectorXd::Ones(mesh.num_cells())};
  const int nu = d.nu();
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const Eigen::VectorXd uc = u.segment(d.scalar().offset(c), nu);
    const Eigen::Map<const Eigen::VectorXd> w(ct.rule.weights.data(), ct.rule.size());
    const double avg = w.dot(ct.phi * uc) / reference_area(mesh.kind());
    double m = avg, big_m = avg;
    for (const Point& p : pts) {
      const double v = d.scalar().eval(u, c, p);
      m = std::min(m, v);
      big_m = std::max(big_m, v);
    }
    const Point x = mesh.centroid(c);
    const double theta = limiter_theta(avg, m, big_m, bounds.lo(x), bounds.hi(x));
    r.theta[c] = theta;
    r.u.segment(d.scalar().offset(c), nu) = (avg + theta * (uc.array() - avg)).matrix();
  }
  return r;
}

/// D_h(u, v) = (R(u) - R(v), 1)_h - (R'(v), u - v)_h on the latent rule.
inline double discrete_bregman(const Discretization& d, const LatentOperator& op, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& v) {
  const Mesh& mesh = d.mesh();
  const CellTable& lt = d.latent_table();
  double s = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap m = mesh.affine_map(c);
    const Eigen::VectorXd uq = lt.phi * u.segment(d.scalar().offset(c), d.nu());
    const Eigen::VectorXd vq = lt.phi * v.segment(d.scalar().offset(c), d.nu());
    for (int i = 0; i < lt.rule.size(); ++i) {
      const Point x = m.map(lt.rule.points[i]);
      const double lo = op.bounds().lo(x), hi = op.bounds().hi(x);
      if (!(vq[i] > lo && vq[i] < hi)) throw ConfigError("Bregman distance needs v strictly inside the bounds");
      const double term = op.entropy(lo, hi, uq[i]) - op.entropy(lo, hi, vq[i]) -
                          op.entropy_prime(lo, hi, vq[i]) * (uq[i] - vq[i]);
      s += lt.rule.weights[i] * m.det * term;
    }
  }
  return s;
}

/// Observed orders log(e_c / e_f) / log(h_c / h_f); NaN for the first entry.
inline std::vector<double> observed_rates(const std::vector<double>& h, const std::vector<double>& e) {
  std::vector<double> r(h.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 1; i < h.size(); ++i) r[i] = std::log(e[i - 1] / e[i]) / std::log(h[i - 1] / h[i]);
  return r;
}

struct ErrorRecord {
  double h = 0.0;
  int dofs_facet = 0;
  int dofs_total = 0;
  double err_u = 0.0, err_latent = 0.0, err_flux = 0.0;
  double rate_u = std::numeric_limits<double>::quiet_NaN();
  double rate_latent = std::numeric_limits<double>::quiet_NaN();
  double rate_flux = std::numeric_limits<double>::quiet_NaN();
};

inline void fill_rates(std::vector<ErrorRecord>& recs) {
  std::vector<double> h, eu, el, eq;
  for (const auto& r : recs) {
    h.push_back(r.h);
    eu.push_back(r.err_u);
    el.push_back(r.err_latent);
    eq.push_back(r.err_flux);
  }
  const auto ru = observed_rates(h, eu), rl = observed_rates(h, el), rq = observed_rates(h, eq);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    recs[i].rate_u = ru[i];
    recs[i].rate_latent = rl[i];
    recs[i].rate_flux = rq[i];
  }
}

}  // namespace fospg
