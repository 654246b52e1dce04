#pragma once

// Reference-cell bases: nodal Lagrange P_p (triangle) / Q_p (rectangle),
// Raviart-Thomas RT_p built from facet normal moments and interior moments,
// and shifted Legendre polynomials for facet unknowns.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fospg/error.hpp"
#include "fospg/mesh.hpp"
#include "fospg/quadrature.hpp"

namespace fospg {

struct Monomial {
  int a = 0;  // power of x
  int b = 0;  // power of y
};
using MonomialSet = std::vector<Monomial>;

inline MonomialSet total_degree_monomials(int deg) {
  MonomialSet s;
  for (int d = 0; d <= deg; ++d)
    for (int b = 0; b <= d; ++b) s.push_back({d - b, b});
  return s;
}

inline MonomialSet tensor_monomials(int dx, int dy) {
  MonomialSet s;
  for (int b = 0; b <= dy; ++b)
    for (int a = 0; a <= dx; ++a) s.push_back({a, b});
  return s;
}

inline double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

inline double eval_monomial(Monomial m, Point p) { return ipow(p.x, m.a) * ipow(p.y, m.b); }
inline Point grad_monomial(Monomial m, Point p) {
  return {m.a == 0 ? 0.0 : m.a * ipow(p.x, m.a - 1) * ipow(p.y, m.b),
          m.b == 0 ? 0.0 : m.b * ipow(p.x, m.a) * ipow(p.y, m.b - 1)};
}

/// Shifted Legendre polynomial L_j(t) = P_j(2t - 1) on [0,1].
inline double shifted_legendre(int j, double t) {
  const double x = 2.0 * t - 1.0;
  double p0 = 1.0, p1 = x;
  if (j == 0) return p0;
  for (int k = 2; k <= j; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  return p1;
}

inline std::vector<Point> reference_vertices(CellKind kind) {
  if (kind == CellKind::triangle) return {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  return {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
}

inline double reference_area(CellKind kind) { return kind == CellKind::triangle ? 0.5 : 1.0; }

inline int max_degree(CellKind kind) { return kind == CellKind::triangle ? 3 : 2; }

inline void check_degree(CellKind kind, int p) {
  if (p < 0 || p > max_degree(kind))
    throw ConfigError("unsupported polynomial degree " + std::to_string(p) + " for " +
                      (kind == CellKind::triangle ? "triangles" : "rectangles"));
}

inline int scalar_dim(CellKind kind, int p) {
  return kind == CellKind::triangle ? (p + 1) * (p + 2) / 2 : (p + 1) * (p + 1);
}

inline int rt_dim(CellKind kind, int p) {
  return kind == CellKind::triangle ? (p + 1) * (p + 3) : 2 * (p + 1) * (p + 2);
}

/// Nodal basis of P_p or Q_p on equispaced nodes (the barycenter for p = 0).
class LagrangeBasis {
 public:
  LagrangeBasis() = default;
  LagrangeBasis(CellKind kind, int p) : kind_(kind), p_(p) {
    check_degree(kind, p);
    monos_ = kind == CellKind::triangle ? total_degree_monomials(p) : tensor_monomials(p, p);
    if (p == 0) {
      nodes_ = {kind == CellKind::triangle ? Point{1.0 / 3.0, 1.0 / 3.0} : Point{0.5, 0.5}};
    } else if (kind == CellKind::triangle) {
      for (int j = 0; j <= p; ++j)
        for (int i = 0; i + j <= p; ++i) nodes_.push_back({static_cast<double>(i) / p, static_cast<double>(j) / p});
    } else {
      for (int j = 0; j <= p; ++j)
        for (int i = 0; i <= p; ++i) nodes_.push_back({static_cast<double>(i) / p, static_cast<double>(j) / p});
    }
    const int n = size();
    vandermonde_.resize(n, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) vandermonde_(i, k) = eval_monomial(monos_[k], nodes_[i]);
    coef_ = vandermonde_.inverse();  // column i: monomial coefficients of phi_i
  }

  CellKind kind() const { return kind_; }
  int degree() const { return p_; }
  int size() const { return static_cast<int>(monos_.size()); }
  const std::vector<Point>& nodes() const { return nodes_; }
  const MonomialSet& monomials() const { return monos_; }

  Eigen::VectorXd values(Point x) const {
    Eigen::VectorXd m(size());
    for (int k = 0; k < size(); ++k) m[k] = eval_monomial(monos_[k], x);
    return coef_.transpose() * m;
  }

  /// Column 0: d/dx, column 1: d/dy.
  Eigen::MatrixX2d gradients(Point x) const {
    Eigen::MatrixX2d g(size(), 2);
    Eigen::MatrixX2d m(size(), 2);
    for (int k = 0; k < size(); ++k) {
      const Point d = grad_monomial(monos_[k], x);
      m(k, 0) = d.x;
      m(k, 1) = d.y;
    }
    g = coef_.transpose() * m;
    return g;
  }

  /// 2-norm condition number of the nodal Vandermonde matrix.
  double vandermonde_condition() const {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(vandermonde_);
    const auto& s = svd.singularValues();
    return s[0] / s[s.size() - 1];
  }

 private:
  CellKind kind_ = CellKind::triangle;
  int p_ = 0;
  MonomialSet monos_;
  std::vector<Point> nodes_;
  Eigen::MatrixXd vandermonde_;
  Eigen::MatrixXd coef_;
};

/// Raviart-Thomas basis on the reference cell, dual to the moment dofs
///   facet k, j = 0..p :  int_{e_k} (q . n) L_j(t) ds,  t from vertex k to k+1,
///   interior        :  int (q . e_c) m for the interior test monomials.
/// Facet dofs come first, ordered k * (p+1) + j.
class RTBasis {
 public:
  RTBasis() = default;
  RTBasis(CellKind kind, int p) : kind_(kind), p_(p) {
    check_degree(kind, p);
    ambient_ = tensor_monomials(p + 1, p + 1);
    const int na = static_cast<int>(ambient_.size());
    auto slot = [p](int a, int b) { return b * (p + 2) + a; };

    // spanning set as coefficient columns over the ambient monomials
    std::vector<Eigen::VectorXd> sx, sy;
    auto add = [&](int comp, int a, int b) {
      Eigen::VectorXd cx = Eigen::VectorXd::Zero(na), cy = Eigen::VectorXd::Zero(na);
      (comp == 0 ? cx : cy)[slot(a, b)] = 1.0;
      sx.push_back(cx);
      sy.push_back(cy);
    };
    if (kind == CellKind::triangle) {
      for (const Monomial& m : total_degree_monomials(p)) add(0, m.a, m.b);
      for (const Monomial& m : total_degree_monomials(p)) add(1, m.a, m.b);
      for (int b = 0; b <= p; ++b) {  // x * homogeneous degree-p monomial
        Eigen::VectorXd cx = Eigen::VectorXd::Zero(na), cy = Eigen::VectorXd::Zero(na);
        cx[slot(p - b + 1, b)] = 1.0;
        cy[slot(p - b, b + 1)] = 1.0;
        sx.push_back(cx);
        sy.push_back(cy);
      }
    } else {
      for (int b = 0; b <= p; ++b)
        for (int a = 0; a <= p + 1; ++a) add(0, a, b);
      for (int b = 0; b <= p + 1; ++b)
        for (int a = 0; a <= p; ++a) add(1, a, b);
    }
    const int n = static_cast<int>(sx.size());
    if (n != rt_dim(kind, p)) throw SolverError("RT spanning set has the wrong dimension");

    // interior test functions: (component, monomial)
    std::vector<std::pair<int, Monomial>> interior;
    if (kind == CellKind::triangle) {
      for (int c = 0; c < 2; ++c)
        for (const Monomial& m : total_degree_monomials(p - 1)) interior.push_back({c, m});
    } else if (p > 0) {
      for (const Monomial& m : tensor_monomials(p - 1, p)) interior.push_back({0, m});
      for (const Monomial& m : tensor_monomials(p, p - 1)) interior.push_back({1, m});
    }
    const auto verts = reference_vertices(kind);
    const int nf = static_cast<int>(verts.size());
    if (nf * (p + 1) + static_cast<int>(interior.size()) != n) throw SolverError("RT dof count mismatch");

    auto eval_span = [&](int s, Point x) {
      Point v;
      for (int k = 0; k < na; ++k) {
        const double mk = eval_monomial(ambient_[k], x);
        v.x += sx[s][k] * mk;
        v.y += sy[s][k] * mk;
      }
      return v;
    };

    Eigen::MatrixXd dof(n, n);  // dof(i, s) = functional i applied to span s
    const Rule1D g = gauss_legendre_unit(p + 2);
    for (int k = 0; k < nf; ++k) {
      const Point a = verts[k], b = verts[(k + 1) % nf];
      const Point t = b - a;
      const Point nu{t.y, -t.x};  // outward, length |e_k|
      for (int j = 0; j <= p; ++j)
        for (int s = 0; s < n; ++s) {
          double acc = 0.0;
          for (int q = 0; q < g.size(); ++q)
            acc += g.weights[q] * dot(eval_span(s, a + g.points[q] * t), nu) * shifted_legendre(j, g.points[q]);
          dof(k * (p + 1) + j, s) = acc;
        }
    }
    const Rule2D r = cell_rule(kind, 2 * p + 2);
    for (std::size_t i = 0; i < interior.size(); ++i)
      for (int s = 0; s < n; ++s) {
        double acc = 0.0;
        for (int q = 0; q < r.size(); ++q) {
          const Point v = eval_span(s, r.points[q]);
          acc += r.weights[q] * (interior[i].first == 0 ? v.x : v.y) * eval_monomial(interior[i].second, r.points[q]);
        }
        dof(nf * (p + 1) + static_cast<int>(i), s) = acc;
      }

    Eigen::MatrixXd span_x(na, n), span_y(na, n);
    for (int s = 0; s < n; ++s) {
      span_x.col(s) = sx[s];
      span_y.col(s) = sy[s];
    }
    const Eigen::MatrixXd inv = dof.fullPivLu().inverse();
    cx_ = span_x * inv;
    cy_ = span_y * inv;
  }

  CellKind kind() const { return kind_; }
  int degree() const { return p_; }
  int size() const { return static_cast<int>(cx_.cols()); }
  int num_facets() const { return facets_per_cell(kind_); }
  int dofs_per_facet() const { return p_ + 1; }
  int num_facet_dofs() const { return num_facets() * dofs_per_facet(); }
  int num_interior_dofs() const { return size() - num_facet_dofs(); }

  /// Rows are basis functions; columns are the x and y components.
  Eigen::MatrixX2d values(Point x) const {
    Eigen::VectorXd m(ambient_.size());
    for (std::size_t k = 0; k < ambient_.size(); ++k) m[k] = eval_monomial(ambient_[k], x);
    Eigen::MatrixX2d v(size(), 2);
    v.col(0) = cx_.transpose() * m;
    v.col(1) = cy_.transpose() * m;
    return v;
  }

  Eigen::VectorXd divergences(Point x) const {
    Eigen::VectorXd mx(ambient_.size()), my(ambient_.size());
    for (std::size_t k = 0; k < ambient_.size(); ++k) {
      const Point d = grad_monomial(ambient_[k], x);
      mx[k] = d.x;
      my[k] = d.y;
    }
    return cx_.transpose() * mx + cy_.transpose() * my;
  }

 private:
  CellKind kind_ = CellKind::triangle;
  int p_ = 0;
  MonomialSet ambient_;
  Eigen::MatrixXd cx_, cy_;
};

}  // namespace fospg
