#pragma once

// Quadrature rules with positive weights: Gauss-Legendre on [-1,1] and [0,1],
// tensor rules on the unit square, collapsed (Duffy) Gauss rules of any
// order on the unit triangle, and a vertex-including rule of degree 2.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "fospg/error.hpp"
#include "fospg/mesh.hpp"

namespace fospg {

template <int Dim>
struct QuadratureRule {
  using Coord = std::conditional_t<Dim == 1, double, Point>;
  std::vector<Coord> points;
  std::vector<double> weights;
  int degree = 0;  // polynomial exactness degree

  int size() const { return static_cast<int>(weights.size()); }
  double total_weight() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

using Rule1D = QuadratureRule<1>;
using Rule2D = QuadratureRule<2>;

namespace detail {

/// Legendre P_m(x) and P_m'(x) by the three-term recurrence.
inline std::pair<double, double> legendre_with_derivative(int m, double x) {
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= m; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  return {p1, m * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace detail

/// m-point Gauss-Legendre rule on [-1,1], exact for degree 2m-1.
inline Rule1D gauss_legendre_1d(int m) {
  if (m < 1 || m > 64) throw ConfigError("Gauss-Legendre rule needs 1 <= m <= 64, got " + std::to_string(m));
  Rule1D rule;
  rule.degree = 2 * m - 1;
  rule.points.resize(m);
  rule.weights.resize(m);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [p, dp] = detail::legendre_with_derivative(m, x);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double dp = detail::legendre_with_derivative(m, x).second;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.points[i] = -x;
    rule.points[m - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[m - 1 - i] = w;
  }
  if (m % 2 == 1) rule.points[m / 2] = 0.0;
  return rule;
}

/// Gauss-Legendre rule mapped to [0,1].
inline Rule1D gauss_legendre_unit(int m) {
  Rule1D r = gauss_legendre_1d(m);
  for (int i = 0; i < r.size(); ++i) {
    r.points[i] = 0.5 * (r.points[i] + 1.0);
    r.weights[i] *= 0.5;
  }
  return r;
}

/// m x m tensor Gauss rule on the unit square, exact for Q_{2m-1}.
inline Rule2D gauss_rect(int m) {
  const Rule1D g = gauss_legendre_unit(m);
  Rule2D r;
  r.degree = 2 * m - 1;
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      r.points.push_back({g.points[i], g.points[j]});
      r.weights.push_back(g.weights[i] * g.weights[j]);
    }
  return r;
}

/// (p+1)^2-point tensor rule: exact for Q_{2p+1}; its Lagrange functions lie in Q_p.
inline Rule2D tensor_rule_rect(int p) {
  if (p < 0) throw ConfigError("tensor rule degree must be nonnegative");
  return gauss_rect(p + 1);
}

inline constexpr int max_triangle_rule_order = 20;

/// Positive-weight rule on the unit triangle exact for total degree `order`.
/// Order 0/1 use the centroid; higher orders use the collapsed Gauss product.
inline Rule2D rule_triangle(int order) {
  if (order < 0 || order > max_triangle_rule_order)
    throw ConfigError("unsupported triangle quadrature order " + std::to_string(order));
  Rule2D r;
  r.degree = order;
  if (order <= 1) {
    r.points = {{1.0 / 3.0, 1.0 / 3.0}};
    r.weights = {0.5};
    r.degree = 1;
    return r;
  }
  // x = s (1 - t), y = t, Jacobian (1 - t); the extra factor raises the degree in t by one.
  const int m = (order + 3) / 2;
  const Rule1D g = gauss_legendre_unit(m);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < m; ++i) {
      const double s = g.points[i], t = g.points[j];
      r.points.push_back({s * (1.0 - t), t});
      r.weights.push_back(g.weights[i] * g.weights[j] * (1.0 - t));
    }
  return r;
}

/// Vertices plus centroid, weights |T|/12 and 3|T|/4: positive, exact for degree 2.
inline Rule2D vertex_augmented_triangle() {
  Rule2D r;
  r.degree = 2;
  const double area = 0.5;
  r.points = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}, {1.0 / 3.0, 1.0 / 3.0}};
  r.weights = {area / 12.0, area / 12.0, area / 12.0, 0.75 * area};
  return r;
}

/// Rule exact for `order` on the reference cell of the given kind.
inline Rule2D cell_rule(CellKind kind, int order) {
  if (kind == CellKind::triangle) return rule_triangle(order);
  return gauss_rect(std::max(1, (order + 2) / 2));
}

}  // namespace fospg
