#pragma once

// Superposition operators Upsilon(x, z) mapping the real line onto the open
// interval between the bounds, with derivative, inverse, entropy R, its
// derivative R' = Upsilon^{-1}, conjugate R*, and the discrete Bregman distance.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "fospg/error.hpp"
#include "fospg/mesh.hpp"
#include "fospg/quadrature.hpp"

namespace fospg {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

/// Pointwise bounds; either side may be infinite.
struct Bounds {
  std::function<double(Point)> lower = [](Point) { return -infinity; };
  std::function<double(Point)> upper = [](Point) { return infinity; };

  static Bounds constant(double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("bounds must satisfy lower < upper");
    return {[lo](Point) { return lo; }, [hi](Point) { return hi; }};
  }
  double lo(Point x) const { return lower(x); }
  double hi(Point x) const { return upper(x); }
};

enum class LatentKind {
  fermi_dirac,  // lo + (hi - lo) sigmoid(z)
  algebraic,    // mid + half-width z / sqrt(1 + z^2)
  exp,          // lo + exp(z)
  softplus,     // lo + ln(1 + exp(z))
  identity      // z; unconstrained, used to test the nonlinear solver on a linear map
};

inline std::string to_string(LatentKind k) {
  switch (k) {
    case LatentKind::fermi_dirac: return "fermi-dirac";
    case LatentKind::algebraic: return "algebraic";
    case LatentKind::exp: return "exp";
    case LatentKind::softplus: return "softplus";
    case LatentKind::identity: return "identity";
  }
  return "unknown";
}

inline LatentKind parse_latent_kind(const std::string& s) {
  if (s == "fermi-dirac") return LatentKind::fermi_dirac;
  if (s == "algebraic") return LatentKind::algebraic;
  if (s == "exp") return LatentKind::exp;
  if (s == "softplus") return LatentKind::softplus;
  throw ConfigError("unknown operator '" + s + "' (expected fermi-dirac|algebraic|exp|softplus)");
}

namespace detail {

/// ln(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// e^z / (1 + e^z) without overflow.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Alternating series of -Li_2(-e^z), used for z <= -1.
inline double softplus_integral_series(double z) {
  const double e = std::exp(z);
  double term = e, sum = 0.0;
  for (int k = 1; k < 200; ++k) {
    const double add = term / (static_cast<double>(k) * k);
    sum += (k % 2 == 1) ? add : -add;
    if (add < 1e-18 * std::abs(sum)) break;
    term *= e;
  }
  return sum;
}

/// F(z) = int_{-inf}^z ln(1 + e^t) dt = -Li_2(-e^z).
inline double softplus_integral(double z) {
  if (z > 0.0) return std::numbers::pi * std::numbers::pi / 6.0 + 0.5 * z * z - softplus_integral(-z);
  if (z <= -1.0) return softplus_integral_series(z);
  static const Rule1D g = gauss_legendre_unit(20);
  double acc = 0.0;
  for (int q = 0; q < g.size(); ++q) acc += g.weights[q] * softplus(-1.0 + (z + 1.0) * g.points[q]);
  return softplus_integral_series(-1.0) + (z + 1.0) * acc;
}

}  // namespace detail

/// Superposition operator with pointwise bounds. Scalar members take the
/// bound values (lo, hi) at the evaluation point directly.
class LatentOperator {
 public:
  static constexpr double default_psi_max = 500.0;
  static constexpr double derivative_floor = 1e-300;

  LatentOperator() = default;
  LatentOperator(LatentKind kind, Bounds bounds, double psi_max = default_psi_max)
      : kind_(kind), bounds_(std::move(bounds)), psi_max_(psi_max) {}

  LatentKind kind() const { return kind_; }
  const Bounds& bounds() const { return bounds_; }
  double psi_max() const { return psi_max_; }

  /// Throws ConfigError if (lo, hi) is incompatible with the operator family.
  void check_bounds(double lo, double hi) const {
    switch (kind_) {
      case LatentKind::fermi_dirac:
      case LatentKind::algebraic:
        if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
          throw ConfigError(to_string(kind_) + " operator needs finite bounds lower < upper");
        break;
      case LatentKind::exp:
      case LatentKind::softplus:
        if (!std::isfinite(lo) || hi != infinity)
          throw ConfigError(to_string(kind_) + " operator needs a finite lower bound and no upper bound");
        break;
      case LatentKind::identity: break;
    }
  }

  double upsilon(double lo, double hi, double z) const {
    switch (kind_) {
      case LatentKind::fermi_dirac: {
        const double zc = clamp(z);
        const double d = hi - lo;
        return zc >= 0.0 ? hi - d * detail::sigmoid(-zc) : lo + d * detail::sigmoid(zc);
      }
      case LatentKind::algebraic: {
        const double s = 0.5 * (hi - lo), h = std::hypot(1.0, z);
        if (!std::isfinite(h)) return z > 0.0 ? hi : lo;
        return z >= 0.0 ? hi - s / (h * (h + z)) : lo + s / (h * (h - z));
      }
      case LatentKind::exp: return lo + std::exp(clamp(z));
      case LatentKind::softplus: return lo + detail::softplus(clamp(z));
      case LatentKind::identity: return z;
    }
    return 0.0;
  }

  double upsilon_prime(double lo, double hi, double z) const {
    double v = 1.0;
    switch (kind_) {
      case LatentKind::fermi_dirac: {
        const double e = std::exp(-std::abs(clamp(z)));
        v = (hi - lo) * e / ((1.0 + e) * (1.0 + e));
        break;
      }
      case LatentKind::algebraic: {
        const double h = std::hypot(1.0, z);
        v = 0.5 * (hi - lo) / (h * h * h);
        break;
      }
      case LatentKind::exp: v = std::exp(clamp(z)); break;
      case LatentKind::softplus: v = detail::sigmoid(clamp(z)); break;
      case LatentKind::identity: return 1.0;
    }
    return std::max(v, derivative_floor);
  }

  /// True when Upsilon(z) coincides with a bound in double precision.
  bool saturated(double lo, double hi, double z) const {
    if (kind_ == LatentKind::identity) return false;
    const double y = upsilon(lo, hi, z);
    return y <= lo || y >= hi;
  }

  double upsilon_inverse(double lo, double hi, double y) const {
    if (kind_ == LatentKind::identity) return y;
    if (!(y > lo && y < hi)) throw ConfigError("latent inverse evaluated at or outside the bounds");
    switch (kind_) {
      case LatentKind::fermi_dirac: return std::log(y - lo) - std::log(hi - y);
      case LatentKind::algebraic: return (y - 0.5 * (lo + hi)) / std::sqrt((hi - y) * (y - lo));
      case LatentKind::exp: return std::log(y - lo);
      case LatentKind::softplus: {
        const double w = y - lo;
        return w + std::log(-std::expm1(-w));
      }
      case LatentKind::identity: break;
    }
    return y;
  }

  /// Entropy R(y); +inf outside the closed bounds.
  double entropy(double lo, double hi, double y) const {
    if (kind_ == LatentKind::identity) return 0.5 * y * y;
    if (y < lo || y > hi) return infinity;
    auto xlogx = [](double t) { return t > 0.0 ? t * std::log(t) : 0.0; };
    switch (kind_) {
      case LatentKind::fermi_dirac: return xlogx(y - lo) + xlogx(hi - y);
      case LatentKind::algebraic: return -std::sqrt((hi - y) * (y - lo));
      case LatentKind::exp: return xlogx(y - lo) - (y - lo);
      case LatentKind::softplus: {
        const double w = y - lo;
        if (w <= 0.0) return 0.0;
        if (w == infinity) return infinity;
        const double z = upsilon_inverse(lo, hi, y);
        return z * w - detail::softplus_integral(z);
      }
      case LatentKind::identity: break;
    }
    return 0.0;
  }

  /// R'(y) = Upsilon^{-1}(y); rejected at the bounds.
  double entropy_prime(double lo, double hi, double y) const { return upsilon_inverse(lo, hi, y); }

  /// Convex conjugate R*(z) = z Upsilon(z) - R(Upsilon(z)).
  double conjugate(double lo, double hi, double z) const {
    switch (kind_) {
      case LatentKind::fermi_dirac: {
        const double d = hi - lo;
        return lo * z + d * detail::softplus(z) - d * std::log(d);
      }
      case LatentKind::algebraic: return 0.5 * (lo + hi) * z + 0.5 * (hi - lo) * std::hypot(1.0, z);
      case LatentKind::exp: return lo * z + std::exp(z);
      case LatentKind::softplus: return lo * z + detail::softplus_integral(z);
      case LatentKind::identity: return 0.5 * z * z;
    }
    return 0.0;
  }

  // Point-wise forms using the stored bounds.
  double upsilon(Point x, double z) const { return upsilon(bounds_.lo(x), bounds_.hi(x), z); }
  double upsilon_prime(Point x, double z) const { return upsilon_prime(bounds_.lo(x), bounds_.hi(x), z); }
  double upsilon_inverse(Point x, double y) const { return upsilon_inverse(bounds_.lo(x), bounds_.hi(x), y); }
  double entropy(Point x, double y) const { return entropy(bounds_.lo(x), bounds_.hi(x), y); }
  double entropy_prime(Point x, double y) const { return entropy_prime(bounds_.lo(x), bounds_.hi(x), y); }
  double conjugate(Point x, double z) const { return conjugate(bounds_.lo(x), bounds_.hi(x), z); }

 private:
  double clamp(double z) const { return std::clamp(z, -psi_max_, psi_max_); }

  LatentKind kind_ = LatentKind::fermi_dirac;
  Bounds bounds_ = Bounds::constant(0.0, 1.0);
  double psi_max_ = default_psi_max;
};

}  // namespace fospg
