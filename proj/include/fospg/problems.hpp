#pragma once

// Benchmark problems: data, bounds, default operator, step-size schedule and
// stabilization, and exact solutions where known.

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fospg/assembly.hpp"
#include "fospg/error.hpp"
#include "fospg/latent.hpp"
#include "fospg/mesh.hpp"
#include "fospg/spaces.hpp"

namespace fospg {

/// alpha^k = c, or alpha^k = a0 r^k, capped at 1e30.
struct AlphaSchedule {
  enum class Kind { constant, geometric };
  static constexpr double cap = 1e30;

  Kind kind = Kind::constant;
  double a0 = 1.0;
  double r = 1.0;

  static AlphaSchedule constant(double c) {
    if (!(c > 0.0)) throw ConfigError("step size must be positive");
    return {Kind::constant, c, 1.0};
  }
  static AlphaSchedule geometric(double a0, double r) {
    if (!(a0 > 0.0) || !(r > 0.0)) throw ConfigError("geometric step sizes need a0 > 0 and r > 0");
    return {Kind::geometric, a0, r};
  }
  /// Parses "const:c" or "geom:a0,r".
  static AlphaSchedule parse(const std::string& s) {
    auto num = [&](const std::string& t) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(t, &pos);
      } catch (const std::exception&) {
        throw ConfigError("bad number '" + t + "' in step-size schedule '" + s + "'");
      }
      if (pos != t.size()) throw ConfigError("bad number '" + t + "' in step-size schedule '" + s + "'");
      return v;
    };
    if (s.rfind("const:", 0) == 0) return constant(num(s.substr(6)));
    if (s.rfind("geom:", 0) == 0) {
      const std::string rest = s.substr(5);
      const auto comma = rest.find(',');
      if (comma == std::string::npos) throw ConfigError("geometric schedule needs 'geom:a0,r'");
      return geometric(num(rest.substr(0, comma)), num(rest.substr(comma + 1)));
    }
    throw ConfigError("unknown step-size schedule '" + s + "' (expected const:c or geom:a0,r)");
  }
  std::string str() const {
    std::ostringstream o;
    o.precision(17);
    if (kind == Kind::constant) o << "const:" << a0;
    else o << "geom:" << a0 << "," << r;
    return o.str();
  }
  double operator()(int k) const {
    if (kind == Kind::constant) return std::min(a0, cap);
    const double v = a0 * std::pow(r, k);
    return std::isfinite(v) ? std::min(v, cap) : cap;
  }
};

struct Stabilization {
  double eps1 = 0.0;
  double eps2 = 0.0;
};

struct ProblemSpec {
  std::string name;
  DiffusionTensor A;
  ScalarFn f = [](Point) { return 0.0; };
  ScalarFn g = [](Point) { return 0.0; };
  Bounds bounds;
  LatentKind op = LatentKind::fermi_dirac;
  AlphaSchedule alpha;
  std::function<Stabilization(int p)> stabilization = [](int) { return Stabilization{}; };
  std::optional<ScalarFn> exact_u;
  std::optional<VectorFn> exact_q;  // q = -A grad u
  std::function<Mesh(int)> make_mesh;
  int default_mesh_param = 1;
  bool mesh_param_is_level = false;  // n_refine rather than a cell count per side
  std::function<int(int)> refine_param = [](int n) { return 2 * n; };

  LatentOperator latent(LatentKind kind) const { return {kind, bounds}; }
  LatentOperator latent() const { return latent(op); }
};

/// Throws ConfigError unless lower <= g <= upper at facet quadrature points.
inline void check_boundary_compatibility(const ProblemSpec& prob, const Mesh& mesh, int p) {
  const Rule1D r = gauss_legendre_unit(p + 2);
  for (const Facet& f : mesh.facets()) {
    if (!f.on_boundary()) continue;
    const Point a = mesh.vertex(f.v[0]), t = mesh.vertex(f.v[1]) - a;
    for (int q = 0; q < r.size(); ++q) {
      const Point x = a + r.points[q] * t;
      const double gv = prob.g(x);
      if (gv < prob.bounds.lo(x) - 1e-12 || gv > prob.bounds.hi(x) + 1e-12) {
        std::ostringstream o;
        o << "boundary data " << gv << " at (" << x.x << ", " << x.y << ") violates the bounds of problem " << prob.name;
        throw ConfigError(o.str());
      }
    }
  }
}

/// Samples the declared eigenvalue bounds of A at pseudo-random points.
inline bool check_tensor_bounds(const ProblemSpec& prob, int samples, unsigned seed = 7u) {
  unsigned s = seed;
  auto rnd = [&s] {
    s = 1664525u * s + 1013904223u;
    return (s >> 8) / static_cast<double>(1u << 24);
  };
  for (int i = 0; i < samples; ++i) {
    const Point x{rnd(), rnd()};
    for (int region : {1, 2}) {
      const auto [l1, l2] = prob.A(x, region).eigenvalues();
      if (l1 < prob.A.lower_bound() * (1 - 1e-12) || l2 > prob.A.upper_bound() * (1 + 1e-12)) return false;
    }
  }
  return true;
}

// --- oblique flow -----------------------------------------------------------

inline double oblique_bottom(double x) {
  if (x <= 0.2) return 1.0;
  if (x <= 0.3) return 2.0 - 5.0 * x;
  return 0.5;
}
inline double oblique_top(double x) {
  if (x <= 0.7) return 0.5;
  if (x <= 0.8) return 4.0 - 5.0 * x;
  return 0.0;
}

inline ProblemSpec oblique_flow() {
  ProblemSpec p;
  p.name = "oblique-flow";
  const double theta = 2.0 * std::numbers::pi / 9.0;
  const Sym2 a = rotated_diag(theta, 1.0, 1e-3);
  p.A = DiffusionTensor([a](Point, int) { return a; }, 1e-3, 1.0, true);
  p.g = [](Point x) {
    const double eps = 1e-12;
    if (x.y < eps) return oblique_bottom(x.x);
    if (x.y > 1.0 - eps) return oblique_top(x.x);
    if (x.x < eps) return oblique_bottom(x.y);
    return oblique_top(x.y);
  };
  p.bounds = Bounds::constant(0.0, 1.0);
  p.op = LatentKind::algebraic;
  p.alpha = AlphaSchedule::geometric(1.0, 4.0);
  p.make_mesh = [](int n) { return unit_square_triangles(n); };
  p.default_mesh_param = 20;
  return p;
}

// --- vertical faults --------------------------------------------------------

inline ProblemSpec vertical_faults() {
  ProblemSpec p;
  p.name = "vertical-faults";
  p.A = DiffusionTensor(
      [](Point x, int region) {
        const int r = region == 0 ? vertical_faults_region(x.x, x.y) : region;
        return r == 1 ? Sym2{1e3, 0.0, 10.0} : Sym2{1e-2, 0.0, 1e-3};
      },
      1e-3, 1e3, true);
  p.g = [](Point x) { return 1.0 - x.x; };
  p.bounds = Bounds::constant(0.0, 1.0);
  p.op = LatentKind::algebraic;
  p.alpha = AlphaSchedule::geometric(1.0, 4.0);
  p.make_mesh = [](int n) { return vertical_faults_mesh(n); };
  p.default_mesh_param = 20;
  return p;
}

// --- punctured domain -------------------------------------------------------

inline double punctured_angle(Point x) { return std::numbers::pi * std::sin(x.x) * std::sin(x.y); }

inline ProblemSpec punctured_domain() {
  ProblemSpec p;
  p.name = "punctured";
  p.A = DiffusionTensor([](Point x, int) { return rotated_diag(punctured_angle(x), 1e3, 1.0); }, 1.0, 1e3);
  p.g = [](Point x) {
    const double eps = 1e-12;
    const bool on_hole = x.x > 4.0 / 9 - eps && x.x < 5.0 / 9 + eps && x.y > 4.0 / 9 - eps && x.y < 5.0 / 9 + eps;
    return on_hole ? 1.0 : 0.0;
  };
  p.bounds = Bounds::constant(0.0, 1.0);
  p.op = LatentKind::algebraic;
  p.alpha = AlphaSchedule::geometric(1e-4, 1.5);
  p.stabilization = [](int) { return Stabilization{0.1, 0.1}; };
  p.make_mesh = [](int n) { return punctured_square(n); };
  p.default_mesh_param = 18;
  return p;
}

// --- biactive ---------------------------------------------------------------

inline ProblemSpec biactive() {
  ProblemSpec p;
  p.name = "biactive";
  p.A = DiffusionTensor::identity();
  const auto u = [](Point x) { return x.x >= 0.0 ? x.x * x.x * x.x * x.x : 0.0; };
  p.f = [](Point x) { return x.x >= 0.0 ? -12.0 * x.x * x.x : 0.0; };
  p.g = u;
  p.exact_u = u;
  p.exact_q = [](Point x) { return Point{x.x >= 0.0 ? -4.0 * x.x * x.x * x.x : 0.0, 0.0}; };
  p.bounds = {[](Point) { return 0.0; }, [](Point) { return infinity; }};
  p.op = LatentKind::exp;
  p.alpha = AlphaSchedule::geometric(1.0, 1.5);
  p.stabilization = [](int deg) {
    if (deg == 2) return Stabilization{0.0, 1e-5};
    if (deg == 3) return Stabilization{0.0, 1e-7};
    return Stabilization{};
  };
  p.make_mesh = [](int n) {
    if (n % 2 != 0) throw MeshError("biactive mesh needs an even resolution so x = 0 is a mesh line");
    return box_triangles(n, -1.0, 1.0, -1.0, 1.0);
  };
  p.default_mesh_param = 8;
  return p;
}

// --- spherical obstacle -----------------------------------------------------

/// Lower branch W_{-1}(x) for x in (-1/e, 0), by Newton on w e^w = x.
inline double lambert_w_minus1(double x, double seed) {
  if (!(x > -1.0 / std::numbers::e && x < 0.0)) throw ConfigError("W_{-1} needs -1/e < x < 0");
  double w = seed;
  for (int it = 0; it < 100; ++it) {
    const double ew = std::exp(w);
    const double step = (w * ew - x) / (ew * (w + 1.0));
    w -= step;
    if (std::abs(step) < 1e-16 * std::abs(w)) break;
  }
  if (!(w < -1.0)) throw SolverError("Newton iteration for W_{-1} left the lower branch");
  return w;
}

struct SphericalConstants {
  double a;  // contact radius
  double Q;  // u = Q ln r outside the contact disk
};

inline SphericalConstants spherical_constants() {
  constexpr double a_guess = 0.35;
  const double x = -1.0 / (2.0 * std::numbers::e * std::numbers::e);
  const double w = lambert_w_minus1(x, 2.0 * (std::log(a_guess) - 1.0));
  const double a = std::exp(0.5 * w + 1.0);
  return {a, std::sqrt(0.25 - a * a) / std::log(a)};
}

inline double spherical_obstacle_radial(double r) {
  constexpr double r0 = 9.0 / 20.0;
  if (r <= r0) return std::sqrt(0.25 - r * r);
  const double v0 = std::sqrt(0.25 - r0 * r0);
  return v0 - r0 / v0 * (r - r0);
}

inline ProblemSpec spherical_obstacle() {
  ProblemSpec p;
  p.name = "spherical";
  p.A = DiffusionTensor::identity();
  const SphericalConstants k = spherical_constants();
  p.bounds = {[](Point x) { return spherical_obstacle_radial(norm(x)); }, [](Point) { return infinity; }};
  p.exact_u = [k](Point x) {
    const double r = norm(x);
    return r > k.a ? k.Q * std::log(r) : spherical_obstacle_radial(r);
  };
  p.exact_q = [k](Point x) {
    const double r2 = dot(x, x);
    if (std::sqrt(r2) > k.a) return (-k.Q / r2) * x;
    return (1.0 / std::sqrt(0.25 - r2)) * x;
  };
  p.op = LatentKind::exp;
  p.alpha = AlphaSchedule::constant(1.0);
  p.stabilization = [](int deg) { return deg == 2 ? Stabilization{0.0, 2e-4} : Stabilization{}; };
  p.make_mesh = [](int n) { return polygonal_disk(n); };
  p.default_mesh_param = 2;
  p.mesh_param_is_level = true;
  p.refine_param = [](int n) { return n + 1; };
  return p;
}

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"oblique-flow", "vertical-faults", "punctured", "biactive", "spherical"};
  return names;
}

inline ProblemSpec make_problem(const std::string& name) {
  if (name == "oblique-flow") return oblique_flow();
  if (name == "vertical-faults") return vertical_faults();
  if (name == "punctured") return punctured_domain();
  if (name == "biactive") return biactive();
  if (name == "spherical") return spherical_obstacle();
  throw ConfigError("unknown problem '" + name + "' (expected oblique-flow|vertical-faults|punctured|biactive|spherical)");
}

}  // namespace fospg
