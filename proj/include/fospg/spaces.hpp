#pragma once

// Broken scalar space V_h (P_p / Q_p), broken Raviart-Thomas space with an
// alternative div-conforming numbering, facet polynomial space, diffusion
// tensors, and reference tabulations on quadrature rules.

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fospg/error.hpp"
#include "fospg/mesh.hpp"
#include "fospg/quadrature.hpp"
#include "fospg/reference.hpp"

namespace fospg {

/// Symmetric 2x2 matrix.
struct Sym2 {
  double xx = 1.0, xy = 0.0, yy = 1.0;

  double det() const { return xx * yy - xy * xy; }
  Sym2 inverse() const {
    const double d = det();
    return {yy / d, -xy / d, xx / d};
  }
  Point apply(Point v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
  std::pair<double, double> eigenvalues() const {
    const double m = 0.5 * (xx + yy);
    const double r = std::hypot(0.5 * (xx - yy), xy);
    return {m - r, m + r};
  }
  /// A^{1/2} via the eigen-decomposition.
  Sym2 sqrt() const {
    const auto [l1, l2] = eigenvalues();
    const double s1 = std::sqrt(l1), s2 = std::sqrt(l2);
    if (l2 - l1 < 1e-300) return {s1, 0.0, s1};
    // A^{1/2} = (A + sqrt(l1 l2) I) / (s1 + s2)
    const double t = s1 + s2, g = s1 * s2;
    return {(xx + g) / t, xy / t, (yy + g) / t};
  }
};

inline Sym2 rotated_diag(double theta, double l1, double l2) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * c * l1 + s * s * l2, c * s * (l1 - l2), s * s * l1 + c * c * l2};
}

/// Diffusion tensor A(x) with declared eigenvalue bounds. The callback
/// receives the cell region tag so piecewise-constant data needs no sampling.
class DiffusionTensor {
 public:
  using Fn = std::function<Sym2(Point, int region)>;

  DiffusionTensor() : fn_([](Point, int) { return Sym2{}; }), lmin_(1.0), lmax_(1.0), constant_(true) {}
  DiffusionTensor(Fn fn, double lmin, double lmax, bool piecewise_constant = false)
      : fn_(std::move(fn)), lmin_(lmin), lmax_(lmax), constant_(piecewise_constant) {
    if (!(lmin > 0.0) || lmax < lmin) throw ConfigError("diffusion tensor bounds must satisfy 0 < lmin <= lmax");
  }
  static DiffusionTensor identity() { return {}; }

  Sym2 operator()(Point x, int region = 0) const { return fn_(x, region); }
  double lower_bound() const { return lmin_; }
  double upper_bound() const { return lmax_; }
  bool piecewise_constant() const { return constant_; }

 private:
  Fn fn_;
  double lmin_, lmax_;
  bool constant_;
};

/// Broken V_h^p: dofs of cell c are [c * local_size, (c+1) * local_size).
class ScalarSpace {
 public:
  ScalarSpace(const Mesh& mesh, int p) : mesh_(&mesh), basis_(mesh.kind(), p) {}

  const Mesh& mesh() const { return *mesh_; }
  const LagrangeBasis& basis() const { return basis_; }
  int degree() const { return basis_.degree(); }
  int local_size() const { return basis_.size(); }
  int size() const { return mesh_->num_cells() * local_size(); }
  int offset(int cell) const { return cell * local_size(); }

  /// Value at a reference point of cell `cell`.
  double eval(const Eigen::VectorXd& coeffs, int cell, Point ref) const {
    return basis_.values(ref).dot(coeffs.segment(offset(cell), local_size()));
  }

 private:
  const Mesh* mesh_;
  LagrangeBasis basis_;
};

/// Broken RT_p with a div-conforming numbering: facet moments become one
/// global dof per (facet, j); the neighbor's copy carries sign (-1)^(j+1).
class FluxSpace {
 public:
  FluxSpace(const Mesh& mesh, int p) : mesh_(&mesh), basis_(mesh.kind(), p) {
    const int nl = local_size(), nf = basis_.num_facets(), dpf = basis_.dofs_per_facet();
    global_.resize(static_cast<std::size_t>(mesh.num_cells()) * nl);
    sign_.resize(global_.size());
    const int facet_block = mesh.num_facets() * dpf;
    for (int c = 0; c < mesh.num_cells(); ++c) {
      for (int k = 0; k < nf; ++k) {
        const int f = mesh.cell_facet(c, k);
        const bool owner = mesh.is_owner(c, k);
        for (int j = 0; j < dpf; ++j) {
          const std::size_t i = static_cast<std::size_t>(c) * nl + k * dpf + j;
          global_[i] = f * dpf + j;
          sign_[i] = owner ? 1.0 : (j % 2 == 0 ? -1.0 : 1.0);
        }
      }
      for (int i = 0; i < basis_.num_interior_dofs(); ++i) {
        const std::size_t li = static_cast<std::size_t>(c) * nl + basis_.num_facet_dofs() + i;
        global_[li] = facet_block + c * basis_.num_interior_dofs() + i;
        sign_[li] = 1.0;
      }
    }
    div_size_ = facet_block + mesh.num_cells() * basis_.num_interior_dofs();
  }

  const Mesh& mesh() const { return *mesh_; }
  const RTBasis& basis() const { return basis_; }
  int degree() const { return basis_.degree(); }
  int local_size() const { return basis_.size(); }
  int size() const { return mesh_->num_cells() * local_size(); }
  int offset(int cell) const { return cell * local_size(); }
  int div_size() const { return div_size_; }
  int div_index(int cell, int i) const { return global_[static_cast<std::size_t>(cell) * local_size() + i]; }
  double div_sign(int cell, int i) const { return sign_[static_cast<std::size_t>(cell) * local_size() + i]; }

  /// Broken coefficients of a div-conforming field.
  Eigen::VectorXd to_broken(const Eigen::VectorXd& div_coeffs) const {
    Eigen::VectorXd out(size());
    for (std::size_t i = 0; i < global_.size(); ++i) out[static_cast<Eigen::Index>(i)] = sign_[i] * div_coeffs[global_[i]];
    return out;
  }

 private:
  const Mesh* mesh_;
  RTBasis basis_;
  std::vector<int> global_;
  std::vector<double> sign_;
  int div_size_ = 0;
};

/// M_h^p: Legendre coefficients per facet in the facet's own parameter s,
/// running from facet.v[0] to facet.v[1]. Boundary facets are Dirichlet.
class FacetSpace {
 public:
  FacetSpace(const Mesh& mesh, int p) : mesh_(&mesh), p_(p) {
    free_.assign(mesh.num_facets(), -1);
    for (int f = 0; f < mesh.num_facets(); ++f)
      if (!mesh.facet(f).on_boundary()) free_[f] = num_free_facets_++;
  }

  const Mesh& mesh() const { return *mesh_; }
  int degree() const { return p_; }
  int dofs_per_facet() const { return p_ + 1; }
  int size() const { return mesh_->num_facets() * dofs_per_facet(); }
  int offset(int facet) const { return facet * dofs_per_facet(); }
  bool is_dirichlet(int facet) const { return free_[facet] < 0; }
  /// Position of an interior facet in the condensed numbering, -1 on the boundary.
  int free_index(int facet) const { return free_[facet]; }
  int num_free_facets() const { return num_free_facets_; }
  int num_free_dofs() const { return num_free_facets_ * dofs_per_facet(); }

  double eval(const Eigen::VectorXd& coeffs, int facet, double s) const {
    double v = 0.0;
    for (int m = 0; m <= p_; ++m) v += coeffs[offset(facet) + m] * shifted_legendre(m, s);
    return v;
  }

 private:
  const Mesh* mesh_;
  int p_;
  std::vector<int> free_;
  int num_free_facets_ = 0;
};

/// Reference-cell tabulation of both bases on a 2D rule.
struct CellTable {
  Rule2D rule;
  Eigen::MatrixXd phi;             // points x scalar basis
  Eigen::MatrixXd dphi_x, dphi_y;  // reference gradients
  Eigen::MatrixXd qx, qy;          // reference RT values
  Eigen::MatrixXd divq;            // reference RT divergence
};

inline CellTable tabulate(const LagrangeBasis& sb, const RTBasis& rb, Rule2D rule) {
  CellTable t;
  const int n = rule.size();
  t.phi.resize(n, sb.size());
  t.dphi_x.resize(n, sb.size());
  t.dphi_y.resize(n, sb.size());
  t.qx.resize(n, rb.size());
  t.qy.resize(n, rb.size());
  t.divq.resize(n, rb.size());
  for (int i = 0; i < n; ++i) {
    const Point x = rule.points[i];
    t.phi.row(i) = sb.values(x).transpose();
    const Eigen::MatrixX2d g = sb.gradients(x);
    t.dphi_x.row(i) = g.col(0).transpose();
    t.dphi_y.row(i) = g.col(1).transpose();
    const Eigen::MatrixX2d v = rb.values(x);
    t.qx.row(i) = v.col(0).transpose();
    t.qy.row(i) = v.col(1).transpose();
    t.divq.row(i) = rb.divergences(x).transpose();
  }
  t.rule = std::move(rule);
  return t;
}

/// Tabulation on each local facet of the reference cell. The facet rule
/// lives on [0,1] in the local parameter t (vertex k to vertex k+1).
struct FacetTable {
  Rule1D rule;
  std::vector<CellTable> local;  // one per local facet; rule.points are reference points
};

inline FacetTable tabulate_facets(const LagrangeBasis& sb, const RTBasis& rb, int npoints) {
  FacetTable ft;
  ft.rule = gauss_legendre_unit(npoints);
  const auto verts = reference_vertices(sb.kind());
  const int nf = static_cast<int>(verts.size());
  for (int k = 0; k < nf; ++k) {
    Rule2D r;
    const Point a = verts[k], b = verts[(k + 1) % nf];
    for (int q = 0; q < ft.rule.size(); ++q) {
      r.points.push_back(a + ft.rule.points[q] * (b - a));
      r.weights.push_back(ft.rule.weights[q]);
    }
    ft.local.push_back(tabulate(sb, rb, std::move(r)));
  }
  return ft;
}

/// Rule realizing the inner product (.,.)_h on which the latent map acts:
/// barycenter for p = 0, tensor Gauss (p+1)^2 on rectangles, the vertex
/// rule for P_1 triangles and a degree-2p rule otherwise.
inline Rule2D latent_rule(CellKind kind, int p) {
  if (p == 0) {
    Rule2D r;
    r.points = {kind == CellKind::triangle ? Point{1.0 / 3.0, 1.0 / 3.0} : Point{0.5, 0.5}};
    r.weights = {reference_area(kind)};
    r.degree = 1;
    return r;
  }
  if (kind == CellKind::rectangle) return tensor_rule_rect(p);
  if (p == 1) return vertex_augmented_triangle();
  return rule_triangle(2 * p);
}

/// Physical edge geometry of local facet k of a cell.
struct LocalFacetGeometry {
  int facet = -1;
  bool owner = true;
  Point start, tangent;  // x(t) = start + t * tangent
  Point normal;          // outward unit normal
  double length = 0.0;
  double hf = 0.0;

  /// Facet parameter s (global orientation) from the local parameter t.
  double global_param(double t) const { return owner ? t : 1.0 - t; }
};

inline LocalFacetGeometry local_facet_geometry(const Mesh& mesh, int cell, int k) {
  LocalFacetGeometry g;
  const auto [a, b] = mesh.local_facet_vertices(cell, k);
  g.facet = mesh.cell_facet(cell, k);
  g.owner = mesh.is_owner(cell, k);
  g.start = mesh.vertex(a);
  g.tangent = mesh.vertex(b) - g.start;
  g.length = norm(g.tangent);
  g.normal = {g.tangent.y / g.length, -g.tangent.x / g.length};
  g.hf = g.length;
  return g;
}

}  // namespace fospg
