#pragma once

// Local element matrices of the hybrid mixed forms, L2 projections, lifting
// operators, field evaluation and the DG / energy norms.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fospg/error.hpp"
#include "fospg/linalg.hpp"
#include "fospg/mesh.hpp"
#include "fospg/quadrature.hpp"
#include "fospg/reference.hpp"
#include "fospg/spaces.hpp"

namespace fospg {

using ScalarFn = std::function<double(Point)>;
using VectorFn = std::function<Point(Point)>;

/// All spaces and reference tabulations for one mesh and degree.
class Discretization {
 public:
  Discretization(Mesh&&, int) = delete;
  Discretization(const Mesh& mesh, int p)
      : mesh_(&mesh), scalar_(mesh, p), flux_(mesh, p), facets_(mesh, p) {
    cell_ = tabulate(scalar_.basis(), flux_.basis(), cell_rule(mesh.kind(), 2 * p + 2));
    facet_ = tabulate_facets(scalar_.basis(), flux_.basis(), p + 2);
    latent_ = tabulate(scalar_.basis(), flux_.basis(), latent_rule(mesh.kind(), p));
  }

  const Mesh& mesh() const { return *mesh_; }
  int degree() const { return scalar_.degree(); }
  const ScalarSpace& scalar() const { return scalar_; }
  const FluxSpace& flux() const { return flux_; }
  const FacetSpace& facets() const { return facets_; }
  const CellTable& cell_table() const { return cell_; }
  const FacetTable& facet_table() const { return facet_; }
  const CellTable& latent_table() const { return latent_; }
  int nu() const { return scalar_.local_size(); }
  int nq() const { return flux_.local_size(); }
  int nfacet_local() const { return flux_.basis().num_facets(); }
  int dofs_per_facet() const { return facets_.dofs_per_facet(); }

 private:
  const Mesh* mesh_;
  ScalarSpace scalar_;
  FluxSpace flux_;
  FacetSpace facets_;
  CellTable cell_, latent_;
  FacetTable facet_;
};

/// Physical basis values of one cell on a tabulated rule.
struct PhysicalTable {
  Eigen::VectorXd w;              // physical weights
  std::vector<Point> x;           // physical points
  Eigen::MatrixXd phi, gx, gy;    // scalar basis and gradients
  Eigen::MatrixXd qx, qy, divq;   // Piola-mapped RT basis
};

inline PhysicalTable map_table(const CellTable& t, const AffineMap& m) {
  PhysicalTable p;
  const int n = t.rule.size();
  p.w.resize(n);
  p.x.resize(n);
  for (int i = 0; i < n; ++i) {
    p.w[i] = t.rule.weights[i] * m.det;
    p.x[i] = m.map(t.rule.points[i]);
  }
  const auto& j = m.jac;
  p.phi = t.phi;
  p.gx = (j[3] * t.dphi_x - j[2] * t.dphi_y) / m.det;
  p.gy = (-j[1] * t.dphi_x + j[0] * t.dphi_y) / m.det;
  p.qx = (j[0] * t.qx + j[1] * t.qy) / m.det;
  p.qy = (j[2] * t.qx + j[3] * t.qy) / m.det;
  p.divq = t.divq / m.det;
  return p;
}

/// Element matrices. Rows/columns follow the local dof order of each space;
/// facet unknowns are ordered local facet k, Legendre index m.
struct LocalBlocks {
  Eigen::MatrixXd Mq;     // (A^{-1} q_j, q_i)
  Eigen::MatrixXd Div;    // (div q_j, v_i)            nu x nq
  Eigen::MatrixXd G;      // (q_i, grad v_j)           nq x nu
  Eigen::MatrixXd Fv;     // <v_j, q_i . n>_{dT}       nq x nu
  Eigen::MatrixXd C;      // <mu_m, q_j . n>_{dT}      nfacet_dofs x nq
  Eigen::MatrixXd Mu;     // (v_j, v_i)
  Eigen::MatrixXd Kgrad;  // (grad v_j, grad v_i)
};

inline LocalBlocks assemble_local(const Discretization& d, int cell, const DiffusionTensor& a) {
  const Mesh& mesh = d.mesh();
  const AffineMap m = mesh.affine_map(cell);
  const PhysicalTable t = map_table(d.cell_table(), m);
  const int n = t.w.size();
  const int region = mesh.region(cell);
  Eigen::VectorXd wxx(n), wxy(n), wyy(n);
  for (int i = 0; i < n; ++i) {
    const Sym2 ai = a(t.x[i], region).inverse();
    wxx[i] = t.w[i] * ai.xx;
    wxy[i] = t.w[i] * ai.xy;
    wyy[i] = t.w[i] * ai.yy;
  }
  LocalBlocks b;
  b.Mq = t.qx.transpose() * wxx.asDiagonal() * t.qx + t.qx.transpose() * wxy.asDiagonal() * t.qy +
         t.qy.transpose() * wxy.asDiagonal() * t.qx + t.qy.transpose() * wyy.asDiagonal() * t.qy;
  b.Mq = 0.5 * (b.Mq + b.Mq.transpose()).eval();
  const auto w = t.w.asDiagonal();
  b.Div = t.phi.transpose() * w * t.divq;
  b.Mu = t.phi.transpose() * w * t.phi;
  b.Kgrad = t.gx.transpose() * w * t.gx + t.gy.transpose() * w * t.gy;
  b.G = t.qx.transpose() * w * t.gx + t.qy.transpose() * w * t.gy;

  const int nf = d.nfacet_local(), dpf = d.dofs_per_facet();
  b.Fv = Eigen::MatrixXd::Zero(d.nq(), d.nu());
  b.C = Eigen::MatrixXd::Zero(nf * dpf, d.nq());
  const FacetTable& ft = d.facet_table();
  for (int k = 0; k < nf; ++k) {
    const LocalFacetGeometry g = local_facet_geometry(mesh, cell, k);
    const CellTable& lt = ft.local[k];
    const Eigen::MatrixXd qn = ((m.jac[0] * g.normal.x + m.jac[2] * g.normal.y) * lt.qx +
                                (m.jac[1] * g.normal.x + m.jac[3] * g.normal.y) * lt.qy) /
                               m.det;
    for (int q = 0; q < ft.rule.size(); ++q) {
      const double ds = ft.rule.weights[q] * g.length;
      const double s = g.global_param(ft.rule.points[q]);
      b.Fv += ds * qn.row(q).transpose() * lt.phi.row(q);
      for (int mm = 0; mm < dpf; ++mm) b.C.row(k * dpf + mm) += ds * shifted_legendre(mm, s) * qn.row(q);
    }
  }
  return b;
}

/// Legendre coefficients of the L2 projection of g onto P_p of one facet.
inline Eigen::VectorXd l2_project_facet(const Mesh& mesh, int facet, int p, const ScalarFn& g) {
  const Facet& fa = mesh.facet(facet);
  const Point a = mesh.vertex(fa.v[0]), t = mesh.vertex(fa.v[1]) - a;
  const Rule1D r = gauss_legendre_unit(std::max(p + 4, 8));
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p + 1);
  for (int q = 0; q < r.size(); ++q) {
    const double gv = g(a + r.points[q] * t);
    for (int m = 0; m <= p; ++m) c[m] += r.weights[q] * gv * shifted_legendre(m, r.points[q]);
  }
  for (int m = 0; m <= p; ++m) c[m] *= 2.0 * m + 1.0;
  return c;
}

/// Facet vector holding P_p(g) on boundary facets and zero elsewhere.
inline Eigen::VectorXd boundary_projection(const Discretization& d, const ScalarFn& g) {
  const FacetSpace& fs = d.facets();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(fs.size());
  for (int f = 0; f < d.mesh().num_facets(); ++f)
    if (fs.is_dirichlet(f)) out.segment(fs.offset(f), fs.dofs_per_facet()) = l2_project_facet(d.mesh(), f, d.degree(), g);
  return out;
}

/// Rule used for projections and error norms (oversampled).
inline const CellTable& oversampled_table(const Discretization& d) {
  static thread_local std::map<std::pair<int, int>, CellTable> cache;
  const std::pair<int, int> key{static_cast<int>(d.mesh().kind()), d.degree()};
  auto it = cache.find(key);
  if (it == cache.end()) {
    const int order = std::min(2 * d.degree() + 10, max_triangle_rule_order);
    it = cache.emplace(key, tabulate(d.scalar().basis(), d.flux().basis(), cell_rule(d.mesh().kind(), order))).first;
  }
  return it->second;
}

/// (f, v_i)_T on the oversampled rule.
inline Eigen::VectorXd cell_load(const Discretization& d, int cell, const ScalarFn& f) {
  const PhysicalTable t = map_table(oversampled_table(d), d.mesh().affine_map(cell));
  Eigen::VectorXd fv(t.w.size());
  for (int i = 0; i < fv.size(); ++i) fv[i] = t.w[i] * f(t.x[i]);
  return t.phi.transpose() * fv;
}

/// Pi_h f: element-wise L2 projection onto V_h^p.
inline Eigen::VectorXd l2_project_element(const Discretization& d, const ScalarFn& f) {
  const Mesh& mesh = d.mesh();
  const int nu = d.nu();
  Eigen::VectorXd out(d.scalar().size());
  const CellTable& ct = oversampled_table(d);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const PhysicalTable t = map_table(ct, mesh.affine_map(c));
    Eigen::VectorXd fv(t.w.size());
    for (int i = 0; i < fv.size(); ++i) fv[i] = t.w[i] * f(t.x[i]);
    const Eigen::MatrixXd mu = t.phi.transpose() * t.w.asDiagonal() * t.phi;
    out.segment(c * nu, nu) = mu.llt().solve(t.phi.transpose() * fv);
  }
  return out;
}

/// Value of a broken scalar field at a reference point of a cell.
inline double eval_scalar(const Discretization& d, const Eigen::VectorXd& u, int cell, Point ref) {
  return d.scalar().eval(u, cell, ref);
}

/// Physical value of a broken RT field at a reference point of a cell.
inline Point eval_flux(const Discretization& d, const Eigen::VectorXd& q, int cell, Point ref) {
  const AffineMap m = d.mesh().affine_map(cell);
  const Eigen::MatrixX2d v = d.flux().basis().values(ref);
  const Eigen::VectorXd qc = q.segment(d.flux().offset(cell), d.nq());
  return m.piola({v.col(0).dot(qc), v.col(1).dot(qc)});
}

/// Global div-conforming mass matrix (A^{-1} r_j, r_i) and the lifting
/// operators L and L_Gamma. The matrix is factorized once.
class Lifting {
 public:
  Lifting(const Discretization& d, const DiffusionTensor& a) : d_(&d) {
    const Mesh& mesh = d.mesh();
    const FluxSpace& fs = d.flux();
    const int nq = d.nq();
    Triplets trip;
    div_.resize(mesh.num_cells());
    cfac_.resize(mesh.num_cells());
    for (int c = 0; c < mesh.num_cells(); ++c) {
      const LocalBlocks b = assemble_local(d, c, a);
      for (int i = 0; i < nq; ++i)
        for (int j = 0; j < nq; ++j)
          trip.emplace_back(fs.div_index(c, i), fs.div_index(c, j), fs.div_sign(c, i) * fs.div_sign(c, j) * b.Mq(i, j));
      div_[c] = b.Div;
      cfac_[c] = b.C;
    }
    SparseMatrix m(fs.div_size(), fs.div_size());
    m.setFromTriplets(trip.begin(), trip.end());
    solver_.factorize(m);
  }

  const SparseMatrix& mass() const { return solver_.matrix(); }

  /// Right-hand side (u, div r_i) over div-conforming dofs.
  Eigen::VectorXd rhs(const Eigen::VectorXd& u) const {
    const FluxSpace& fs = d_->flux();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(fs.div_size());
    for (int c = 0; c < d_->mesh().num_cells(); ++c) {
      const Eigen::VectorXd loc = div_[c].transpose() * u.segment(d_->scalar().offset(c), d_->nu());
      for (int i = 0; i < d_->nq(); ++i) b[fs.div_index(c, i)] += fs.div_sign(c, i) * loc[i];
    }
    return b;
  }

  /// Right-hand side -<g, r_i . n>_{dOmega} from the facet coefficients of P_p(g).
  Eigen::VectorXd rhs_boundary(const Eigen::VectorXd& ghat) const {
    const FluxSpace& fs = d_->flux();
    const Mesh& mesh = d_->mesh();
    const int dpf = d_->dofs_per_facet();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(fs.div_size());
    for (int c = 0; c < mesh.num_cells(); ++c)
      for (int k = 0; k < d_->nfacet_local(); ++k) {
        const int f = mesh.cell_facet(c, k);
        if (!mesh.facet(f).on_boundary()) continue;
        const Eigen::VectorXd loc =
            -cfac_[c].middleRows(k * dpf, dpf).transpose() * ghat.segment(d_->facets().offset(f), dpf);
        for (int i = 0; i < d_->nq(); ++i) b[fs.div_index(c, i)] += fs.div_sign(c, i) * loc[i];
      }
    return b;
  }

  /// L(u) in div-conforming coefficients.
  Eigen::VectorXd lift(const Eigen::VectorXd& u) const { return solver_.solve(rhs(u)); }
  /// L_Gamma(g) in div-conforming coefficients; ghat from boundary_projection.
  Eigen::VectorXd lift_boundary(const Eigen::VectorXd& ghat) const { return solver_.solve(rhs_boundary(ghat)); }

  /// Cell integrals (div r, 1)_T of a div-conforming field.
  Eigen::VectorXd cell_divergence(const Eigen::VectorXd& r_div, const Eigen::VectorXd& ones) const {
    const Eigen::VectorXd rb = d_->flux().to_broken(r_div);
    Eigen::VectorXd out(d_->mesh().num_cells());
    for (int c = 0; c < d_->mesh().num_cells(); ++c)
      out[c] = ones.segment(d_->scalar().offset(c), d_->nu()).dot(div_[c] * rb.segment(d_->flux().offset(c), d_->nq()));
    return out;
  }

  const Eigen::MatrixXd& div_block(int cell) const { return div_[cell]; }

 private:
  const Discretization* d_;
  std::vector<Eigen::MatrixXd> div_, cfac_;
  SpdSolver solver_;
};

/// Scalar traces of a broken field on both sides of facet f at facet
/// parameters s; the neighbor trace is zero on boundary facets.
inline std::pair<double, double> facet_traces(const Discretization& d, const Eigen::VectorXd& u, int f, double s) {
  const Mesh& mesh = d.mesh();
  const Facet& fa = mesh.facet(f);
  const auto ref = reference_vertices(mesh.kind());
  const int nv = static_cast<int>(ref.size());
  auto side = [&](int cell, int k, double t) {
    const Point p = ref[k] + t * (ref[(k + 1) % nv] - ref[k]);
    return d.scalar().eval(u, cell, p);
  };
  const double a = side(fa.owner, fa.owner_local, s);
  const double b = fa.on_boundary() ? 0.0 : side(fa.neighbor, fa.neighbor_local, 1.0 - s);
  return {a, b};
}

/// ||u||_DG^2 = sum_T ||A^{1/2} grad u||_T^2 + sum_E h_E^{-1} ||[u]||_E^2,
/// boundary facets included.
inline double dg_norm(const Discretization& d, const DiffusionTensor& a, const Eigen::VectorXd& u) {
  const Mesh& mesh = d.mesh();
  double s2 = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const PhysicalTable t = map_table(d.cell_table(), mesh.affine_map(c));
    const Eigen::VectorXd uc = u.segment(d.scalar().offset(c), d.nu());
    const Eigen::VectorXd gx = t.gx * uc, gy = t.gy * uc;
    for (int i = 0; i < t.w.size(); ++i) s2 += t.w[i] * dot(a(t.x[i], mesh.region(c)).apply({gx[i], gy[i]}), {gx[i], gy[i]});
  }
  const Rule1D r = gauss_legendre_unit(d.degree() + 2);
  for (int f = 0; f < mesh.num_facets(); ++f) {
    for (int q = 0; q < r.size(); ++q) {
      const auto [ua, ub] = facet_traces(d, u, f, r.points[q]);
      s2 += r.weights[q] * (ua - ub) * (ua - ub);  // h_E^{-1} cancels ds = |E| dt
    }
  }
  return std::sqrt(std::max(s2, 0.0));
}

/// Energy norm of (q, u, uhat): ||A^{-1/2} q||^2 + ||A^{1/2} grad u||^2
/// + sum_T h_T^{-1} ||u - uhat||_{dT}^2.
inline double triple_norm(const Discretization& d, const DiffusionTensor& a, const Eigen::VectorXd& q,
                          const Eigen::VectorXd& u, const Eigen::VectorXd& uhat) {
  const Mesh& mesh = d.mesh();
  const FacetSpace& fs = d.facets();
  double s2 = 0.0;
  const Rule1D r = gauss_legendre_unit(d.degree() + 2);
  const auto ref = reference_vertices(mesh.kind());
  const int nv = static_cast<int>(ref.size());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const LocalBlocks b = assemble_local(d, c, a);
    const Eigen::VectorXd qc = q.segment(d.flux().offset(c), d.nq());
    s2 += qc.dot(b.Mq * qc);
    const PhysicalTable t = map_table(d.cell_table(), mesh.affine_map(c));
    const Eigen::VectorXd uc = u.segment(d.scalar().offset(c), d.nu());
    const Eigen::VectorXd gx = t.gx * uc, gy = t.gy * uc;
    for (int i = 0; i < t.w.size(); ++i) s2 += t.w[i] * dot(a(t.x[i], mesh.region(c)).apply({gx[i], gy[i]}), {gx[i], gy[i]});
    const double hT = mesh.cell_diameter(c);
    for (int k = 0; k < nv; ++k) {
      const LocalFacetGeometry g = local_facet_geometry(mesh, c, k);
      for (int qp = 0; qp < r.size(); ++qp) {
        const double tt = r.points[qp];
        const double uv = d.scalar().eval(u, c, ref[k] + tt * (ref[(k + 1) % nv] - ref[k]));
        const double uh = fs.eval(uhat, g.facet, g.global_param(tt));
        s2 += r.weights[qp] * g.length / hT * (uv - uh) * (uv - uh);
      }
    }
  }
  return std::sqrt(std::max(s2, 0.0));
}

}  // namespace fospg
