#pragma once

// Hybridized first-order proximal Galerkin solver: per-cell elimination to a
// symmetric positive definite facet system, Newton on the latent equation,
// the proximal outer loop, and the unconstrained hybrid mixed baseline.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fospg/analysis.hpp"
#include "fospg/assembly.hpp"
#include "fospg/error.hpp"
#include "fospg/latent.hpp"
#include "fospg/linalg.hpp"
#include "fospg/problems.hpp"

namespace fospg {

enum class NewtonMode { single, fixed, adaptive };

struct NewtonConfig {
  NewtonMode mode = NewtonMode::fixed;
  double tol = 1e-10;
  int max_iterations = 50;

  /// Parses "single", "fixed:t" or "adaptive".
  static NewtonConfig parse(const std::string& s) {
    NewtonConfig c;
    if (s == "single") {
      c.mode = NewtonMode::single;
    } else if (s == "adaptive") {
      c.mode = NewtonMode::adaptive;
    } else if (s.rfind("fixed:", 0) == 0) {
      c.mode = NewtonMode::fixed;
      std::size_t pos = 0;
      try {
        c.tol = std::stod(s.substr(6), &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != s.size() - 6 || !(c.tol > 0.0)) throw ConfigError("bad Newton tolerance in '" + s + "'");
    } else {
      throw ConfigError("unknown Newton mode '" + s + "' (expected single|fixed:t|adaptive)");
    }
    return c;
  }
  std::string str() const {
    if (mode == NewtonMode::single) return "single";
    if (mode == NewtonMode::adaptive) return "adaptive";
    std::ostringstream o;
    o.precision(17);
    o << "fixed:" << tol;
    return o.str();
  }
};

enum class LatentQuadrature { standard, full };

struct FospgConfig {
  LatentKind op = LatentKind::fermi_dirac;
  AlphaSchedule alpha;
  double tol = 1e-8;
  int max_outer = 200;
  NewtonConfig newton;
  Stabilization stab;
  LatentQuadrature quadrature = LatentQuadrature::standard;
  bool record_errors = false;

  void validate() const {
    if (!(tol > 0.0)) throw ConfigError("outer tolerance must be positive");
    if (max_outer < 1) throw ConfigError("outer iteration limit must be at least 1");
    if (newton.max_iterations < 1) throw ConfigError("Newton iteration limit must be at least 1");
    if (!(newton.tol > 0.0)) throw ConfigError("Newton tolerance must be positive");
    if (!(stab.eps1 >= 0.0) || !(stab.eps2 >= 0.0)) throw ConfigError("stabilization weights must be nonnegative");
  }
};

/// Defaults of a benchmark problem at degree p.
inline FospgConfig default_config(const ProblemSpec& prob, int p) {
  FospgConfig c;
  c.op = prob.op;
  c.alpha = prob.alpha;
  c.stab = prob.stabilization(p);
  return c;
}

struct ProximalState {
  Eigen::VectorXd q, u, uhat, psi;
  int k = 0;
  double sum_alpha = 0.0;
};

struct StepRecord {
  int k = 0;
  double alpha = 0.0;
  int newton_iterations = 0;
  int linear_solves = 0;
  double newton_error = 0.0;
  bool newton_converged = true;
  double du = 0.0;
  double mass_max = 0.0;
  double latent_min = 0.0, latent_max = 0.0;
  double psi_max = 0.0;
  double err_u = std::numeric_limits<double>::quiet_NaN();
  double err_latent = std::numeric_limits<double>::quiet_NaN();
  double err_flux = std::numeric_limits<double>::quiet_NaN();
};

struct RunReport {
  std::vector<StepRecord> steps;
  int outer_iterations = 0;
  int newton_iterations = 0;
  int linear_solves = 0;
  double sum_alpha = 0.0;
  bool converged = false;
  bool average_property = true;  // (S(psi), 1)_T = 0 for every cell
  std::string status = "max-iterations";
};

/// S_T = h_T^{p+1} (eps1 M_u + eps2 K_grad); zero when both weights vanish.
inline Eigen::MatrixXd stabilization_terms(const LocalBlocks& b, double eps1, double eps2, int p, double h) {
  if (eps1 == 0.0 && eps2 == 0.0) return Eigen::MatrixXd::Zero(b.Mu.rows(), b.Mu.cols());
  const double s = std::pow(h, p + 1);
  return s * (eps1 * b.Mu + eps2 * b.Kgrad);
}

struct NewtonResult {
  int iterations = 0;
  double error = 0.0;
  bool converged = false;
  bool diverged = false;
};

/// Per-cell output of the elimination for one linearization.
struct LocalLinear {
  Eigen::MatrixXd R;                 // N = R^T R in permuted columns (upper triangular)
  Eigen::VectorXi perm;              // column permutation of R
  Eigen::MatrixXd V;                 // P B L^{-T}, with P = Rhat Mu^{-1}
  Eigen::MatrixXd PF;                // P F  (nu x 1)
  Eigen::LLT<Eigen::MatrixXd> G;     // alpha^{-1} I + V V^T
  Eigen::VectorXd gc;                // N psi_old + b_c
  Eigen::VectorXd y0;                // L^{-1} B^T Mu^{-1} gc
};

/// Condensed facet system of one Newton step.
struct CondensedSystem {
  SparseMatrix K;
  Eigen::VectorXd rhs;
  std::vector<LocalLinear> local;
  double alpha = 1.0;
};

/// Discrete operator of one problem on one mesh and degree, with cached
/// element blocks and latent-point data.
class FospgSystem {
 public:
  FospgSystem(const Discretization& d, const ProblemSpec& prob, const FospgConfig& cfg)
      : d_(&d), prob_(prob), cfg_(cfg), op_(prob.latent(cfg.op)) {
    cfg_.validate();
    const Mesh& mesh = d.mesh();
    const int p = d.degree();
    ltab_ = cfg.quadrature == LatentQuadrature::full ? &d.cell_table() : &d.latent_table();
    cells_.resize(mesh.num_cells());
    const int nf = d.nfacet_local(), dpf = d.dofs_per_facet();
    const FacetSpace& fs = d.facets();
    parallel_for(mesh.num_cells(), [&](int c) {
      CellData& cd = cells_[c];
      cd.b = assemble_local(d, c, prob_.A);
      cd.mq.compute(cd.b.Mq);
      cd.mu.compute(cd.b.Mu);
      if (cd.mq.info() != Eigen::Success || cd.mu.info() != Eigen::Success)
        throw SolverError("singular element mass matrix (degenerate cell)");
      cd.F = cell_load(d, c, prob_.f);
      cd.S = stabilization_terms(cd.b, cfg_.stab.eps1, cfg_.stab.eps2, p, mesh.cell_diameter(c));
      if (cfg_.stab.eps1 != 0.0 || cfg_.stab.eps2 != 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cd.S);
        const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        cd.Sroot = lam.asDiagonal() * es.eigenvectors().transpose();
      }
      cd.Bt = cd.mq.matrixL().solve(cd.b.Div.transpose());
      cd.E = cd.mq.matrixL().solve(cd.b.C.transpose());
      const AffineMap m = mesh.affine_map(c);
      const int npts = ltab_->rule.size();
      cd.sqrt_w.resize(npts);
      cd.lo.resize(npts);
      cd.hi.resize(npts);
      cd.w.resize(npts);
      for (int i = 0; i < npts; ++i) {
        const Point x = m.map(ltab_->rule.points[i]);
        cd.w[i] = ltab_->rule.weights[i] * m.det;
        cd.sqrt_w[i] = std::sqrt(cd.w[i]);
        cd.lo[i] = op_.bounds().lo(x);
        cd.hi[i] = op_.bounds().hi(x);
        op_.check_bounds(cd.lo[i], cd.hi[i]);
      }
      cd.free.resize(nf * dpf);
      cd.uhat_index.resize(nf * dpf);
      for (int k = 0; k < nf; ++k) {
        const int f = mesh.cell_facet(c, k);
        for (int j = 0; j < dpf; ++j) {
          cd.uhat_index[k * dpf + j] = fs.offset(f) + j;
          cd.free[k * dpf + j] = fs.is_dirichlet(f) ? -1 : fs.free_index(f) * dpf + j;
        }
      }
    });
    if (op_.kind() != LatentKind::identity) check_boundary_compatibility(prob_, mesh, p);
    ghat_ = boundary_projection(d, prob_.g);
  }

  const Discretization& discretization() const { return *d_; }
  const ProblemSpec& problem() const { return prob_; }
  const FospgConfig& config() const { return cfg_; }
  const LatentOperator& op() const { return op_; }
  const LocalBlocks& blocks(int c) const { return cells_[c].b; }
  const Eigen::VectorXd& load(int c) const { return cells_[c].F; }
  const Eigen::MatrixXd& stabilization(int c) const { return cells_[c].S; }
  const Eigen::VectorXd& dirichlet_data() const { return ghat_; }
  const CellTable& latent_table() const { return *ltab_; }

  int nq_total() const { return d_->flux().size(); }
  int nu_total() const { return d_->scalar().size(); }
  int nfree() const { return d_->facets().num_free_dofs(); }
  /// Length of the flat vector [q; u; psi; uhat_free].
  int flat_size() const { return nq_total() + 2 * nu_total() + nfree(); }

  /// Initial state: psi = 0, u = Pi_h U(0), q = 0, uhat = P_p(g) on the boundary.
  ProximalState initial_state() const {
    ProximalState s;
    s.q = Eigen::VectorXd::Zero(nq_total());
    s.psi = Eigen::VectorXd::Zero(nu_total());
    s.u = Eigen::VectorXd::Zero(nu_total());
    s.uhat = ghat_;
    const int nu = d_->nu();
    for (int c = 0; c < num_cells(); ++c) {
      const CellData& cd = cells_[c];
      const Eigen::VectorXd z = Eigen::VectorXd::Zero(ltab_->rule.size());
      s.u.segment(c * nu, nu) = cd.mu.solve(latent_load(cd, z));
    }
    return s;
  }

  // Flat layout helpers.
  Eigen::VectorXd pack(const ProximalState& s) const {
    Eigen::VectorXd x(flat_size());
    x << s.q, s.u, s.psi, free_part(s.uhat);
    return x;
  }
  void unpack(const Eigen::VectorXd& x, ProximalState& s) const {
    const int nq = nq_total(), nu = nu_total();
    s.q = x.segment(0, nq);
    s.u = x.segment(nq, nu);
    s.psi = x.segment(nq + nu, nu);
    s.uhat = ghat_;
    const FacetSpace& fs = d_->facets();
    const int dpf = fs.dofs_per_facet();
    for (int f = 0; f < d_->mesh().num_facets(); ++f)
      if (!fs.is_dirichlet(f)) s.uhat.segment(fs.offset(f), dpf) = x.segment(nq + 2 * nu + fs.free_index(f) * dpf, dpf);
  }
  Eigen::VectorXd free_part(const Eigen::VectorXd& uhat) const {
    const FacetSpace& fs = d_->facets();
    const int dpf = fs.dofs_per_facet();
    Eigen::VectorXd out(nfree());
    for (int f = 0; f < d_->mesh().num_facets(); ++f)
      if (!fs.is_dirichlet(f)) out.segment(fs.free_index(f) * dpf, dpf) = uhat.segment(fs.offset(f), dpf);
    return out;
  }

  /// Nonlinear residual [R_r; R_v; R_w; R_vhat] at state s for the step
  /// with previous latent iterate psi_old and step size alpha.
  Eigen::VectorXd residual(const ProximalState& s, const Eigen::VectorXd& psi_old, double alpha) const {
    const int nq = d_->nq(), nu = d_->nu(), nqt = nq_total(), nut = nu_total();
    Eigen::VectorXd r = Eigen::VectorXd::Zero(flat_size());
    for (int c = 0; c < num_cells(); ++c) {
      const CellData& cd = cells_[c];
      const Eigen::VectorXd qc = s.q.segment(c * nq, nq), uc = s.u.segment(c * nu, nu);
      const Eigen::VectorXd pc = s.psi.segment(c * nu, nu), po = psi_old.segment(c * nu, nu);
      const Eigen::VectorXd uh = local_uhat(cd, s.uhat);
      r.segment(c * nq, nq) = cd.b.Mq * qc - cd.b.Div.transpose() * uc + cd.b.C.transpose() * uh;
      r.segment(nqt + c * nu, nu) = cd.b.Mu * (pc - po) + alpha * (cd.b.Div * qc - cd.F);
      const Eigen::VectorXd z = ltab_->phi * pc;
      r.segment(nqt + nut + c * nu, nu) = cd.b.Mu * uc - latent_load(cd, z) - cd.S * pc;
      const Eigen::VectorXd cq = cd.b.C * qc;
      for (int i = 0; i < cq.size(); ++i)
        if (cd.free[i] >= 0) r[nqt + 2 * nut + cd.free[i]] -= alpha * cq[i];
    }
    return r;
  }

  /// Dense Jacobian of residual() at state s (monolithic oracle; small meshes only).
  Eigen::MatrixXd jacobian(const ProximalState& s, double alpha) const {
    const int nq = d_->nq(), nu = d_->nu(), nqt = nq_total(), nut = nu_total();
    const int n = flat_size();
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (int c = 0; c < num_cells(); ++c) {
      const CellData& cd = cells_[c];
      const int oq = c * nq, ou = nqt + c * nu, op = nqt + nut + c * nu;
      j.block(oq, oq, nq, nq) = cd.b.Mq;
      j.block(oq, ou, nq, nu) = -cd.b.Div.transpose();
      j.block(ou, oq, nu, nq) = alpha * cd.b.Div;
      j.block(ou, op, nu, nu) = cd.b.Mu;
      j.block(op, ou, nu, nu) = cd.b.Mu;
      j.block(op, op, nu, nu) = -latent_jacobian(cd, ltab_->phi * s.psi.segment(c * nu, nu));
      for (int i = 0; i < cd.b.C.rows(); ++i) {
        if (cd.free[i] < 0) continue;
        const int col = nqt + 2 * nut + cd.free[i];
        j.block(oq, col, nq, 1) += cd.b.C.row(i).transpose();
        j.block(col, oq, 1, nq) -= alpha * cd.b.C.row(i);
      }
    }
    return j;
  }

  /// One Newton update solved monolithically with a dense LU (oracle route).
  ProximalState monolithic_step(const ProximalState& s, const Eigen::VectorXd& psi_old, double alpha) const {
    const Eigen::MatrixXd j = jacobian(s, alpha);
    const Eigen::VectorXd x = pack(s);
    const Eigen::VectorXd xn = x + j.fullPivLu().solve(-residual(s, psi_old, alpha));
    ProximalState out = s;
    unpack(xn, out);
    return out;
  }

  /// Element-wise elimination of (q, u, psi) for the linearization at
  /// s.psi, leaving the facet system for the free multiplier dofs.
  CondensedSystem condense(const ProximalState& s, const Eigen::VectorXd& psi_old, double alpha) const {
    const int nu = d_->nu(), nfd = d_->nfacet_local() * d_->dofs_per_facet();
    CondensedSystem cs;
    cs.alpha = alpha;
    cs.local.resize(num_cells());
    std::vector<Eigen::MatrixXd> kt(num_cells());
    std::vector<Eigen::VectorXd> rt(num_cells());
    const double inv_alpha = 1.0 / alpha;
    parallel_for(num_cells(), [&](int c) {
      const CellData& cd = cells_[c];
      LocalLinear& ll = cs.local[c];
      const Eigen::VectorXd pc = s.psi.segment(c * nu, nu), po = psi_old.segment(c * nu, nu);
      const Eigen::VectorXd z = ltab_->phi * pc, zo = ltab_->phi * po;
      const int npts = static_cast<int>(z.size());
      Eigen::VectorXd uv(npts), dv(npts), gv(npts);
      for (int i = 0; i < npts; ++i) {
        uv[i] = op_.upsilon(cd.lo[i], cd.hi[i], z[i]);
        dv[i] = op_.upsilon_prime(cd.lo[i], cd.hi[i], z[i]);
        gv[i] = cd.w[i] * (uv[i] + dv[i] * (zo[i] - z[i]));
      }
      // Square-root factor of N = (U' phi, phi)_h + S from a row-sorted pivoted QR.
      const int ns = cd.Sroot.rows();
      Eigen::MatrixXd zrows(npts + ns, nu);
      for (int i = 0; i < npts; ++i) zrows.row(i) = (cd.sqrt_w[i] * std::sqrt(dv[i])) * ltab_->phi.row(i);
      if (ns) zrows.bottomRows(ns) = cd.Sroot;
      std::vector<int> order(npts + ns);
      std::iota(order.begin(), order.end(), 0);
      const Eigen::VectorXd rn = zrows.rowwise().norm();
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rn[a] > rn[b]; });
      Eigen::MatrixXd sorted(npts + ns, nu);
      for (int i = 0; i < npts + ns; ++i) sorted.row(i) = zrows.row(order[i]);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sorted);
      ll.R = qr.matrixR().topLeftCorner(nu, nu).triangularView<Eigen::Upper>();
      ll.perm = qr.colsPermutation().indices();
      // Rhat = R Pi^T, P = Rhat Mu^{-1}.
      Eigen::MatrixXd rhat(nu, nu);
      for (int j = 0; j < nu; ++j) rhat.col(ll.perm[j]) = ll.R.col(j);
      const Eigen::MatrixXd pm = cd.mu.solve(rhat.transpose()).transpose();
      ll.gc = ltab_->phi.transpose() * gv + cd.S * po;
      ll.V = pm * cd.Bt.transpose();
      ll.PF = pm * cd.F;
      Eigen::MatrixXd g = ll.V * ll.V.transpose();
      g.diagonal().array() += inv_alpha;
      ll.G.compute(g);
      if (ll.G.info() != Eigen::Success) throw SolverError("local elimination failed (nonpositive Schur complement)");
      ll.y0 = cd.Bt * cd.mu.solve(ll.gc);
      const Eigen::MatrixXd y = ll.G.matrixL().solve(ll.V * cd.E);
      Eigen::MatrixXd k = cd.E.transpose() * cd.E - y.transpose() * y;
      kt[c] = 0.5 * (k + k.transpose());
      const Eigen::VectorXd tau0 = ll.G.solve(ll.V * ll.y0 - ll.PF);
      rt[c] = cd.E.transpose() * (ll.y0 - ll.V.transpose() * tau0);
    });
    Triplets trip;
    cs.rhs = Eigen::VectorXd::Zero(nfree());
    for (int c = 0; c < num_cells(); ++c) {
      const CellData& cd = cells_[c];
      for (int i = 0; i < nfd; ++i) {
        if (cd.free[i] < 0) continue;
        double r = rt[c][i];
        for (int j = 0; j < nfd; ++j) {
          if (cd.free[j] >= 0) trip.emplace_back(cd.free[i], cd.free[j], kt[c](i, j));
          else r -= kt[c](i, j) * ghat_[cd.uhat_index[j]];
        }
        cs.rhs[cd.free[i]] += r;
      }
    }
    cs.K.resize(nfree(), nfree());
    cs.K.setFromTriplets(trip.begin(), trip.end());
    return cs;
  }

  /// Recovers (q, u, psi) cell by cell from the facet solution.
  ProximalState back_substitute(const CondensedSystem& cs, const ProximalState& s, const Eigen::VectorXd& psi_old,
                                const Eigen::VectorXd& uhat_free) const {
    ProximalState out = s;
    out.uhat = ghat_;
    const FacetSpace& fs = d_->facets();
    const int dpf = fs.dofs_per_facet();
    for (int f = 0; f < d_->mesh().num_facets(); ++f)
      if (!fs.is_dirichlet(f)) out.uhat.segment(fs.offset(f), dpf) = uhat_free.segment(fs.free_index(f) * dpf, dpf);
    const int nq = d_->nq(), nu = d_->nu();
    parallel_for(num_cells(), [&](int c) {
      const CellData& cd = cells_[c];
      const LocalLinear& ll = cs.local[c];
      const Eigen::VectorXd uh = local_uhat(cd, out.uhat);
      const Eigen::VectorXd y = ll.y0 - cd.E * uh;
      const Eigen::VectorXd tau = ll.G.solve(ll.V * y - ll.PF);
      out.q.segment(c * nq, nq) = cd.mq.matrixU().solve(y - ll.V.transpose() * tau);
      // psi_new = psi_old - Rhat^{-1} tau,  u = Mu^{-1}(gc - Rhat^T tau)
      const Eigen::VectorXd rt = ll.R.triangularView<Eigen::Upper>().solve(tau);
      Eigen::VectorXd dpsi(nu), rtt(nu);
      for (int j = 0; j < nu; ++j) dpsi[ll.perm[j]] = rt[j];
      const Eigen::VectorXd rtau = ll.R.transpose() * tau;
      for (int j = 0; j < nu; ++j) rtt[ll.perm[j]] = rtau[j];
      out.psi.segment(c * nu, nu) = psi_old.segment(c * nu, nu) - dpsi;
      out.u.segment(c * nu, nu) = cd.mu.solve(ll.gc - rtt);
    });
    return out;
  }

  /// One Newton update through static condensation and one SPD solve.
  ProximalState newton_step(const ProximalState& s, const Eigen::VectorXd& psi_old, double alpha,
                            CondensedSystem* keep = nullptr, SpdMethod method = SpdMethod::cholesky) const {
    CondensedSystem cs = condense(s, psi_old, alpha);
    const Eigen::VectorXd x = nfree() ? SpdSolver(cs.K, method).solve(cs.rhs) : Eigen::VectorXd();
    ProximalState out = back_substitute(cs, s, psi_old, x);
    if (keep) *keep = std::move(cs);
    return out;
  }

  /// Newton iteration for the proximal subproblem; the stopping measure is
  /// sqrt(|<R(x_old), x_new - x_old>|), checked after applying the update.
  NewtonResult newton_solve(ProximalState& s, const Eigen::VectorXd& psi_old, double alpha, double ntol,
                            int max_iterations) const {
    NewtonResult res;
    double first = -1.0;
    for (int it = 1; it <= max_iterations; ++it) {
      const Eigen::VectorXd r = residual(s, psi_old, alpha);
      const Eigen::VectorXd x0 = pack(s);
      ProximalState next = newton_step(s, psi_old, alpha);
      const Eigen::VectorXd dx = pack(next) - x0;
      if (!dx.allFinite()) throw SolverError("non-finite Newton update");
      const double err = std::sqrt(std::abs(r.dot(dx)));
      if (!std::isfinite(err)) throw SolverError("non-finite Newton error measure");
      s.q = std::move(next.q);
      s.u = std::move(next.u);
      s.uhat = std::move(next.uhat);
      s.psi = std::move(next.psi);
      res.iterations = it;
      res.error = err;
      if (first < 0.0) first = err;
      if (err < ntol) {
        res.converged = true;
        return res;
      }
    }
    res.diverged = max_iterations > 1 && res.error > first;
    return res;
  }

  /// Extrema of U(psi) at the latent points and max |psi| there.
  void latent_extrema(const Eigen::VectorXd& psi, double& lo, double& hi, double& psi_abs) const {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    psi_abs = 0.0;
    const int nu = d_->nu();
    for (int c = 0; c < num_cells(); ++c) {
      const CellData& cd = cells_[c];
      const Eigen::VectorXd z = ltab_->phi * psi.segment(c * nu, nu);
      for (int i = 0; i < z.size(); ++i) {
        const double v = op_.upsilon(cd.lo[i], cd.hi[i], z[i]);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        psi_abs = std::max(psi_abs, std::abs(z[i]));
      }
    }
  }

  /// Proximal outer loop; resumes the step-size schedule at step s.k + 1.
  RunReport solve(ProximalState& s) const {
    RunReport rep;
    rep.average_property = cfg_.stab.eps1 == 0.0;
    double prev_du = std::numeric_limits<double>::quiet_NaN();
    const int k0 = s.k;
    for (int k = k0 + 1; k <= k0 + cfg_.max_outer; ++k) {
      StepRecord step;
      step.k = k;
      step.alpha = cfg_.alpha(k - 1);
      const Eigen::VectorXd psi_old = s.psi, u_old = s.u;
      double ntol = cfg_.newton.tol;
      int nmax = cfg_.newton.max_iterations;
      if (cfg_.newton.mode == NewtonMode::single) nmax = 1;
      if (cfg_.newton.mode == NewtonMode::adaptive) ntol = k == k0 + 1 ? 0.1 : std::min(0.1, prev_du);
      const NewtonResult nr = newton_solve(s, psi_old, step.alpha, ntol, nmax);
      s.k = k;
      s.sum_alpha = std::min(s.sum_alpha + step.alpha, AlphaSchedule::cap);
      step.newton_iterations = nr.iterations;
      step.linear_solves = nr.iterations;
      step.newton_error = nr.error;
      step.newton_converged = nr.converged || cfg_.newton.mode == NewtonMode::single;
      step.du = l2_difference(s.u, u_old);
      step.mass_max = mass_indicator(*d_, s.q, prob_.f).max;
      latent_extrema(s.psi, step.latent_min, step.latent_max, step.psi_max);
      if (cfg_.record_errors) {
        if (prob_.exact_u) {
          step.err_u = l2_error(*d_, s.u, *prob_.exact_u);
          step.err_latent = latent_l2_error(*d_, op_, s.psi, *prob_.exact_u);
        }
        if (prob_.exact_q) step.err_flux = flux_l2_error(*d_, s.q, *prob_.exact_q);
      }
      rep.steps.push_back(step);
      rep.outer_iterations = k - k0;
      rep.newton_iterations += step.newton_iterations;
      rep.linear_solves += step.linear_solves;
      rep.sum_alpha = s.sum_alpha;
      prev_du = step.du;
      if (nr.diverged) {
        rep.status = "newton-diverged";
        return rep;
      }
      if (step.du < cfg_.tol) {
        rep.converged = true;
        rep.status = "converged";
        return rep;
      }
    }
    return rep;
  }

  /// ||a - b||_{L2} for two V_h fields.
  double l2_difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    const int nu = d_->nu();
    double s = 0.0;
    for (int c = 0; c < num_cells(); ++c) {
      const Eigen::VectorXd e = a.segment(c * nu, nu) - b.segment(c * nu, nu);
      s += e.dot(cells_[c].b.Mu * e);
    }
    return std::sqrt(std::max(s, 0.0));
  }

  /// (u, 1)_T and (U(psi), 1)_h,T per cell.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> cell_averages(const ProximalState& s) const {
    const int nu = d_->nu();
    Eigen::VectorXd au(num_cells()), al(num_cells());
    for (int c = 0; c < num_cells(); ++c) {
      const CellData& cd = cells_[c];
      const double area = d_->mesh().cell_area(c);
      au[c] = (cd.b.Mu * s.u.segment(c * nu, nu)).sum() / area;
      const Eigen::VectorXd z = ltab_->phi * s.psi.segment(c * nu, nu);
      double acc = 0.0;
      for (int i = 0; i < z.size(); ++i) acc += cd.w[i] * op_.upsilon(cd.lo[i], cd.hi[i], z[i]);
      al[c] = acc / area;
    }
    return {au, al};
  }

  /// J_h-type energy 1/2 ||A^{-1/2} q||^2 - (f, u).
  double energy(const ProximalState& s) const {
    const int nq = d_->nq(), nu = d_->nu();
    double e = 0.0;
    for (int c = 0; c < num_cells(); ++c) {
      const CellData& cd = cells_[c];
      const Eigen::VectorXd qc = s.q.segment(c * nq, nq);
      e += 0.5 * qc.dot(cd.b.Mq * qc) - cd.F.dot(s.u.segment(c * nu, nu));
    }
    return e;
  }

  /// Interior multipliers recovered from (q, u) by least squares on the
  /// flux equation C^T uhat = -Mq q + Div^T u - C_D^T uhat_D.
  Eigen::VectorXd recover_multipliers(const ProximalState& s) const {
    const Mesh& mesh = d_->mesh();
    const FacetSpace& fs = d_->facets();
    const int nq = d_->nq(), nu = d_->nu(), dpf = fs.dofs_per_facet();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(fs.size());
    Eigen::VectorXi count = Eigen::VectorXi::Zero(mesh.num_facets());
    for (int c = 0; c < num_cells(); ++c) {
      const CellData& cd = cells_[c];
      const Eigen::VectorXd r =
          -cd.b.Mq * s.q.segment(c * nq, nq) + cd.b.Div.transpose() * s.u.segment(c * nu, nu);
      for (int k = 0; k < d_->nfacet_local(); ++k) {
        const int f = mesh.cell_facet(c, k);
        if (fs.is_dirichlet(f)) continue;
        const Eigen::MatrixXd ck = cd.b.C.middleRows(k * dpf, dpf);
        // Other facets' columns are disjoint from this facet's in C, so the
        // local normal equations decouple per facet.
        sum.segment(fs.offset(f), dpf) += (ck * ck.transpose()).ldlt().solve(ck * r);
        ++count[f];
      }
    }
    Eigen::VectorXd out = ghat_;
    for (int f = 0; f < mesh.num_facets(); ++f)
      if (!fs.is_dirichlet(f)) out.segment(fs.offset(f), dpf) = sum.segment(fs.offset(f), dpf) / count[f];
    return out;
  }

  int num_cells() const { return static_cast<int>(cells_.size()); }

 private:
  struct CellData {
    LocalBlocks b;
    Eigen::LLT<Eigen::MatrixXd> mq, mu;
    Eigen::VectorXd F;
    Eigen::MatrixXd S, Sroot;
    Eigen::MatrixXd Bt;  // L^{-1} Div^T
    Eigen::MatrixXd E;   // L^{-1} C^T
    Eigen::VectorXd w, sqrt_w, lo, hi;
    std::vector<int> free, uhat_index;
  };

  Eigen::VectorXd local_uhat(const CellData& cd, const Eigen::VectorXd& uhat) const {
    Eigen::VectorXd out(cd.uhat_index.size());
    for (std::size_t i = 0; i < cd.uhat_index.size(); ++i) out[static_cast<Eigen::Index>(i)] = uhat[cd.uhat_index[i]];
    return out;
  }

  /// (U(psi), phi_i)_h from latent-point values z.
  Eigen::VectorXd latent_load(const CellData& cd, const Eigen::VectorXd& z) const {
    Eigen::VectorXd v(z.size());
    for (int i = 0; i < z.size(); ++i) v[i] = cd.w[i] * op_.upsilon(cd.lo[i], cd.hi[i], z[i]);
    return ltab_->phi.transpose() * v;
  }

  /// N = (U'(psi) phi_j, phi_i)_h + S.
  Eigen::MatrixXd latent_jacobian(const CellData& cd, const Eigen::VectorXd& z) const {
    Eigen::VectorXd v(z.size());
    for (int i = 0; i < z.size(); ++i) v[i] = cd.w[i] * op_.upsilon_prime(cd.lo[i], cd.hi[i], z[i]);
    return ltab_->phi.transpose() * v.asDiagonal() * ltab_->phi + cd.S;
  }

  const Discretization* d_;
  ProblemSpec prob_;
  FospgConfig cfg_;
  LatentOperator op_;
  const CellTable* ltab_ = nullptr;
  std::vector<CellData> cells_;
  Eigen::VectorXd ghat_;
};

/// Runs the proximal method from the initial state.
inline std::pair<ProximalState, RunReport> fospg_solve(const Discretization& d, const ProblemSpec& prob,
                                                        const FospgConfig& cfg) {
  const FospgSystem sys(d, prob, cfg);
  ProximalState s = sys.initial_state();
  RunReport rep = sys.solve(s);
  return {std::move(s), std::move(rep)};
}

struct MixedSolution {
  Eigen::VectorXd q, u, uhat;
  SparseMatrix K;
};

/// Standard hybridized mixed method (no bound constraints), one SPD solve.
inline MixedSolution baseline_mixed_solve(const Discretization& d, const ProblemSpec& prob,
                                          SpdMethod method = SpdMethod::cholesky) {
  const Mesh& mesh = d.mesh();
  const FacetSpace& fs = d.facets();
  const int nq = d.nq(), nu = d.nu(), dpf = fs.dofs_per_facet(), nfd = d.nfacet_local() * dpf;
  const Eigen::VectorXd ghat = boundary_projection(d, prob.g);
  struct Local {
    LocalBlocks b;
    Eigen::VectorXd F;
    Eigen::LLT<Eigen::MatrixXd> mq, s;
    Eigen::MatrixXd K;
    Eigen::VectorXd rhs;
  };
  std::vector<Local> loc(mesh.num_cells());
  parallel_for(mesh.num_cells(), [&](int c) {
    Local& l = loc[c];
    l.b = assemble_local(d, c, prob.A);
    l.F = cell_load(d, c, prob.f);
    l.mq.compute(l.b.Mq);
    const Eigen::MatrixXd bt = l.mq.matrixL().solve(l.b.Div.transpose());  // L^{-1} Div^T
    const Eigen::MatrixXd e = l.mq.matrixL().solve(l.b.C.transpose());     // L^{-1} C^T
    l.s.compute(bt.transpose() * bt);
    if (l.s.info() != Eigen::Success) throw SolverError("singular local divergence Schur complement");
    const Eigen::MatrixXd y = l.s.matrixL().solve(bt.transpose() * e);
    const Eigen::MatrixXd k = e.transpose() * e - y.transpose() * y;
    l.K = 0.5 * (k + k.transpose());
    l.rhs = e.transpose() * bt * l.s.solve(l.F);
  });
  Triplets trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(fs.num_free_dofs());
  auto gidx = [&](int c, int i, int& free, int& full) {
    const int f = mesh.cell_facet(c, i / dpf);
    full = fs.offset(f) + i % dpf;
    free = fs.is_dirichlet(f) ? -1 : fs.free_index(f) * dpf + i % dpf;
  };
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int i = 0; i < nfd; ++i) {
      int fi, gi;
      gidx(c, i, fi, gi);
      if (fi < 0) continue;
      double r = loc[c].rhs[i];
      for (int j = 0; j < nfd; ++j) {
        int fj, gj;
        gidx(c, j, fj, gj);
        if (fj >= 0) trip.emplace_back(fi, fj, loc[c].K(i, j));
        else r -= loc[c].K(i, j) * ghat[gj];
      }
      rhs[fi] += r;
    }
  MixedSolution out;
  out.K.resize(fs.num_free_dofs(), fs.num_free_dofs());
  out.K.setFromTriplets(trip.begin(), trip.end());
  const Eigen::VectorXd x = fs.num_free_dofs() ? SpdSolver(out.K, method).solve(rhs) : Eigen::VectorXd();
  out.uhat = ghat;
  for (int f = 0; f < mesh.num_facets(); ++f)
    if (!fs.is_dirichlet(f)) out.uhat.segment(fs.offset(f), dpf) = x.segment(fs.free_index(f) * dpf, dpf);
  out.q.resize(d.flux().size());
  out.u.resize(d.scalar().size());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const Local& l = loc[c];
    Eigen::VectorXd uh(nfd);
    for (int i = 0; i < nfd; ++i) {
      int fi, gi;
      gidx(c, i, fi, gi);
      uh[i] = out.uhat[gi];
    }
    // u = S^{-1}(F + Div Mq^{-1} C^T uhat), q = Mq^{-1}(Div^T u - C^T uhat)
    const Eigen::VectorXd cu = l.b.C.transpose() * uh;
    const Eigen::VectorXd uc = l.s.solve(l.F + l.b.Div * l.mq.solve(cu));
    out.u.segment(c * nu, nu) = uc;
    out.q.segment(c * nq, nq) = l.mq.solve(l.b.Div.transpose() * uc - cu);
  }
  return out;
}

}  // namespace fospg
