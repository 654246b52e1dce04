#pragma once

// Sparse SPD solves (LDL^T with fill-reducing ordering, diagonal-preconditioned
// CG as fallback), symmetry checks, and a small element-parallel loop helper.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fospg/error.hpp"

namespace fospg {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

enum class SpdMethod { cholesky, cg };

/// max |K - K^T| / max |K|.
inline double symmetry_defect(const SparseMatrix& k) {
  const SparseMatrix d = k - SparseMatrix(k.transpose());
  double dmax = 0.0, kmax = 0.0;
  for (int j = 0; j < d.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(d, j); it; ++it) dmax = std::max(dmax, std::abs(it.value()));
  for (int j = 0; j < k.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(k, j); it; ++it) kmax = std::max(kmax, std::abs(it.value()));
  return kmax > 0.0 ? dmax / kmax : 0.0;
}

/// Factorized SPD operator. Construction fails with SolverError on a
/// nonpositive pivot, which for the assembled systems means an assembly bug.
class SpdSolver {
 public:
  SpdSolver() = default;
  explicit SpdSolver(const SparseMatrix& k, SpdMethod method = SpdMethod::cholesky) { factorize(k, method); }

  void factorize(const SparseMatrix& k, SpdMethod method = SpdMethod::cholesky) {
    if (k.rows() != k.cols()) throw SolverError("SPD solve needs a square matrix");
    k_ = k;
    method_ = method;
    if (method == SpdMethod::cholesky) {
      ldlt_.compute(k_);
      if (ldlt_.info() != Eigen::Success) throw SolverError("sparse LDL^T factorization failed (assembly error)");
      const Eigen::VectorXd d = ldlt_.vectorD();
      min_pivot_ = d.size() ? d.minCoeff() : 1.0;
      if (!(min_pivot_ > 0.0))
        throw SolverError("nonpositive pivot " + std::to_string(min_pivot_) + " in SPD factorization (assembly error)");
    } else {
      cg_.setTolerance(1e-12);
      cg_.setMaxIterations(std::max<Eigen::Index>(1000, 20 * k_.rows()));
      cg_.compute(k_);
      min_pivot_ = k_.rows() ? k_.diagonal().minCoeff() : 1.0;
      if (!(min_pivot_ > 0.0)) throw SolverError("nonpositive diagonal in SPD matrix (assembly error)");
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (b.size() != k_.rows()) throw SolverError("right-hand side size mismatch");
    if (b.size() == 0) return b;
    if (method_ == SpdMethod::cg) {
      Eigen::VectorXd x = cg_.solve(b);
      if (cg_.info() != Eigen::Success) throw SolverError("conjugate gradient did not converge");
      return x;
    }
    Eigen::VectorXd x = ldlt_.solve(b);
    const double bn = b.norm();
    for (int it = 0; it < 3 && bn > 0.0; ++it) {  // iterative refinement
      const Eigen::VectorXd r = b - k_ * x;
      if (r.norm() <= 1e-14 * bn) break;
      x += ldlt_.solve(r);
    }
    if (!x.allFinite()) throw SolverError("non-finite solution in SPD solve");
    return x;
  }

  double min_pivot() const { return min_pivot_; }
  const SparseMatrix& matrix() const { return k_; }

 private:
  SparseMatrix k_;
  SpdMethod method_ = SpdMethod::cholesky;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg_;
  double min_pivot_ = 0.0;
};

inline Eigen::VectorXd spd_solve(const SparseMatrix& k, const Eigen::VectorXd& b,
                                 SpdMethod method = SpdMethod::cholesky) {
  return SpdSolver(k, method).solve(b);
}

/// Worker count from FOSPG_THREADS (default 1).
inline int thread_count() {
  if (const char* env = std::getenv("FOSPG_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return std::min(n, 256);
  }
  return 1;
}

/// Runs fn(i) for i in [0, n) over contiguous chunks. fn must only write
/// to slot i of caller-owned storage, so the result is order independent.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const int nt = std::min(thread_count(), std::max(n, 1));
  if (nt <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(nt);
  const int chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const int lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, t, &fn, &errors] {
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fospg
