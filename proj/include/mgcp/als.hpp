#pragma once

// Alternating least squares: one block nonlinear Gauss-Seidel pass over the
// first-order optimality equations, updating A^(n) <- Z_(n) Phi^(n) Gamma^(n)^+
// for n = 0..N-1 in turn.

#include <Eigen/Eigenvalues>

#include "mgcp/cp_model.hpp"
#include "mgcp/trace.hpp"

namespace mgcp {

struct AlsOptions {
  Index max_sweeps = 10000;
  double tol = 1e-10;
  bool normalize = true;
  /// Eigenvalues of Gamma below this fraction of the largest are dropped.
  double pinv_threshold = 1e-12;

  void validate() const {
    if (!(tol > 0.0)) throw InvalidArgument("ALS tolerance must be positive");
    if (pinv_threshold < 0.0) throw InvalidArgument("pseudoinverse threshold must be >= 0");
  }
};

/// Moore-Penrose pseudoinverse of a symmetric positive semidefinite matrix.
inline Matrix pinv_symmetric(const Matrix& g, double rel_cutoff) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
  const Vector& vals = eig.eigenvalues();
  const double cutoff = rel_cutoff * std::max(0.0, vals.maxCoeff());
  Vector inv = Vector::Zero(vals.size());
  for (Index k = 0; k < static_cast<Index>(vals.size()); ++k)
    if (vals(k) > cutoff && vals(k) > 0.0) inv(k) = 1.0 / vals(k);
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

namespace detail {

inline void require_nonzero_factors(const FactorSet& f) {
  for (Index n = 0; n < f.order(); ++n)
    if (f[n].isZero(0.0))
      throw DegenerateIterate("factor matrix " + std::to_string(n) + " is identically zero");
}

}  // namespace detail

/// One ALS sweep. Each mode uses the freshest factors of the others. When
/// `normalize` is set the components are equilibrated and sorted once after
/// the full sweep.
template <TensorLike T>
FactorSet als_sweep(const T& z, FactorSet f, bool normalize, double pinv_threshold = 1e-12) {
  check_conformal(shape_of(z), f);
  detail::require_nonzero_factors(f);
  auto g = grams(f);
  for (Index n = 0; n < f.order(); ++n) {
    const Matrix m = mttkrp(z, f.factors, n);
    f[n] = m * pinv_symmetric(gamma(g, n), pinv_threshold);
    if (f[n].isZero(0.0))
      throw DegenerateIterate("ALS update produced an all-zero factor matrix in mode " +
                              std::to_string(n));
    g[n].noalias() = f[n].transpose() * f[n];
  }
  if (normalize) return normalize_and_sort(f);
  f.lambdas.reset();
  return f;
}

struct AlsResult {
  FactorSet factors;
  ConvergenceTrace trace;
};

/// Sweeps until grad_norm < tol or max_sweeps. One trace record per sweep;
/// only the sweeps themselves are timed.
template <TensorLike T>
AlsResult als_solve(const T& z, FactorSet f0, const AlsOptions& opts) {
  opts.validate();
  AlsResult res{std::move(f0), {}};
  res.trace.initial_grad_norm = grad_norm(z, res.factors);
  if (res.trace.initial_grad_norm < opts.tol) {
    res.trace.outcome = Outcome::Converged;
    return res;
  }
  SectionTimer timer;
  for (Index sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    timer.start();
    res.factors = als_sweep(z, std::move(res.factors), opts.normalize, opts.pinv_threshold);
    timer.stop();
    TraceRecord rec;
    rec.phase = Phase::Als;
    rec.cycle = sweep;
    rec.grad_norm = grad_norm(z, res.factors);
    rec.objective = objective(z, res.factors);
    rec.seconds = timer.seconds();
    rec.work_units = static_cast<double>(sweep);
    res.trace.records.push_back(rec);
    if (rec.grad_norm < opts.tol) {
      res.trace.outcome = Outcome::Converged;
      return res;
    }
  }
  res.trace.outcome = Outcome::IterationLimit;
  return res;
}

}  // namespace mgcp
