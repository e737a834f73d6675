#pragma once

// Full Approximation Scheme solve phase on a hierarchy built by the setup.
//
// Each level solves  H(A) = F  with  H^(n)(A) = A^(n) Gamma^(n) - Z_(n) Phi^(n)
// (the CP gradient, F = 0 on the finest level). Relaxation is block nonlinear
// Gauss-Seidel whose mode updates solve  A^(n) Gamma^(n) = Z_(n) Phi^(n) + F^(n)
// by a few scalar Gauss-Seidel iterations instead of a pseudoinverse, so an
// exact solution stays a fixed point even when Gamma is singular.

#include <random>

#include "mgcp/mg_setup.hpp"

namespace mgcp {

/// Right-hand sides F^(n), one I_n x R matrix per mode.
struct RhsSet {
  std::vector<Matrix> rhs;

  static RhsSet zeros_like(const FactorSet& f) {
    RhsSet r;
    for (const auto& a : f.factors) r.rhs.push_back(Matrix::Zero(a.rows(), a.cols()));
    return r;
  }
};

struct FasOptions {
  Index nu1 = 1;
  Index nu2 = 1;
  Index nu_c = 50;
  Index gs_iters = 10;
  /// ALS sweeps on the coarsest level of a full multigrid cycle.
  Index fmg_coarse_sweeps = 100;
  double pinv_threshold = 1e-12;

  void validate() const {
    if (nu1 < 1 || nu2 < 1 || nu_c < 1 || gs_iters < 1 || fmg_coarse_sweeps < 1)
      throw InvalidArgument("FAS relaxation counts must be >= 1");
  }
};

/// H^(n)(A) for every mode on `z`; identical to the CP gradient.
template <TensorLike T>
GradientSet h_operator(const T& z, const FactorSet& f) {
  return gradient(z, f);
}

inline GradientSet h_operator(const Level& level, const FactorSet& f) {
  return gradient(level.tensor, f);
}

/// Solves  A Gamma = M  for the rows of A by `iters` forward Gauss-Seidel
/// passes over the R unknowns, starting from the current A. All rows share
/// Gamma, so each column update is a vector operation over the rows.
inline void gauss_seidel_rows(Matrix& a, const Matrix& gamma, const Matrix& m, Index iters) {
  const Index rank = gamma.rows();
  const double max_diag = gamma.diagonal().maxCoeff();
  for (Index r = 0; r < rank; ++r)
    if (!(gamma(r, r) > 1e-14 * max_diag) || !(max_diag > 0.0))
      throw DegenerateIterate("Gamma has a vanishing diagonal entry (zero factor column)");
  Vector acc(a.rows());
  for (Index it = 0; it < iters; ++it) {
    for (Index r = 0; r < rank; ++r) {
      // a_r <- a_r + (m_r - A Gamma_r) / Gamma_rr
      acc.noalias() = a * gamma.col(r);
      a.col(r) += (m.col(r) - acc) / gamma(r, r);
    }
  }
}

/// `sweeps` BNGS sweeps on  H(A) = F  over tensor `z`. Normalization (finest
/// level only) follows each complete sweep.
template <TensorLike T>
FactorSet bngs_relax(const T& z, FactorSet f, const RhsSet& rhs, Index sweeps, Index gs_iters,
                     bool normalize) {
  check_conformal(shape_of(z), f);
  if (gs_iters < 1) throw InvalidArgument("gs_iters must be >= 1");
  if (rhs.rhs.size() != f.order()) throw DimensionError("right-hand side has wrong mode count");
  for (Index n = 0; n < f.order(); ++n)
    if (rhs.rhs[n].rows() != f[n].rows() || rhs.rhs[n].cols() != f[n].cols())
      throw DimensionError("right-hand side " + std::to_string(n) + " has wrong shape");
  for (Index s = 0; s < sweeps; ++s) {
    auto g = grams(f);
    for (Index n = 0; n < f.order(); ++n) {
      const Matrix m = mttkrp(z, f.factors, n) + rhs.rhs[n];
      gauss_seidel_rows(f[n], gamma(g, n), m, gs_iters);
      g[n].noalias() = f[n].transpose() * f[n];
    }
    if (normalize) f = normalize_and_sort(f);
  }
  if (!normalize) f.lambdas.reset();
  return f;
}

namespace detail {

inline void relax_bngs(const Hierarchy& h, Index lvl, FactorSet& f, const RhsSet& rhs,
                       Index sweeps, const FasOptions& opts, Counters* counters) {
  const Level& level = h.levels[lvl];
  const bool normalize = lvl == 0;
  f = bngs_relax(level.tensor, std::move(f), rhs, sweeps, opts.gs_iters, normalize);
  if (counters) {
    counters->work_units += static_cast<double>(sweeps) * level.work_weight;
    if (normalize) counters->add_normalizations(lvl, sweeps);
  }
}

}  // namespace detail

/// One FAS V-cycle on level `lvl` for  H(A) = rhs.
///
/// The coarse right-hand side carries the tau correction for every mode,
///   F_c^(n) = H_c^(n)(A~_c) + R^(n) (F^(n) - H^(n)(A)),
/// with R^(n) the identity on modes that are not coarsened, which keeps an
/// exact solution a fixed point of the cycle.
inline FactorSet fas_vcycle(const Hierarchy& h, Index lvl, FactorSet f, const RhsSet& rhs,
                            const FasOptions& opts = {}, Counters* counters = nullptr) {
  opts.validate();
  if (lvl >= h.depth()) throw InvalidArgument("level index out of range");
  const Level& level = h.levels[lvl];
  if (level.coarsest()) {
    detail::relax_bngs(h, lvl, f, rhs, opts.nu_c, opts, counters);
    return f;
  }
  detail::relax_bngs(h, lvl, f, rhs, opts.nu1, opts, counters);

  const FactorSet coarse_guess = restrict_factors(level, f);
  const Level& coarse = h.levels[lvl + 1];
  const GradientSet fine_h = h_operator(level, f);
  const GradientSet coarse_h = h_operator(coarse, coarse_guess);
  RhsSet coarse_rhs;
  for (Index n = 0; n < f.order(); ++n) {
    Matrix defect = rhs.rhs[n] - fine_h.grads[n];
    if (level.active[n]) defect = level.transfers[n]->r * defect;
    coarse_rhs.rhs.push_back(coarse_h.grads[n] + defect);
  }
  if (counters) counters->work_units += level.work_weight + coarse.work_weight;

  const FactorSet coarse_sol = fas_vcycle(h, lvl + 1, coarse_guess, coarse_rhs, opts, counters);
  for (Index n = 0; n < f.order(); ++n) {
    const Matrix corr = coarse_sol[n] - coarse_guess[n];
    if (level.active[n])
      f[n] += level.transfers[n]->p_hat * corr;
    else
      f[n] += corr;
  }
  f.lambdas.reset();
  detail::relax_bngs(h, lvl, f, rhs, opts.nu2, opts, counters);
  return f;
}

/// Full multigrid: ALS from a uniform(0,1) guess on the coarsest level, then
/// prolongation and one FAS V-cycle (zero right-hand side) on each finer level.
template <class Rng>
FactorSet fmg_cycle(const Hierarchy& h, const FasOptions& opts, Rng& rng,
                    Counters* counters = nullptr) {
  opts.validate();
  if (h.depth() == 0) throw InvalidArgument("empty hierarchy");
  const Index last = h.depth() - 1;
  FactorSet f = FactorSet::random_uniform(h.levels[last].shape, h.rank, rng);
  const bool normalize = last == 0;
  for (Index k = 0; k < opts.fmg_coarse_sweeps; ++k)
    f = als_sweep(h.levels[last].tensor, std::move(f), normalize, opts.pinv_threshold);
  if (counters) {
    counters->work_units += static_cast<double>(opts.fmg_coarse_sweeps) * h.levels[last].work_weight;
    if (normalize) counters->add_normalizations(last, opts.fmg_coarse_sweeps);
  }
  for (Index lvl = last; lvl > 0; --lvl) {
    f = prolong_factors(h.levels[lvl - 1], f);
    const RhsSet zero = RhsSet::zeros_like(f);
    f = fas_vcycle(h, lvl - 1, std::move(f), zero, opts, counters);
  }
  return f;
}

}  // namespace mgcp
