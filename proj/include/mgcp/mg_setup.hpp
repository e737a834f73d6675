#pragma once

// Adaptive multiplicative setup phase.
//
// Each mode is coarsened geometrically (odd 1-based points are coarse) and an
// interpolation operator P is fitted by weighted least squares to the current
// test factor matrices (and, after the first cycle, the boot factors). The
// Cholesky factor L of P^T P turns P into P_hat = P L^{-T} with orthonormal
// columns, restriction is R = P_hat^T, and the coarse tensor is the Galerkin
// product  Z_c = Z x_{n in I_c} R^(n). The coarse problem is then an ordinary
// CP problem on Z_c, solved recursively with ALS as relaxation.

#include <Eigen/Cholesky>
#include <Eigen/Sparse>

#include <optional>
#include <vector>

#include "mgcp/als.hpp"

namespace mgcp {

using SparseMatrix = Eigen::SparseMatrix<double>;
using TestBlocks = std::vector<FactorSet>;

/// Geometric coarsening of one mode. Indices are 0-based here, so the coarse
/// points are the even indices 0, 2, 4, ... with coarse label i/2.
struct ModeCoarsening {
  Index fine_size = 0;
  Index coarse_size = 0;
  std::vector<Index> coarse_points;
  std::vector<Index> fine_points;
  /// Coarse labels each entry of `fine_points` interpolates from (size 1 or 2).
  std::vector<std::vector<Index>> interpolatory;

  static Index coarse_label(Index fine_index) { return fine_index / 2; }
};

/// Maximum interpolation stencil size of the geometric coarsening.
inline constexpr Index kMaxStencil = 2;

inline ModeCoarsening coarsen_mode(Index size) {
  if (size < 2) throw InvalidArgument("cannot coarsen a mode of size " + std::to_string(size));
  ModeCoarsening c;
  c.fine_size = size;
  c.coarse_size = (size + 1) / 2;
  for (Index i = 0; i < size; ++i) {
    if (i % 2 == 0) {
      c.coarse_points.push_back(i);
    } else {
      c.fine_points.push_back(i);
      std::vector<Index> set{ModeCoarsening::coarse_label(i - 1)};
      if (i + 1 < size) set.push_back(ModeCoarsening::coarse_label(i + 1));
      c.interpolatory.push_back(std::move(set));
    }
  }
  return c;
}

/// Test blocks needed to keep the local fits overdetermined: n_t > M_s / R.
inline Index default_test_blocks(Index rank) { return rank > 1 ? 2 : 3; }

namespace detail {

template <TensorLike T>
Matrix mode_gradient(const T& z, const FactorSet& f, Index mode) {
  const auto g = grams(f);
  return f[mode] * gamma(g, mode) - mttkrp(z, f.factors, mode);
}

}  // namespace detail

/// Least-squares fitting weights for mode `mode`: every column of a factor set
/// gets  ||A^(mode)||^2 / ||G^(mode)||^2,  test blocks first, then `boot` when
/// given. A vanishing gradient (or a ratio above `cap`) yields `cap`.
template <TensorLike T>
Vector ls_weights(const T& z, const TestBlocks& blocks, const FactorSet* boot, Index mode,
                  double cap = 1e12) {
  std::vector<const FactorSet*> sets;
  for (const auto& b : blocks) sets.push_back(&b);
  if (boot) sets.push_back(boot);
  if (sets.empty()) throw InvalidArgument("ls_weights needs at least one factor set");
  const Index rank = sets.front()->rank();
  Vector w(rank * sets.size());
  for (Index s = 0; s < sets.size(); ++s) {
    const double gsq = detail::mode_gradient(z, *sets[s], mode).squaredNorm();
    const double asq = (*sets[s])[mode].squaredNorm();
    const double ratio = gsq > 0.0 ? asq / gsq : cap;
    w.segment(s * rank, rank).setConstant(std::min(ratio, cap));
  }
  return w;
}

/// Fits the F-rows of P so that each column u_k of `fit` is reproduced from its
/// injected coarse values:  u_ik ~ sum_{j in C^i} w_ij u_k(coarse j),  weighted
/// by diag(weights), via the normal equations. C-rows are unit rows. A
/// numerically singular local system falls back to equal weights 1/|C^i|.
inline SparseMatrix fit_interpolation(const ModeCoarsening& c, const Matrix& fit,
                                      const Vector& weights) {
  if (static_cast<Index>(fit.rows()) != c.fine_size)
    throw DimensionError("fit vectors have " + std::to_string(fit.rows()) + " rows, mode has " +
                         std::to_string(c.fine_size));
  if (fit.cols() != weights.size())
    throw DimensionError("one LS weight per fit vector required");
  if (fit.cols() == 0) throw InvalidArgument("no fit vectors");

  std::vector<Eigen::Triplet<double>> trip;
  for (Index i : c.coarse_points) trip.emplace_back(i, ModeCoarsening::coarse_label(i), 1.0);

  for (Index f = 0; f < c.fine_points.size(); ++f) {
    const Index i = c.fine_points[f];
    const auto& set = c.interpolatory[f];
    const Index m = set.size();
    Matrix x(fit.cols(), m);
    for (Index j = 0; j < m; ++j) x.col(j) = fit.row(2 * set[j]).transpose();
    const Vector y = fit.row(i).transpose();
    const Matrix a = x.transpose() * weights.asDiagonal() * x;
    const Vector b = x.transpose() * weights.asDiagonal() * y;

    Vector sol(m);
    bool singular;
    if (m == 1) {
      singular = !(a(0, 0) > 0.0);
      if (!singular) sol(0) = b(0) / a(0, 0);
    } else {
      const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
      singular = !(a(0, 0) > 0.0 && a(1, 1) > 0.0) || det <= 1e-12 * a(0, 0) * a(1, 1);
      if (!singular) {
        sol(0) = (a(1, 1) * b(0) - a(0, 1) * b(1)) / det;
        sol(1) = (a(0, 0) * b(1) - a(1, 0) * b(0)) / det;
      }
    }
    if (singular || !sol.allFinite()) sol.setConstant(1.0 / static_cast<double>(m));
    for (Index j = 0; j < m; ++j) trip.emplace_back(i, set[j], sol(j));
  }
  SparseMatrix p(c.fine_size, c.coarse_size);
  p.setFromTriplets(trip.begin(), trip.end());
  return p;
}

/// P together with its Cholesky-orthonormalized form.
struct TransferOperator {
  SparseMatrix p;
  Matrix l;      ///< lower-triangular Cholesky factor of P^T P
  Matrix p_hat;  ///< P L^{-T}, orthonormal columns
  Matrix r;      ///< P_hat^T

  Index fine_size() const { return p_hat.rows(); }
  Index coarse_size() const { return p_hat.cols(); }
};

inline TransferOperator orthonormalize(const SparseMatrix& p) {
  const Matrix dense = Matrix(p);
  const Matrix b = dense.transpose() * dense;
  Eigen::LLT<Matrix> llt(b);
  if (llt.info() != Eigen::Success)
    throw RankDeficient("Cholesky factorization of P^T P failed; interpolation is rank deficient");
  TransferOperator t;
  t.p = p;
  t.l = llt.matrixL();
  // P_hat^T = L^{-1} P^T
  t.r = llt.matrixL().solve(dense.transpose());
  t.p_hat = t.r.transpose();
  return t;
}

/// One level of the hierarchy. `transfers[n]` maps the next coarser level to
/// this one and is present exactly for the active modes I_c.
struct Level {
  AnyTensor tensor;
  Shape shape;
  std::vector<bool> active;
  std::vector<std::optional<TransferOperator>> transfers;
  double work_weight = 1.0;

  bool coarsest() const {
    return std::none_of(active.begin(), active.end(), [](bool a) { return a; });
  }
};

struct HierarchyOptions {
  /// Modes with extent <= this stop coarsening. 0 selects max(R, 3).
  Index coarsest_size = 0;
};

/// Levels 0 (finest) .. L-1 (coarsest).
struct Hierarchy {
  std::vector<Level> levels;
  Index rank = 0;

  Index depth() const noexcept { return levels.size(); }

  /// Fixes the level shapes. A mode is coarsened while its extent exceeds the
  /// threshold and halving it keeps at least R points. Coarse tensors are
  /// filled in by the setup cycles.
  static Hierarchy plan(AnyTensor finest, Index rank, const HierarchyOptions& opts = {}) {
    if (rank == 0) throw InvalidArgument("rank must be >= 1");
    const Index threshold = opts.coarsest_size ? opts.coarsest_size : std::max<Index>(rank, 3);
    Hierarchy h;
    h.rank = rank;
    Shape shape = shape_of(finest);
    const double finest_storage = static_cast<double>(storage_size(finest));
    Level first;
    first.tensor = std::move(finest);
    first.shape = shape;
    h.levels.push_back(std::move(first));
    for (;;) {
      Level& cur = h.levels.back();
      cur.active.assign(shape.order(), false);
      cur.transfers.assign(shape.order(), std::nullopt);
      std::vector<Index> next = shape.sizes();
      for (Index n = 0; n < shape.order(); ++n) {
        const Index coarse = (shape[n] + 1) / 2;
        if (shape[n] > threshold && coarse >= rank) {
          cur.active[n] = true;
          next[n] = coarse;
        }
      }
      if (cur.coarsest()) break;
      shape = Shape(next);
      Level lvl;
      lvl.shape = shape;
      lvl.work_weight = static_cast<double>(shape.numel()) / finest_storage;
      h.levels.push_back(std::move(lvl));
    }
    return h;
  }
};

/// Z x_{n in I_c} R^(n) over the level's active modes; always dense.
inline DenseTensor galerkin_tensor(const AnyTensor& z, const Level& level) {
  std::map<Index, Matrix> mats;
  for (Index n = 0; n < level.active.size(); ++n) {
    if (!level.active[n]) continue;
    if (!level.transfers[n])
      throw DimensionError("mode " + std::to_string(n) + " is active but has no transfer operator");
    mats.emplace(n, level.transfers[n]->r);
  }
  return multi_mode_product(z, mats);
}

/// Coarse approximation: R^(n) A^(n) on active modes, A^(n) elsewhere.
inline FactorSet restrict_factors(const Level& level, const FactorSet& f) {
  FactorSet out;
  for (Index n = 0; n < f.order(); ++n)
    out.factors.push_back(level.active[n] ? Matrix(level.transfers[n]->r * f[n]) : f[n]);
  return out;
}

/// Prolongation: P_hat^(n) A_c^(n) on active modes, A_c^(n) elsewhere.
inline FactorSet prolong_factors(const Level& level, const FactorSet& coarse) {
  FactorSet out;
  for (Index n = 0; n < coarse.order(); ++n)
    out.factors.push_back(level.active[n] ? Matrix(level.transfers[n]->p_hat * coarse[n])
                                          : coarse[n]);
  return out;
}

struct SetupOptions {
  Index nu1 = 5;
  Index nu2 = 5;
  Index nu_c = 100;
  double weight_cap = 1e12;
  double pinv_threshold = 1e-12;
};

namespace detail {

// Normalization is applied on the finest level only.
inline void relax_als(const Hierarchy& h, Index lvl, FactorSet& f, Index sweeps,
                      double pinv_threshold, Counters* counters) {
  const Level& level = h.levels[lvl];
  const bool normalize = lvl == 0;
  for (Index k = 0; k < sweeps; ++k)
    f = als_sweep(level.tensor, std::move(f), normalize, pinv_threshold);
  if (counters) {
    counters->work_units += static_cast<double>(sweeps) * level.work_weight;
    if (normalize) counters->add_normalizations(lvl, sweeps);
  }
}

// Builds P, P_hat and R for every active mode of `level`.
inline void build_transfers(Level& level, const TestBlocks& blocks, const FactorSet* boot,
                            const SetupOptions& opts, Counters* counters) {
  for (Index n = 0; n < level.active.size(); ++n) {
    if (!level.active[n]) continue;
    const Vector w = ls_weights(level.tensor, blocks, boot, n, opts.weight_cap);
    if (counters)
      counters->work_units +=
          static_cast<double>(blocks.size() + (boot ? 1 : 0)) * level.work_weight /
          static_cast<double>(level.active.size());
    const Index rank = blocks.empty() ? boot->rank() : blocks.front().rank();
    Matrix fit(level.shape[n], w.size());
    Index col = 0;
    for (const auto& b : blocks) {
      fit.middleCols(col, rank) = b[n];
      col += rank;
    }
    if (boot) fit.middleCols(col, rank) = (*boot)[n];
    level.transfers[n] = orthonormalize(fit_interpolation(coarsen_mode(level.shape[n]), fit, w));
  }
}

inline void setup_level(Hierarchy& h, Index lvl, FactorSet& boot, TestBlocks& blocks,
                        bool first_cycle, const SetupOptions& opts, Counters* counters) {
  Level& level = h.levels[lvl];
  if (level.coarsest()) {
    relax_als(h, lvl, boot, opts.nu_c, opts.pinv_threshold, counters);
    return;
  }
  for (auto& b : blocks) relax_als(h, lvl, b, opts.nu1, opts.pinv_threshold, counters);
  relax_als(h, lvl, boot, opts.nu1, opts.pinv_threshold, counters);

  build_transfers(level, blocks, first_cycle ? nullptr : &boot, opts, counters);
  h.levels[lvl + 1].tensor = galerkin_tensor(level.tensor, level);

  FactorSet coarse_boot = restrict_factors(level, boot);
  TestBlocks coarse_blocks;
  for (const auto& b : blocks) coarse_blocks.push_back(restrict_factors(level, b));
  setup_level(h, lvl + 1, coarse_boot, coarse_blocks, first_cycle, opts, counters);

  boot = prolong_factors(level, coarse_boot);
  relax_als(h, lvl, boot, opts.nu2, opts.pinv_threshold, counters);
}

inline void rebuild_level(Hierarchy& h, Index lvl, const FactorSet& boot, TestBlocks& blocks,
                          const SetupOptions& opts, Counters* counters) {
  Level& level = h.levels[lvl];
  if (level.coarsest()) return;
  for (auto& b : blocks) relax_als(h, lvl, b, opts.nu1, opts.pinv_threshold, counters);
  build_transfers(level, blocks, &boot, opts, counters);
  h.levels[lvl + 1].tensor = galerkin_tensor(level.tensor, level);
  const FactorSet coarse_boot = restrict_factors(level, boot);
  TestBlocks coarse_blocks;
  for (const auto& b : blocks) coarse_blocks.push_back(restrict_factors(level, b));
  rebuild_level(h, lvl + 1, coarse_boot, coarse_blocks, opts, counters);
}

}  // namespace detail

/// One setup V-cycle. Updates the hierarchy's operators and coarse tensors,
/// the boot factors, and the finest-level test blocks in place. On the first
/// cycle interpolation is fitted to the test factors only.
inline void setup_vcycle(Hierarchy& h, FactorSet& boot, TestBlocks& blocks, bool first_cycle,
                         const SetupOptions& opts = {}, Counters* counters = nullptr) {
  if (h.levels.empty()) throw InvalidArgument("empty hierarchy");
  check_conformal(h.levels[0].shape, boot);
  for (const auto& b : blocks) check_conformal(h.levels[0].shape, b);
  if (!h.levels[0].coarsest() && blocks.empty())
    throw InvalidArgument("setup cycle needs at least one test block");
  detail::setup_level(h, 0, boot, blocks, first_cycle, opts, counters);
}

/// Down-sweep only: relaxes the test blocks and refits every operator to
/// the test blocks plus `boot`, which is left untouched.
inline void rebuild_downsweep(Hierarchy& h, const FactorSet& boot, TestBlocks& blocks,
                              const SetupOptions& opts = {}, Counters* counters = nullptr) {
  if (h.levels.empty()) throw InvalidArgument("empty hierarchy");
  check_conformal(h.levels[0].shape, boot);
  detail::rebuild_level(h, 0, boot, blocks, opts, counters);
}

}  // namespace mgcp
