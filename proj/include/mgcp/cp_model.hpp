#pragma once

// CP model  [[A^(0), ..., A^(N-1)]]  and the least-squares objective
//   f(A) = 1/2 || Z - [[A]] ||^2
// with its gradient  G^(n) = -Z_(n) Phi^(n) + A^(n) Gamma^(n),
// Gamma^(n) = *_{m != n} A^(m)^T A^(m)  (Hadamard product of Gram matrices).

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "mgcp/tensor.hpp"

namespace mgcp {

/// Factor matrices A^(n) (I_n x R) of a Kruskal operand. Columns carry the full
/// magnitude; `lambdas` is a derived report of the per-component norms and is
/// only filled on the finest level by normalize_and_sort.
struct FactorSet {
  std::vector<Matrix> factors;
  std::optional<Vector> lambdas;

  FactorSet() = default;
  explicit FactorSet(std::vector<Matrix> f) : factors(std::move(f)) {}

  Index order() const noexcept { return factors.size(); }
  Index rank() const noexcept { return factors.empty() ? 0 : factors.front().cols(); }
  Matrix& operator[](Index n) { return factors.at(n); }
  const Matrix& operator[](Index n) const { return factors.at(n); }

  /// I_n x R matrices with i.i.d. uniform(0,1) entries, drawn mode by mode in
  /// column-major order.
  template <class Rng>
  static FactorSet random_uniform(const Shape& shape, Index rank, Rng& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    FactorSet f;
    for (Index n = 0; n < shape.order(); ++n) {
      Matrix a(shape[n], rank);
      for (Index c = 0; c < rank; ++c)
        for (Index i = 0; i < shape[n]; ++i) a(i, c) = dist(rng);
      f.factors.push_back(std::move(a));
    }
    return f;
  }

  /// Relative Frobenius distance  sqrt(sum ||A - B||^2) / sqrt(sum ||B||^2).
  double relative_distance(const FactorSet& ref) const {
    double num = 0.0, den = 0.0;
    for (Index n = 0; n < order(); ++n) {
      num += (factors[n] - ref.factors.at(n)).squaredNorm();
      den += ref.factors[n].squaredNorm();
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  }
};

/// Per-mode gradients (or FAS residual operators), shaped like a FactorSet.
struct GradientSet {
  std::vector<Matrix> grads;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& g : grads) s += g.squaredNorm();
    return s;
  }
};

inline void check_conformal(const Shape& shape, const FactorSet& f) {
  if (f.order() != shape.order())
    throw DimensionError("factor set has " + std::to_string(f.order()) + " modes, tensor has " +
                         std::to_string(shape.order()));
  if (f.rank() == 0) throw DimensionError("factor set must have at least one component");
  for (Index n = 0; n < f.order(); ++n) {
    if (static_cast<Index>(f[n].rows()) != shape[n] || f[n].cols() != f[0].cols())
      throw DimensionError("factor " + std::to_string(n) + " is " + std::to_string(f[n].rows()) +
                           "x" + std::to_string(f[n].cols()) + ", expected " +
                           std::to_string(shape[n]) + "x" + std::to_string(f.rank()));
  }
}

inline Shape shape_of(const FactorSet& f) {
  std::vector<Index> sizes;
  for (const auto& a : f.factors) sizes.push_back(a.rows());
  return Shape(std::move(sizes));
}

/// Gram matrices  A^(n)^T A^(n).
inline std::vector<Matrix> grams(const FactorSet& f) {
  std::vector<Matrix> g;
  g.reserve(f.order());
  for (const auto& a : f.factors) g.push_back(a.transpose() * a);
  return g;
}

/// Gamma^(skip): Hadamard product of all Gram matrices except mode `skip`.
/// For a one-mode model this is the all-ones matrix.
inline Matrix gamma(std::span<const Matrix> gram, Index skip) {
  const Index rank = gram.front().rows();
  Matrix g = Matrix::Ones(rank, rank);
  for (Index m = 0; m < gram.size(); ++m)
    if (m != skip) g.array() *= gram[m].array();
  return g;
}

/// Dense reconstruction  sum_r a_r^(0) o ... o a_r^(N-1). Ignores `lambdas`.
inline DenseTensor reconstruct(const FactorSet& f) {
  if (f.rank() == 0) throw DimensionError("reconstruct needs at least one component");
  const Shape shape = shape_of(f);
  const Matrix rest = detail::khatri_rao_range(f.factors, 1, f.order(), f.rank());
  Matrix unfolded = f[0] * rest.transpose();
  return DenseTensor(shape, std::vector<double>(unfolded.data(), unfolded.data() + unfolded.size()));
}

/// 1/2 ||Z - [[A]]||^2.
///
/// Dense targets are compared against the reconstruction directly. Sparse
/// targets use  1/2||Z||^2 - <Z,[[A]]> + 1/2||[[A]]||^2  so the model is never
/// densified; the cross term comes from one MTTKRP.
inline double objective(const DenseTensor& z, const FactorSet& f) {
  check_conformal(z.shape(), f);
  const DenseTensor model = reconstruct(f);
  double s = 0.0;
  for (Index k = 0; k < z.numel(); ++k) {
    const double d = z.data()[k] - model.data()[k];
    s += d * d;
  }
  return 0.5 * s;
}

inline double objective(const SparseTensor& z, const FactorSet& f) {
  check_conformal(z.shape(), f);
  const Index last = f.order() - 1;
  const Matrix m = mttkrp(z, f.factors, last);
  const double cross = (m.array() * f[last].array()).sum();
  const auto g = grams(f);
  Matrix all = Matrix::Ones(f.rank(), f.rank());
  for (const auto& gm : g) all.array() *= gm.array();
  const double znorm = frobenius_norm(z);
  return std::max(0.0, 0.5 * znorm * znorm - cross + 0.5 * all.sum());
}

inline double objective(const AnyTensor& z, const FactorSet& f) {
  return std::visit([&](const auto& x) { return objective(x, f); }, z);
}

/// Gradient  G^(n) = -Z_(n) Phi^(n) + A^(n) Gamma^(n)  for every mode.
template <TensorLike T>
GradientSet gradient(const T& z, const FactorSet& f) {
  check_conformal(shape_of(z), f);
  const auto g = grams(f);
  GradientSet out;
  out.grads.reserve(f.order());
  for (Index n = 0; n < f.order(); ++n)
    out.grads.push_back(f[n] * gamma(g, n) - mttkrp(z, f.factors, n));
  return out;
}

/// Scale-free convergence measure  (sum_n ||G^(n)||^2)^(1/2) / ||Z||.
template <TensorLike T>
double grad_norm(const T& z, const FactorSet& f) {
  const double znorm = frobenius_norm(z);
  if (znorm == 0.0) throw InvalidArgument("grad_norm is undefined for the zero tensor");
  return std::sqrt(gradient(z, f).squared_norm()) / znorm;
}

/// Equilibrate each component,  a_r^(n) <- lambda_r a_r^(n)/||a_r^(n)||  with
/// lambda_r = (prod_n ||a_r^(n)||)^(1/N), then order components by decreasing
/// lambda (ties keep their original order). Fills `lambdas`.
inline FactorSet normalize_and_sort(const FactorSet& f) {
  const Index n_modes = f.order();
  const Index rank = f.rank();
  Vector lambda(rank);
  FactorSet scaled = f;
  for (Index r = 0; r < rank; ++r) {
    double log_sum = 0.0;
    std::vector<double> norms(n_modes);
    for (Index n = 0; n < n_modes; ++n) {
      norms[n] = f[n].col(r).norm();
      if (norms[n] == 0.0)
        throw DegenerateIterate("component " + std::to_string(r) + " has a zero factor in mode " +
                                std::to_string(n));
      log_sum += std::log(norms[n]);
    }
    lambda(r) = std::exp(log_sum / static_cast<double>(n_modes));
    for (Index n = 0; n < n_modes; ++n) scaled[n].col(r) *= lambda(r) / norms[n];
  }

  std::vector<Index> perm(rank);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](Index a, Index b) { return lambda(a) > lambda(b); });

  FactorSet out;
  out.factors.reserve(n_modes);
  for (Index n = 0; n < n_modes; ++n) {
    Matrix a(scaled[n].rows(), rank);
    for (Index r = 0; r < rank; ++r) a.col(r) = scaled[n].col(perm[r]);
    out.factors.push_back(std::move(a));
  }
  Vector sorted(rank);
  for (Index r = 0; r < rank; ++r) sorted(r) = lambda(perm[r]);
  out.lambdas = std::move(sorted);
  return out;
}

}  // namespace mgcp
