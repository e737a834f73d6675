#pragma once

// Test tensors: the finite-difference Laplacian reshaped to order 2d, and the
// dense inverse-distance tensor z_ijk = (i^2 + j^2 + k^2)^(-1/2).

#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <cstdint>

#include "mgcp/tensor.hpp"

namespace mgcp {

struct LaplacianSpec {
  Index d = 1;  ///< lattice dimension; the tensor has order 2d
  Index s = 2;  ///< points per axis
};

struct InverseNormSpec {
  Index s = 1;
};

/// s^d x s^d matrix  sum_k I_{s^(d-k)} (x) D (x) I_{s^(k-1)},  D = tridiag(-1, 2, -1).
inline Eigen::SparseMatrix<double, Eigen::ColMajor, std::int64_t> laplacian_matrix(
    const LaplacianSpec& spec) {
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, std::int64_t>;
  const auto s = static_cast<std::int64_t>(spec.s);
  SpMat d1(s, s);
  std::vector<Eigen::Triplet<double, std::int64_t>> trip;
  for (std::int64_t i = 0; i < s; ++i) {
    trip.emplace_back(i, i, 2.0);
    if (i + 1 < s) {
      trip.emplace_back(i, i + 1, -1.0);
      trip.emplace_back(i + 1, i, -1.0);
    }
  }
  d1.setFromTriplets(trip.begin(), trip.end());

  auto identity = [](std::int64_t n) {
    SpMat id(n, n);
    id.setIdentity();
    return id;
  };
  std::int64_t total = 1;
  for (Index k = 0; k < spec.d; ++k) total *= s;
  SpMat z(total, total);
  std::int64_t right = 1;  // s^(k-1)
  for (Index k = 1; k <= spec.d; ++k) {
    const std::int64_t left = total / (right * s);  // s^(d-k)
    SpMat term = Eigen::kroneckerProduct(identity(left), Eigen::kroneckerProduct(d1, identity(right)).eval());
    z += term;
    right *= s;
  }
  z.prune(0.0);
  z.makeCompressed();
  return z;
}

/// Order-2d sparse Laplacian tensor with every extent s. Matrix row digit k
/// (weight s^(k-1)) becomes mode k-1, column digit k becomes mode d+k-1, so the
/// tensor's linear index equals the column-major linear index of the matrix.
inline SparseTensor laplacian_tensor(const LaplacianSpec& spec) {
  if (spec.d < 1) throw InvalidArgument("Laplacian dimension d must be >= 1");
  if (spec.s < 2) throw InvalidArgument("Laplacian grid size s must be >= 2");
  const Shape shape(std::vector<Index>(2 * spec.d, spec.s));
  (void)shape.numel();  // throws if s^(2d) overflows
  const auto mat = laplacian_matrix(spec);
  const Index expected_nnz = [&] {
    Index pts = 1;
    for (Index k = 0; k < spec.d; ++k) pts *= spec.s;
    return pts + 2 * spec.d * (spec.s - 1) * (pts / spec.s);
  }();
  if (static_cast<Index>(mat.nonZeros()) != expected_nnz)
    throw Error("Laplacian assembly produced " + std::to_string(mat.nonZeros()) +
                " nonzeros, expected " + std::to_string(expected_nnz));

  std::vector<SparseEntry> entries;
  entries.reserve(mat.nonZeros());
  for (std::int64_t col = 0; col < mat.outerSize(); ++col) {
    for (decltype(mat)::InnerIterator it(mat, col); it; ++it) {
      std::vector<Index> idx(2 * spec.d);
      auto row = static_cast<Index>(it.row());
      auto c = static_cast<Index>(it.col());
      for (Index k = 0; k < spec.d; ++k) {
        idx[k] = row % spec.s;
        idx[spec.d + k] = c % spec.s;
        row /= spec.s;
        c /= spec.s;
      }
      entries.push_back({std::move(idx), it.value()});
    }
  }
  return SparseTensor(shape, std::move(entries));
}

/// s x s x s tensor  z_ijk = (i^2 + j^2 + k^2)^(-1/2)  with 1-based i, j, k.
/// Stored 0-based, so entry (0,0,0) is 3^(-1/2).
inline DenseTensor inverse_norm_tensor(const InverseNormSpec& spec) {
  if (spec.s < 1) throw InvalidArgument("inverse-norm size s must be >= 1");
  const Index s = spec.s;
  DenseTensor t(Shape{s, s, s});
  double* z = t.data();
  for (Index k = 1; k <= s; ++k)
    for (Index j = 1; j <= s; ++j)
      for (Index i = 1; i <= s; ++i)
        *z++ = 1.0 / std::sqrt(static_cast<double>(i * i + j * j + k * k));
  return t;
}

}  // namespace mgcp
