#pragma once

// Dense and sparse N-way tensors and the multilinear kernels built on them.
//
// Linearization: dense values are stored with the first mode varying fastest,
// i.e. entry (i_0, ..., i_{N-1}) lives at  sum_k i_k * stride_k  with
// stride_0 = 1 and stride_k = I_0 * ... * I_{k-1}. Modes are 0-based in the API.
//
// Mode-n unfolding Z_(n) is the I_n x (prod_{k!=n} I_k) matrix whose column
// index is the linear index of the remaining modes, again first mode fastest:
//   Z_(n)(i_n, j),  j = sum_{k != n} i_k * prod_{m<k, m!=n} I_m.
// With this ordering mode-0 unfolding is a plain reshape, and the column order
// matches Khatri-Rao products taken in reverse mode order (A^(N-1) (.) ... (.) A^(0)).

#include <Eigen/Dense>

#include <algorithm>
#include <concepts>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "mgcp/error.hpp"

namespace mgcp {

using Index = std::size_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Per-mode extents I_0 .. I_{N-1}; order N >= 1 and every extent >= 1.
class Shape {
 public:
  Shape() = default;

  explicit Shape(std::vector<Index> sizes) : sizes_(std::move(sizes)) { validate(); }
  Shape(std::initializer_list<Index> sizes) : sizes_(sizes) { validate(); }

  Index order() const noexcept { return sizes_.size(); }
  Index operator[](Index mode) const { return sizes_.at(mode); }
  const std::vector<Index>& sizes() const noexcept { return sizes_; }

  /// Number of entries of a dense tensor of this shape. Throws on overflow.
  Index numel() const {
    Index n = 1;
    for (Index s : sizes_) {
      if (s != 0 && n > std::numeric_limits<Index>::max() / s)
        throw DimensionError("tensor index space overflows");
      n *= s;
    }
    return n;
  }

  /// Linear stride of `mode` (product of the extents before it).
  Index stride(Index mode) const {
    check_mode(mode);
    Index s = 1;
    for (Index k = 0; k < mode; ++k) s *= sizes_[k];
    return s;
  }

  /// Copy with the extent of `mode` replaced.
  Shape with_extent(Index mode, Index extent) const {
    check_mode(mode);
    auto s = sizes_;
    s[mode] = extent;
    return Shape(std::move(s));
  }

  void check_mode(Index mode) const {
    if (mode >= order())
      throw DimensionError("mode " + std::to_string(mode) + " out of range for order-" +
                           std::to_string(order()) + " tensor");
  }

  std::string to_string() const {
    std::string out;
    for (Index k = 0; k < sizes_.size(); ++k) {
      if (k) out += 'x';
      out += std::to_string(sizes_[k]);
    }
    return out;
  }

  bool operator==(const Shape&) const = default;

 private:
  void validate() const {
    if (sizes_.empty()) throw DimensionError("tensor order must be at least 1");
    for (Index s : sizes_)
      if (s == 0) throw DimensionError("tensor extents must be positive");
  }

  std::vector<Index> sizes_;
};

/// Dense real tensor, first mode fastest.
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(Shape shape) : shape_(std::move(shape)), values_(shape_.numel(), 0.0) {}

  DenseTensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.numel())
      throw DimensionError("dense tensor expects " + std::to_string(shape_.numel()) +
                           " values, got " + std::to_string(values_.size()));
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidArgument("dense tensor entries must be finite");
  }

  const Shape& shape() const noexcept { return shape_; }
  Index order() const noexcept { return shape_.order(); }
  Index numel() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const double* data() const noexcept { return values_.data(); }
  double* data() noexcept { return values_.data(); }

  Index linear_index(std::span<const Index> index) const {
    if (index.size() != order()) throw DimensionError("multi-index has wrong length");
    Index lin = 0, stride = 1;
    for (Index k = 0; k < index.size(); ++k) {
      if (index[k] >= shape_[k]) throw DimensionError("multi-index out of range");
      lin += index[k] * stride;
      stride *= shape_[k];
    }
    return lin;
  }

  double operator()(std::span<const Index> index) const { return values_[linear_index(index)]; }
  double& operator()(std::span<const Index> index) { return values_[linear_index(index)]; }
  double operator()(std::initializer_list<Index> index) const {
    return (*this)(std::span<const Index>(index.begin(), index.size()));
  }
  double& operator()(std::initializer_list<Index> index) {
    return (*this)(std::span<const Index>(index.begin(), index.size()));
  }

  bool operator==(const DenseTensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// One coordinate-format entry.
struct SparseEntry {
  std::vector<Index> index;
  double value = 0.0;
};

/// Coordinate-list sparse tensor. Entries are kept sorted by their dense
/// linear index (last mode slowest), duplicates merged, and zeros dropped.
class SparseTensor {
 public:
  enum class Duplicates { Sum, Reject };

  SparseTensor() = default;

  SparseTensor(Shape shape, std::vector<SparseEntry> entries, Duplicates policy = Duplicates::Sum)
      : shape_(std::move(shape)) {
    const Index n = shape_.order();
    for (const auto& e : entries) {
      if (e.index.size() != n) throw DimensionError("sparse entry has wrong index length");
      for (Index k = 0; k < n; ++k)
        if (e.index[k] >= shape_[k]) throw DimensionError("sparse entry index out of range");
      if (!std::isfinite(e.value)) throw InvalidArgument("sparse tensor entries must be finite");
    }
    std::vector<Index> order(entries.size());
    std::iota(order.begin(), order.end(), Index{0});
    auto less = [&](Index a, Index b) {
      const auto& ia = entries[a].index;
      const auto& ib = entries[b].index;
      return std::lexicographical_compare(ia.rbegin(), ia.rend(), ib.rbegin(), ib.rend());
    };
    std::stable_sort(order.begin(), order.end(), less);

    indices_.reserve(entries.size() * n);
    values_.reserve(entries.size());
    for (Index pos = 0; pos < order.size();) {
      const auto& idx = entries[order[pos]].index;
      double v = entries[order[pos]].value;
      Index next = pos + 1;
      while (next < order.size() && entries[order[next]].index == idx) {
        if (policy == Duplicates::Reject)
          throw InvalidArgument("duplicate sparse index " + format_index(idx));
        v += entries[order[next]].value;
        ++next;
      }
      if (v != 0.0) {
        indices_.insert(indices_.end(), idx.begin(), idx.end());
        values_.push_back(v);
      }
      pos = next;
    }
  }

  static SparseTensor from_dense(const DenseTensor& t) {
    std::vector<SparseEntry> entries;
    const Index n = t.order();
    std::vector<Index> idx(n, 0);
    for (Index lin = 0; lin < t.numel(); ++lin) {
      if (t.data()[lin] != 0.0) entries.push_back({idx, t.data()[lin]});
      for (Index k = 0; k < n; ++k) {
        if (++idx[k] < t.shape()[k]) break;
        idx[k] = 0;
      }
    }
    return SparseTensor(t.shape(), std::move(entries));
  }

  const Shape& shape() const noexcept { return shape_; }
  Index order() const noexcept { return shape_.order(); }
  Index nnz() const noexcept { return values_.size(); }

  std::span<const Index> index(Index entry) const {
    return {indices_.data() + entry * order(), order()};
  }
  double value(Index entry) const { return values_[entry]; }
  std::span<const double> values() const noexcept { return values_; }

  DenseTensor to_dense() const {
    DenseTensor d(shape_);
    for (Index e = 0; e < nnz(); ++e) d(index(e)) = values_[e];
    return d;
  }

  bool operator==(const SparseTensor&) const = default;

  static std::string format_index(std::span<const Index> idx) {
    std::string s = "(";
    for (Index k = 0; k < idx.size(); ++k) {
      if (k) s += ',';
      s += std::to_string(idx[k] + 1);
    }
    return s + ")";
  }

 private:
  Shape shape_;
  std::vector<Index> indices_;  // nnz x N, row-major
  std::vector<double> values_;
};

/// Either storage kind. Finest levels may be sparse; everything derived is dense.
using AnyTensor = std::variant<DenseTensor, SparseTensor>;

/// Any of the three tensor handles accepted by the kernels.
template <class T>
concept TensorLike = std::same_as<T, DenseTensor> || std::same_as<T, SparseTensor> ||
                     std::same_as<T, AnyTensor>;

inline const Shape& shape_of(const DenseTensor& t) { return t.shape(); }
inline const Shape& shape_of(const SparseTensor& t) { return t.shape(); }
inline const Shape& shape_of(const AnyTensor& t) {
  return std::visit([](const auto& x) -> const Shape& { return x.shape(); }, t);
}

/// Number of stored values (entries for dense, nonzeros for sparse).
inline Index storage_size(const AnyTensor& t) {
  return std::visit(
      [](const auto& x) -> Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseTensor>)
          return x.numel();
        else
          return x.nnz();
      },
      t);
}

inline DenseTensor to_dense(const AnyTensor& t) {
  return std::visit(
      [](const auto& x) -> DenseTensor {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseTensor>)
          return x;
        else
          return x.to_dense();
      },
      t);
}

namespace detail {

// Column stride of mode k inside the mode-`mode` unfolding.
inline std::vector<Index> unfolding_strides(const Shape& shape, Index mode) {
  std::vector<Index> strides(shape.order(), 0);
  Index s = 1;
  for (Index k = 0; k < shape.order(); ++k) {
    if (k == mode) continue;
    strides[k] = s;
    s *= shape[k];
  }
  return strides;
}

inline void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidArgument(std::string(what) + " has non-finite entries");
}

// Khatri-Rao product of matrices given by pointer, first operand slowest.
inline Matrix khatri_rao(std::span<const Matrix* const> mats) {
  if (mats.empty()) throw DimensionError("khatri_rao of an empty list");
  const Index cols = mats.front()->cols();
  Index rows = 1;
  for (const Matrix* m : mats) {
    if (static_cast<Index>(m->cols()) != cols)
      throw DimensionError("khatri_rao operands must share their column count");
    rows *= m->rows();
  }
  Matrix out(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    Vector col = mats.front()->col(c);
    for (Index k = 1; k < mats.size(); ++k) {
      const Matrix& m = *mats[k];
      Vector next(col.size() * m.rows());
      for (Index i = 0; i < static_cast<Index>(col.size()); ++i)
        next.segment(i * m.rows(), m.rows()) = col(i) * m.col(c);
      col = std::move(next);
    }
    out.col(c) = col;
  }
  return out;
}

// Khatri-Rao of factors[hi-1] (.) ... (.) factors[lo] (lower mode fastest);
// a 1 x R row of ones for an empty range.
inline Matrix khatri_rao_range(std::span<const Matrix> factors, Index lo, Index hi, Index rank) {
  if (lo >= hi) return Matrix::Ones(1, rank);
  std::vector<const Matrix*> ptrs;
  for (Index k = hi; k-- > lo;) ptrs.push_back(&factors[k]);
  return khatri_rao(ptrs);
}

inline void check_factors(const Shape& shape, std::span<const Matrix> factors, Index skip) {
  if (factors.size() != shape.order())
    throw DimensionError("expected " + std::to_string(shape.order()) + " factor matrices, got " +
                         std::to_string(factors.size()));
  shape.check_mode(skip);
  const Index rank = factors.front().cols();
  for (Index k = 0; k < factors.size(); ++k) {
    if (static_cast<Index>(factors[k].cols()) != rank)
      throw DimensionError("factor matrices must share their column count");
    if (k != skip && static_cast<Index>(factors[k].rows()) != shape[k])
      throw DimensionError("factor " + std::to_string(k) + " has " +
                           std::to_string(factors[k].rows()) + " rows, mode extent is " +
                           std::to_string(shape[k]));
  }
}

}  // namespace detail

/// Mode-`mode` matricization Z_(mode).
inline Matrix unfold(const DenseTensor& t, Index mode) {
  const Shape& shape = t.shape();
  shape.check_mode(mode);
  const Index in = shape[mode];
  const Index left = shape.stride(mode);
  const Index right = t.numel() / (left * in);
  Matrix m(in, left * right);
  const double* z = t.data();
  for (Index q = 0; q < right; ++q)
    for (Index i = 0; i < in; ++i)
      for (Index l = 0; l < left; ++l) m(i, l + left * q) = z[l + left * (i + in * q)];
  return m;
}

inline Matrix unfold(const SparseTensor& t, Index mode) {
  const Shape& shape = t.shape();
  shape.check_mode(mode);
  const auto strides = detail::unfolding_strides(shape, mode);
  Matrix m = Matrix::Zero(shape[mode], shape.numel() / shape[mode]);
  for (Index e = 0; e < t.nnz(); ++e) {
    auto idx = t.index(e);
    Index col = 0;
    for (Index k = 0; k < idx.size(); ++k) col += idx[k] * strides[k];
    m(idx[mode], col) = t.value(e);
  }
  return m;
}

inline Matrix unfold(const AnyTensor& t, Index mode) {
  return std::visit([&](const auto& x) { return unfold(x, mode); }, t);
}

/// Inverse of unfold: rebuild a tensor of `shape` from its mode-`mode` unfolding.
inline DenseTensor fold(const Matrix& m, Index mode, const Shape& shape) {
  shape.check_mode(mode);
  const Index in = shape[mode];
  const Index left = shape.stride(mode);
  const Index right = shape.numel() / (left * in);
  if (static_cast<Index>(m.rows()) != in || static_cast<Index>(m.cols()) != left * right)
    throw DimensionError("fold: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", shape " + shape.to_string() +
                         " needs " + std::to_string(in) + "x" + std::to_string(left * right));
  DenseTensor t(shape);
  double* z = t.data();
  for (Index q = 0; q < right; ++q)
    for (Index i = 0; i < in; ++i)
      for (Index l = 0; l < left; ++l) z[l + left * (i + in * q)] = m(i, l + left * q);
  return t;
}

/// n-mode product  X = Z x_mode A,  i.e.  X_(mode) = A Z_(mode).
inline DenseTensor mode_n_product(const DenseTensor& t, const Matrix& a, Index mode) {
  const Shape& shape = t.shape();
  shape.check_mode(mode);
  const Index in = shape[mode];
  if (static_cast<Index>(a.cols()) != in)
    throw DimensionError("mode_n_product: matrix has " + std::to_string(a.cols()) +
                         " columns, mode extent is " + std::to_string(in));
  const Index j = a.rows();
  const Index left = shape.stride(mode);
  const Index right = t.numel() / (left * in);
  DenseTensor out(shape.with_extent(mode, j));
  using Map = Eigen::Map<const Matrix>;
  using MapOut = Eigen::Map<Matrix>;
  if (left == 1) {
    MapOut(out.data(), j, right).noalias() = a * Map(t.data(), in, right);
  } else {
    for (Index q = 0; q < right; ++q)
      MapOut(out.data() + q * left * j, left, j).noalias() =
          Map(t.data() + q * left * in, left, in) * a.transpose();
  }
  return out;
}

inline DenseTensor mode_n_product(const SparseTensor& t, const Matrix& a, Index mode) {
  const Shape& shape = t.shape();
  shape.check_mode(mode);
  if (static_cast<Index>(a.cols()) != shape[mode])
    throw DimensionError("mode_n_product: matrix has " + std::to_string(a.cols()) +
                         " columns, mode extent is " + std::to_string(shape[mode]));
  DenseTensor out(shape.with_extent(mode, a.rows()));
  const Index stride = out.shape().stride(mode);
  std::vector<Index> idx(t.order());
  for (Index e = 0; e < t.nnz(); ++e) {
    auto src = t.index(e);
    std::copy(src.begin(), src.end(), idx.begin());
    idx[mode] = 0;
    const Index base = out.linear_index(idx);
    const double v = t.value(e);
    for (Index r = 0; r < static_cast<Index>(a.rows()); ++r)
      out.data()[base + r * stride] += v * a(r, src[mode]);
  }
  return out;
}

inline DenseTensor mode_n_product(const AnyTensor& t, const Matrix& a, Index mode) {
  return std::visit([&](const auto& x) { return mode_n_product(x, a, mode); }, t);
}

/// Z x_{n in mats} mats[n]. Modes are applied in increasing order; any order
/// gives the same result since products along distinct modes commute.
inline DenseTensor multi_mode_product(const AnyTensor& t, const std::map<Index, Matrix>& mats) {
  if (mats.empty()) return to_dense(t);
  for (const auto& [mode, m] : mats) shape_of(t).check_mode(mode);
  auto it = mats.begin();
  DenseTensor out = mode_n_product(t, it->second, it->first);
  for (++it; it != mats.end(); ++it) out = mode_n_product(out, it->second, it->first);
  return out;
}

/// Khatri-Rao product A_0 (.) A_1 (.) ... ; column k is the Kronecker product of
/// the k-th columns, last operand varying fastest.
inline Matrix khatri_rao(std::span<const Matrix> mats) {
  std::vector<const Matrix*> ptrs;
  for (const auto& m : mats) ptrs.push_back(&m);
  return detail::khatri_rao(ptrs);
}

inline Matrix khatri_rao(std::initializer_list<Matrix> mats) {
  return khatri_rao(std::span<const Matrix>(mats.begin(), mats.size()));
}

/// Element-wise product of equally sized matrices.
inline Matrix hadamard(std::span<const Matrix> mats) {
  if (mats.empty()) throw DimensionError("hadamard of an empty list");
  Matrix out = mats.front();
  for (Index k = 1; k < mats.size(); ++k) {
    if (mats[k].rows() != out.rows() || mats[k].cols() != out.cols())
      throw DimensionError("hadamard operands must have identical dimensions");
    out.array() *= mats[k].array();
  }
  return out;
}

inline Matrix hadamard(std::initializer_list<Matrix> mats) {
  return hadamard(std::span<const Matrix>(mats.begin(), mats.size()));
}

/// Tuning for the dense MTTKRP kernel.
struct MttkrpOptions {
  /// Largest Khatri-Rao product (in values) that is materialized in one piece.
  Index phi_budget = Index{1} << 26;
};

/// Matricized tensor times Khatri-Rao product  Z_(skip) Phi^(skip)  where
/// Phi^(skip) = A^(N-1) (.) ... (.) A^(skip+1) (.) A^(skip-1) (.) ... (.) A^(0).
///
/// The dense tensor is viewed as  left x I_skip x right  (modes before / after
/// `skip`). The trailing modes are contracted first,
///   W = Z(left*I_skip, right) * KR(A^(N-1), ..., A^(skip+1)),
/// then each column r of the result is  W_r(left, I_skip)^T * KR_left(:, r).
/// The trailing Khatri-Rao block is formed in chunks of at most `phi_budget`
/// values; chunks are accumulated in increasing slab order.
inline Matrix mttkrp(const DenseTensor& t, std::span<const Matrix> factors, Index skip,
                     const MttkrpOptions& opts = {}) {
  const Shape& shape = t.shape();
  detail::check_factors(shape, factors, skip);
  const Index rank = factors.front().cols();
  const Index in = shape[skip];
  const Index left = shape.stride(skip);
  const Index right = t.numel() / (left * in);
  using Map = Eigen::Map<const Matrix>;

  if (right == 1 && left > 1) {
    const Matrix kr_left = detail::khatri_rao_range(factors, 0, skip, rank);
    return Map(t.data(), left, in).transpose() * kr_left;
  }
  Matrix w;
  const Index chunk = std::max<Index>(1, std::min(right, opts.phi_budget / std::max<Index>(rank, 1)));
  if (chunk >= right) {
    const Matrix kr_right = detail::khatri_rao_range(factors, skip + 1, shape.order(), rank);
    w.noalias() = Map(t.data(), left * in, right) * kr_right;
  } else {
    // Rows q0..q0+c of the trailing Khatri-Rao product, one chunk at a time.
    std::vector<const Matrix*> trailing;
    for (Index k = shape.order(); k-- > skip + 1;) trailing.push_back(&factors[k]);
    w = Matrix::Zero(left * in, rank);
    Matrix block(chunk, rank);
    std::vector<Index> digits(trailing.size());
    for (Index q0 = 0; q0 < right; q0 += chunk) {
      const Index c = std::min(chunk, right - q0);
      for (Index q = 0; q < c; ++q) {
        // Mode skip+1 varies fastest.
        Index rem = q0 + q;
        for (Index j = trailing.size(); j-- > 0;) {
          const Index ext = trailing[j]->rows();
          digits[j] = rem % ext;
          rem /= ext;
        }
        block.row(q).setOnes();
        for (Index j = 0; j < trailing.size(); ++j)
          block.row(q).array() *= trailing[j]->row(digits[j]).array();
      }
      w.noalias() += Map(t.data() + q0 * left * in, left * in, c) * block.topRows(c);
    }
  }
  if (left == 1) return w;
  const Matrix kr_left = detail::khatri_rao_range(factors, 0, skip, rank);
  Matrix out(in, rank);
  for (Index r = 0; r < rank; ++r)
    out.col(r).noalias() = Map(w.col(r).data(), left, in).transpose() * kr_left.col(r);
  return out;
}

/// Sparse MTTKRP: streams the entries in storage order, never forming Phi.
/// Cost is proportional to nnz * N * R.
inline Matrix mttkrp(const SparseTensor& t, std::span<const Matrix> factors, Index skip,
                     const MttkrpOptions& = {}) {
  const Shape& shape = t.shape();
  detail::check_factors(shape, factors, skip);
  const Index n = shape.order();
  const Index rank = factors.front().cols();
  // Row-major copies keep each entry's R-vector contiguous.
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rows(n);
  for (Index k = 0; k < n; ++k)
    if (k != skip) rows[k] = factors[k];
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(shape[skip],
                                                                                  rank);
  std::vector<double> prod(rank);
  for (Index e = 0; e < t.nnz(); ++e) {
    auto idx = t.index(e);
    std::fill(prod.begin(), prod.end(), t.value(e));
    for (Index k = 0; k < n; ++k) {
      if (k == skip) continue;
      const double* row = rows[k].data() + idx[k] * rank;
      for (Index r = 0; r < rank; ++r) prod[r] *= row[r];
    }
    double* dst = out.data() + idx[skip] * rank;
    for (Index r = 0; r < rank; ++r) dst[r] += prod[r];
  }
  return out;
}

inline Matrix mttkrp(const AnyTensor& t, std::span<const Matrix> factors, Index skip,
                     const MttkrpOptions& opts = {}) {
  return std::visit([&](const auto& x) { return mttkrp(x, factors, skip, opts); }, t);
}

inline double frobenius_norm(const DenseTensor& t) {
  return Eigen::Map<const Vector>(t.data(), t.numel()).norm();
}

inline double frobenius_norm(const SparseTensor& t) {
  return Eigen::Map<const Vector>(t.values().data(), t.nnz()).norm();
}

inline double frobenius_norm(const AnyTensor& t) {
  return std::visit([](const auto& x) { return frobenius_norm(x); }, t);
}

}  // namespace mgcp
