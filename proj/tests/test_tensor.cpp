#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace mgcp;
using namespace testutil;

TEST(Shape, RejectsZeroExtentAndEmpty) {
  EXPECT_THROW(Shape({2, 0, 3}), Error);
  EXPECT_THROW(Shape(std::vector<Index>{}), Error);
  EXPECT_EQ(Shape({3, 4, 2}).numel(), 24u);
}

TEST(Unfold, OrderTwoModeZeroIsTheMatrix) {
  DenseTensor t(Shape{2, 2}, {1.0, 3.0, 2.0, 4.0});
  Matrix expect(2, 2);
  expect << 1, 2, 3, 4;
  EXPECT_EQ(unfold(t, 0), expect);
  EXPECT_EQ(unfold(t, 1), expect.transpose());
}

TEST(Unfold, ZeroTensorGivesZeroMatrix) {
  DenseTensor t(Shape{2, 3, 4});
  for (Index n = 0; n < 3; ++n) {
    const Matrix m = unfold(t, n);
    EXPECT_EQ(static_cast<Index>(m.rows()), t.shape()[n]);
    EXPECT_EQ(static_cast<Index>(m.cols()), 24 / t.shape()[n]);
    EXPECT_TRUE(m.isZero(0.0));
  }
}

TEST(Unfold, MatchesIndexMapOracle) {
  // Entry (i,j,k) of a 3x4x2 tensor unfolded along mode 1 sits at row j,
  // column i + 3k (remaining modes in increasing order, first fastest).
  std::mt19937_64 rng(11);
  const DenseTensor t = random_dense(Shape{3, 4, 2}, rng);
  const Matrix m = unfold(t, 1);
  ASSERT_EQ(m.rows(), 4);
  ASSERT_EQ(m.cols(), 6);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j)
      for (Index k = 0; k < 2; ++k) EXPECT_EQ(m(j, i + 3 * k), (t({i, j, k})));
  const Matrix m2 = unfold(t, 2);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j)
      for (Index k = 0; k < 2; ++k) EXPECT_EQ(m2(k, i + 3 * j), (t({i, j, k})));
}

TEST(Unfold, SparseMatchesDense) {
  std::mt19937_64 rng(5);
  const SparseTensor s = random_sparse(Shape{3, 4, 5}, 0.3, rng);
  const DenseTensor d = s.to_dense();
  for (Index n = 0; n < 3; ++n) EXPECT_EQ(unfold(s, n), unfold(d, n));
}

TEST(Unfold, ModeOutOfRange) {
  DenseTensor t(Shape{2, 3});
  EXPECT_THROW(unfold(t, 2), DimensionError);
}

TEST(Fold, RoundTripIsBitwise) {
  std::mt19937_64 rng(3);
  const DenseTensor t = random_dense(Shape{2, 3, 4}, rng);
  for (Index n = 0; n < 3; ++n) EXPECT_EQ(fold(unfold(t, n), n, t.shape()), t);
}

TEST(Fold, ZeroMatrixGivesZeroTensor) {
  const DenseTensor t = fold(Matrix::Zero(3, 8), 1, Shape{2, 3, 4});
  EXPECT_EQ(t, DenseTensor(Shape{2, 3, 4}));
}

TEST(Fold, HandBuiltTwoByTwoByTwo) {
  // Mode-0 unfolding columns are (j,k) = (0,0), (1,0), (0,1), (1,1).
  Matrix m(2, 4);
  m << 1, 3, 5, 7,
       2, 4, 6, 8;
  const DenseTensor t = fold(m, 0, Shape{2, 2, 2});
  const std::vector<double> linear(t.values().begin(), t.values().end());
  EXPECT_EQ(linear, (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ((t({1, 0, 1})), 6.0);
  EXPECT_EQ((t({0, 1, 1})), 7.0);

  // Mode-2 unfolding columns are (i,j) = (0,0), (1,0), (0,1), (1,1).
  Matrix m2(2, 4);
  m2 << 1, 2, 3, 4,
        5, 6, 7, 8;
  const DenseTensor t2 = fold(m2, 2, Shape{2, 2, 2});
  EXPECT_EQ((t2({1, 1, 0})), 4.0);
  EXPECT_EQ((t2({0, 1, 1})), 7.0);
  EXPECT_EQ(t2, t);
}

TEST(Fold, DimensionMismatch) {
  EXPECT_THROW(fold(Matrix::Zero(3, 7), 1, Shape{2, 3, 4}), DimensionError);
}

TEST(ModeProduct, IdentityLeavesTensorUnchanged) {
  std::mt19937_64 rng(7);
  const DenseTensor t = random_dense(Shape{3, 4, 2}, rng);
  for (Index n = 0; n < 3; ++n)
    EXPECT_EQ(mode_n_product(t, Matrix::Identity(t.shape()[n], t.shape()[n]), n), t);
}

TEST(ModeProduct, OrderTwoIsMatrixProduct) {
  std::mt19937_64 rng(8);
  const DenseTensor z = random_dense(Shape{3, 4}, rng);
  const Matrix a = random_matrix(5, 3, rng);
  const DenseTensor x = mode_n_product(z, a, 0);
  EXPECT_EQ(x.shape(), (Shape{5, 4}));
  EXPECT_LT(rel_err(unfold(x, 0), a * unfold(z, 0)), 1e-14);
}

TEST(ModeProduct, MatchesUnfoldMultiplyFold) {
  std::mt19937_64 rng(9);
  const DenseTensor t = random_dense(Shape{3, 3, 3}, rng);
  const Matrix a = random_matrix(2, 3, rng);
  for (Index n = 0; n < 3; ++n) {
    const DenseTensor x = mode_n_product(t, a, n);
    const DenseTensor oracle = fold(a * unfold(t, n), n, t.shape().with_extent(n, 2));
    EXPECT_LT(rel_err(x, oracle), 1e-13) << "mode " << n;
  }
}

TEST(ModeProduct, SparseMatchesDense) {
  std::mt19937_64 rng(10);
  const SparseTensor s = random_sparse(Shape{4, 3, 5}, 0.4, rng);
  const Matrix a = random_matrix(2, 3, rng);
  EXPECT_LT(rel_err(mode_n_product(s, a, 1), mode_n_product(s.to_dense(), a, 1)), 1e-14);
}

TEST(ModeProduct, DimensionMismatch) {
  DenseTensor t(Shape{2, 3});
  EXPECT_THROW(mode_n_product(t, Matrix::Zero(2, 4), 1), DimensionError);
}

TEST(MultiModeProduct, EmptyMapReturnsInput) {
  std::mt19937_64 rng(12);
  const DenseTensor t = random_dense(Shape{2, 3, 2}, rng);
  EXPECT_EQ(multi_mode_product(AnyTensor(t), {}), t);
}

TEST(MultiModeProduct, AllModesMatchKroneckerOracle) {
  std::mt19937_64 rng(13);
  for (const Shape& shape : {Shape{2, 2, 2}, Shape{3, 2, 3}, Shape{3, 3, 3, 3}}) {
    const DenseTensor z = random_dense(shape, rng);
    std::map<Index, Matrix> mats;
    for (Index n = 0; n < shape.order(); ++n) mats[n] = random_matrix(2 + n % 2, shape[n], rng);
    const DenseTensor x = multi_mode_product(AnyTensor(z), mats);
    for (Index n = 0; n < shape.order(); ++n) {
      // X_(n) = A^(n) Z_(n) (A^(last) (x) ... (x) A^(first, skipping n))^T
      Matrix k = Matrix::Ones(1, 1);
      for (Index m = 0; m < shape.order(); ++m)
        if (m != n) k = kron(mats[m], k);
      EXPECT_LT(rel_err(unfold(x, n), mats[n] * unfold(z, n) * k.transpose()), 1e-12);
    }
  }
}

TEST(MultiModeProduct, OrderOfApplicationIrrelevant) {
  std::mt19937_64 rng(14);
  const DenseTensor z = random_dense(Shape{3, 4, 2}, rng);
  const Matrix a = random_matrix(2, 3, rng), c = random_matrix(3, 2, rng);
  const DenseTensor x1 = mode_n_product(mode_n_product(z, a, 0), c, 2);
  const DenseTensor x2 = mode_n_product(mode_n_product(z, c, 2), a, 0);
  EXPECT_LT(rel_err(x1, x2), 1e-13);
  EXPECT_LT(rel_err(multi_mode_product(AnyTensor(z), {{0, a}, {2, c}}), x1), 1e-13);
}

TEST(KhatriRao, SingleMatrixIsItself) {
  std::mt19937_64 rng(15);
  const Matrix a = random_matrix(4, 3, rng);
  EXPECT_EQ(khatri_rao({a}), a);
}

TEST(KhatriRao, HandExample) {
  Matrix a(2, 2), b(2, 2), expect(4, 2);
  a << 1, 2, 3, 4;
  b << 0, 1, 1, 0;
  expect << 0, 2, 1, 0, 0, 4, 3, 0;
  EXPECT_EQ(khatri_rao({a, b}), expect);
}

TEST(KhatriRao, Associative) {
  std::mt19937_64 rng(16);
  const Matrix a = random_matrix(2, 3, rng), b = random_matrix(3, 3, rng), c = random_matrix(4, 3, rng);
  EXPECT_LT(rel_err(khatri_rao({a, khatri_rao({b, c})}), khatri_rao({khatri_rao({a, b}), c})), 1e-13);
}

TEST(KhatriRao, MixedProductIdentity) {
  std::mt19937_64 rng(17);
  const Matrix a1 = random_matrix(2, 3, rng), b1 = random_matrix(3, 4, rng);
  const Matrix a2 = random_matrix(3, 2, rng), b2 = random_matrix(2, 4, rng);
  const Matrix a3 = random_matrix(2, 2, rng), b3 = random_matrix(2, 4, rng);
  const Matrix lhs = khatri_rao({Matrix(a1 * b1), Matrix(a2 * b2), Matrix(a3 * b3)});
  const Matrix rhs = kron(kron(a1, a2), a3) * khatri_rao({b1, b2, b3});
  EXPECT_LT(rel_err(lhs, rhs), 1e-12);
}

TEST(KhatriRao, ColumnCountMismatch) {
  EXPECT_THROW(khatri_rao({Matrix::Zero(2, 2), Matrix::Zero(2, 3)}), DimensionError);
}

TEST(Mttkrp, ZeroTensorGivesZero) {
  std::mt19937_64 rng(18);
  const DenseTensor z(Shape{3, 4, 2});
  const FactorSet f = random_factors(z.shape(), 2, rng);
  EXPECT_TRUE(mttkrp(z, f.factors, 1).isZero(0.0));
  EXPECT_TRUE(mttkrp(SparseTensor::from_dense(z), f.factors, 1).isZero(0.0));
}

TEST(Mttkrp, DenseMatchesMaterializedKhatriRao) {
  std::mt19937_64 rng(19);
  const DenseTensor z = random_dense(Shape{3, 4, 2}, rng);
  const FactorSet f = random_factors(z.shape(), 2, rng);
  for (Index n = 0; n < 3; ++n) {
    std::vector<Matrix> others;
    for (Index m = 3; m-- > 0;)
      if (m != n) others.push_back(f[m]);
    const Matrix phi = khatri_rao(std::span<const Matrix>(others));
    EXPECT_LT(rel_err(mttkrp(z, f.factors, n), unfold(z, n) * phi), 1e-12) << "mode " << n;
  }
}

TEST(Mttkrp, SparseMatchesDenseOnLaplacian) {
  std::mt19937_64 rng(20);
  const SparseTensor z = laplacian_tensor({2, 4});
  const DenseTensor d = z.to_dense();
  const FactorSet f = random_factors(z.shape(), 3, rng);
  for (Index n = 0; n < 4; ++n)
    EXPECT_LT(rel_err(mttkrp(z, f.factors, n), mttkrp(d, f.factors, n)), 1e-12) << "mode " << n;
}

TEST(Mttkrp, SparseMatchesDenseOnRandomTensors) {
  std::mt19937_64 rng(21);
  for (const Shape& shape : {Shape{5, 4}, Shape{3, 5, 4, 2}, Shape{6, 1, 7}}) {
    const SparseTensor s = random_sparse(shape, 0.3, rng);
    const FactorSet f = random_factors(shape, 3, rng);
    for (Index n = 0; n < shape.order(); ++n)
      EXPECT_LT(rel_err(mttkrp(s, f.factors, n), mttkrp(s.to_dense(), f.factors, n)), 1e-12);
  }
}

TEST(Mttkrp, ChunkedKhatriRaoAgrees) {
  std::mt19937_64 rng(22);
  const DenseTensor z = random_dense(Shape{3, 4, 5, 3}, rng);
  const FactorSet f = random_factors(z.shape(), 2, rng);
  MttkrpOptions tiny;
  tiny.phi_budget = 4;
  for (Index n = 0; n < 4; ++n)
    EXPECT_LT(rel_err(mttkrp(z, f.factors, n, tiny), mttkrp(z, f.factors, n)), 1e-13);
}

TEST(Mttkrp, DimensionMismatch) {
  std::mt19937_64 rng(23);
  const DenseTensor z(Shape{3, 4, 2});
  FactorSet f = random_factors(z.shape(), 2, rng);
  f[2] = Matrix::Zero(3, 2);
  EXPECT_THROW(mttkrp(z, f.factors, 0), DimensionError);
}

TEST(FrobeniusNorm, Basics) {
  EXPECT_EQ(frobenius_norm(DenseTensor(Shape{2, 3})), 0.0);
  std::mt19937_64 rng(24);
  const Matrix a = random_matrix(3, 1, rng), b = random_matrix(4, 1, rng), c = random_matrix(2, 1, rng);
  const DenseTensor t = reconstruct(FactorSet({a, b, c}));
  EXPECT_NEAR(frobenius_norm(t), a.norm() * b.norm() * c.norm(), 1e-14);
  const SparseTensor s = random_sparse(Shape{4, 4, 3}, 0.4, rng);
  EXPECT_NEAR(frobenius_norm(s), frobenius_norm(s.to_dense()), 1e-14);
}

TEST(Hadamard, Basics) {
  std::mt19937_64 rng(25);
  const Matrix a = random_matrix(3, 3, rng), b = random_matrix(3, 3, rng);
  EXPECT_EQ(hadamard({a}), a);
  EXPECT_EQ(hadamard({a, Matrix::Ones(3, 3)}), a);
  const Matrix h = hadamard({a, b});
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 3; ++j) EXPECT_EQ(h(i, j), a(i, j) * b(i, j));
  EXPECT_THROW(hadamard({a, Matrix::Ones(3, 2)}), DimensionError);
}

TEST(SparseTensor, SortsMergesAndDropsZeros) {
  SparseTensor s(Shape{2, 2}, {{{1, 1}, 1.0}, {{0, 1}, 2.0}, {{1, 1}, -1.0}, {{1, 0}, 3.0}});
  ASSERT_EQ(s.nnz(), 2u);
  EXPECT_EQ(s.index(0)[0], 1u);
  EXPECT_EQ(s.index(0)[1], 0u);
  EXPECT_EQ(s.value(1), 2.0);
  EXPECT_THROW(SparseTensor(Shape{2, 2}, {{{0, 0}, 1.0}, {{0, 0}, 1.0}}, SparseTensor::Duplicates::Reject),
               InvalidArgument);
  EXPECT_THROW(SparseTensor(Shape{2, 2}, {{{2, 0}, 1.0}}), DimensionError);
}
