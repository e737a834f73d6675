#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "test_util.hpp"

using namespace mgcp;
using namespace testutil;

TEST(Reconstruct, UnitVectorsGiveSingleEntry) {
  const Shape shape{3, 2, 4};
  FactorSet f;
  for (Index n = 0; n < 3; ++n) f.factors.push_back(Matrix(Vector::Unit(shape[n], 0)));
  const DenseTensor t = reconstruct(f);
  EXPECT_EQ((t({0, 0, 0})), 1.0);
  EXPECT_EQ(frobenius_norm(t), 1.0);
}

TEST(Reconstruct, MatchesScalarLoop) {
  std::mt19937_64 rng(1);
  const FactorSet f = random_factors(Shape{3, 4, 5}, 2, rng);
  EXPECT_LT(rel_err(reconstruct(f), reconstruct_oracle(f)), 1e-15);
}

TEST(Objective, ExactRepresentationIsZero) {
  std::mt19937_64 rng(2);
  const FactorSet f = random_factors(Shape{4, 3, 5}, 2, rng);
  const DenseTensor z = reconstruct(f);
  const double zz = std::pow(frobenius_norm(z), 2);
  EXPECT_LE(objective(z, f), 1e-20 * zz);
  EXPECT_LE(objective(SparseTensor::from_dense(z), f), 1e-14 * zz);
}

TEST(Objective, ZeroFactorsGiveHalfNormSquared) {
  std::mt19937_64 rng(3);
  const DenseTensor z = random_dense(Shape{3, 3, 2}, rng);
  FactorSet f;
  for (Index n = 0; n < 3; ++n) f.factors.push_back(Matrix::Zero(z.shape()[n], 2));
  EXPECT_NEAR(objective(z, f), 0.5 * std::pow(frobenius_norm(z), 2), 1e-14);
}

TEST(Objective, MatchesDensifiedComputation) {
  std::mt19937_64 rng(4);
  const DenseTensor z = random_dense(Shape{4, 3, 5}, rng);
  const FactorSet f = random_factors(z.shape(), 3, rng);
  const DenseTensor m = reconstruct_oracle(f);
  double direct = 0.0;
  for (Index k = 0; k < z.numel(); ++k) direct += std::pow(z.data()[k] - m.data()[k], 2);
  direct *= 0.5;
  EXPECT_NEAR(objective(z, f), direct, 1e-12 * direct);
}

TEST(Objective, SparseMatchesDense) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const SparseTensor s = random_sparse(Shape{5, 4, 6, 3}, 0.2, rng);
    const FactorSet f = random_factors(s.shape(), 2, rng);
    const double a = objective(s, f), b = objective(s.to_dense(), f);
    EXPECT_NEAR(a, b, 1e-12 * std::max(a, b));
  }
}

TEST(Objective, ShapeMismatch) {
  std::mt19937_64 rng(6);
  const DenseTensor z(Shape{3, 3, 3});
  const FactorSet f = random_factors(Shape{3, 3, 2}, 2, rng);
  EXPECT_THROW(objective(z, f), DimensionError);
}

TEST(Gradient, VanishesAtExactDecomposition) {
  std::mt19937_64 rng(7);
  const FactorSet f = random_factors(Shape{4, 5, 3}, 2, rng);
  const DenseTensor z = reconstruct(f);
  const GradientSet g = gradient(z, f);
  for (const auto& m : g.grads) EXPECT_LE(m.norm(), 1e-10 * frobenius_norm(z));
}

TEST(Gradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const DenseTensor z = random_dense(Shape{4, 3, 5}, rng);
  FactorSet f = random_factors(z.shape(), 2, rng);
  const GradientSet g = gradient(z, f);
  const double h = 1e-6;
  for (Index n = 0; n < 3; ++n)
    for (Index i = 0; i < static_cast<Index>(f[n].rows()); ++i)
      for (Index r = 0; r < 2; ++r) {
        FactorSet p = f, m = f;
        p[n](i, r) += h;
        m[n](i, r) -= h;
        const double fd = (objective(z, p) - objective(z, m)) / (2 * h);
        EXPECT_NEAR(g.grads[n](i, r), fd, 1e-5 * std::max(1.0, std::abs(fd)));
      }
}

TEST(Gradient, SparseMatchesDense) {
  std::mt19937_64 rng(9);
  const SparseTensor s = random_sparse(Shape{4, 4, 3, 3}, 0.3, rng);
  const FactorSet f = random_factors(s.shape(), 3, rng);
  const GradientSet a = gradient(s, f), b = gradient(s.to_dense(), f);
  for (Index n = 0; n < 4; ++n) EXPECT_LT(rel_err(a.grads[n], b.grads[n]), 1e-12);
}

TEST(Gradient, ScalingIndeterminacyKeepsObjective) {
  std::mt19937_64 rng(10);
  const DenseTensor z = random_dense(Shape{3, 4, 2}, rng);
  const FactorSet f = random_factors(z.shape(), 2, rng);
  FactorSet s = f;
  s[0].col(1) *= 3.5;
  s[1].col(1) /= 3.5;
  EXPECT_LT(rel_err(reconstruct(s), reconstruct(f)), 1e-14);
  EXPECT_NEAR(objective(z, s), objective(z, f), 1e-12 * objective(z, f));
}

TEST(GradNorm, ZeroAtExactSolution) {
  std::mt19937_64 rng(11);
  const FactorSet f = random_factors(Shape{3, 4, 5}, 2, rng);
  EXPECT_LE(grad_norm(reconstruct(f), f), 1e-12);
}

TEST(GradNorm, ScaleNormalized) {
  std::mt19937_64 rng(12);
  FactorSet f = random_factors(Shape{3, 4, 5}, 2, rng);
  const DenseTensor z = reconstruct(f);
  DenseTensor z2 = z;
  for (double& v : z2.values()) v *= 2.0;
  f[0] *= 2.0;
  EXPECT_LE(grad_norm(z2, f), 1e-12);
}

TEST(GradNorm, MatchesGradientSet) {
  std::mt19937_64 rng(13);
  const DenseTensor z = random_dense(Shape{3, 4, 5}, rng);
  const FactorSet f = random_factors(z.shape(), 2, rng);
  const GradientSet g = gradient(z, f);
  double s = 0.0;
  for (const auto& m : g.grads) s += m.squaredNorm();
  EXPECT_NEAR(grad_norm(z, f), std::sqrt(s) / frobenius_norm(z), 1e-15);
}

TEST(GradNorm, ZeroTensorRejected) {
  std::mt19937_64 rng(14);
  const DenseTensor z(Shape{2, 2, 2});
  EXPECT_THROW(grad_norm(z, random_factors(z.shape(), 1, rng)), InvalidArgument);
}

TEST(Gamma, SymmetricPositiveSemidefinite) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const FactorSet f = random_factors(Shape{4, 2, 5, 3}, 3, rng);
    const auto g = grams(f);
    for (Index n = 0; n < 4; ++n) {
      const Matrix gm = gamma(g, n);
      EXPECT_LE((gm - gm.transpose()).norm(), 1e-13 * gm.norm());
      Eigen::SelfAdjointEigenSolver<Matrix> eig(gm);
      EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
    }
  }
}

TEST(Normalize, HandExample) {
  Matrix a(2, 1), b(2, 1);
  a << 2, 0;
  b << 0, 0.5;
  const FactorSet out = normalize_and_sort(FactorSet({a, b}));
  ASSERT_TRUE(out.lambdas);
  EXPECT_DOUBLE_EQ((*out.lambdas)(0), 1.0);
  EXPECT_DOUBLE_EQ(out[0].col(0).norm(), 1.0);
  EXPECT_DOUBLE_EQ(out[1].col(0).norm(), 1.0);
  EXPECT_DOUBLE_EQ(out[0](0, 0), 1.0);
  EXPECT_DOUBLE_EQ(out[1](1, 0), 1.0);
}

TEST(Normalize, InvariantReconstructionEqualNormsSorted) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 5; ++trial) {
    const FactorSet f = random_factors(Shape{4, 3, 5}, 3, rng);
    const FactorSet out = normalize_and_sort(f);
    EXPECT_LT(rel_err(reconstruct(out), reconstruct(f)), 1e-13);
    for (Index r = 0; r < 3; ++r)
      for (Index n = 0; n < 3; ++n)
        EXPECT_NEAR(out[n].col(r).norm(), (*out.lambdas)(r), 1e-12 * (*out.lambdas)(r));
    for (Index r = 1; r < 3; ++r) EXPECT_GE((*out.lambdas)(r - 1), (*out.lambdas)(r));
  }
}

TEST(Normalize, EquilibratedSetIsFixedUpToOrder) {
  std::mt19937_64 rng(17);
  const FactorSet once = normalize_and_sort(random_factors(Shape{3, 4, 2}, 2, rng));
  const FactorSet twice = normalize_and_sort(once);
  for (Index n = 0; n < 3; ++n) EXPECT_LT(rel_err(twice[n], once[n]), 1e-14);
}

TEST(Normalize, ZeroColumnIsDegenerate) {
  std::mt19937_64 rng(18);
  FactorSet f = random_factors(Shape{3, 3, 3}, 2, rng);
  f[1].col(0).setZero();
  EXPECT_THROW(normalize_and_sort(f), DegenerateIterate);
}

TEST(Normalize, TiesKeepOriginalOrder) {
  Matrix a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 1, 0, 0, 1;
  const FactorSet out = normalize_and_sort(FactorSet({a, b}));
  EXPECT_EQ(out[0], a);
  EXPECT_EQ(out[1], b);
}
