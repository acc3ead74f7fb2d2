#include <gtest/gtest.h>

#include "ricci/symbol.hpp"

using namespace ricci::symbol;

TEST(TensorBasis, RoundTripAndFrobeniusIsometry) {
  ricci::rng::Stream s(1);
  for (int n = 2; n <= 5; ++n) {
    Matrix a(n, n), b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        a(i, j) = s.uniform(-1, 1);
        b(i, j) = s.uniform(-1, 1);
      }
    const Matrix sa = 0.5 * (a + a.transpose()), sb = 0.5 * (b + b.transpose());
    EXPECT_LT((from_vec(to_vec(sa), n) - sa).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_NEAR(to_vec(sa).dot(to_vec(sb)), (sa.array() * sb.array()).sum(), 1e-14);
  }
}

TEST(PointMetric, RejectsBadMetrics) {
  Matrix g = Matrix::Identity(3, 3);
  g(0, 1) = 0.5;
  EXPECT_THROW(PointMetric::make(g), ricci::Error);
  Matrix h = -Matrix::Identity(2, 2);
  try {
    PointMetric::make(h);
    FAIL();
  } catch (const ricci::Error& e) {
    EXPECT_EQ(e.kind(), ricci::ErrorKind::DegenerateMetric);
  }
}

TEST(Symbols, ZeroCovectorIsRejected) {
  const auto g = PointMetric::make(Matrix::Identity(3, 3));
  try {
    ricci_symbol(g, Vector::Zero(3));
    FAIL();
  } catch (const ricci::Error& e) {
    EXPECT_EQ(e.kind(), ricci::ErrorKind::DegenerateCovector);
  }
}

TEST(Symbols, EuclideanCaseByHand) {
  // g = I, xi = e1: the DeTurck symbol is -1/2 Id and the Ricci symbol kills
  // exactly the tensors xi X^T + X xi^T.
  const auto g = PointMetric::make(Matrix::Identity(3, 3));
  const Vector xi = Vector::Unit(3, 0);
  const Matrix d = deturck_symbol(g, xi).matrix;
  EXPECT_LT((d + 0.5 * Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(kernel_dim(ricci_symbol(g, xi)), 3);
  const Matrix ric = ricci_symbol(g, xi).matrix;
  const Matrix da = divadj_symbol(g, xi).matrix;
  EXPECT_LT((ric * da).cwiseAbs().maxCoeff(), 1e-15);
  // h = e2 e2^T is not in the kernel: sigma(h) = -1/2 (h + xi xi^T).
  Matrix h = Matrix::Zero(3, 3);
  h(1, 1) = 1;
  const Matrix out = detail::apply_ricci(g, xi, h);
  EXPECT_DOUBLE_EQ(out(1, 1), -0.5);
  EXPECT_DOUBLE_EQ(out(0, 0), -0.5);
}

TEST(Symbols, KernelDimensionInvariantUnderBasisChange) {
  ricci::rng::Stream s(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 4;
    const auto g = random_metric(n, s, 1e3);
    const Vector xi = random_unit_covector(n, s);
    const Matrix q = random_orthogonal(n, s);
    const auto g2 = PointMetric::make(q * g.g * q.transpose());
    const Vector xi2 = q * xi;
    EXPECT_EQ(kernel_dim(ricci_symbol(g, xi)), n);
    EXPECT_EQ(kernel_dim(ricci_symbol(g2, xi2)), n);
    // Singular values are basis independent.
    const Vector s1 = singular_values(ricci_symbol(g, xi).matrix);
    const Vector s2 = singular_values(ricci_symbol(g2, xi2).matrix);
    EXPECT_LT((s1 - s2).cwiseAbs().maxCoeff(), 1e-10 * s1.maxCoeff());
  }
}

TEST(Symbols, HomogeneityInCovector) {
  // Second-order symbols scale quadratically in xi.
  ricci::rng::Stream s(6);
  const auto g = random_metric(4, s, 1e3);
  const Vector xi = random_unit_covector(4, s);
  const Matrix a = ricci_symbol(g, xi).matrix, b = ricci_symbol(g, 3.0 * xi).matrix;
  EXPECT_LT((b - 9.0 * a).cwiseAbs().maxCoeff(), 1e-12 * b.cwiseAbs().maxCoeff());
}

TEST(Symbols, ResidualsOnRandomInputs) {
  ricci::rng::Stream s(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 4;
    const auto g = random_metric(n, s);
    const Vector xi = random_unit_covector(n, s);
    EXPECT_LE(composition_residual(g, xi), 1e-12 * composition_scale(g, xi));
    EXPECT_LE(deturck_residual(g, xi), 1e-12);
    EXPECT_LE(lichnerowicz_consistency(g, xi), 1e-12);
    EXPECT_EQ(kernel_dim(deturck_symbol(g, xi)), 0);
  }
}

TEST(Suite, PassesAndIsDeterministic) {
  for (int n = 2; n <= 5; ++n) {
    const auto rep = symbol_suite(n, 30, 99);
    EXPECT_TRUE(rep.pass()) << n;
    EXPECT_EQ(rep.kernel_dim_mode, n);
    const auto again = symbol_suite(n, 30, 99);
    EXPECT_EQ(rep.max_deturck_residual, again.max_deturck_residual);
  }
  EXPECT_THROW(symbol_suite(6, 1, 0), ricci::Error);
}
