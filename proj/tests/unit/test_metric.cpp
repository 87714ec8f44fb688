#include <gtest/gtest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <random>

#include "ccu/errors.hpp"
#include "ccu/metric.hpp"
#include "test_models.hpp"

namespace {

using namespace ccu;
using ccu::testing::random_metric;
using ccu::testing::random_rows;
using ccu::testing::random_vector;

TEST(Metric, IdentityCovarianceIsEuclidean) {
  const MetricTransform t = MetricTransform::identity(3);
  Vector x(3), y(3);
  x << 1, 2, 3;
  y << -1, 0, 4;
  EXPECT_NEAR(t.distance(x, y), (x - y).norm(), 1e-15);
  EXPECT_EQ(t.distance(x, x), 0.0);
}

TEST(Metric, DistanceMatchesDenseSolveOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const RowMatrix a = random_rows(rng, 3, 3);
    const Matrix cov = a.transpose() * a + 0.1 * Matrix::Identity(3, 3);
    const MetricTransform t = MetricTransform::from_covariance(cov);
    const Vector x = random_vector(rng, 3), y = random_vector(rng, 3);
    // d^2 = (x-y)^T C^{-1} (x-y) via a Cholesky solve, no eigendecomposition.
    const Vector diff = x - y;
    const double oracle = std::sqrt(diff.dot(cov.llt().solve(diff)));
    EXPECT_NEAR(t.distance(x, y), oracle, 1e-10 * oracle);
  }
}

TEST(Metric, DistanceIsSymmetricAndZeroOnDiagonal) {
  std::mt19937_64 rng(12);
  const auto t = random_metric(rng, 4);
  for (int i = 0; i < 100; ++i) {
    const Vector x = random_vector(rng, 4), y = random_vector(rng, 4);
    EXPECT_EQ(t->distance(x, y), t->distance(y, x));
    EXPECT_LE(t->distance(x, x), 1e-12);
  }
}

TEST(Metric, WhitenRoundTripAndDistanceAgreement) {
  std::mt19937_64 rng(13);
  const auto t = random_metric(rng, 5, 0.01, 10.0);
  for (int i = 0; i < 100; ++i) {
    const Vector x = random_vector(rng, 5, 3.0), y = random_vector(rng, 5, 3.0);
    const Vector back = t->unwhiten(t->whiten(x));
    EXPECT_LE((back - x).norm(), 1e-9 * x.norm());
    const double via_whiten = (t->whiten(x) - t->whiten(y)).norm();
    EXPECT_NEAR(via_whiten, t->distance(x, y), 1e-10 * std::max(1.0, via_whiten));
  }
}

TEST(Metric, IdentityCovarianceWhitenPreservesNorm) {
  Matrix u(2, 2);
  const double c = std::cos(0.3), s = std::sin(0.3);
  u << c, -s, s, c;
  const MetricTransform t(u, Vector::Ones(2));
  Vector x(2);
  x << 3, -4;
  EXPECT_NEAR(t.whiten(x).norm(), 5.0, 1e-14);
}

TEST(Metric, TriangleInequality) {
  std::mt19937_64 rng(14);
  const auto t = random_metric(rng, 3, 0.05, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const Vector x = random_vector(rng, 3), y = random_vector(rng, 3), z = random_vector(rng, 3);
    EXPECT_LE(t->distance(x, z), t->distance(x, y) + t->distance(y, z) + 1e-9);
  }
}

TEST(FitCovariance, IsotropicSamplesGiveUnitEigenvalues) {
  std::mt19937_64 rng(15);
  const RowMatrix samples = random_rows(rng, 40000, 3);
  const MetricTransform t = fit_covariance(samples);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(t.eigenvalues()[i], 1.0, 0.04);
}

TEST(FitCovariance, TwoPointDesignIsFloored) {
  // Rows (+1,0),(-1,0) repeated: the 1/(n-1) estimator gives n/(n-1) on the
  // first axis and 0 on the second, floored to 1e-6 of the maximum.
  const int n = 10;
  RowMatrix s(n, 2);
  for (int i = 0; i < n; ++i) s.row(i) << (i % 2 ? -1.0 : 1.0), 0.0;
  const MetricTransform t = fit_covariance(s);
  const double top = static_cast<double>(n) / (n - 1);
  EXPECT_NEAR(t.eigenvalues().maxCoeff(), top, 1e-14);
  EXPECT_NEAR(t.eigenvalues().minCoeff(), 1e-6 * top, 1e-20);
}

TEST(FitCovariance, Errors) {
  RowMatrix one(1, 2);
  one << 1, 2;
  EXPECT_THROW(fit_covariance(one), InvalidArgument);
  RowMatrix same(5, 2);
  same.setConstant(0.25);
  EXPECT_THROW(fit_covariance(same), InvalidArgument);
  RowMatrix bad(3, 2);
  bad << 1, 2, 3, std::numeric_limits<double>::quiet_NaN(), 5, 6;
  EXPECT_THROW(fit_covariance(bad), InvalidArgument);
  EXPECT_THROW(MetricTransform::identity(2).distance(Vector::Zero(2), Vector::Zero(3)), InvalidArgument);
}

TEST(FitCovariance, Invariants) {
  std::mt19937_64 rng(16);
  RowMatrix s = random_rows(rng, 200, 4);
  s.col(3) = 1e-5 * s.col(0);  // nearly rank deficient
  const MetricTransform t = fit_covariance(s);
  const Matrix& u = t.eigenvectors();
  EXPECT_LE((u.transpose() * u - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  const double mx = t.eigenvalues().maxCoeff();
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_GE(t.eigenvalues()[i], 1e-6 * mx * (1 - 1e-15));
  const double sum_log = t.eigenvalues().array().log().sum();
  EXPECT_NEAR(t.log_det(), sum_log, 1e-12 * std::abs(sum_log));
}

TEST(FitCovariance, RefittingWhitenedSamplesIsIdentity) {
  std::mt19937_64 rng(17);
  RowMatrix s = random_rows(rng, 500, 3);
  s.col(1) = 3.0 * s.col(1) + s.col(0);
  const MetricTransform t = fit_covariance(s);
  const MetricTransform again = fit_covariance(t.whiten_rows(s));
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(again.eigenvalues()[i], 1.0, 1e-9);
}

TEST(MetricTransform, RejectsNonOrthonormalBasis) {
  Matrix u(2, 2);
  u << 1, 0.1, 0, 1;
  EXPECT_THROW(MetricTransform(u, Vector::Ones(2)), InvalidArgument);
  EXPECT_THROW(MetricTransform(Matrix::Identity(2, 2), Vector::Zero(2)), InvalidArgument);
}

TEST(MetricTransform, GradientMapsAreTransposes) {
  std::mt19937_64 rng(18);
  const auto t = random_metric(rng, 3);
  const Vector gz = random_vector(rng, 3), x = random_vector(rng, 3);
  // <pull_back(g_z), x> = <g_z, whiten(x)> and the analogue for unwhiten.
  EXPECT_NEAR(t->pull_back(gz).dot(x), gz.dot(t->whiten(x)), 1e-12);
  EXPECT_NEAR(t->push_forward_gradient(gz).dot(x), gz.dot(t->unwhiten(x)), 1e-12);
}

}  // namespace
