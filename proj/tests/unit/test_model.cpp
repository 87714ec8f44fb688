#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ccu/errors.hpp"
#include "ccu/model.hpp"
#include "test_models.hpp"

namespace {

using namespace ccu;
using ccu::testing::ModelSpec;
using ccu::testing::random_model;
using ccu::testing::random_vector;

std::shared_ptr<const MetricTransform> identity(std::size_t d) {
  return std::make_shared<const MetricTransform>(MetricTransform::identity(d));
}

// Single linear layer with logits (a x, -a x) on a 1-d input.
ReluClassifier linear_1d(double a) {
  RowMatrix w(2, 1);
  w << a, -a;
  return ReluClassifier({DenseLayer{w, Vector::Zero(2)}});
}

CcuModel single_gaussians(double mu, double sigma, double nu, double theta, double lambda,
                          ReluClassifier clf = linear_1d(1.0)) {
  auto m = identity(1);
  return CcuModel(std::move(clf), GaussianMixture(m, RowMatrix::Constant(1, 1, mu), Vector::Constant(1, sigma)),
                  GaussianMixture(m, RowMatrix::Constant(1, 1, nu), Vector::Constant(1, theta)), lambda);
}

TEST(Model, LogRatioIdenticalMixtures) {
  std::mt19937_64 rng(51);
  CcuModel base = random_model(rng, ModelSpec{});
  const CcuModel same(base.classifier(), base.in_gmm(), base.in_gmm(), 1.0);
  const CcuModel half(base.classifier(), base.in_gmm(), base.in_gmm(), 2.0);
  for (int i = 0; i < 20; ++i) {
    const Vector x = random_vector(rng, 2, 3.0);
    EXPECT_EQ(same.log_ratio(x), 0.0);
    EXPECT_NEAR(half.log_ratio(x), -std::log(2.0), 1e-15);
  }
}

TEST(Model, LogRatioClosedFormWeightRatio) {
  const CcuModel m = single_gaussians(0.0, 1.0, 0.0, 2.0, 1.0);
  EXPECT_NEAR(m.log_ratio(Vector::Zero(1)), std::log(2.0), 1e-15);
  EXPECT_NEAR(m.log_ratio(Vector::Zero(1)), 0.6931, 1e-4);
}

TEST(Model, PredictiveHandExample) {
  EXPECT_NEAR(calibrate(0.9, 0.0, 2), 0.7, 1e-15);
  EXPECT_NEAR(calibrate(0.1, 0.0, 2), 0.3, 1e-15);
  // Logits (log 9, 0) give softmax (0.9, 0.1); identical mixtures give r = 0.
  RowMatrix w = RowMatrix::Zero(2, 1);
  Vector b(2);
  b << std::log(9.0), 0.0;
  auto metric = identity(1);
  GaussianMixture g(metric, RowMatrix::Zero(1, 1), Vector::Ones(1));
  const CcuModel m(ReluClassifier({DenseLayer{w, b}}), g, g, 1.0);
  const Vector p = m.predictive(Vector::Constant(1, 0.4));
  EXPECT_NEAR(p[0], 0.7, 1e-15);
  EXPECT_NEAR(p[1], 0.3, 1e-15);
  EXPECT_NEAR(m.confidence(Vector::Constant(1, 0.4)), 0.7, 1e-15);
}

TEST(Model, PredictiveLimits) {
  EXPECT_NEAR(calibrate(0.8, 800.0, 3), 0.8, 1e-15);
  EXPECT_NEAR(calibrate(0.8, -800.0, 3), 1.0 / 3.0, 1e-15);
  EXPECT_TRUE(std::isfinite(calibrate(0.8, 1e308, 3)));
  EXPECT_TRUE(std::isfinite(calibrate(0.8, -1e308, 3)));
  // Far from every centroid the out mixture dominates.
  const CcuModel m = single_gaussians(0.0, 1.0, 0.0, 2.0, 1.0, linear_1d(5.0));
  EXPECT_NEAR(m.confidence(Vector::Constant(1, 200.0)), 0.5, 1e-15);
}

TEST(Model, UniformSoftmaxGivesOneOverM) {
  std::mt19937_64 rng(52);
  CcuModel m = random_model(rng, ModelSpec{.classes = 3});
  for (auto& l : m.classifier().layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  for (int i = 0; i < 20; ++i) EXPECT_NEAR(m.confidence(random_vector(rng, 2, 2.0)), 1.0 / 3.0, 1e-15);
}

TEST(Model, PredictiveSumsToOneAndStaysBetween) {
  std::mt19937_64 rng(53);
  for (int t = 0; t < 50; ++t) {
    const CcuModel m = random_model(rng, ModelSpec{.classes = 2 + static_cast<std::size_t>(t % 4)});
    const double inv_m = 1.0 / static_cast<double>(m.num_classes());
    for (int i = 0; i < 20; ++i) {
      const Vector x = random_vector(rng, 2, 3.0);
      const ModelEvaluation e = m.evaluate(x);
      EXPECT_NEAR(e.predictive.sum(), 1.0, 1e-10);
      for (Eigen::Index y = 0; y < e.predictive.size(); ++y) {
        EXPECT_GE(e.predictive[y], std::min(e.softmax[y], inv_m) - 1e-15);
        EXPECT_LE(e.predictive[y], std::max(e.softmax[y], inv_m) + 1e-15);
      }
      const double c = m.confidence(x);
      EXPECT_GE(c, inv_m - 1e-15);
      EXPECT_LT(c, 1.0);
    }
  }
}

TEST(Model, CalibrationPreservesRanking) {
  std::mt19937_64 rng(54);
  const CcuModel m = random_model(rng, ModelSpec{.classes = 4, .hidden = {16, 16}});
  for (int i = 0; i < 10000; ++i) {
    const Vector x = random_vector(rng, 2, 4.0);
    const ModelEvaluation e = m.evaluate(x);
    // When r underflows several classes tie at 1/M; the softmax winner must
    // still be a maximizer of the predictive.
    EXPECT_EQ(e.predictive[static_cast<Eigen::Index>(argmax(e.softmax))], e.predictive.maxCoeff());
  }
}

TEST(Model, ConfidenceIncreasesWithRatio) {
  std::mt19937_64 rng(55);
  const CcuModel base = random_model(rng, ModelSpec{});
  const Vector x = random_vector(rng, 2);
  double prev = 0.0;
  for (double lambda : {1e3, 10.0, 1.0, 0.1, 1e-3}) {
    const CcuModel m(base.classifier(), base.in_gmm(), base.out_gmm(), lambda);
    const double c = m.confidence(x);
    EXPECT_GT(c, prev);
    prev = c;
  }
}

TEST(Model, ConfidenceGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(56);
  // Near-uniform confidences have gradients around 1e-7, so a smaller step
  // drowns the difference quotient in cancellation error.
  const double h = 1e-5;
  for (int t = 0; t < 30; ++t) {
    const CcuModel m = random_model(rng, ModelSpec{.d = 3, .classes = 3});
    const Vector x = random_vector(rng, 3, 1.5);
    const ConfidenceGradient g = m.confidence_with_grad(x);
    EXPECT_NEAR(g.confidence, m.confidence(x), 1e-15);
    Vector num(3);
    for (int j = 0; j < 3; ++j) {
      Vector xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      num[j] = (m.confidence(xp) - m.confidence(xm)) / (2 * h);
    }
    EXPECT_LT(ccu::testing::relative_error(g.x, num, 1e-6), 1e-5);
  }
}

TEST(Model, JointLogLikelihoodMatchesNaiveEvaluation) {
  std::mt19937_64 rng(57);
  for (int t = 0; t < 30; ++t) {
    const double lambda = t % 2 ? 1.0 : 0.5 + t * 0.1;
    const CcuModel m = random_model(rng, ModelSpec{.classes = 3, .lambda = lambda});
    const RowMatrix xin = ccu::testing::random_rows(rng, 3, 2, 1.5);
    const RowMatrix xout = ccu::testing::random_rows(rng, 3, 2, 2.5);
    const std::vector<int> labels{0, 2, 1};
    const double got = joint_log_likelihood(m, xin, labels, xout);

    auto naive = [&](const Vector& x, Vector& pred) {
      const double pi = std::exp(m.in_gmm().log_density(x));
      const double po = std::exp(m.out_gmm().log_density(x));
      const Vector logits = m.classifier().forward(x);
      const Vector e = logits.array().exp();
      const Vector s = e / e.sum();
      pred = (s * pi + Vector::Constant(3, lambda / 3.0 * po)) / (pi + lambda * po);
      return (pi + lambda * po) / (1 + lambda);
    };
    double expect = 0.0;
    Vector pred;
    for (int i = 0; i < 3; ++i) {
      const double px = naive(xin.row(i).transpose(), pred);
      expect += (std::log(pred[labels[static_cast<std::size_t>(i)]]) + std::log(px)) / 3.0;
    }
    for (int j = 0; j < 3; ++j) {
      const double pz = naive(xout.row(j).transpose(), pred);
      expect += lambda / 3.0 * (pred.array().log().sum() / 3.0 + std::log(pz));
    }
    EXPECT_NEAR(got, expect, 1e-9 * std::max(1.0, std::abs(expect)));
  }
}

TEST(Model, JointLogLikelihoodSpecialCases) {
  std::mt19937_64 rng(58);
  CcuModel m = random_model(rng, ModelSpec{.classes = 4});
  for (auto& l : m.classifier().layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  const CcuModel same(m.classifier(), m.in_gmm(), m.in_gmm(), 1.0);
  const RowMatrix xin = ccu::testing::random_rows(rng, 2, 2), xout = ccu::testing::random_rows(rng, 5, 2);
  const std::vector<int> labels{1, 3};
  // Uniform predictive: each point contributes -log M; identical mixtures:
  // log p(x) = log p(x|i).
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) expect += (-std::log(4.0) + m.in_gmm().log_density(xin.row(i).transpose())) / 2.0;
  for (int j = 0; j < 5; ++j) expect += (-std::log(4.0) + m.in_gmm().log_density(xout.row(j).transpose())) / 5.0;
  EXPECT_NEAR(joint_log_likelihood(same, xin, labels, xout), expect, 1e-12);
}

TEST(Model, Errors) {
  std::mt19937_64 rng(59);
  const CcuModel m = random_model(rng, ModelSpec{});
  EXPECT_THROW(CcuModel(m.classifier(), m.in_gmm(), m.out_gmm(), 0.0), InvalidArgument);
  EXPECT_THROW(m.confidence(Vector::Zero(3)), InvalidArgument);
  const RowMatrix xin = ccu::testing::random_rows(rng, 2, 2);
  const std::vector<int> bad{0, 2};
  EXPECT_THROW(joint_log_likelihood(m, xin, bad, xin), InvalidArgument);
  EXPECT_THROW(joint_log_likelihood(m, RowMatrix(0, 2), {}, xin), InvalidArgument);
  auto other = std::make_shared<const MetricTransform>(MetricTransform::identity(2));
  const GaussianMixture foreign(other, m.out_gmm().centroids(), m.out_gmm().scales());
  EXPECT_THROW(CcuModel(m.classifier(), m.in_gmm(), foreign, 1.0), InvalidArgument);
}

}  // namespace
