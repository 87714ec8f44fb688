#pragma once

#include <cstddef>
#include <memory>
#include <span>

#include "ccu/classifier.hpp"
#include "ccu/density.hpp"
#include "ccu/metric.hpp"
#include "ccu/types.hpp"

namespace ccu {

/// Everything a single forward evaluation of the calibrated model produces.
struct ModelEvaluation {
  Vector logits;
  Vector softmax;
  double log_in = 0.0;     // log p(x|i)
  double log_out = 0.0;    // log p(x|o)
  double log_ratio = 0.0;  // log p(x|i) - log p(x|o) - log lambda
  Vector predictive;
};

struct ConfidenceGradient {
  double confidence = 0.0;
  std::size_t label = 0;  // lowest-index maximizer
  Vector x;               // d confidence / dx
};

/// Softmax classifier calibrated by an in/out density ratio:
///
///   p(y|x) = (s_y e^r + 1/M) / (e^r + 1),  r = log p(x|i) - log p(x|o) - log lambda.
///
/// Immutable during inference; the mutable accessors exist for training.
class CcuModel {
 public:
  CcuModel(ReluClassifier classifier, GaussianMixture in, GaussianMixture out, double lambda = 1.0);

  std::size_t num_classes() const { return classifier_.num_classes(); }
  std::size_t dim() const { return classifier_.input_dim(); }
  double lambda() const { return lambda_; }
  const MetricTransform& metric() const { return in_.metric(); }
  const std::shared_ptr<const MetricTransform>& metric_ptr() const { return in_.metric_ptr(); }

  const ReluClassifier& classifier() const { return classifier_; }
  ReluClassifier& classifier() { return classifier_; }
  const GaussianMixture& in_gmm() const { return in_; }
  GaussianMixture& in_gmm() { return in_; }
  const GaussianMixture& out_gmm() const { return out_; }
  GaussianMixture& out_gmm() { return out_; }

  double log_ratio(const Vector& x) const;
  Vector predictive(const Vector& x) const;
  double confidence(const Vector& x) const;
  ModelEvaluation evaluate(const Vector& x) const;

  /// Confidence and its gradient w.r.t. x, through softmax and both densities.
  ConfidenceGradient confidence_with_grad(const Vector& x) const;

 private:
  void check_input(const Vector& x) const;

  ReluClassifier classifier_;
  GaussianMixture in_;
  GaussianMixture out_;
  double lambda_;
};

/// (s e^r + 1/M) / (e^r + 1), branching on the sign of r so no overflow occurs.
/// With s = 1 this is the ball bound (1/M)(1 + M xi)/(1 + xi), xi = e^r.
double calibrate(double s, double r, std::size_t num_classes);

/// log p(y|x) for every class, given log-softmax and r, in log space.
Vector log_predictive(const Vector& log_softmax, double r, std::size_t num_classes);

/// Mean log-likelihood objective over an in batch (labels 0..M-1) and an
/// unlabeled out batch:
///   (1/n_i) sum [log p(y_i|x_i) + log p(x_i)]
///   + (lambda/n_o) sum [(1/M) sum_m log p(m|z_j) + log p(z_j)],
/// with p(x) = (p(x|i) + lambda p(x|o)) / (1 + lambda).
double joint_log_likelihood(const CcuModel& model, const RowMatrix& in_points,
                            std::span<const int> in_labels, const RowMatrix& out_points);

}  // namespace ccu
