#include "ccu/model.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "ccu/errors.hpp"

namespace ccu {
namespace {

double log1p_exp(double r) { return r > 0.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r)); }

double log_add_exp(double a, double b) {
  const double top = std::max(a, b);
  return top + std::log1p(std::exp(std::min(a, b) - top));
}

}  // namespace

double calibrate(double s, double r, std::size_t num_classes) {
  const double inv_m = 1.0 / static_cast<double>(num_classes);
  if (r > 0.0) {
    const double t = std::exp(-r);
    return (s + t * inv_m) / (1.0 + t);
  }
  const double t = std::exp(r);
  return (s * t + inv_m) / (t + 1.0);
}

Vector log_predictive(const Vector& log_softmax, double r, std::size_t num_classes) {
  const double log_inv_m = -std::log(static_cast<double>(num_classes));
  const double norm = log1p_exp(r);
  Vector out(log_softmax.size());
  for (Eigen::Index y = 0; y < log_softmax.size(); ++y) {
    out[y] = log_add_exp(log_softmax[y] + r, log_inv_m) - norm;
  }
  return out;
}

CcuModel::CcuModel(ReluClassifier classifier, GaussianMixture in, GaussianMixture out, double lambda)
    : classifier_(std::move(classifier)), in_(std::move(in)), out_(std::move(out)), lambda_(lambda) {
  if (!(lambda_ > 0.0) || !std::isfinite(lambda_)) {
    throw InvalidArgument("model: lambda must be positive and finite");
  }
  if (classifier_.num_classes() < 2) throw InvalidArgument("model: need at least 2 classes");
  if (in_.dim() != classifier_.input_dim() || out_.dim() != classifier_.input_dim()) {
    throw InvalidArgument("model: classifier and mixtures disagree on input dimension");
  }
  if (in_.metric_ptr() != out_.metric_ptr()) {
    if (in_.metric().fingerprint() != out_.metric().fingerprint()) {
      throw InvalidArgument("model: in and out mixtures must share one metric");
    }
    out_ = GaussianMixture(in_.metric_ptr(), out_.centroids(), out_.scales());
  }
}

void CcuModel::check_input(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != dim()) {
    throw InvalidArgument("model: input dimension " + std::to_string(x.size()) + ", expected " +
                          std::to_string(dim()));
  }
  if (!x.allFinite()) throw InvalidArgument("model: non-finite input");
}

double CcuModel::log_ratio(const Vector& x) const {
  check_input(x);
  const Vector z = metric().whiten(x);
  return in_.log_density_whitened(as_span(z)) - out_.log_density_whitened(as_span(z)) - std::log(lambda_);
}

ModelEvaluation CcuModel::evaluate(const Vector& x) const {
  check_input(x);
  ModelEvaluation e;
  e.logits = classifier_.forward(x);
  e.softmax = softmax(e.logits);
  const Vector z = metric().whiten(x);
  e.log_in = in_.log_density_whitened(as_span(z));
  e.log_out = out_.log_density_whitened(as_span(z));
  e.log_ratio = e.log_in - e.log_out - std::log(lambda_);
  e.predictive.resize(e.softmax.size());
  for (Eigen::Index y = 0; y < e.softmax.size(); ++y) {
    e.predictive[y] = calibrate(e.softmax[y], e.log_ratio, num_classes());
  }
  return e;
}

Vector CcuModel::predictive(const Vector& x) const { return evaluate(x).predictive; }

double CcuModel::confidence(const Vector& x) const {
  const auto e = evaluate(x);
  return e.predictive[static_cast<Eigen::Index>(argmax(e.predictive))];
}

ConfidenceGradient CcuModel::confidence_with_grad(const Vector& x) const {
  check_input(x);
  const std::size_t d = dim();
  ForwardTrace trace;
  const Vector logits = classifier_.forward(x, trace);
  const Vector s = softmax(logits);
  const Vector z = metric().whiten(x);
  std::vector<double> gz_in(d), gz_out(d);
  const double log_in = in_.log_density_and_whitened_grad(as_span(z), gz_in);
  const double log_out = out_.log_density_and_whitened_grad(as_span(z), gz_out);
  const double r = log_in - log_out - std::log(lambda_);

  // Ranking is preserved by the calibration, so argmax over softmax is argmax
  // over the predictive; ties resolve to the lowest index.
  const std::size_t y = argmax(s);
  const auto yi = static_cast<Eigen::Index>(y);
  const double sig = r > 0.0 ? 1.0 / (1.0 + std::exp(-r)) : std::exp(r) / (1.0 + std::exp(r));
  const double inv_m = 1.0 / static_cast<double>(num_classes());

  ConfidenceGradient out;
  out.label = y;
  out.confidence = calibrate(s[yi], r, num_classes());

  Vector upstream = -sig * s[yi] * s;
  upstream[yi] += sig * s[yi];
  out.x = classifier_.backward(trace, upstream).x;

  const double dp_dr = sig * (1.0 - sig) * (s[yi] - inv_m);
  if (dp_dr != 0.0) {
    Vector gz(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < d; ++j) gz[static_cast<Eigen::Index>(j)] = gz_in[j] - gz_out[j];
    out.x += dp_dr * metric().pull_back(gz);
  }
  return out;
}

double joint_log_likelihood(const CcuModel& model, const RowMatrix& in_points,
                            std::span<const int> in_labels, const RowMatrix& out_points) {
  if (in_points.rows() == 0 || out_points.rows() == 0) {
    throw InvalidArgument("joint_log_likelihood: empty batch");
  }
  if (static_cast<std::size_t>(in_points.rows()) != in_labels.size()) {
    throw InvalidArgument("joint_log_likelihood: label count mismatch");
  }
  const std::size_t m = model.num_classes();
  const double lambda = model.lambda();
  const double log_lambda = std::log(lambda);
  const double log_norm = std::log1p(lambda);

  double in_sum = 0.0;
  for (Eigen::Index i = 0; i < in_points.rows(); ++i) {
    const int label = in_labels[static_cast<std::size_t>(i)];
    if (label < 0 || static_cast<std::size_t>(label) >= m) {
      throw InvalidArgument("joint_log_likelihood: label " + std::to_string(label) +
                            " out of range");
    }
    const auto e = model.evaluate(in_points.row(i).transpose());
    const Vector lp = log_predictive(log_softmax(e.logits), e.log_ratio, m);
    in_sum += lp[label] + log_add_exp(e.log_in, log_lambda + e.log_out) - log_norm;
  }
  double out_sum = 0.0;
  for (Eigen::Index j = 0; j < out_points.rows(); ++j) {
    const auto e = model.evaluate(out_points.row(j).transpose());
    const Vector lp = log_predictive(log_softmax(e.logits), e.log_ratio, m);
    out_sum += lp.mean() + log_add_exp(e.log_in, log_lambda + e.log_out) - log_norm;
  }
  return in_sum / static_cast<double>(in_points.rows()) +
         lambda * out_sum / static_cast<double>(out_points.rows());
}

}  // namespace ccu
