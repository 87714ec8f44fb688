#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ccu/data.hpp"
#include "ccu/density.hpp"
#include "ccu/errors.hpp"
#include "ccu/model.hpp"

namespace ccu {

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 128;  // in-batch; the out-batch has the same size
  double lr_classifier = 0.1;
  // Negative means "derive": 1e-5 * lr_classifier / 0.1.
  double lr_gmm = -1.0;
  double weight_decay_classifier = 5e-4;  // never applied to mixture parameters
  double momentum = 0.9;
  std::vector<double> decay_at{0.5, 0.75, 0.9};  // fractions of the epoch budget
  double decay_factor = 0.1;
  double scale_floor = 1e-3;
  std::uint64_t seed = 0;
  bool freeze_out_centroids = false;
  // Per-batch random crops/flips of in-distribution images (ignored for data
  // without an image layout).
  std::size_t augment_pad = 0;
  PadMode pad_mode = PadMode::boundary;
  bool augment_flip = false;

  double effective_lr_gmm() const { return lr_gmm >= 0.0 ? lr_gmm : 1e-5 * lr_classifier / 0.1; }
  void validate() const;
};

struct MixtureParamGradient {
  RowMatrix centroids;
  Vector log_scales;
};

struct GradientBundle {
  ClassifierGradient classifier;
  MixtureParamGradient in;
  MixtureParamGradient out;
};

struct LossAndGrads {
  double objective = 0.0;
  GradientBundle grads;
};

/// Objective of joint_log_likelihood and its gradient w.r.t. every classifier
/// weight/bias and every mixture centroid and log scale. The metric is fixed.
LossAndGrads loss_and_grads(const CcuModel& model, const RowMatrix& in_points,
                            std::span<const int> in_labels, const RowMatrix& out_points,
                            bool freeze_out_centroids = false);

/// Flat parameter views, ordered: classifier layers (weights row-major, then
/// bias), in centroids, in log scales, out centroids, out log scales.
std::vector<double> parameter_vector(const CcuModel& model);
void set_parameter_vector(CcuModel& model, std::span<const double> params);
std::vector<double> gradient_vector(const GradientBundle& grads);
std::size_t classifier_parameter_count(const ReluClassifier& classifier);

struct EpochRecord {
  int epoch = 0;
  double objective = 0.0;      // mean batch objective over the epoch
  double train_accuracy = 0.0;
  double mean_out_confidence = 0.0;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, CcuModel last_good, int epoch)
      : Error(what), last_good_(std::move(last_good)), epoch_(epoch) {}
  const CcuModel& last_good() const { return last_good_; }
  int epoch() const { return epoch_; }

 private:
  CcuModel last_good_;
  int epoch_;
};

struct TrainResult {
  CcuModel model;
  std::vector<EpochRecord> log;
};

struct TrainHooks {
  // Called after every epoch with the current parameters.
  std::function<void(const EpochRecord&, const CcuModel&)> on_epoch;
  // Called after every optimizer step (after projection). Used by tests.
  std::function<void(const CcuModel&)> on_step;
};

/// SGD ascent with two learning-rate groups. After every step the mixture
/// scales are floored and theta >= 2 max sigma is enforced. `held_out` feeds
/// the mean out-confidence column of the epoch log (defaults to `out`).
TrainResult train(CcuModel model, const Dataset& in, const Dataset& out, const TrainConfig& config,
                  const Dataset* held_out = nullptr, const TrainHooks& hooks = {});

/// Cross-entropy-only training of a bare classifier, the uncalibrated baseline.
ReluClassifier train_softmax_classifier(ReluClassifier classifier, const Dataset& in,
                                        const TrainConfig& config);

struct PipelineConfig {
  std::vector<std::size_t> hidden{128, 128};
  std::size_t num_classes = 0;  // 0: one more than the largest label
  std::size_t k_in = 20;
  std::size_t k_out = 20;
  double lambda = 1.0;
  double metric_floor = 1e-6;
  // Image data only: the metric is fitted on one augmented pass.
  std::size_t augment_pad = 2;
  PadMode pad_mode = PadMode::boundary;
  bool augment_flip = false;
  int em_iters = 100;
  std::size_t em_max_points = 20000;
  TrainConfig train;
};

/// Metric from the (augmented) in-data covariance, EM for both mixtures in the
/// shared metric, He-initialized classifier, scale constraint applied.
CcuModel initialize_model(const Dataset& in, const Dataset& out, const PipelineConfig& config);

/// initialize_model followed by train.
TrainResult fit_ccu(const Dataset& in, const Dataset& out, const PipelineConfig& config,
                    const Dataset* held_out = nullptr, const TrainHooks& hooks = {});

}  // namespace ccu
