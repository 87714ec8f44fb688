#include "ccu/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <memory>
#include <string>


namespace ccu {
namespace {

double log_add_exp(double a, double b) {
  const double top = std::max(a, b);
  return top + std::log1p(std::exp(std::min(a, b) - top));
}

double log1p_exp(double r) { return r > 0.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r)); }

MixtureParamGradient zero_mixture_grad(const GaussianMixture& gmm) {
  return {RowMatrix::Zero(gmm.centroids().rows(), gmm.centroids().cols()),
          Vector::Zero(gmm.scales().size())};
}

void accumulate(ClassifierGradient& acc, const ClassifierGradient& g) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    acc.layers[l].weight += g.layers[l].weight;
    acc.layers[l].bias += g.layers[l].bias;
  }
}

// Contribution of one sample, given d objective / d log p(x|i) and d / d log p(x|o).
void accumulate_density(MixtureParamGradient& acc, const MixtureGradient& g, double coef) {
  acc.centroids += coef * g.centroids;
  acc.log_scales += coef * g.log_scales;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  if (batch_size == 0) throw InvalidArgument("train: batch size must be positive");
  if (!(lr_classifier >= 0.0) || !(effective_lr_gmm() >= 0.0)) {
    throw InvalidArgument("train: learning rates must be non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("train: momentum must be in [0,1)");
  if (!(weight_decay_classifier >= 0.0)) throw InvalidArgument("train: weight decay must be >= 0");
  if (!(scale_floor > 0.0)) throw InvalidArgument("train: scale floor must be positive");
}

LossAndGrads loss_and_grads(const CcuModel& model, const RowMatrix& in_points,
                            std::span<const int> in_labels, const RowMatrix& out_points,
                            bool freeze_out_centroids) {
  if (in_points.rows() == 0 || out_points.rows() == 0) {
    throw InvalidArgument("loss_and_grads: empty batch");
  }
  if (static_cast<std::size_t>(in_points.rows()) != in_labels.size()) {
    throw InvalidArgument("loss_and_grads: label count mismatch");
  }
  const auto& clf = model.classifier();
  const std::size_t m = model.num_classes();
  const double inv_m = 1.0 / static_cast<double>(m);
  const double log_inv_m = -std::log(static_cast<double>(m));
  const double lambda = model.lambda();
  const double log_lambda = std::log(lambda);
  const double log_norm = std::log1p(lambda);

  LossAndGrads result;
  auto& grads = result.grads;
  grads.classifier = clf.zero_gradient();
  grads.in = zero_mixture_grad(model.in_gmm());
  grads.out = zero_mixture_grad(model.out_gmm());

  ForwardTrace trace;
  auto sample = [&](const Vector& x, int label, double weight) {
    const Vector logits = clf.forward(x, trace);
    const Vector s = softmax(logits);
    const Vector log_s = log_softmax(logits);
    const MixtureGradient gin = model.in_gmm().log_density_grad(x);
    const MixtureGradient gout = model.out_gmm().log_density_grad(x);
    const double r = gin.value - gout.value - log_lambda;
    const double softplus_r = log1p_exp(r);

    // w_y = s_y e^r / (s_y e^r + 1/M): the in-share of p(y|x).
    Vector w(static_cast<Eigen::Index>(m));
    Vector lp(static_cast<Eigen::Index>(m));
    for (Eigen::Index y = 0; y < static_cast<Eigen::Index>(m); ++y) {
      const double a = log_s[y] + r;
      const double lse = log_add_exp(a, log_inv_m);
      w[y] = std::exp(a - lse);
      lp[y] = lse - softplus_r;
    }
    const double log_marginal = log_add_exp(gin.value, log_lambda + gout.value) - log_norm;

    Vector upstream;
    double d_log_in = 0.0;
    if (label >= 0) {
      const auto yi = static_cast<Eigen::Index>(label);
      result.objective += weight * (lp[yi] + log_marginal);
      upstream = -w[yi] * s;
      upstream[yi] += w[yi];
      d_log_in = w[yi];
    } else {
      result.objective += weight * (lp.mean() + log_marginal);
      upstream = inv_m * (w - w.sum() * s);
      d_log_in = w.mean();
    }
    // Through r and the marginal: d/dlog p(x|i) = d_log_in, d/dlog p(x|o) = 1 - d_log_in.
    upstream *= weight;
    accumulate(grads.classifier, clf.backward(trace, upstream));
    accumulate_density(grads.in, gin, weight * d_log_in);
    accumulate_density(grads.out, gout, weight * (1.0 - d_log_in));
  };

  const double w_in = 1.0 / static_cast<double>(in_points.rows());
  for (Eigen::Index i = 0; i < in_points.rows(); ++i) {
    const int label = in_labels[static_cast<std::size_t>(i)];
    if (label < 0 || static_cast<std::size_t>(label) >= m) {
      throw InvalidArgument("loss_and_grads: label " + std::to_string(label) + " out of range");
    }
    sample(in_points.row(i).transpose(), label, w_in);
  }
  const double w_out = lambda / static_cast<double>(out_points.rows());
  for (Eigen::Index j = 0; j < out_points.rows(); ++j) {
    sample(out_points.row(j).transpose(), -1, w_out);
  }
  if (freeze_out_centroids) grads.out.centroids.setZero();
  grads.classifier.x.setZero();
  return result;
}

std::size_t classifier_parameter_count(const ReluClassifier& classifier) {
  std::size_t n = 0;
  for (const auto& layer : classifier.layers()) {
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return n;
}

namespace {

template <typename Sink>
void visit_layers(const std::vector<DenseLayer>& layers, Sink&& sink) {
  for (const auto& layer : layers) {
    sink(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    sink(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
}

}  // namespace

std::vector<double> parameter_vector(const CcuModel& model) {
  std::vector<double> out;
  auto sink = [&](const double* p, std::size_t n) { out.insert(out.end(), p, p + n); };
  visit_layers(model.classifier().layers(), sink);
  for (const GaussianMixture* g : {&model.in_gmm(), &model.out_gmm()}) {
    sink(g->centroids().data(), static_cast<std::size_t>(g->centroids().size()));
    const Vector ls = g->log_scales();
    sink(ls.data(), static_cast<std::size_t>(ls.size()));
  }
  return out;
}

void set_parameter_vector(CcuModel& model, std::span<const double> params) {
  std::size_t pos = 0;
  auto take = [&](double* dst, std::size_t n) {
    if (pos + n > params.size()) throw InvalidArgument("set_parameter_vector: vector too short");
    std::copy_n(params.data() + pos, n, dst);
    pos += n;
  };
  for (auto& layer : model.classifier().layers()) {
    take(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    take(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  for (GaussianMixture* g : {&model.in_gmm(), &model.out_gmm()}) {
    RowMatrix c(g->centroids().rows(), g->centroids().cols());
    take(c.data(), static_cast<std::size_t>(c.size()));
    Vector ls(g->scales().size());
    take(ls.data(), static_cast<std::size_t>(ls.size()));
    g->set_centroids(std::move(c));
    g->set_log_scales(ls);
  }
  if (pos != params.size()) throw InvalidArgument("set_parameter_vector: vector too long");
}

std::vector<double> gradient_vector(const GradientBundle& grads) {
  std::vector<double> out;
  auto sink = [&](const double* p, std::size_t n) { out.insert(out.end(), p, p + n); };
  visit_layers(grads.classifier.layers, sink);
  for (const MixtureParamGradient* g : {&grads.in, &grads.out}) {
    sink(g->centroids.data(), static_cast<std::size_t>(g->centroids.size()));
    sink(g->log_scales.data(), static_cast<std::size_t>(g->log_scales.size()));
  }
  return out;
}

namespace {

// Floors every scale and re-imposes theta >= 2 max sigma.
void enforce_scale_constraints(CcuModel& model, double floor) {
  for (GaussianMixture* g : {&model.in_gmm(), &model.out_gmm()}) {
    if (g->min_scale() < floor) g->set_scales(g->scales().cwiseMax(floor));
  }
  project_scale_constraint(model.in_gmm(), model.out_gmm());
}

double learning_rate_factor(const TrainConfig& config, int epoch) {
  double factor = 1.0;
  for (double frac : config.decay_at) {
    if (epoch >= static_cast<int>(std::floor(frac * config.epochs))) factor *= config.decay_factor;
  }
  return factor;
}

RowMatrix gather_rows(const RowMatrix& src, std::span<const std::size_t> idx) {
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Walks a dataset in shuffled order, reshuffling whenever it wraps around.
class IndexCycler {
 public:
  IndexCycler(std::size_t n, std::mt19937_64& rng) : order_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  std::mt19937_64& rng_;
};

double accuracy(const ReluClassifier& clf, const Dataset& data) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(argmax(clf.forward(data.point(i)))) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

TrainResult train(CcuModel model, const Dataset& in, const Dataset& out, const TrainConfig& config,
                  const Dataset* held_out, const TrainHooks& hooks) {
  config.validate();
  if (in.size() == 0 || out.size() == 0) throw InvalidArgument("train: empty data");
  if (!in.labeled()) throw InvalidArgument("train: in-distribution data must be labeled");
  in.validate(model.num_classes());
  if (in.dim() != model.dim() || out.dim() != model.dim()) {
    throw InvalidArgument("train: data dimension does not match model");
  }
  const Dataset& monitor = held_out ? *held_out : out;
  const std::size_t monitor_n = std::min<std::size_t>(monitor.size(), 2000);

  std::mt19937_64 rng(config.seed);
  const std::size_t n_clf = classifier_parameter_count(model.classifier());
  const double lr_gmm = config.effective_lr_gmm();

  enforce_scale_constraints(model, config.scale_floor);
  std::vector<double> params = parameter_vector(model);
  std::vector<double> velocity(params.size(), 0.0);

  std::vector<std::size_t> in_order(in.size());
  std::iota(in_order.begin(), in_order.end(), 0);
  IndexCycler out_cycle(out.size(), rng);

  const bool augment_batches = in.layout && (config.augment_pad > 0 || config.augment_flip);

  TrainResult result{model, {}};
  CcuModel last_good = model;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double factor = learning_rate_factor(config, epoch);
    std::shuffle(in_order.begin(), in_order.end(), rng);
    double objective_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < in.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, in.size() - start);
      const std::span<const std::size_t> idx(in_order.data() + start, count);
      RowMatrix xb = gather_rows(in.points, idx);
      if (augment_batches) {
        std::vector<double> img(in.dim());
        for (Eigen::Index r = 0; r < xb.rows(); ++r) {
          std::copy(xb.row(r).data(), xb.row(r).data() + xb.cols(), img.begin());
          const auto padded = pad_image(img, *in.layout, config.augment_pad, config.pad_mode);
          const auto crop = crop_image(padded, *in.layout, config.augment_pad,
                                       draw_crop(config.augment_pad, config.augment_flip, rng));
          std::copy(crop.begin(), crop.end(), xb.row(r).data());
        }
      }
      std::vector<int> yb(count);
      for (std::size_t i = 0; i < count; ++i) yb[i] = in.labels[idx[i]];
      const auto out_idx = out_cycle.next(count);
      const RowMatrix zb = gather_rows(out.points, out_idx);

      const LossAndGrads lg = loss_and_grads(model, xb, yb, zb, config.freeze_out_centroids);
      if (!std::isfinite(lg.objective)) {
        throw TrainingDiverged("train: non-finite objective at epoch " + std::to_string(epoch),
                               last_good, epoch);
      }
      const std::vector<double> g = gradient_vector(lg.grads);
      for (std::size_t p = 0; p < params.size(); ++p) {
        const bool is_clf = p < n_clf;
        const double step = (is_clf ? config.lr_classifier : lr_gmm) * factor;
        const double grad = is_clf ? g[p] - config.weight_decay_classifier * params[p] : g[p];
        velocity[p] = config.momentum * velocity[p] + grad;
        params[p] += step * velocity[p];
      }
      if (!all_finite(params)) {
        throw TrainingDiverged("train: non-finite parameters at epoch " + std::to_string(epoch),
                               last_good, epoch);
      }
      try {
        set_parameter_vector(model, params);
      } catch (const InvalidArgument& e) {
        // Log-scales so large or small that exp() leaves the positive range.
        throw TrainingDiverged(std::string("train: ") + e.what() + " at epoch " + std::to_string(epoch),
                               last_good, epoch);
      }
      enforce_scale_constraints(model, config.scale_floor);
      params = parameter_vector(model);
      if (hooks.on_step) hooks.on_step(model);
      objective_sum += lg.objective;
      ++batches;
    }

    EpochRecord record;
    record.epoch = epoch + 1;
    record.objective = objective_sum / static_cast<double>(batches);
    record.train_accuracy = accuracy(model.classifier(), in);
    double conf = 0.0;
    for (std::size_t i = 0; i < monitor_n; ++i) conf += model.confidence(monitor.point(i));
    record.mean_out_confidence = conf / static_cast<double>(monitor_n);
    if (!std::isfinite(record.objective)) {
      throw TrainingDiverged("train: non-finite epoch objective", last_good, epoch);
    }
    result.log.push_back(record);
    last_good = model;
    if (hooks.on_epoch) hooks.on_epoch(record, model);
  }
  result.model = std::move(model);
  return result;
}

ReluClassifier train_softmax_classifier(ReluClassifier classifier, const Dataset& in,
                                        const TrainConfig& config) {
  config.validate();
  if (!in.labeled() || in.size() == 0) throw InvalidArgument("train: labeled data required");
  in.validate(classifier.num_classes());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(in.size());
  std::iota(order.begin(), order.end(), 0);
  ClassifierGradient vel = classifier.zero_gradient();
  ForwardTrace trace;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.lr_classifier * learning_rate_factor(config, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < in.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, in.size() - start);
      ClassifierGradient acc = classifier.zero_gradient();
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t idx = order[start + i];
        const Vector logits = classifier.forward(in.point(idx), trace);
        Vector upstream = -softmax(logits);
        upstream[in.labels[idx]] += 1.0;
        upstream /= static_cast<double>(count);
        accumulate(acc, classifier.backward(trace, upstream));
      }
      auto& layers = classifier.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        vel.layers[l].weight = config.momentum * vel.layers[l].weight + acc.layers[l].weight -
                               config.weight_decay_classifier * layers[l].weight;
        vel.layers[l].bias = config.momentum * vel.layers[l].bias + acc.layers[l].bias -
                             config.weight_decay_classifier * layers[l].bias;
        layers[l].weight += lr * vel.layers[l].weight;
        layers[l].bias += lr * vel.layers[l].bias;
      }
    }
  }
  return classifier;
}

CcuModel initialize_model(const Dataset& in, const Dataset& out, const PipelineConfig& config) {
  if (in.size() == 0 || out.size() == 0) throw InvalidArgument("initialize_model: empty data");
  if (!in.labeled()) throw InvalidArgument("initialize_model: in-data must be labeled");
  if (in.dim() != out.dim()) throw InvalidArgument("initialize_model: in/out dimension mismatch");
  std::size_t m = config.num_classes;
  if (m == 0) m = static_cast<std::size_t>(*std::max_element(in.labels.begin(), in.labels.end())) + 1;
  in.validate(m);
  out.validate();

  const std::uint64_t seed = config.train.seed;
  // Image data: one fixed augmented pass feeds both the covariance and EM.
  const RowMatrix in_fit =
      in.layout ? augment(in, config.augment_pad, config.pad_mode, config.augment_flip, seed ^ 0xa5a5a5a5ULL).points
                : in.points;
  auto metric = std::make_shared<const MetricTransform>(fit_covariance(in_fit, config.metric_floor));

  EmOptions em;
  em.max_iters = config.em_iters;
  em.scale_floor = config.train.scale_floor;
  em.max_points = config.em_max_points;
  em.seed = seed + 1;
  GaussianMixture gin = em_init(in_fit, config.k_in, metric, em);
  em.seed = seed + 2;
  GaussianMixture gout = em_init(out.points, config.k_out, metric, em);
  project_scale_constraint(gin, gout);

  std::vector<std::size_t> widths{in.dim()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(m);
  return CcuModel(ReluClassifier::he_init(widths, seed + 3), std::move(gin), std::move(gout), config.lambda);
}

TrainResult fit_ccu(const Dataset& in, const Dataset& out, const PipelineConfig& config,
                    const Dataset* held_out, const TrainHooks& hooks) {
  TrainConfig tc = config.train;
  if (in.layout) {
    tc.augment_pad = config.augment_pad;
    tc.pad_mode = config.pad_mode;
    tc.augment_flip = config.augment_flip;
  }
  return train(initialize_model(in, out, config), in, out, tc, held_out, hooks);
}

}  // namespace ccu
