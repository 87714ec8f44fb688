#include "ccu/classifier.hpp"

#include <cmath>
#include <random>
#include <string>

#include "ccu/errors.hpp"
#include "ccu/kernels.hpp"

namespace ccu {

ReluClassifier::ReluClassifier(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("classifier: need at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weight.rows() == 0 || layer.weight.cols() == 0) {
      throw InvalidArgument("classifier: empty layer " + std::to_string(l));
    }
    if (layer.bias.size() != layer.weight.rows()) {
      throw InvalidArgument("classifier: bias size mismatch in layer " + std::to_string(l));
    }
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw InvalidArgument("classifier: layer " + std::to_string(l) +
                            " input width does not match previous output");
    }
  }
}

ReluClassifier ReluClassifier::he_init(std::span<const std::size_t> widths, std::uint64_t seed) {
  if (widths.size() < 2) throw InvalidArgument("classifier: need input and output widths");
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(widths[l]);
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    DenseLayer layer{RowMatrix(out, in), Vector::Zero(out)};
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = normal(rng);
    layers.push_back(std::move(layer));
  }
  return ReluClassifier(std::move(layers));
}

std::vector<std::size_t> ReluClassifier::widths() const {
  std::vector<std::size_t> w{input_dim()};
  for (const auto& layer : layers_) w.push_back(static_cast<std::size_t>(layer.weight.rows()));
  return w;
}

void ReluClassifier::check_input(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw InvalidArgument("classifier: input dimension " + std::to_string(x.size()) +
                          ", expected " + std::to_string(input_dim()));
  }
  if (!x.allFinite()) throw InvalidArgument("classifier: non-finite input");
}

Vector ReluClassifier::forward(const Vector& x) const {
  check_input(x);
  const auto& kt = kernels::active();
  Vector h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Vector next(layer.weight.rows());
    kt.gemv(layer.weight.data(), static_cast<std::size_t>(layer.weight.rows()),
            static_cast<std::size_t>(layer.weight.cols()), h.data(), layer.bias.data(), next.data());
    if (l + 1 < layers_.size()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  return h;
}

Vector ReluClassifier::forward(const Vector& x, ForwardTrace& trace) const {
  check_input(x);
  const auto& kt = kernels::active();
  trace.inputs.resize(layers_.size());
  trace.preactivations.resize(layers_.size());
  Vector h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    trace.inputs[l] = h;
    Vector pre(layer.weight.rows());
    kt.gemv(layer.weight.data(), static_cast<std::size_t>(layer.weight.rows()),
            static_cast<std::size_t>(layer.weight.cols()), h.data(), layer.bias.data(), pre.data());
    trace.preactivations[l] = pre;
    h = (l + 1 < layers_.size()) ? Vector(pre.cwiseMax(0.0)) : pre;
  }
  return h;
}

ClassifierGradient ReluClassifier::zero_gradient() const {
  ClassifierGradient g;
  g.layers.reserve(layers_.size());
  for (const auto& layer : layers_) {
    g.layers.push_back({RowMatrix::Zero(layer.weight.rows(), layer.weight.cols()),
                        Vector::Zero(layer.bias.size())});
  }
  g.x = Vector::Zero(static_cast<Eigen::Index>(input_dim()));
  return g;
}

ClassifierGradient ReluClassifier::backward(const ForwardTrace& trace, const Vector& upstream) const {
  if (static_cast<std::size_t>(upstream.size()) != num_classes()) {
    throw InvalidArgument("classifier: upstream gradient has wrong size");
  }
  if (trace.inputs.size() != layers_.size()) {
    throw InvalidArgument("classifier: forward trace does not match network");
  }
  const auto& kt = kernels::active();
  ClassifierGradient g = zero_gradient();
  Vector delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    if (l + 1 < layers_.size()) {
      const Vector& pre = trace.preactivations[l];
      for (Eigen::Index i = 0; i < delta.size(); ++i) {
        if (!(pre[i] > 0.0)) delta[i] = 0.0;
      }
    }
    const Vector& input = trace.inputs[l];
    const auto cols = static_cast<std::size_t>(layer.weight.cols());
    auto& gw = g.layers[l].weight;
    Vector back = Vector::Zero(layer.weight.cols());
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      const double di = delta[i];
      if (di == 0.0) continue;
      kt.axpy(di, input.data(), gw.row(i).data(), cols);
      kt.axpy(di, layer.weight.row(i).data(), back.data(), cols);
    }
    g.layers[l].bias = delta;
    delta = std::move(back);
  }
  g.x = std::move(delta);
  return g;
}

ClassifierGradient ReluClassifier::backward(const Vector& x, const Vector& upstream) const {
  ForwardTrace trace;
  forward(x, trace);
  return backward(trace, upstream);
}

Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector e = (logits.array() - top).exp().matrix();
  return e / e.sum();
}

Vector log_softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

std::size_t argmax(const Vector& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<std::size_t>(best);
}

}  // namespace ccu
