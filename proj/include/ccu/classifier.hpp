#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ccu/types.hpp"

namespace ccu {

struct DenseLayer {
  RowMatrix weight;  // out x in
  Vector bias;       // out
};

/// Activations recorded by a forward pass, consumed by backward().
struct ForwardTrace {
  std::vector<Vector> inputs;       // input to each layer
  std::vector<Vector> preactivations;
};

struct ClassifierGradient {
  std::vector<DenseLayer> layers;  // same shapes as the network
  Vector x;
};

/// Fully connected ReLU network; identity on the output layer.
class ReluClassifier {
 public:
  explicit ReluClassifier(std::vector<DenseLayer> layers);

  /// He initialization (normal, std sqrt(2/fan_in)), zero biases.
  /// widths = {input, hidden..., classes}.
  static ReluClassifier he_init(std::span<const std::size_t> widths, std::uint64_t seed);

  std::size_t input_dim() const { return static_cast<std::size_t>(layers_.front().weight.cols()); }
  std::size_t num_classes() const { return static_cast<std::size_t>(layers_.back().weight.rows()); }
  std::vector<std::size_t> widths() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Vector forward(const Vector& x) const;
  Vector forward(const Vector& x, ForwardTrace& trace) const;

  /// Reverse-mode gradient of upstream^T f(x). ReLU'(0) is taken as 0.
  ClassifierGradient backward(const ForwardTrace& trace, const Vector& upstream) const;
  ClassifierGradient backward(const Vector& x, const Vector& upstream) const;

  ClassifierGradient zero_gradient() const;

 private:
  void check_input(const Vector& x) const;
  std::vector<DenseLayer> layers_;
};

/// Max-subtracted softmax.
Vector softmax(const Vector& logits);
Vector log_softmax(const Vector& logits);

/// Lowest index attaining the maximum.
std::size_t argmax(const Vector& v);

}  // namespace ccu
