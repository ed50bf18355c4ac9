#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "naslab/network.hpp"

namespace naslab {

template <typename T>
struct LossResult {
  T loss{};
  Tensor<T> gradient;  // dL/dlogits
};

/// Mean over the batch of -log softmax(logits)[label], max-subtracted.
/// DataError if a label is outside [0, C).
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels);

enum class WeightPenaltyKind { l1, l2 };

std::string_view to_string(WeightPenaltyKind kind);

/// L1: c * sum|w|, gradient c * sign(w). L2: c * sum w^2, gradient 2 c w.
/// Only parameters with is_weight set contribute; gradients are added to
/// each parameter's accumulator. ConfigError on a negative coefficient.
template <typename T>
T weight_penalty(std::span<const Parameter<T>> parameters, WeightPenaltyKind kind, T coefficient);

/// w <- w - lr * g. StateError on shape mismatch.
template <typename T>
void sgd_step(Tensor<T>& weights, const Tensor<T>& gradients, T learning_rate);

/// Plain SGD: no momentum, schedule or decay.
template <typename T>
class Sgd {
 public:
  explicit Sgd(T learning_rate);

  void step(std::span<const Parameter<T>> parameters) const;
  T learning_rate() const { return learning_rate_; }

 private:
  T learning_rate_;
};

/// Index of the largest logit per row.
template <typename T>
std::vector<int> predict_classes(const Tensor<T>& logits);

}  // namespace naslab
