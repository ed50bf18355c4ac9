#include "naslab/training.hpp"

#include <cmath>
#include <fmt/format.h>

namespace naslab {

template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ConfigError(fmt::format("cross-entropy expects [B, C] logits, got {}", to_string(logits.shape())));
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw ConfigError(fmt::format("cross-entropy: {} labels for a batch of {}", labels.size(), batch));
  }
  LossResult<T> result{T{0}, Tensor<T>(logits.shape())};
  if (batch == 0) return result;
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw DataError(fmt::format("label {} at batch position {} outside [0, {})", label, b, classes));
    }
    const T* row = logits.raw() + b * classes;
    double peak = row[0];
    for (std::size_t c = 1; c < classes; ++c) peak = std::max<double>(peak, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - peak);
    const double log_denom = std::log(denom);
    total += log_denom - (row[label] - peak);
    T* grad = result.gradient.raw() + b * classes;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(row[c] - peak - log_denom);
      grad[c] = static_cast<T>((p - (static_cast<int>(c) == label ? 1.0 : 0.0)) / static_cast<double>(batch));
    }
  }
  result.loss = static_cast<T>(total / static_cast<double>(batch));
  return result;
}

std::string_view to_string(WeightPenaltyKind kind) { return kind == WeightPenaltyKind::l1 ? "l1" : "l2"; }

template <typename T>
T weight_penalty(std::span<const Parameter<T>> parameters, WeightPenaltyKind kind, T coefficient) {
  if (!(coefficient >= T{0})) throw ConfigError(fmt::format("weight penalty coefficient {} is negative", coefficient));
  double total = 0.0;
  for (const auto& p : parameters) {
    if (!p.is_weight) continue;
    const auto w = p.value->data();
    auto g = p.grad->data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (kind == WeightPenaltyKind::l1) {
        total += std::abs(static_cast<double>(w[i]));
        const T sign = w[i] > T{0} ? T{1} : (w[i] < T{0} ? T{-1} : T{0});
        g[i] += coefficient * sign;
      } else {
        total += static_cast<double>(w[i]) * w[i];
        g[i] += T{2} * coefficient * w[i];
      }
    }
  }
  return static_cast<T>(coefficient * total);
}

template <typename T>
void sgd_step(Tensor<T>& weights, const Tensor<T>& gradients, T learning_rate) {
  require_same_shape(weights.shape(), gradients.shape(), "sgd step");
  auto w = weights.data();
  const auto g = gradients.data();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= learning_rate * g[i];
}

template <typename T>
Sgd<T>::Sgd(T learning_rate) : learning_rate_(learning_rate) {
  if (!(learning_rate >= T{0})) throw ConfigError("learning rate must be non-negative");
}

template <typename T>
void Sgd<T>::step(std::span<const Parameter<T>> parameters) const {
  for (const auto& p : parameters) sgd_step(*p.value, *p.grad, learning_rate_);
}

template <typename T>
std::vector<int> predict_classes(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ConfigError("predict_classes expects [B, C] logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  std::vector<int> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = logits.raw() + b * classes;
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[b] = static_cast<int>(best);
  }
  return out;
}

#define NASLAB_INSTANTIATE_TRAINING(T)                                                                \
  template LossResult<T> cross_entropy_loss<T>(const Tensor<T>&, std::span<const int>);             \
  template T weight_penalty<T>(std::span<const Parameter<T>>, WeightPenaltyKind, T);                \
  template void sgd_step<T>(Tensor<T>&, const Tensor<T>&, T);                                       \
  template class Sgd<T>;                                                                            \
  template std::vector<int> predict_classes<T>(const Tensor<T>&);

NASLAB_INSTANTIATE_TRAINING(float)
NASLAB_INSTANTIATE_TRAINING(double)

}  // namespace naslab
