#include "naslab/network.hpp"

#include <fmt/format.h>

namespace naslab {

template <typename T>
Layer<T>& Network<T>::add(std::string name, std::unique_ptr<Layer<T>> layer, NasTag tag) {
  if (!layer) throw ConfigError("cannot add a null layer");
  if (find(name)) throw ConfigError(fmt::format("duplicate layer name '{}'", name));
  layers_.push_back({std::move(name), std::move(layer), tag});
  outputs_.emplace_back();
  pending_backward_ = false;
  return *layers_.back().layer;
}

template <typename T>
void Network<T>::set_tag(std::size_t i, NasTag tag) {
  if (tag.regularize_nas && i + 1 == layers_.size()) {
    throw ConfigError(fmt::format("prediction layer '{}' cannot be NAS-regularized", layers_.at(i).name));
  }
  layers_.at(i).tag = tag;
}

template <typename T>
std::optional<std::size_t> Network<T>::find(std::string_view name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename T>
std::vector<std::size_t> Network<T>::measured_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].tag.measure_nas) out.push_back(i);
  }
  return out;
}

template <typename T>
std::vector<std::size_t> Network<T>::regularized_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].tag.regularize_nas) out.push_back(i);
  }
  return out;
}

template <typename T>
void Network<T>::validate() const {
  if (layers_.empty()) throw ConfigError("network has no layers");
  if (layers_.back().tag.regularize_nas) {
    throw ConfigError(fmt::format("prediction layer '{}' cannot be NAS-regularized", layers_.back().name));
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, Mode mode) {
  validate();
  Tensor<T> x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].layer->forward(x, mode);
    const NasTag& tag = layers_[i].tag;
    if (keep_all_ || tag.measure_nas || tag.regularize_nas) {
      outputs_[i] = x;
    } else {
      outputs_[i].reset();
    }
  }
  logits_shape_ = x.shape();
  pending_backward_ = true;
  return x;
}

template <typename T>
const Tensor<T>& Network<T>::output(std::size_t i) const {
  if (i >= outputs_.size() || !outputs_[i]) {
    throw StateError(fmt::format("no retained output for layer {}; run forward on a tagged layer first", i));
  }
  return *outputs_[i];
}

template <typename T>
void Network<T>::backward(const Tensor<T>& loss_gradient, const std::map<std::size_t, Tensor<T>>& output_gradients) {
  if (!pending_backward_) throw StateError("backward called before forward");
  require_same_shape(loss_gradient.shape(), logits_shape_, "network backward");
  Tensor<T> grad = loss_gradient;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (auto it = output_gradients.find(i); it != output_gradients.end()) {
      require_same_shape(it->second.shape(), outputs_[i] ? outputs_[i]->shape() : grad.shape(),
                         fmt::format("extra gradient for layer '{}'", layers_[i].name));
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += it->second[k];
    }
    grad = layers_[i].layer->backward(grad);
  }
  pending_backward_ = false;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& entry : layers_) entry.layer->zero_grad();
}

template <typename T>
std::vector<Parameter<T>> Network<T>::parameters() {
  std::vector<Parameter<T>> out;
  for (auto& entry : layers_) {
    if (!entry.layer->trainable()) continue;
    for (auto& p : entry.layer->parameters()) {
      p.name = entry.name + "." + p.name;
      out.push_back(std::move(p));
    }
  }
  return out;
}

template <typename T>
std::vector<std::size_t> Network<T>::kink_signature() const {
  std::vector<std::size_t> out;
  for (const auto& entry : layers_) entry.layer->append_kink_signature(out);
  return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace naslab
