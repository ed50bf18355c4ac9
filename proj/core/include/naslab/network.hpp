#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "naslab/layers.hpp"

namespace naslab {

/// Per-layer NAS tags. The tagged layer's output is the pre-activation that
/// gets measured and, optionally, penalized.
struct NasTag {
  bool measure_nas = false;
  bool regularize_nas = false;
};

/// Ordered stack of layers. The last layer is the prediction layer.
///
/// Outputs of tagged layers are retained after every forward pass so the
/// metrics and the regularizer can read them; `backward` accepts extra
/// gradients for those outputs and chains them through earlier layers.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  Layer<T>& add(std::string name, std::unique_ptr<Layer<T>> layer, NasTag tag = {});

  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i).layer; }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i).layer; }
  const std::string& name(std::size_t i) const { return layers_.at(i).name; }
  const NasTag& tag(std::size_t i) const { return layers_.at(i).tag; }
  void set_tag(std::size_t i, NasTag tag);
  std::optional<std::size_t> find(std::string_view name) const;

  std::vector<std::size_t> measured_layers() const;
  std::vector<std::size_t> regularized_layers() const;

  /// ConfigError if the prediction layer is tagged for regularization or the network is empty.
  void validate() const;

  Tensor<T> forward(const Tensor<T>& input, Mode mode);

  /// Output of layer `i` from the last forward pass. Available for tagged
  /// layers, or for every layer when keep_all_outputs is on.
  const Tensor<T>& output(std::size_t i) const;
  void set_keep_all_outputs(bool keep) { keep_all_ = keep; }

  /// Backpropagates `loss_gradient` (dL/dlogits) plus any `output_gradients`
  /// keyed by layer index. Parameter gradients accumulate; call zero_grad()
  /// between steps. StateError if no forward pass is pending.
  void backward(const Tensor<T>& loss_gradient, const std::map<std::size_t, Tensor<T>>& output_gradients = {});

  void zero_grad();

  /// Trainable parameters of all non-frozen layers, in layer order.
  std::vector<Parameter<T>> parameters();

  void set_trainable(std::size_t i, bool trainable) { layers_.at(i).layer->set_trainable(trainable); }

  /// Concatenated kink signatures of every layer from the last forward pass.
  std::vector<std::size_t> kink_signature() const;

 private:
  struct Entry {
    std::string name;
    std::unique_ptr<Layer<T>> layer;
    NasTag tag;
  };

  std::vector<Entry> layers_;
  std::vector<std::optional<Tensor<T>>> outputs_;
  Shape logits_shape_;
  bool pending_backward_ = false;
  bool keep_all_ = false;
};

}  // namespace naslab
