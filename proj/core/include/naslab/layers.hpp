#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "naslab/random.hpp"
#include "naslab/tensor.hpp"

namespace naslab {

enum class Mode { train, eval };

enum class LayerKind { conv, max_pool, dense, relu, batch_norm, dropout };

std::string_view to_string(LayerKind kind);

/// Geometry of a 2-D convolution. Weights are laid out [out, in, kh, kw].
struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  bool bias = true;

  Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
};

/// floor((in + 2 pad - kernel) / stride) + 1, or ConfigError when the kernel does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

/// Cross-correlation of a [B, C_in, H, W] batch with [D, C_in, kh, kw] weights.
/// `bias` may be null; otherwise it must have shape [D].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                         const ConvSpec& spec);

/// Declarative description of one layer, as produced by the network builder.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;

  ConvSpec conv;

  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;

  std::size_t dense_in = 0;
  std::size_t dense_out = 0;
  bool dense_bias = true;

  double dropout_rate = 0.0;

  std::size_t norm_channels = 0;
  double norm_momentum = 0.9;
  double norm_epsilon = 1e-5;
};

/// ConfigError if a kind-specific parameter is out of range.
void validate(const LayerSpec& spec);

/// A trainable tensor and its gradient accumulator. `is_weight` is false for
/// biases and normalization shifts/scales, which weight penalties skip.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T>* value = nullptr;
  Tensor<T>* grad = nullptr;
  bool is_weight = true;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  virtual Shape output_shape(const Shape& input) const = 0;

  /// Computes the output and caches whatever backward() needs.
  virtual Tensor<T> forward(const Tensor<T>& input, Mode mode) = 0;

  /// Takes dL/d(output) of the last forward call, accumulates parameter
  /// gradients and returns dL/d(input).
  virtual Tensor<T> backward(const Tensor<T>& grad_output) = 0;

  virtual std::vector<Parameter<T>> parameters() { return {}; }

  void zero_grad() {
    for (auto& p : parameters()) p.grad->fill(T{0});
  }

  bool trainable() const { return trainable_; }
  void set_trainable(bool value) { trainable_ = value; }

  /// Appends the discrete routing decisions of the last forward (ReLU gates,
  /// pooling argmax). Finite-difference checks use it to skip probes that
  /// cross a kink.
  virtual void append_kink_signature(std::vector<std::size_t>& /*out*/) const {}

 protected:
  bool trainable_ = true;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  explicit Conv2d(const ConvSpec& spec);

  LayerKind kind() const override { return LayerKind::conv; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  std::vector<Parameter<T>> parameters() override;

  /// Fan-in scaled uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)); bias zero.
  void initialize(Rng& rng);

  const ConvSpec& spec() const { return spec_; }
  Tensor<T>& weights() { return weights_; }
  const Tensor<T>& weights() const { return weights_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& bias() const { return bias_; }

 private:
  ConvSpec spec_;
  Tensor<T> weights_;
  Tensor<T> bias_;
  Tensor<T> weights_grad_;
  Tensor<T> bias_grad_;
  AlignedVector<T> columns_;
  Shape input_shape_;
  std::size_t out_h_ = 0;
  std::size_t out_w_ = 0;
  bool cached_ = false;
};

template <typename T>
class MaxPool2d final : public Layer<T> {
 public:
  MaxPool2d(std::size_t window, std::size_t stride);

  LayerKind kind() const override { return LayerKind::max_pool; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  void append_kink_signature(std::vector<std::size_t>& out) const override;

 private:
  std::size_t window_;
  std::size_t stride_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
  bool cached_ = false;
};

/// Affine map on the flattened trailing dimensions: y = x W^T + b, W is [out, in].
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::size_t in_features, std::size_t out_features, bool bias = true);

  LayerKind kind() const override { return LayerKind::dense; }
  Shape output_shape(const Shape& input) const override;
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  std::vector<Parameter<T>> parameters() override;

  void initialize(Rng& rng);

  Tensor<T>& weights() { return weights_; }
  const Tensor<T>& weights() const { return weights_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& bias() const { return bias_; }

 private:
  std::size_t in_;
  std::size_t out_;
  bool has_bias_;
  Tensor<T> weights_;
  Tensor<T> bias_;
  Tensor<T> weights_grad_;
  Tensor<T> bias_grad_;
  Tensor<T> input_;
  bool cached_ = false;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  LayerKind kind() const override { return LayerKind::relu; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  void append_kink_signature(std::vector<std::size_t>& out) const override;

 private:
  std::vector<std::uint8_t> mask_;
  Shape shape_;
  bool cached_ = false;
};

/// Per-channel normalization over batch and spatial axes of [B, C, ...].
/// `momentum` is the weight kept by the running statistics on each update.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  BatchNorm(std::size_t channels, double momentum = 0.9, double epsilon = 1e-5);

  LayerKind kind() const override { return LayerKind::batch_norm; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;
  std::vector<Parameter<T>> parameters() override;

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  const Tensor<T>& running_mean() const { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }
  const Tensor<T>& running_var() const { return running_var_; }

 private:
  std::size_t channels_;
  double momentum_;
  double epsilon_;
  Tensor<T> gamma_;
  Tensor<T> beta_;
  Tensor<T> gamma_grad_;
  Tensor<T> beta_grad_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  Tensor<T> normalized_;
  std::vector<T> inv_std_;
  Mode mode_ = Mode::eval;
  bool cached_ = false;
};

/// Inverted dropout: kept units are scaled by 1 / (1 - rate) in train mode.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(double rate, std::uint64_t seed);

  LayerKind kind() const override { return LayerKind::dropout; }
  Shape output_shape(const Shape& input) const override { return input; }
  Tensor<T> forward(const Tensor<T>& input, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_output) override;

  double rate() const { return rate_; }

  /// Reuse the last train-mode mask instead of drawing a new one (gradient checks).
  void freeze_mask(bool frozen) { mask_frozen_ = frozen; }

 private:
  double rate_;
  Rng rng_;
  std::vector<T> mask_;
  Shape shape_;
  bool mask_frozen_ = false;
  bool cached_ = false;
};

/// Builds an initialized layer from its spec. Dropout layers draw their mask seed from `rng`.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, Rng& rng);

}  // namespace naslab
