#include "naslab/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace naslab {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

std::size_t trailing_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

// Writes the [C*kh*kw, M*N] patch matrix of one sample.
template <typename T>
void im2col(const T* image, const ConvSpec& s, std::size_t height, std::size_t width, std::size_t out_h,
            std::size_t out_w, T* columns) {
  const std::size_t plane = out_h * out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    const T* channel = image + c * height * width;
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj, ++row) {
        T* dst = columns + row * plane;
        for (std::size_t m = 0; m < out_h; ++m) {
          const auto hi = static_cast<std::ptrdiff_t>(m * s.stride_h + ki) - static_cast<std::ptrdiff_t>(s.pad_h);
          T* dst_row = dst + m * out_w;
          if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(dst_row, dst_row + out_w, T{0});
            continue;
          }
          const T* src_row = channel + static_cast<std::size_t>(hi) * width;
          for (std::size_t n = 0; n < out_w; ++n) {
            const auto wi = static_cast<std::ptrdiff_t>(n * s.stride_w + kj) - static_cast<std::ptrdiff_t>(s.pad_w);
            dst_row[n] = (wi < 0 || wi >= static_cast<std::ptrdiff_t>(width)) ? T{0} : src_row[wi];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* columns, const ConvSpec& s, std::size_t height, std::size_t width, std::size_t out_h,
            std::size_t out_w, T* image) {
  const std::size_t plane = out_h * out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < s.in_channels; ++c) {
    T* channel = image + c * height * width;
    for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < s.kernel_w; ++kj, ++row) {
        const T* src = columns + row * plane;
        for (std::size_t m = 0; m < out_h; ++m) {
          const auto hi = static_cast<std::ptrdiff_t>(m * s.stride_h + ki) - static_cast<std::ptrdiff_t>(s.pad_h);
          if (hi < 0 || hi >= static_cast<std::ptrdiff_t>(height)) continue;
          T* dst_row = channel + static_cast<std::size_t>(hi) * width;
          const T* src_row = src + m * out_w;
          for (std::size_t n = 0; n < out_w; ++n) {
            const auto wi = static_cast<std::ptrdiff_t>(n * s.stride_w + kj) - static_cast<std::ptrdiff_t>(s.pad_w);
            if (wi >= 0 && wi < static_cast<std::ptrdiff_t>(width)) dst_row[wi] += src_row[n];
          }
        }
      }
    }
  }
}

void check_conv_input(const Shape& input, const ConvSpec& spec) {
  if (input.size() != 4) {
    throw ConfigError(fmt::format("conv expects a [B, C, H, W] input, got {}", to_string(input)));
  }
  if (input[1] != spec.in_channels) {
    throw ConfigError(fmt::format("conv expects {} input channels, got {} (input {})", spec.in_channels, input[1],
                                  to_string(input)));
  }
}

template <typename T>
void fan_in_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
void require_cached(bool cached, LayerKind kind) {
  if (!cached) throw StateError(fmt::format("{} backward called before forward", to_string(kind)));
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::max_pool: return "max-pool";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::batch_norm: return "batch-norm";
    case LayerKind::dropout: return "dropout";
  }
  return "unknown";
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ConfigError("stride must be positive");
  if (kernel == 0) throw ConfigError("kernel extent must be positive");
  if (kernel > in + 2 * pad) {
    throw ConfigError(fmt::format("kernel extent {} exceeds padded input extent {}", kernel, in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

void validate(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::conv:
      if (spec.conv.in_channels == 0 || spec.conv.out_channels == 0) {
        throw ConfigError(fmt::format("layer '{}': conv channel counts must be positive", spec.name));
      }
      if (spec.conv.stride_h == 0 || spec.conv.stride_w == 0) {
        throw ConfigError(fmt::format("layer '{}': conv stride must be positive", spec.name));
      }
      break;
    case LayerKind::max_pool:
      if (spec.pool_window == 0 || spec.pool_stride == 0) {
        throw ConfigError(fmt::format("layer '{}': pool window and stride must be positive", spec.name));
      }
      break;
    case LayerKind::dense:
      if (spec.dense_in == 0 || spec.dense_out == 0) {
        throw ConfigError(fmt::format("layer '{}': dense widths must be positive", spec.name));
      }
      break;
    case LayerKind::dropout:
      if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) {
        throw ConfigError(fmt::format("layer '{}': dropout rate {} outside [0, 1)", spec.name, spec.dropout_rate));
      }
      break;
    case LayerKind::batch_norm:
      if (!(spec.norm_epsilon > 0.0)) {
        throw ConfigError(fmt::format("layer '{}': batch-norm epsilon must be > 0", spec.name));
      }
      if (!(spec.norm_momentum >= 0.0 && spec.norm_momentum < 1.0)) {
        throw ConfigError(fmt::format("layer '{}': batch-norm momentum outside [0, 1)", spec.name));
      }
      if (spec.norm_channels == 0) {
        throw ConfigError(fmt::format("layer '{}': batch-norm channel count must be positive", spec.name));
      }
      break;
    case LayerKind::relu: break;
  }
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                         const ConvSpec& spec) {
  check_conv_input(input.shape(), spec);
  if (weights.shape() != spec.weight_shape()) {
    throw ConfigError(fmt::format("conv weights have shape {}, expected {}", to_string(weights.shape()),
                                  to_string(spec.weight_shape())));
  }
  if (bias != nullptr && bias->shape() != Shape{spec.out_channels}) {
    throw ConfigError(fmt::format("conv bias has shape {}, expected [{}]", to_string(bias->shape()),
                                  spec.out_channels));
  }
  const std::size_t batch = input.dim(0), height = input.dim(2), width = input.dim(3);
  const std::size_t out_h = conv_output_extent(height, spec.kernel_h, spec.stride_h, spec.pad_h);
  const std::size_t out_w = conv_output_extent(width, spec.kernel_w, spec.stride_w, spec.pad_w);
  const std::size_t plane = out_h * out_w;
  const std::size_t patch = spec.patch_size();

  Tensor<T> output({batch, spec.out_channels, out_h, out_w});
  AlignedVector<T> columns(patch * plane);
  ConstMatrixMap<T> w(weights.raw(), static_cast<Eigen::Index>(spec.out_channels), static_cast<Eigen::Index>(patch));
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(input.raw() + b * spec.in_channels * height * width, spec, height, width, out_h, out_w, columns.data());
    ConstMatrixMap<T> cols(columns.data(), static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
    MatrixMap<T> out(output.raw() + b * spec.out_channels * plane, static_cast<Eigen::Index>(spec.out_channels),
                     static_cast<Eigen::Index>(plane));
    out.noalias() = w * cols;
    if (bias != nullptr) {
      for (std::size_t d = 0; d < spec.out_channels; ++d) out.row(static_cast<Eigen::Index>(d)).array() += (*bias)[d];
    }
  }
  return output;
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const ConvSpec& spec)
    : spec_(spec),
      weights_(spec.weight_shape()),
      bias_(Shape{spec.bias ? spec.out_channels : 0}),
      weights_grad_(spec.weight_shape()),
      bias_grad_(Shape{spec.bias ? spec.out_channels : 0}) {
  if (spec.in_channels == 0 || spec.out_channels == 0) throw ConfigError("conv channel counts must be positive");
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& input) const {
  check_conv_input(input, spec_);
  return {input[0], spec_.out_channels, conv_output_extent(input[2], spec_.kernel_h, spec_.stride_h, spec_.pad_h),
          conv_output_extent(input[3], spec_.kernel_w, spec_.stride_w, spec_.pad_w)};
}

template <typename T>
void Conv2d<T>::initialize(Rng& rng) {
  fan_in_uniform(weights_, spec_.patch_size(), rng);
  bias_.fill(T{0});
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& input, Mode /*mode*/) {
  const Shape out_shape = output_shape(input.shape());
  const std::size_t batch = input.dim(0), height = input.dim(2), width = input.dim(3);
  out_h_ = out_shape[2];
  out_w_ = out_shape[3];
  const std::size_t plane = out_h_ * out_w_;
  const std::size_t patch = spec_.patch_size();

  Tensor<T> output(out_shape);
  columns_.resize(batch * patch * plane);
  ConstMatrixMap<T> w(weights_.raw(), static_cast<Eigen::Index>(spec_.out_channels), static_cast<Eigen::Index>(patch));
  for (std::size_t b = 0; b < batch; ++b) {
    T* cols_ptr = columns_.data() + b * patch * plane;
    im2col(input.raw() + b * spec_.in_channels * height * width, spec_, height, width, out_h_, out_w_, cols_ptr);
    ConstMatrixMap<T> cols(cols_ptr, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
    MatrixMap<T> out(output.raw() + b * spec_.out_channels * plane, static_cast<Eigen::Index>(spec_.out_channels),
                     static_cast<Eigen::Index>(plane));
    out.noalias() = w * cols;
    if (spec_.bias) {
      for (std::size_t d = 0; d < spec_.out_channels; ++d) out.row(static_cast<Eigen::Index>(d)).array() += bias_[d];
    }
  }
  input_shape_ = input.shape();
  cached_ = true;
  return output;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_output) {
  require_cached<T>(cached_, kind());
  const Shape expected{input_shape_[0], spec_.out_channels, out_h_, out_w_};
  require_same_shape(grad_output.shape(), expected, "conv backward");
  const std::size_t batch = input_shape_[0], height = input_shape_[2], width = input_shape_[3];
  const std::size_t plane = out_h_ * out_w_;
  const std::size_t patch = spec_.patch_size();
  const auto d_rows = static_cast<Eigen::Index>(spec_.out_channels);

  Tensor<T> grad_input(input_shape_);
  AlignedVector<T> grad_columns(patch * plane);
  ConstMatrixMap<T> w(weights_.raw(), d_rows, static_cast<Eigen::Index>(patch));
  MatrixMap<T> gw(weights_grad_.raw(), d_rows, static_cast<Eigen::Index>(patch));
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatrixMap<T> gout(grad_output.raw() + b * spec_.out_channels * plane, d_rows, static_cast<Eigen::Index>(plane));
    ConstMatrixMap<T> cols(columns_.data() + b * patch * plane, static_cast<Eigen::Index>(patch),
                           static_cast<Eigen::Index>(plane));
    if (this->trainable_) {
      gw.noalias() += gout * cols.transpose();
      if (spec_.bias) {
        for (std::size_t d = 0; d < spec_.out_channels; ++d) bias_grad_[d] += gout.row(static_cast<Eigen::Index>(d)).sum();
      }
    }
    MatrixMap<T> gcols(grad_columns.data(), static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(plane));
    gcols.noalias() = w.transpose() * gout;
    col2im(grad_columns.data(), spec_, height, width, out_h_, out_w_,
           grad_input.raw() + b * spec_.in_channels * height * width);
  }
  return grad_input;
}

template <typename T>
std::vector<Parameter<T>> Conv2d<T>::parameters() {
  std::vector<Parameter<T>> params{{"weights", &weights_, &weights_grad_, true}};
  if (spec_.bias) params.push_back({"bias", &bias_, &bias_grad_, false});
  return params;
}

// ---------------------------------------------------------------- MaxPool2d

template <typename T>
MaxPool2d<T>::MaxPool2d(std::size_t window, std::size_t stride) : window_(window), stride_(stride) {
  if (window == 0 || stride == 0) throw ConfigError("pool window and stride must be positive");
}

template <typename T>
Shape MaxPool2d<T>::output_shape(const Shape& input) const {
  if (input.size() != 4) throw ConfigError(fmt::format("max-pool expects [B, C, H, W], got {}", to_string(input)));
  return {input[0], input[1], conv_output_extent(input[2], window_, stride_, 0),
          conv_output_extent(input[3], window_, stride_, 0)};
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& input, Mode /*mode*/) {
  const Shape out_shape = output_shape(input.shape());
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t height = input.dim(2), width = input.dim(3);
  const std::size_t out_h = out_shape[2], out_w = out_shape[3];
  Tensor<T> output(out_shape);
  argmax_.resize(output.size());
  std::size_t o = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * height * width;
    for (std::size_t m = 0; m < out_h; ++m) {
      for (std::size_t n = 0; n < out_w; ++n, ++o) {
        std::size_t best = base + m * stride_ * width + n * stride_;
        for (std::size_t i = 0; i < window_; ++i) {
          for (std::size_t j = 0; j < window_; ++j) {
            const std::size_t idx = base + (m * stride_ + i) * width + n * stride_ + j;
            if (input[idx] > input[best]) best = idx;
          }
        }
        output[o] = input[best];
        argmax_[o] = best;
      }
    }
  }
  input_shape_ = input.shape();
  cached_ = true;
  return output;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_output) {
  require_cached<T>(cached_, kind());
  if (grad_output.size() != argmax_.size()) throw StateError("max-pool backward: gradient size mismatch");
  Tensor<T> grad_input(input_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) grad_input[argmax_[o]] += grad_output[o];
  return grad_input;
}

template <typename T>
void MaxPool2d<T>::append_kink_signature(std::vector<std::size_t>& out) const {
  out.insert(out.end(), argmax_.begin(), argmax_.end());
}

// ---------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::size_t in_features, std::size_t out_features, bool bias)
    : in_(in_features),
      out_(out_features),
      has_bias_(bias),
      weights_({out_features, in_features}),
      bias_(Shape{bias ? out_features : 0}),
      weights_grad_({out_features, in_features}),
      bias_grad_(Shape{bias ? out_features : 0}) {
  if (in_features == 0 || out_features == 0) throw ConfigError("dense widths must be positive");
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& input) const {
  if (input.size() < 2 || trailing_size(input) != in_) {
    throw ConfigError(fmt::format("dense expects {} features per sample, got input {}", in_, to_string(input)));
  }
  return {input[0], out_};
}

template <typename T>
void Dense<T>::initialize(Rng& rng) {
  fan_in_uniform(weights_, in_, rng);
  bias_.fill(T{0});
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& input, Mode /*mode*/) {
  const Shape out_shape = output_shape(input.shape());
  const auto batch = static_cast<Eigen::Index>(input.dim(0));
  Tensor<T> output(out_shape);
  ConstMatrixMap<T> x(input.raw(), batch, static_cast<Eigen::Index>(in_));
  ConstMatrixMap<T> w(weights_.raw(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  MatrixMap<T> y(output.raw(), batch, static_cast<Eigen::Index>(out_));
  y.noalias() = x * w.transpose();
  if (has_bias_) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias_.raw(), static_cast<Eigen::Index>(out_));
    y.rowwise() += b;
  }
  input_ = input;
  cached_ = true;
  return output;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_output) {
  require_cached<T>(cached_, kind());
  const auto batch = static_cast<Eigen::Index>(input_.dim(0));
  require_same_shape(grad_output.shape(), Shape{input_.dim(0), out_}, "dense backward");
  ConstMatrixMap<T> gy(grad_output.raw(), batch, static_cast<Eigen::Index>(out_));
  ConstMatrixMap<T> x(input_.raw(), batch, static_cast<Eigen::Index>(in_));
  ConstMatrixMap<T> w(weights_.raw(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  if (this->trainable_) {
    MatrixMap<T> gw(weights_grad_.raw(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    gw.noalias() += gy.transpose() * x;
    if (has_bias_) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(bias_grad_.raw(), static_cast<Eigen::Index>(out_));
      gb += gy.colwise().sum();
    }
  }
  Tensor<T> grad_input(input_.shape());
  MatrixMap<T> gx(grad_input.raw(), batch, static_cast<Eigen::Index>(in_));
  gx.noalias() = gy * w;
  return grad_input;
}

template <typename T>
std::vector<Parameter<T>> Dense<T>::parameters() {
  std::vector<Parameter<T>> params{{"weights", &weights_, &weights_grad_, true}};
  if (has_bias_) params.push_back({"bias", &bias_, &bias_grad_, false});
  return params;
}

// ---------------------------------------------------------------- Relu

template <typename T>
Tensor<T> Relu<T>::forward(const Tensor<T>& input, Mode /*mode*/) {
  Tensor<T> output(input.shape());
  mask_.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool on = input[i] > T{0};
    mask_[i] = on ? 1 : 0;
    output[i] = on ? input[i] : T{0};
  }
  shape_ = input.shape();
  cached_ = true;
  return output;
}

template <typename T>
Tensor<T> Relu<T>::backward(const Tensor<T>& grad_output) {
  require_cached<T>(cached_, kind());
  require_same_shape(grad_output.shape(), shape_, "relu backward");
  Tensor<T> grad_input(shape_);
  for (std::size_t i = 0; i < mask_.size(); ++i) grad_input[i] = mask_[i] ? grad_output[i] : T{0};
  return grad_input;
}

template <typename T>
void Relu<T>::append_kink_signature(std::vector<std::size_t>& out) const {
  out.insert(out.end(), mask_.begin(), mask_.end());
}

// ---------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, double momentum, double epsilon)
    : channels_(channels),
      momentum_(momentum),
      epsilon_(epsilon),
      gamma_(Shape{channels}, T{1}),
      beta_(Shape{channels}, T{0}),
      gamma_grad_(Shape{channels}),
      beta_grad_(Shape{channels}),
      running_mean_(Shape{channels}, T{0}),
      running_var_(Shape{channels}, T{1}) {
  if (!(epsilon > 0.0)) throw ConfigError("batch-norm epsilon must be > 0");
  if (channels == 0) throw ConfigError("batch-norm channel count must be positive");
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& input, Mode mode) {
  if (input.rank() < 2 || input.dim(1) != channels_) {
    throw ConfigError(fmt::format("batch-norm expects [B, {}, ...], got {}", channels_, to_string(input.shape())));
  }
  const std::size_t batch = input.dim(0);
  const std::size_t spatial = trailing_size(input.shape()) / channels_;
  const std::size_t count = batch * spatial;
  if (mode == Mode::train && count == 0) throw ConfigError("batch-norm needs a non-empty batch in train mode");

  Tensor<T> output(input.shape());
  normalized_ = Tensor<T>(input.shape());
  inv_std_.assign(channels_, T{0});
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t b = 0; b < batch; ++b) {
        const T* x = input.raw() + (b * channels_ + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) mean += x[i];
      }
      mean /= static_cast<double>(count);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* x = input.raw() + (b * channels_ + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) var += (x[i] - mean) * (x[i] - mean);
      }
      var /= static_cast<double>(count);
      const double unbiased = count > 1 ? var * static_cast<double>(count) / static_cast<double>(count - 1) : var;
      running_mean_[c] = static_cast<T>(momentum_ * running_mean_[c] + (1.0 - momentum_) * mean);
      running_var_[c] = static_cast<T>(momentum_ * running_var_[c] + (1.0 - momentum_) * unbiased);
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + epsilon_);
    inv_std_[c] = static_cast<T>(inv_std);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const T xhat = static_cast<T>((input[off + i] - mean) * inv_std);
        normalized_[off + i] = xhat;
        output[off + i] = gamma_[c] * xhat + beta_[c];
      }
    }
  }
  mode_ = mode;
  cached_ = true;
  return output;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_output) {
  require_cached<T>(cached_, kind());
  require_same_shape(grad_output.shape(), normalized_.shape(), "batch-norm backward");
  const std::size_t batch = normalized_.dim(0);
  const std::size_t spatial = trailing_size(normalized_.shape()) / channels_;
  const auto count = static_cast<double>(batch * spatial);
  Tensor<T> grad_input(normalized_.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_dy += grad_output[off + i];
        sum_dy_xhat += grad_output[off + i] * normalized_[off + i];
      }
    }
    if (this->trainable_) {
      gamma_grad_[c] += static_cast<T>(sum_dy_xhat);
      beta_grad_[c] += static_cast<T>(sum_dy);
    }
    const double g = gamma_[c];
    const double inv_std = inv_std_[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels_ + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        if (mode_ == Mode::train) {
          // dx = g / sigma * (dy - mean(dy) - xhat * mean(dy * xhat))
          grad_input[off + i] = static_cast<T>(g * inv_std *
                                               (grad_output[off + i] - sum_dy / count -
                                                normalized_[off + i] * sum_dy_xhat / count));
        } else {
          grad_input[off + i] = static_cast<T>(g * inv_std * grad_output[off + i]);
        }
      }
    }
  }
  return grad_input;
}

template <typename T>
std::vector<Parameter<T>> BatchNorm<T>::parameters() {
  return {{"gamma", &gamma_, &gamma_grad_, false}, {"beta", &beta_, &beta_grad_, false}};
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError(fmt::format("dropout rate {} outside [0, 1)", rate));
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& input, Mode mode) {
  shape_ = input.shape();
  cached_ = true;
  if (mode == Mode::eval || rate_ == 0.0) {
    mask_.assign(input.size(), T{1});
    return input;
  }
  if (!(mask_frozen_ && mask_.size() == input.size())) {
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_.resize(input.size());
    for (auto& m : mask_) m = rng_.uniform() < rate_ ? T{0} : keep_scale;
  }
  Tensor<T> output(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) output[i] = input[i] * mask_[i];
  return output;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_output) {
  require_cached<T>(cached_, kind());
  require_same_shape(grad_output.shape(), shape_, "dropout backward");
  Tensor<T> grad_input(shape_);
  for (std::size_t i = 0; i < grad_input.size(); ++i) grad_input[i] = grad_output[i] * mask_[i];
  return grad_input;
}

// ---------------------------------------------------------------- factory

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, Rng& rng) {
  validate(spec);
  switch (spec.kind) {
    case LayerKind::conv: {
      auto layer = std::make_unique<Conv2d<T>>(spec.conv);
      layer->initialize(rng);
      return layer;
    }
    case LayerKind::max_pool: return std::make_unique<MaxPool2d<T>>(spec.pool_window, spec.pool_stride);
    case LayerKind::dense: {
      auto layer = std::make_unique<Dense<T>>(spec.dense_in, spec.dense_out, spec.dense_bias);
      layer->initialize(rng);
      return layer;
    }
    case LayerKind::relu: return std::make_unique<Relu<T>>();
    case LayerKind::batch_norm:
      return std::make_unique<BatchNorm<T>>(spec.norm_channels, spec.norm_momentum, spec.norm_epsilon);
    case LayerKind::dropout: return std::make_unique<Dropout<T>>(spec.dropout_rate, rng.next());
  }
  throw ConfigError("unknown layer kind");
}

#define NASLAB_INSTANTIATE_LAYERS(T)                                                                   \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvSpec&); \
  template class Conv2d<T>;                                                                            \
  template class MaxPool2d<T>;                                                                         \
  template class Dense<T>;                                                                             \
  template class Relu<T>;                                                                              \
  template class BatchNorm<T>;                                                                         \
  template class Dropout<T>;                                                                           \
  template std::unique_ptr<Layer<T>> make_layer<T>(const LayerSpec&, Rng&);

NASLAB_INSTANTIATE_LAYERS(float)
NASLAB_INSTANTIATE_LAYERS(double)

}  // namespace naslab
