#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "naslab/layers.hpp"
#include "naslab/tensor.hpp"

namespace naslab {

/// Softmax distribution of one activation vector and the quantities derived from it.
struct NasValue {
  std::vector<double> p;          // softmax of the activations
  double entropy = 0.0;           // H in nats, within [0, ln D]
  double perplexity = 1.0;        // rho = exp(H), within [1, D]
  double perplexity_score = 1.0;  // tau = rho / D, within [1/D, 1]
  double sparsity = 0.0;          // s = 1 - tau, within [0, 1 - 1/D]
};

/// Spatial layout of a pre-activation tensor. Dense outputs [B, D] have a
/// single receptive field (rows = cols = 1).
struct ReceptiveFieldGrid {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t fields() const { return rows * cols; }
  std::size_t linear_index(std::size_t m, std::size_t n) const { return m * cols + n; }
};

/// Grid of a [B, D, M, N] or [B, D] tensor. MetricError if D < 2 or the rank is wrong.
ReceptiveFieldGrid receptive_field_grid(const Shape& shape);

/// Non-owning strided view of the D channel values at one spatial position.
template <typename T>
class ActivationFiber {
 public:
  ActivationFiber(const T* base, std::size_t stride, std::size_t size) : base_(base), stride_(stride), size_(size) {}

  std::size_t size() const { return size_; }
  T operator[](std::size_t l) const { return base_[l * stride_]; }
  std::vector<double> to_vector() const;

 private:
  const T* base_;
  std::size_t stride_;
  std::size_t size_;
};

/// Receptive-field activation vectors of a pre-activation tensor. Fiber k of
/// sample b is pre[b, :, m, n] with k = m * N + n. Views into `pre`, which
/// must outlive this object.
template <typename T>
class ReceptiveFieldView {
 public:
  explicit ReceptiveFieldView(const Tensor<T>& pre_activation);

  const ReceptiveFieldGrid& grid() const { return grid_; }
  ActivationFiber<T> vector(std::size_t sample, std::size_t k) const;

 private:
  const T* data_;
  ReceptiveFieldGrid grid_;
};

template <typename T>
ReceptiveFieldView<T> receptive_field_vectors(const Tensor<T>& pre_activation) {
  return ReceptiveFieldView<T>(pre_activation);
}

/// Inverse of receptive_field_vectors: `vectors[b * R + k]` is written back to
/// position k of sample b.
template <typename T>
Tensor<T> scatter_receptive_fields(const std::vector<std::vector<T>>& vectors, const ReceptiveFieldGrid& grid);

/// Full NAS quintuple for one vector. MetricError if fewer than two entries,
/// DataError on non-finite input.
NasValue nas_of_vector(std::span<const double> activations);

template <typename T>
NasValue nas_of_vector(const ActivationFiber<T>& activations);

/// s alone, without materializing p.
template <typename T>
double sparsity_of(const ActivationFiber<T>& activations);

namespace detail {

/// Softmax entropy of `activations`; optionally writes p and ln p (both length D).
template <typename T>
double softmax_entropy(const ActivationFiber<T>& activations, double* p, double* log_p);

}  // namespace detail

/// Aggregated NAS of one layer over all probe samples and positions.
struct LayerNasSnapshot {
  std::string layer;
  std::size_t channels = 0;
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::vector<double> heatmap;  // s per position of the heatmap sample, index m * cols + n
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::size_t population = 0;  // B * R values pooled into the aggregates
};

/// Applies nas_of_vector to every receptive field of every sample, pools the
/// B * R values into min/median/max, and keeps the grid of `heatmap_sample`.
/// DataError names the layer and position of any non-finite activation.
template <typename T>
LayerNasSnapshot layer_nas(const Tensor<T>& pre_activation, std::string_view layer = {},
                           std::size_t heatmap_sample = 0);

/// Sort-based median; the mean of the two central values for even lengths.
double median_of(std::vector<double> values);

/// Convolution computed by explicitly gathering each receptive field as a
/// patch and taking its inner product with every filter. Independent of
/// the im2col/GEMM path used by conv2d_forward.
template <typename T>
Tensor<T> patch_gather_oracle(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                              const ConvSpec& spec);

}  // namespace naslab
