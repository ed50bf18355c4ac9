#include "naslab/nas_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

namespace naslab {

namespace {

// Works on any indexable vector. With z = a - max(a) and Z = sum exp(z),
// ln p_l = z_l - ln Z exactly, so H = ln Z - sum p_l z_l. Underflowed
// p_l are exactly zero and contribute nothing, which is the p ln p -> 0 limit.
template <typename Vec>
double perplexity_core(const Vec& a, std::size_t dim, double* p_out, double* log_p_out = nullptr) {
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < dim; ++l) {
    const double v = a[l];
    if (!std::isfinite(v)) throw DataError(fmt::format("non-finite activation at channel {}", l));
    peak = std::max(peak, v);
  }
  double z_sum = 0.0;
  for (std::size_t l = 0; l < dim; ++l) z_sum += std::exp(static_cast<double>(a[l]) - peak);
  const double log_z = std::log(z_sum);
  double weighted = 0.0;
  for (std::size_t l = 0; l < dim; ++l) {
    const double z = static_cast<double>(a[l]) - peak;
    const double p = std::exp(z - log_z);
    weighted += p * z;
    if (p_out != nullptr) p_out[l] = p;
    if (log_p_out != nullptr) log_p_out[l] = z - log_z;
  }
  const double max_entropy = std::log(static_cast<double>(dim));
  const double entropy = std::clamp(log_z - weighted, 0.0, max_entropy);
  return entropy;
}

template <typename Vec>
NasValue nas_from(const Vec& a, std::size_t dim) {
  if (dim < 2) throw MetricError(fmt::format("NAS needs at least 2 channels, got {}", dim));
  NasValue v;
  v.p.resize(dim);
  v.entropy = perplexity_core(a, dim, v.p.data());
  const auto d = static_cast<double>(dim);
  v.perplexity = std::clamp(std::exp(v.entropy), 1.0, d);
  v.perplexity_score = v.perplexity / d;
  v.sparsity = 1.0 - v.perplexity_score;
  return v;
}

}  // namespace

ReceptiveFieldGrid receptive_field_grid(const Shape& shape) {
  ReceptiveFieldGrid grid;
  if (shape.size() == 4) {
    grid = {shape[0], shape[1], shape[2], shape[3]};
  } else if (shape.size() == 2) {
    grid = {shape[0], shape[1], 1, 1};
  } else {
    throw MetricError(fmt::format("NAS expects a [B, D, M, N] or [B, D] pre-activation, got {}", to_string(shape)));
  }
  if (grid.channels < 2) {
    throw MetricError(fmt::format("NAS is undefined for D = {} (shape {})", grid.channels, to_string(shape)));
  }
  return grid;
}

template <typename T>
std::vector<double> ActivationFiber<T>::to_vector() const {
  std::vector<double> out(size_);
  for (std::size_t l = 0; l < size_; ++l) out[l] = (*this)[l];
  return out;
}

template <typename T>
ReceptiveFieldView<T>::ReceptiveFieldView(const Tensor<T>& pre_activation)
    : data_(pre_activation.raw()), grid_(receptive_field_grid(pre_activation.shape())) {}

template <typename T>
ActivationFiber<T> ReceptiveFieldView<T>::vector(std::size_t sample, std::size_t k) const {
  if (sample >= grid_.batch || k >= grid_.fields()) {
    throw ConfigError(fmt::format("receptive field ({}, {}) outside grid of {} x {}", sample, k, grid_.batch,
                                  grid_.fields()));
  }
  const std::size_t r = grid_.fields();
  return ActivationFiber<T>(data_ + sample * grid_.channels * r + k, r, grid_.channels);
}

template <typename T>
Tensor<T> scatter_receptive_fields(const std::vector<std::vector<T>>& vectors, const ReceptiveFieldGrid& grid) {
  const std::size_t r = grid.fields();
  if (vectors.size() != grid.batch * r) {
    throw ConfigError(fmt::format("expected {} receptive-field vectors, got {}", grid.batch * r, vectors.size()));
  }
  Shape shape = (grid.rows == 1 && grid.cols == 1) ? Shape{grid.batch, grid.channels}
                                                   : Shape{grid.batch, grid.channels, grid.rows, grid.cols};
  Tensor<T> out(shape);
  for (std::size_t b = 0; b < grid.batch; ++b) {
    for (std::size_t k = 0; k < r; ++k) {
      const auto& v = vectors[b * r + k];
      if (v.size() != grid.channels) throw ConfigError("receptive-field vector length does not match D");
      for (std::size_t l = 0; l < grid.channels; ++l) out[(b * grid.channels + l) * r + k] = v[l];
    }
  }
  return out;
}

NasValue nas_of_vector(std::span<const double> activations) { return nas_from(activations, activations.size()); }

template <typename T>
NasValue nas_of_vector(const ActivationFiber<T>& activations) {
  return nas_from(activations, activations.size());
}

template <typename T>
double sparsity_of(const ActivationFiber<T>& activations) {
  const std::size_t dim = activations.size();
  if (dim < 2) throw MetricError(fmt::format("NAS needs at least 2 channels, got {}", dim));
  const auto d = static_cast<double>(dim);
  const double rho = std::clamp(std::exp(perplexity_core(activations, dim, nullptr)), 1.0, d);
  return 1.0 - rho / d;
}

namespace detail {

template <typename T>
double softmax_entropy(const ActivationFiber<T>& activations, double* p, double* log_p) {
  if (activations.size() < 2) throw MetricError(fmt::format("NAS needs at least 2 channels, got {}", activations.size()));
  return perplexity_core(activations, activations.size(), p, log_p);
}

}  // namespace detail

double median_of(std::vector<double> values) {
  if (values.empty()) throw InsufficientDataError("median of an empty population");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

template <typename T>
LayerNasSnapshot layer_nas(const Tensor<T>& pre_activation, std::string_view layer, std::size_t heatmap_sample) {
  const ReceptiveFieldView<T> view(pre_activation);
  const ReceptiveFieldGrid& grid = view.grid();
  LayerNasSnapshot snap;
  snap.layer = std::string(layer);
  snap.channels = grid.channels;
  snap.rows = grid.rows;
  snap.cols = grid.cols;
  if (grid.batch == 0) throw InsufficientDataError(fmt::format("layer '{}': no probe samples", layer));
  if (heatmap_sample >= grid.batch) {
    throw ConfigError(fmt::format("heatmap sample {} outside probe batch of {}", heatmap_sample, grid.batch));
  }

  const std::size_t r = grid.fields();
  std::vector<double> pooled(grid.batch * r);
  for (std::size_t b = 0; b < grid.batch; ++b) {
    for (std::size_t k = 0; k < r; ++k) {
      try {
        pooled[b * r + k] = sparsity_of(view.vector(b, k));
      } catch (const DataError& e) {
        throw DataError(fmt::format("layer '{}', sample {}, position ({}, {}): {}", layer, b, k / grid.cols,
                                    k % grid.cols, e.what()));
      }
    }
  }
  snap.heatmap.assign(pooled.begin() + static_cast<std::ptrdiff_t>(heatmap_sample * r),
                      pooled.begin() + static_cast<std::ptrdiff_t>((heatmap_sample + 1) * r));
  snap.population = pooled.size();
  const auto [lo, hi] = std::minmax_element(pooled.begin(), pooled.end());
  snap.min = *lo;
  snap.max = *hi;
  snap.median = median_of(std::move(pooled));
  return snap;
}

template <typename T>
Tensor<T> patch_gather_oracle(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>* bias,
                              const ConvSpec& spec) {
  if (input.rank() != 4 || input.dim(1) != spec.in_channels) {
    throw ConfigError(fmt::format("oracle expects [B, {}, H, W], got {}", spec.in_channels, to_string(input.shape())));
  }
  if (weights.shape() != spec.weight_shape()) throw ConfigError("oracle weight shape mismatch");
  if (bias != nullptr && bias->shape() != Shape{spec.out_channels}) throw ConfigError("oracle bias shape mismatch");
  const std::size_t batch = input.dim(0), height = input.dim(2), width = input.dim(3);
  const std::size_t out_h = conv_output_extent(height, spec.kernel_h, spec.stride_h, spec.pad_h);
  const std::size_t out_w = conv_output_extent(width, spec.kernel_w, spec.stride_w, spec.pad_w);

  Tensor<T> out({batch, spec.out_channels, out_h, out_w});
  std::vector<double> patch(spec.patch_size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t m = 0; m < out_h; ++m) {
      for (std::size_t n = 0; n < out_w; ++n) {
        // receptive field r_{m,n}: x[d', i, j] with zero padding outside the image
        std::size_t idx = 0;
        for (std::size_t c = 0; c < spec.in_channels; ++c) {
          for (std::size_t i = 0; i < spec.kernel_h; ++i) {
            for (std::size_t j = 0; j < spec.kernel_w; ++j, ++idx) {
              const long y = static_cast<long>(m * spec.stride_h + i) - static_cast<long>(spec.pad_h);
              const long x = static_cast<long>(n * spec.stride_w + j) - static_cast<long>(spec.pad_w);
              const bool inside = y >= 0 && x >= 0 && y < static_cast<long>(height) && x < static_cast<long>(width);
              patch[idx] = inside ? static_cast<double>(input.at(b, c, y, x)) : 0.0;
            }
          }
        }
        for (std::size_t d = 0; d < spec.out_channels; ++d) {
          double acc = bias != nullptr ? static_cast<double>((*bias)[d]) : 0.0;
          const T* filter = weights.raw() + d * spec.patch_size();
          for (std::size_t q = 0; q < patch.size(); ++q) acc += static_cast<double>(filter[q]) * patch[q];
          out.at(b, d, m, n) = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

#define NASLAB_INSTANTIATE_METRICS(T)                                                                      \
  template class ActivationFiber<T>;                                                                       \
  template class ReceptiveFieldView<T>;                                                                    \
  template Tensor<T> scatter_receptive_fields<T>(const std::vector<std::vector<T>>&, const ReceptiveFieldGrid&); \
  template NasValue nas_of_vector<T>(const ActivationFiber<T>&);                                           \
  template double sparsity_of<T>(const ActivationFiber<T>&);                                               \
  template double detail::softmax_entropy<T>(const ActivationFiber<T>&, double*, double*);                 \
  template LayerNasSnapshot layer_nas<T>(const Tensor<T>&, std::string_view, std::size_t);                \
  template Tensor<T> patch_gather_oracle<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, const ConvSpec&);

NASLAB_INSTANTIATE_METRICS(float)
NASLAB_INSTANTIATE_METRICS(double)

}  // namespace naslab
