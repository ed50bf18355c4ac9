#pragma once

#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "naslab/network.hpp"
#include "naslab/tensor.hpp"

namespace naslab {

enum class LambdaRule { fixed, one_over_r };

std::string_view to_string(LambdaRule rule);

/// Per-layer coefficients of the perplexity penalty. Under one_over_r each
/// layer gets 1 / (its receptive-field count); under fixed, `lambdas` holds
/// one value per tagged layer, or a single value broadcast to all of them.
struct RegularizerConfig {
  LambdaRule rule = LambdaRule::one_over_r;
  std::vector<double> lambdas;

  /// Coefficient of the `index`-th tagged layer, which has `fields` receptive fields.
  double lambda_for(std::size_t index, std::size_t fields) const;
};

struct PenaltyTerm {
  double total = 0.0;
  std::vector<double> per_layer;
};

/// -lambda * (1/B) * sum_b sum_k rho_{b,k} for one pre-activation tensor.
/// When `gradient` is non-null it receives d(penalty)/d(pre_activation).
template <typename T>
double layer_perplexity_penalty(const Tensor<T>& pre_activation, double lambda, Tensor<T>* gradient = nullptr);

/// Sum of layer_perplexity_penalty over the given pre-activations, each with
/// its own coefficient from `config`. ConfigError on a negative coefficient.
template <typename T>
PenaltyTerm nas_penalty(std::span<const Tensor<T>* const> pre_activations, const RegularizerConfig& config);

/// Analytic gradient of one layer's penalty w.r.t. its pre-activation:
/// d rho / d a_j = -rho p_j (ln p_j + H), scaled by -lambda / B.
template <typename T>
Tensor<T> nas_penalty_gradient(const Tensor<T>& pre_activation, double lambda);

/// Evaluates the penalty on every regularize-tagged layer of `network` after
/// a forward pass, and stores the per-layer gradients in `output_gradients`
/// (keyed by layer index) for Network::backward.
template <typename T>
PenaltyTerm apply_nas_penalty(const Network<T>& network, const RegularizerConfig& config,
                              std::map<std::size_t, Tensor<T>>& output_gradients);

/// Pairwise cosine similarity between flattened filters (rows of the first axis).
struct FilterCorrelation {
  double max = 0.0;
  double mean = 0.0;
  bool collapsed = false;  // max >= threshold
};

inline constexpr double kFilterCollapseThreshold = 0.99;

/// Diagnostic only. Pairs involving an all-zero filter count as similarity 0.
template <typename T>
FilterCorrelation filter_correlation_report(const Tensor<T>& weights, double threshold = kFilterCollapseThreshold);

}  // namespace naslab
