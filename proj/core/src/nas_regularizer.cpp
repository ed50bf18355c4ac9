#include "naslab/nas_regularizer.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "naslab/nas_metrics.hpp"

namespace naslab {

std::string_view to_string(LambdaRule rule) { return rule == LambdaRule::fixed ? "fixed" : "one-over-r"; }

double RegularizerConfig::lambda_for(std::size_t index, std::size_t fields) const {
  double lambda = 0.0;
  if (rule == LambdaRule::one_over_r) {
    if (fields == 0) throw ConfigError("layer has no receptive fields");
    lambda = 1.0 / static_cast<double>(fields);
  } else if (lambdas.size() == 1) {
    lambda = lambdas.front();
  } else if (index < lambdas.size()) {
    lambda = lambdas[index];
  } else {
    throw ConfigError(fmt::format("no fixed lambda for tagged layer {} ({} given)", index, lambdas.size()));
  }
  if (!(lambda >= 0.0)) throw ConfigError(fmt::format("lambda {} for tagged layer {} is negative", lambda, index));
  return lambda;
}

template <typename T>
double layer_perplexity_penalty(const Tensor<T>& pre_activation, double lambda, Tensor<T>* gradient) {
  if (!(lambda >= 0.0)) throw ConfigError(fmt::format("lambda {} is negative", lambda));
  const ReceptiveFieldView<T> view(pre_activation);
  const ReceptiveFieldGrid& grid = view.grid();
  if (gradient != nullptr) *gradient = Tensor<T>(pre_activation.shape());
  if (grid.batch == 0) return 0.0;

  const std::size_t r = grid.fields();
  const std::size_t dim = grid.channels;
  const double scale = -lambda / static_cast<double>(grid.batch);
  const double max_rho = static_cast<double>(dim);
  std::vector<double> p(dim), log_p(dim);
  double rho_sum = 0.0;
  for (std::size_t b = 0; b < grid.batch; ++b) {
    for (std::size_t k = 0; k < r; ++k) {
      const double entropy = detail::softmax_entropy(view.vector(b, k), p.data(), log_p.data());
      const double rho = std::clamp(std::exp(entropy), 1.0, max_rho);
      rho_sum += rho;
      if (gradient == nullptr) continue;
      T* g = gradient->raw() + b * dim * r + k;
      for (std::size_t l = 0; l < dim; ++l) {
        // Underflowed p gives p * (ln p + H) = 0, the p ln p -> 0 limit.
        const double drho = -rho * p[l] * (log_p[l] + entropy);
        g[l * r] = static_cast<T>(scale * drho);
      }
    }
  }
  return scale * rho_sum;
}

template <typename T>
PenaltyTerm nas_penalty(std::span<const Tensor<T>* const> pre_activations, const RegularizerConfig& config) {
  PenaltyTerm term;
  for (std::size_t i = 0; i < pre_activations.size(); ++i) {
    const auto& pre = *pre_activations[i];
    const double lambda = config.lambda_for(i, receptive_field_grid(pre.shape()).fields());
    const double value = layer_perplexity_penalty<T>(pre, lambda, nullptr);
    term.per_layer.push_back(value);
    term.total += value;
  }
  return term;
}

template <typename T>
Tensor<T> nas_penalty_gradient(const Tensor<T>& pre_activation, double lambda) {
  Tensor<T> gradient;
  layer_perplexity_penalty(pre_activation, lambda, &gradient);
  return gradient;
}

template <typename T>
PenaltyTerm apply_nas_penalty(const Network<T>& network, const RegularizerConfig& config,
                              std::map<std::size_t, Tensor<T>>& output_gradients) {
  PenaltyTerm term;
  const auto tagged = network.regularized_layers();
  for (std::size_t i = 0; i < tagged.size(); ++i) {
    const Tensor<T>& pre = network.output(tagged[i]);
    const double lambda = config.lambda_for(i, receptive_field_grid(pre.shape()).fields());
    Tensor<T> gradient;
    const double value = layer_perplexity_penalty(pre, lambda, &gradient);
    term.per_layer.push_back(value);
    term.total += value;
    output_gradients[tagged[i]] = std::move(gradient);
  }
  return term;
}

template <typename T>
FilterCorrelation filter_correlation_report(const Tensor<T>& weights, double threshold) {
  if (weights.rank() < 2 || weights.dim(0) < 2) {
    throw ConfigError(fmt::format("filter correlation needs at least 2 filters, got shape {}",
                                  to_string(weights.shape())));
  }
  const std::size_t filters = weights.dim(0);
  const std::size_t len = weights.size() / filters;
  std::vector<double> norms(filters, 0.0);
  for (std::size_t f = 0; f < filters; ++f) {
    const T* w = weights.raw() + f * len;
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += static_cast<double>(w[i]) * w[i];
    norms[f] = std::sqrt(s);
  }
  FilterCorrelation report;
  report.max = -1.0;
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < filters; ++a) {
    for (std::size_t b = a + 1; b < filters; ++b, ++pairs) {
      double cosine = 0.0;
      if (norms[a] > 0.0 && norms[b] > 0.0) {
        const T* wa = weights.raw() + a * len;
        const T* wb = weights.raw() + b * len;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += static_cast<double>(wa[i]) * wb[i];
        cosine = dot / (norms[a] * norms[b]);
      }
      report.max = std::max(report.max, cosine);
      sum += cosine;
    }
  }
  report.mean = sum / static_cast<double>(pairs);
  report.collapsed = report.max >= threshold;
  return report;
}

#define NASLAB_INSTANTIATE_REGULARIZER(T)                                                              \
  template double layer_perplexity_penalty<T>(const Tensor<T>&, double, Tensor<T>*);                  \
  template PenaltyTerm nas_penalty<T>(std::span<const Tensor<T>* const>, const RegularizerConfig&);   \
  template Tensor<T> nas_penalty_gradient<T>(const Tensor<T>&, double);                               \
  template PenaltyTerm apply_nas_penalty<T>(const Network<T>&, const RegularizerConfig&,              \
                                            std::map<std::size_t, Tensor<T>>&);                       \
  template FilterCorrelation filter_correlation_report<T>(const Tensor<T>&, double);

NASLAB_INSTANTIATE_REGULARIZER(float)
NASLAB_INSTANTIATE_REGULARIZER(double)

}  // namespace naslab
