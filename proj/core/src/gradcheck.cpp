#include "naslab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "naslab/nas_regularizer.hpp"
#include "naslab/training.hpp"

namespace naslab {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckResult check_tensor_gradient(std::string name, Tensor<double>& x, const Tensor<double>& analytic,
                                      const std::function<double()>& loss,
                                      const std::function<std::vector<std::size_t>()>& signature, Rng& rng,
                                      const GradCheckOptions& options) {
  require_same_shape(x.shape(), analytic.shape(), name);
  GradCheckResult result;
  result.name = std::move(name);
  result.tolerance = options.tolerance;

  std::vector<std::size_t> probes(x.size());
  std::iota(probes.begin(), probes.end(), std::size_t{0});
  if (probes.size() > options.max_probes) {
    rng.shuffle(std::span<std::size_t>(probes));
    probes.resize(options.max_probes);
    std::sort(probes.begin(), probes.end());
  }

  loss();
  const auto base = signature();
  for (std::size_t i : probes) {
    const double saved = x[i];
    x[i] = saved + options.step;
    const double up = loss();
    const bool up_same = signature() == base;
    x[i] = saved - options.step;
    const double down = loss();
    const bool down_same = signature() == base;
    x[i] = saved;
    if (!up_same || !down_same) {
      ++result.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * options.step);
    result.max_error = std::max(result.max_error, relative_error(analytic[i], numeric, options.floor));
    ++result.probes;
  }
  loss();
  return result;
}

namespace {

Tensor<double> random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

std::unique_ptr<Layer<double>> small_layer(LayerKind kind, Rng& rng, Shape& input_shape) {
  LayerSpec spec;
  spec.kind = kind;
  spec.name = std::string(to_string(kind));
  switch (kind) {
    case LayerKind::conv:
      spec.conv = {3, 4, 3, 3, 2, 1, 1, 0, true};
      input_shape = {2, 3, 6, 5};
      break;
    case LayerKind::max_pool:
      input_shape = {2, 3, 4, 6};
      break;
    case LayerKind::dense:
      spec.dense_in = 12;
      spec.dense_out = 5;
      input_shape = {3, 3, 2, 2};
      break;
    case LayerKind::relu:
      input_shape = {2, 3, 3, 3};
      break;
    case LayerKind::batch_norm:
      spec.norm_channels = 3;
      input_shape = {4, 3, 2, 3};
      break;
    case LayerKind::dropout:
      spec.dropout_rate = 0.4;
      input_shape = {2, 3, 3, 3};
      break;
  }
  auto layer = make_layer<double>(spec, rng);
  if (auto* bn = dynamic_cast<BatchNorm<double>*>(layer.get())) {
    // Non-trivial affine parameters and running statistics.
    for (std::size_t c = 0; c < 3; ++c) {
      bn->gamma()[c] = 0.5 + rng.uniform();
      bn->beta()[c] = rng.normal();
      bn->running_mean()[c] = 0.3 * rng.normal();
      bn->running_var()[c] = 0.5 + rng.uniform();
    }
  }
  return layer;
}

}  // namespace

std::vector<GradCheckResult> check_layer(LayerKind kind, std::uint64_t seed, Mode mode,
                                         const GradCheckOptions& options) {
  Rng rng(seed);
  Shape input_shape;
  auto layer = small_layer(kind, rng, input_shape);
  Tensor<double> input = random_tensor(input_shape, rng);
  const Tensor<double> projection = random_tensor(layer->output_shape(input_shape), rng);
  auto* dropout = dynamic_cast<Dropout<double>*>(layer.get());

  auto loss = [&]() {
    const Tensor<double> y = layer->forward(input, mode);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += projection[i] * y[i];
    return s;
  };
  auto signature = [&]() {
    std::vector<std::size_t> sig;
    layer->append_kink_signature(sig);
    return sig;
  };

  loss();
  if (dropout != nullptr) dropout->freeze_mask(true);
  layer->zero_grad();
  const Tensor<double> input_grad = layer->backward(projection);
  std::vector<std::pair<Parameter<double>, Tensor<double>>> params;
  for (auto& p : layer->parameters()) params.emplace_back(p, *p.grad);

  const std::string prefix = fmt::format("{}{}", to_string(kind), mode == Mode::eval ? "[eval]" : "");
  std::vector<GradCheckResult> out;
  out.push_back(check_tensor_gradient(prefix + ".input", input, input_grad, loss, signature, rng, options));
  for (auto& [p, grad] : params) {
    out.push_back(check_tensor_gradient(prefix + "." + p.name, *p.value, grad, loss, signature, rng, options));
  }
  return out;
}

GradCheckResult check_cross_entropy(std::uint64_t seed, const GradCheckOptions& options) {
  Rng rng(seed);
  Tensor<double> logits = random_tensor({4, 7}, rng, 2.0);
  std::vector<int> labels;
  for (std::size_t b = 0; b < 4; ++b) labels.push_back(static_cast<int>(rng.below(7)));
  const auto base = cross_entropy_loss<double>(logits, labels);
  auto loss = [&]() { return cross_entropy_loss<double>(logits, labels).loss; };
  auto signature = []() { return std::vector<std::size_t>{}; };
  return check_tensor_gradient("cross_entropy.logits", logits, base.gradient, loss, signature, rng, options);
}

GradCheckResult check_penalty_gradient(std::uint64_t seed, const Shape& shape, const GradCheckOptions& options) {
  Rng rng(seed);
  Tensor<double> pre = random_tensor(shape, rng, 1.5);
  const double lambda = 0.37;
  const Tensor<double> analytic = nas_penalty_gradient<double>(pre, lambda);
  auto loss = [&]() { return layer_perplexity_penalty<double>(pre, lambda); };
  auto signature = []() { return std::vector<std::size_t>{}; };
  return check_tensor_gradient(fmt::format("nas_penalty.pre{}", to_string(shape)), pre, analytic, loss, signature, rng,
                               options);
}

std::vector<GradCheckResult> check_toy_network(std::uint64_t seed, bool with_penalty,
                                               const GradCheckOptions& options) {
  Rng rng(seed);
  Network<double> net;
  const NasTag tag{true, with_penalty};
  auto spec = [](LayerKind kind, std::string name) {
    LayerSpec s;
    s.kind = kind;
    s.name = std::move(name);
    return s;
  };
  auto add = [&](const LayerSpec& s, NasTag t = {}) { net.add(s.name, make_layer<double>(s, rng), t); };
  LayerSpec conv1 = spec(LayerKind::conv, "conv1");
  conv1.conv = {2, 4, 3, 3, 1, 1, 1, 1, true};
  LayerSpec conv2 = spec(LayerKind::conv, "conv2");
  conv2.conv = {4, 3, 3, 3, 1, 1, 1, 1, true};
  LayerSpec dense = spec(LayerKind::dense, "pred");
  dense.dense_in = 3 * 2 * 2;
  dense.dense_out = 5;
  add(conv1, tag);
  add(spec(LayerKind::relu, "relu1"));
  add(conv2, tag);
  add(spec(LayerKind::relu, "relu2"));
  add(spec(LayerKind::max_pool, "pool"));
  add(dense, NasTag{true, false});

  const Tensor<double> input = random_tensor({3, 2, 4, 4}, rng);
  const std::vector<int> labels{1, 4, 0};
  const RegularizerConfig reg{LambdaRule::one_over_r, {}};

  auto loss = [&]() {
    const auto result = cross_entropy_loss<double>(net.forward(input, Mode::train), labels);
    double total = result.loss;
    if (with_penalty) {
      std::map<std::size_t, Tensor<double>> unused;
      total += apply_nas_penalty(net, reg, unused).total;
    }
    return total;
  };
  auto signature = [&]() { return net.kink_signature(); };

  net.zero_grad();
  const auto result = cross_entropy_loss<double>(net.forward(input, Mode::train), labels);
  std::map<std::size_t, Tensor<double>> extra;
  if (with_penalty) apply_nas_penalty(net, reg, extra);
  net.backward(result.gradient, extra);

  std::vector<std::pair<Parameter<double>, Tensor<double>>> params;
  for (auto& p : net.parameters()) params.emplace_back(p, *p.grad);
  std::vector<GradCheckResult> out;
  const std::string prefix = with_penalty ? "toy+penalty." : "toy.";
  for (auto& [p, grad] : params) {
    out.push_back(check_tensor_gradient(prefix + p.name, *p.value, grad, loss, signature, rng, options));
  }
  return out;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& options) {
  std::vector<GradCheckResult> all;
  auto append = [&](std::vector<GradCheckResult> part) {
    for (auto& r : part) all.push_back(std::move(r));
  };
  std::uint64_t stream = 0;
  for (LayerKind kind : {LayerKind::conv, LayerKind::max_pool, LayerKind::dense, LayerKind::relu,
                         LayerKind::batch_norm, LayerKind::dropout}) {
    append(check_layer(kind, derive_seed(seed, ++stream), Mode::train, options));
  }
  append(check_layer(LayerKind::batch_norm, derive_seed(seed, ++stream), Mode::eval, options));
  all.push_back(check_cross_entropy(derive_seed(seed, ++stream), options));
  all.push_back(check_penalty_gradient(derive_seed(seed, ++stream), {2, 5, 3, 3}, options));
  all.push_back(check_penalty_gradient(derive_seed(seed, ++stream), {3, 6}, options));
  append(check_toy_network(derive_seed(seed, ++stream), false, options));
  append(check_toy_network(derive_seed(seed, ++stream), true, options));
  return all;
}

}  // namespace naslab
