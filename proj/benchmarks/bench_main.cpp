#include <benchmark/benchmark.h>

#include "naslab/config.hpp"
#include "naslab/experiment.hpp"
#include "naslab/nas_metrics.hpp"
#include "naslab/nas_regularizer.hpp"
#include "naslab/random.hpp"
#include "naslab/training.hpp"

using namespace naslab;

namespace {

Tensor<float> random_tensor(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t(shape);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

// conv2 of the scale-16 VanillaNet: 16 -> 16 channels on 32x32.
void BM_ConvForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  ConvSpec spec{16, 16, 3, 3, 1, 1, 1, 1, true};
  Conv2d<float> conv(spec);
  Rng rng(1);
  conv.initialize(rng);
  const auto input = random_tensor({batch, 16, 32, 32}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(input, Mode::train));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_ConvForward)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  ConvSpec spec{16, 16, 3, 3, 1, 1, 1, 1, true};
  Conv2d<float> conv(spec);
  Rng rng(1);
  conv.initialize(rng);
  const auto input = random_tensor({batch, 16, 32, 32}, 2);
  const auto grad = random_tensor({batch, 16, 32, 32}, 3);
  conv.forward(input, Mode::train);
  for (auto _ : state) benchmark::DoNotOptimize(conv.backward(grad));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_ConvBackward)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_PatchGatherOracle(benchmark::State& state) {
  ConvSpec spec{16, 16, 3, 3, 1, 1, 1, 1, true};
  const auto input = random_tensor({4, 16, 32, 32}, 2);
  const auto weights = random_tensor(spec.weight_shape(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(patch_gather_oracle<float>(input, weights, nullptr, spec));
}
BENCHMARK(BM_PatchGatherOracle)->Unit(benchmark::kMillisecond);

// Probe-sized NAS pass over conv1 output: 64 samples, 16 channels, 32x32.
void BM_LayerNas(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto pre = random_tensor({64, channels, 32, 32}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(layer_nas<float>(pre, "conv", 0));
  state.SetItemsProcessed(state.iterations() * 64 * 32 * 32);
}
BENCHMARK(BM_LayerNas)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_NasPenaltyGradient(benchmark::State& state) {
  const auto pre = random_tensor({32, 16, 32, 32}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(nas_penalty_gradient<float>(pre, 1.0 / 1024.0));
}
BENCHMARK(BM_NasPenaltyGradient)->Unit(benchmark::kMillisecond);

// One SGD step of the desk-scale VanillaNet on a batch of 32.
void BM_TrainStep(benchmark::State& state) {
  ExperimentConfig config;
  auto net = build_network<float>(config, 10, 1);
  const auto input = random_tensor({32, 3, 32, 32}, 6);
  std::vector<int> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  const Sgd<float> sgd(0.01f);
  for (auto _ : state) {
    net.zero_grad();
    const auto loss = cross_entropy_loss<float>(net.forward(input, Mode::train), labels);
    net.backward(loss.gradient);
    auto params = net.parameters();
    sgd.step(params);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
