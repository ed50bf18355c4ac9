#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "naslab/nas_metrics.hpp"
#include "naslab/random.hpp"

namespace naslab {
namespace {

// Reference values computed independently at 40-digit precision.
constexpr double kSLn3 = 0.1226173246983383594538540654686672965599;
constexpr double kHLn3 = 0.5623351446188083503;
constexpr double kRhoLn3 = 1.7547653506033232811;
constexpr double kS123 = 0.2337269470958881241206;
constexpr double kH123 = 0.8323955818399388730;

NasValue nas(std::vector<double> v) { return nas_of_vector(std::span<const double>(v)); }

TEST(NasOfVector, TwoChannelReference) {
  const auto v = nas({std::log(3.0), 0.0});
  EXPECT_NEAR(v.p[0], 0.75, 1e-15);
  EXPECT_NEAR(v.entropy, kHLn3, 1e-12);
  EXPECT_NEAR(v.perplexity, kRhoLn3, 1e-12);
  EXPECT_NEAR(v.perplexity_score, kRhoLn3 / 2.0, 1e-12);
  EXPECT_NEAR(v.sparsity, kSLn3, 1e-12);
}

TEST(NasOfVector, ThreeChannelReference) {
  const auto v = nas({1.0, 2.0, 3.0});
  EXPECT_NEAR(v.entropy, kH123, 1e-12);
  EXPECT_NEAR(v.sparsity, kS123, 1e-12);
}

TEST(NasOfVector, UniformVectorHasZeroSparsity) {
  for (double c : {-7.0, 0.0, 2.5}) {
    const auto v = nas(std::vector<double>(16, c));
    EXPECT_NEAR(v.perplexity, 16.0, 1e-12);
    EXPECT_NEAR(v.sparsity, 0.0, 1e-12);
  }
}

TEST(NasOfVector, OneHotLimitApproachesMaximum) {
  const auto v = nas({50.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(v.sparsity, 0.75, 1e-12);
  const auto extreme = nas({1e6, 0.0, 0.0, 0.0});
  EXPECT_TRUE(std::isfinite(extreme.sparsity));
  EXPECT_DOUBLE_EQ(extreme.sparsity, 0.75);
}

TEST(NasOfVector, ShiftInvariant) {
  Rng rng(4);
  std::vector<double> a(10);
  for (auto& x : a) x = rng.normal();
  std::vector<double> shifted = a;
  for (auto& x : shifted) x += 123.0;
  EXPECT_NEAR(nas(a).sparsity, nas(shifted).sparsity, 1e-12);
}

TEST(NasOfVector, BoundsHoldOnRandomVectors) {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t dim = 2 + rng.below(30);
    std::vector<double> a(dim);
    const double spread = std::exp(rng.uniform() * 8.0 - 4.0);
    for (auto& x : a) x = spread * rng.normal();
    const auto v = nas(a);
    const double d = static_cast<double>(dim);
    EXPECT_GE(v.entropy, 0.0);
    EXPECT_LE(v.entropy, std::log(d));
    EXPECT_GE(v.perplexity, 1.0);
    EXPECT_LE(v.perplexity, d);
    EXPECT_GE(v.sparsity, 0.0);
    EXPECT_LE(v.sparsity, 1.0 - 1.0 / d + 1e-15);
    EXPECT_NEAR(v.sparsity, 1.0 - v.perplexity / d, 1e-15);
  }
}

TEST(NasOfVector, Errors) {
  EXPECT_THROW(nas({1.0}), MetricError);
  EXPECT_THROW(nas({}), MetricError);
  EXPECT_THROW(nas({1.0, std::numeric_limits<double>::quiet_NaN()}), DataError);
  EXPECT_THROW(nas({1.0, std::numeric_limits<double>::infinity()}), DataError);
}

TEST(ReceptiveFields, LinearIndexAndRoundTrip) {
  Tensor<double> pre({2, 3, 2, 4});
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] = static_cast<double>(i);
  const auto view = receptive_field_vectors(pre);
  EXPECT_EQ(view.grid().fields(), 8u);
  EXPECT_EQ(view.grid().linear_index(1, 2), 6u);
  const auto fiber = view.vector(1, view.grid().linear_index(1, 2));
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(fiber[l], pre.at(1, l, 1, 2));

  std::vector<std::vector<double>> vectors;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t k = 0; k < 8; ++k) vectors.push_back(view.vector(b, k).to_vector());
  }
  EXPECT_EQ(scatter_receptive_fields(vectors, view.grid()), pre);
  EXPECT_THROW(view.vector(2, 0), ConfigError);
}

TEST(ReceptiveFields, DenseOutputIsOneField) {
  const Tensor<double> pre({5, 7});
  EXPECT_EQ(receptive_field_grid(pre.shape()).fields(), 1u);
  EXPECT_THROW(receptive_field_grid({5}), MetricError);
  EXPECT_THROW(receptive_field_grid({5, 1, 3, 3}), MetricError);
}

TEST(ReceptiveFields, OracleMatchesGemmConvolution) {
  Rng rng(12);
  for (const ConvSpec& spec : {ConvSpec{3, 5, 3, 3, 1, 1, 1, 1, true}, ConvSpec{2, 4, 3, 3, 2, 2, 0, 0, true},
                               ConvSpec{4, 3, 2, 2, 1, 1, 0, 0, false}}) {
    Tensor<double> x({2, spec.in_channels, 7, 7}), w(spec.weight_shape()), b({spec.out_channels});
    for (auto& v : x.data()) v = rng.normal();
    for (auto& v : w.data()) v = rng.normal();
    for (auto& v : b.data()) v = rng.normal();
    const Tensor<double>* bias = spec.bias ? &b : nullptr;
    const auto fast = conv2d_forward(x, w, bias, spec);
    const auto slow = patch_gather_oracle(x, w, bias, spec);
    ASSERT_EQ(fast.shape(), slow.shape());
    for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_NEAR(fast[i], slow[i], 1e-12);
  }
}

TEST(LayerNas, AggregatesPoolSamplesAndPositions) {
  // Sample 0 uniform everywhere (s = 0), sample 1 one-hot-ish everywhere (s = 0.75).
  Tensor<double> pre({2, 4, 2, 2});
  for (std::size_t k = 0; k < 4; ++k) pre.at(1, 0, k / 2, k % 2) = 50.0;
  const auto snap = layer_nas(pre, "conv1", 1);
  EXPECT_EQ(snap.population, 8u);
  EXPECT_NEAR(snap.min, 0.0, 1e-12);
  EXPECT_NEAR(snap.max, 0.75, 1e-12);
  EXPECT_NEAR(snap.median, 0.375, 1e-12);
  ASSERT_EQ(snap.heatmap.size(), 4u);
  for (double s : snap.heatmap) EXPECT_NEAR(s, 0.75, 1e-12);
  EXPECT_LE(snap.min, snap.median);
  EXPECT_LE(snap.median, snap.max);
}

TEST(LayerNas, MatchesPerVectorComputation) {
  Rng rng(21);
  Tensor<float> pre({3, 6, 3, 4});
  for (auto& v : pre.data()) v = static_cast<float>(2.0 * rng.normal());
  const auto snap = layer_nas(pre, "x", 2);
  const auto view = receptive_field_vectors(pre);
  std::vector<double> all;
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t k = 0; k < 12; ++k) {
      const auto s = nas_of_vector(std::span<const double>(view.vector(b, k).to_vector())).sparsity;
      all.push_back(s);
      if (b == 2) {
        EXPECT_NEAR(snap.heatmap[k], s, 1e-12);
      }
    }
  }
  EXPECT_NEAR(snap.median, median_of(all), 1e-12);
}

TEST(LayerNas, NonFiniteActivationNamesLayerAndPosition) {
  Tensor<double> pre({1, 3, 2, 2});
  pre.at(0, 1, 1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    layer_nas(pre, "conv3");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("conv3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1, 0)"), std::string::npos) << msg;
  }
}

TEST(Median, EvenAndOdd) {
  EXPECT_EQ(median_of({3, 1, 2}), 2.0);
  EXPECT_EQ(median_of({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median_of({}), InsufficientDataError);
}

}  // namespace
}  // namespace naslab
