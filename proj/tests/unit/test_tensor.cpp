#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "naslab/random.hpp"
#include "naslab/tensor.hpp"

namespace naslab {
namespace {

TEST(Tensor, SizeIsProductOfShape) {
  Tensor<float> t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(shape_size({}), 1u);
  EXPECT_EQ(Tensor<float>({0, 3}).size(), 0u);
}

TEST(Tensor, RowMajorIndexing) {
  Tensor<int> t({2, 3}, std::vector<int>{0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at(1, 0), 3);
  EXPECT_EQ(t.at(0, 2), 2);
  EXPECT_EQ(t.offset({1, 2}), 5u);
}

TEST(Tensor, RejectsMismatchedDataAndBadIndices) {
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), ConfigError);
  Tensor<float> t({2, 2});
  EXPECT_THROW(t.at(2, 0), ConfigError);
  EXPECT_THROW(t.at(0), ConfigError);
  EXPECT_THROW(t.reshape({3}), ConfigError);
}

TEST(Tensor, NonFiniteDetectionIsExplicit) {
  Tensor<double> t({4}, 1.0);
  EXPECT_FALSE(t.first_non_finite());
  t[2] = std::numeric_limits<double>::quiet_NaN();
  t[3] = std::numeric_limits<double>::infinity();
  ASSERT_TRUE(t.first_non_finite());
  EXPECT_EQ(*t.first_non_finite(), 2u);
}

TEST(Tensor, RequireSameShapeRaisesStateError) {
  EXPECT_NO_THROW(require_same_shape({1, 2}, {1, 2}, "x"));
  EXPECT_THROW(require_same_shape({1, 2}, {2, 1}, "x"), StateError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformAndBelowStayInRange) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
}

TEST(Rng, NormalHasUnitMoments) {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng rng(5);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  rng.shuffle(std::span<int>(v));
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 1), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
}

}  // namespace
}  // namespace naslab
