/* Copyright 2026 The PIFR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include "pifr/setrep.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "pifr/error.hpp"
#include "test_util.hpp"

namespace pifr {
namespace {

PooledSet pooled(std::initializer_list<std::initializer_list<double>> rows) { return PooledSet{DenseMatrix(rows)}; }

TEST(FeatureMapTest, ValidatesShapeAndValues) {
  EXPECT_THROW(FeatureMap(0, 1, 1), InvariantError);
  EXPECT_THROW(FeatureMap(1, 1, 2, std::vector<double>{1.0}), InvariantError);
  EXPECT_THROW(FeatureMap(1, 1, 1, std::vector<double>{std::nan("")}), InvariantError);
  EXPECT_THROW(FeatureMap(1, 1, 1, std::vector<double>{INFINITY}), InvariantError);
}

TEST(FeatureMapTest, LayoutIsDFastestThenWThenH) {
  FeatureMap m(2, 3, 4);
  m.at(1, 2, 3) = 7.0;
  EXPECT_EQ(m.values()[(1 * 3 + 2) * 4 + 3], 7.0);
  EXPECT_EQ(m.position(5)[3], 7.0);
}

TEST(FeatureSetTest, ValidateRejectsEmptyAndMixedShapes) {
  FeatureSet empty;
  EXPECT_THROW(empty.validate(), InvariantError);
  FeatureSet mixed;
  mixed.maps.emplace_back(1, 1, 2);
  mixed.maps.emplace_back(1, 2, 2);
  EXPECT_THROW(mixed.validate(), InvariantError);
}

TEST(GlobalPoolTest, SinglePositionIsUnchanged) {
  const FeatureMap m(1, 1, 3, std::vector<double>{1.5, -2.0, 0.25});
  EXPECT_EQ(global_pool(m), (DenseVector{1.5, -2.0, 0.25}));
}

TEST(GlobalPoolTest, ArithmeticMean) {
  const FeatureMap m(2, 2, 1, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(global_pool(m), (DenseVector{2.5}));
}

TEST(GlobalPoolTest, ConstantMap) {
  const FeatureMap m(3, 2, 2, 0.7);
  const DenseVector v = global_pool(m);
  for (double x : v) EXPECT_DOUBLE_EQ(x, 0.7);
}

TEST(PoolSetTest, SingletonAndConstantMaps) {
  FeatureSet one;
  one.maps.emplace_back(2, 2, 3, 1.0);
  EXPECT_EQ(pool_set(one).size(), 1u);

  FeatureSet three;
  for (double c : {1.0, -2.0, 4.0}) three.maps.emplace_back(2, 2, 1, c);
  const PooledSet p = pool_set(three);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p.vectors(0, 0), 1.0);
  EXPECT_EQ(p.vectors(1, 0), -2.0);
  EXPECT_EQ(p.vectors(2, 0), 4.0);
}

TEST(PoolSetTest, CommutesWithPermutation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureSet set = testing::random_set(rng, testing::uniform_size(rng, 1, 9), 3, 2, 4);
    const auto order = testing::random_permutation(rng, set.size());
    EXPECT_EQ(pool_set(permuted(set, order)), permuted(pool_set(set), order));
  }
}

TEST(SetAverageTest, Examples) {
  EXPECT_EQ(set_average(pooled({{1.0, -3.0}})).vector, (DenseVector{1.0, -3.0}));
  EXPECT_EQ(set_average(pooled({{1, 0}, {0, 1}})).vector, (DenseVector{0.5, 0.5}));
}

TEST(SetAverageTest, ExactlyPermutationInvariant) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const PooledSet p = testing::random_pooled(rng, testing::uniform_size(rng, 1, 12), 5, 3.0);
    const PooledSet q = permuted(p, testing::random_permutation(rng, p.size()));
    EXPECT_EQ(set_average(p).vector, set_average(q).vector);
  }
}

TEST(SetAverageTest, EmptySetThrows) {
  EXPECT_THROW(set_average(PooledSet{DenseMatrix(0, 2)}), InvariantError);
}

TEST(BaselineMeanL2Test, Examples) {
  EXPECT_EQ(baseline_mean_l2(pooled({{1, 2}}), pooled({{1, 2}})), 0.0);
  EXPECT_DOUBLE_EQ(baseline_mean_l2(pooled({{0, 0}}), pooled({{3, 4}})), -5.0);
  EXPECT_DOUBLE_EQ(baseline_mean_l2(pooled({{0, 0}, {1, 0}}), pooled({{0, 0}})), -0.5);
}

TEST(BaselineAvePoolTest, Examples) {
  EXPECT_EQ(baseline_avepool(pooled({{1, 2}, {3, 1}}), pooled({{1, 2}, {3, 1}})), 0.0);
  EXPECT_EQ(baseline_avepool(pooled({{2, 0}, {0, 0}}), pooled({{1, 0}})), 0.0);
}

TEST(BaselinesTest, ExactlyPermutationInvariant) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const PooledSet p = testing::random_pooled(rng, testing::uniform_size(rng, 1, 12), 4);
    const PooledSet g = testing::random_pooled(rng, testing::uniform_size(rng, 1, 12), 4);
    const PooledSet p2 = permuted(p, testing::random_permutation(rng, p.size()));
    const PooledSet g2 = permuted(g, testing::random_permutation(rng, g.size()));
    EXPECT_EQ(baseline_mean_l2(p, g), baseline_mean_l2(p2, g2));
    EXPECT_EQ(baseline_avepool(p, g), baseline_avepool(p2, g2));
  }
}

TEST(BaselinesTest, InputOrderModeStaysWithinRounding) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const PooledSet p = testing::random_pooled(rng, testing::uniform_size(rng, 1, 12), 4);
    const PooledSet g = testing::random_pooled(rng, testing::uniform_size(rng, 1, 12), 4);
    const PooledSet p2 = permuted(p, testing::random_permutation(rng, p.size()));
    EXPECT_NEAR(baseline_mean_l2(p, g, Reduction::kInputOrder), baseline_mean_l2(p2, g, Reduction::kInputOrder), 1e-12);
    EXPECT_NEAR(baseline_avepool(p, g, Reduction::kInputOrder), baseline_avepool(p2, g, Reduction::kInputOrder), 1e-12);
  }
}

TEST(BaselinesTest, DimensionMismatchThrows) {
  EXPECT_THROW(baseline_avepool(pooled({{1, 2}}), pooled({{1, 2, 3}})), DimensionError);
  EXPECT_THROW(baseline_mean_l2(pooled({{1, 2}}), pooled({{1, 2, 3}})), DimensionError);
}

TEST(CanonicalOrderTest, IndependentOfStorageOrder) {
  std::mt19937_64 rng(21);
  const FeatureSet set = testing::random_set(rng, 7, 2, 2, 3);
  const FeatureSet canon = permuted(set, canonical_order(set));
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureSet shuffled = permuted(set, testing::random_permutation(rng, set.size()));
    EXPECT_EQ(permuted(shuffled, canonical_order(shuffled)), canon);
  }
  const auto identity = canonical_order(set, Reduction::kInputOrder);
  for (std::size_t i = 0; i < identity.size(); ++i) EXPECT_EQ(identity[i], i);
}

}  // namespace
}  // namespace pifr
