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


#include "pifr/dfa.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "pifr/error.hpp"
#include "test_util.hpp"

namespace pifr {
namespace {

PooledSet rows(std::vector<std::vector<double>> r) {
  DenseMatrix m(r.size(), r.front().size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t c = 0; c < r[i].size(); ++c) m(i, c) = r[i][c];
  return PooledSet{m};
}

CodingConfig coding(int p, double lambda) {
  CodingConfig c;
  c.p = p;
  c.lambda = lambda;
  return c;
}

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

// Subgradient optimality of |x - Y a|^2 + mu |a|_1, computed from scratch.
double kkt_violation(const std::vector<double>& x, const oracle::Matrix& atoms, const std::vector<double>& a,
                     double mu) {
  const std::vector<double> rec = oracle::reconstruct(atoms, a, x.size());
  double worst = 0.0;
  for (std::size_t m = 0; m < atoms.size(); ++m) {
    double g = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) g -= 2.0 * atoms[m][c] * (x[c] - rec[c]);
    const double v = a[m] > 0 ? std::abs(g + mu) : a[m] < 0 ? std::abs(g - mu) : std::max(0.0, std::abs(g) - mu);
    worst = std::max(worst, v);
  }
  return worst;
}

const PooledSet kBasis = rows({{1, 0}, {0, 1}});

TEST(CollaborativeCodingTest, UnregularizedReproducesVector) {
  const DenseVector a = solve_collaborative(std::vector<double>{1, 0}, kBasis, coding(2, 0.0));
  EXPECT_NEAR(a[0], 1.0, 1e-15);
  EXPECT_NEAR(a[1], 0.0, 1e-15);
}

TEST(CollaborativeCodingTest, ShrinksWithPenalty) {
  const std::vector<double> x{1, 0};
  const DenseVector a = solve_collaborative(x, kBasis, coding(2, 1.0));
  EXPECT_NEAR(a[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(a[1], 0.0, 1e-15);
  EXPECT_NEAR(oracle::residual_energy(x, oracle::to_rows(kBasis.vectors), to_vec(a)), 1.0 / 9.0, 1e-15);
}

TEST(CollaborativeCodingTest, OrthogonalVectorGetsZeroCode) {
  const PooledSet gallery = rows({{1, 0, 0}});
  const DenseVector a = solve_collaborative(std::vector<double>{0, 2, 0}, gallery, coding(2, 0.5));
  EXPECT_EQ(a[0], 0.0);
}

TEST(CollaborativeCodingTest, SingularUnregularizedThrows) {
  const PooledSet gallery = rows({{1, 0}, {2, 0}});
  EXPECT_THROW(solve_collaborative(std::vector<double>{1, 0}, gallery, coding(2, 0.0)), SolverError);
}

TEST(CollaborativeCodingTest, MatchesDescentOracle) {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = testing::uniform_size(rng, 1, 8);
    const std::size_t d = testing::uniform_size(rng, 1, 10);
    const double lambda = testing::uniform_real(rng, 0.05, 3.0);
    const PooledSet gallery = testing::random_pooled(rng, m, d);
    const std::vector<double> x = to_vec(testing::random_pooled(rng, 1, d).vector(0));
    const DenseVector a = solve_collaborative(x, gallery, coding(2, lambda));
    const auto want = oracle::ridge_descent(x, oracle::to_rows(gallery.vectors), lambda / static_cast<double>(m));
    for (std::size_t k = 0; k < m; ++k) worst = std::max(worst, std::abs(a[k] - want[k]));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(CollaborativeCodingTest, OptimumBeatsPerturbations) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = testing::uniform_size(rng, 1, 6);
    const PooledSet gallery = testing::random_pooled(rng, m, 5);
    const std::vector<double> x = to_vec(testing::random_pooled(rng, 1, 5).vector(0));
    const CodingConfig config = coding(2, 0.7);
    const DenseVector a = solve_collaborative(x, gallery, config);
    const double best = coding_objective(x, gallery, a, config);
    for (int k = 0; k < 10; ++k) {
      DenseVector b = a;
      for (double& v : b) v += testing::uniform_real(rng, -1e-3, 1e-3);
      EXPECT_GE(coding_objective(x, gallery, b, config), best - 1e-12);
    }
  }
}

TEST(SparseCodingTest, ScalarSoftThreshold) {
  const PooledSet gallery = rows({{1}});
  EXPECT_NEAR(solve_sparse(std::vector<double>{1}, gallery, coding(1, 0.5))[0], 0.75, 1e-15);
  EXPECT_EQ(solve_sparse(std::vector<double>{1}, gallery, coding(1, 5.0))[0], 0.0);
}

TEST(SparseCodingTest, ZeroLambdaIsRejected) {
  EXPECT_THROW(solve_sparse(std::vector<double>{1}, rows({{1}}), coding(1, 0.0)), SolverError);
}

TEST(SparseCodingTest, MatchesEnumerationOracle) {
  std::mt19937_64 rng(3);
  double worst_gap = 0.0, worst_kkt = 0.0;
  for (int trial = 0; trial < 600; ++trial) {
    const std::size_t m = testing::uniform_size(rng, 1, 6);
    const std::size_t d = testing::uniform_size(rng, 1, 8);
    const double lambda = testing::uniform_real(rng, 0.01, 4.0);
    const PooledSet gallery = testing::random_pooled(rng, m, d);
    const std::vector<double> x = to_vec(testing::random_pooled(rng, 1, d).vector(0));
    const CodingConfig config = coding(1, lambda);
    const double mu = lambda / static_cast<double>(m);
    const oracle::Matrix atoms = oracle::to_rows(gallery.vectors);
    const std::vector<double> a = to_vec(solve_sparse(x, gallery, config));
    const oracle::SparseOptimum best = oracle::sparse_enumerate(x, atoms, mu);
    worst_gap = std::max(worst_gap, oracle::l1_objective(x, atoms, a, mu) - best.objective);
    worst_kkt = std::max(worst_kkt, kkt_violation(x, atoms, a, mu));
  }
  EXPECT_LE(worst_gap, 1e-8);
  EXPECT_LE(worst_kkt, 1e-6);
}

TEST(SparseCodingTest, LibraryKktAgreesWithOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const PooledSet gallery = testing::random_pooled(rng, 4, 3);
    const std::vector<double> x = to_vec(testing::random_pooled(rng, 1, 3).vector(0));
    std::vector<double> a(4);
    for (double& v : a) v = testing::uniform_real(rng, -1, 1);
    a[1] = 0.0;
    const CodingConfig config = coding(1, 1.3);
    EXPECT_NEAR(sparse_kkt_residual(x, gallery, a, config),
                kkt_violation(x, oracle::to_rows(gallery.vectors), a, 1.3 / 4.0), 1e-12);
  }
}

TEST(CodeSetTest, SingleProbeVector) {
  const CodingMatrix codes = code_set(rows({{1, 0}}), kBasis, coding(2, 1.0));
  EXPECT_EQ(codes.a.rows(), 2u);
  EXPECT_EQ(codes.a.cols(), 1u);
  EXPECT_NEAR(codes.a(0, 0), 2.0 / 3.0, 1e-15);
}

TEST(CodeSetTest, ProbeEqualsGalleryGivesIdentityCodes) {
  std::mt19937_64 rng(5);
  const PooledSet set = testing::random_pooled(rng, 4, 6);
  const CodingMatrix codes = code_set(set, set, coding(2, 0.0));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(codes.a(i, j), i == j ? 1.0 : 0.0, 1e-9);
}

TEST(CodeSetTest, GalleryPermutationPermutesRows) {
  std::mt19937_64 rng(6);
  for (int p : {1, 2}) {
    const PooledSet probe = testing::random_pooled(rng, 3, 5);
    const PooledSet gallery = testing::random_pooled(rng, 5, 5);
    const auto order = testing::random_permutation(rng, 5);
    const CodingConfig config = coding(p, 0.8);
    const CodingMatrix base = code_set(probe, gallery, config);
    const CodingMatrix moved = code_set(probe, permuted(gallery, order), config);
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(moved.a(k, n), base.a(order[k], n));
  }
}

TEST(CodeSetTest, ThreadCountDoesNotChangeCodes) {
  std::mt19937_64 rng(7);
  const PooledSet probe = testing::random_pooled(rng, 9, 4);
  const PooledSet gallery = testing::random_pooled(rng, 6, 4);
  EXPECT_EQ(code_set(probe, gallery, coding(1, 0.5), 1).a, code_set(probe, gallery, coding(1, 0.5), 4).a);
}

TEST(SetSimilarityTest, ZeroInsideSpan) {
  EXPECT_NEAR(set_similarity(rows({{1, 0}, {0.5, -2}}), kBasis, coding(2, 0.0)), 0.0, 1e-15);
}

TEST(SetSimilarityTest, HandExample) {
  EXPECT_NEAR(set_similarity(rows({{1, 0}}), kBasis, coding(2, 1.0)), -1.0 / 9.0, 1e-15);
}

TEST(SetSimilarityTest, MatchesOracleResidual) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = testing::uniform_size(rng, 1, 5), m = testing::uniform_size(rng, 1, 5);
    const PooledSet probe = testing::random_pooled(rng, n, 4);
    const PooledSet gallery = testing::random_pooled(rng, m, 4);
    const double lambda = testing::uniform_real(rng, 0.1, 2.0);
    const oracle::Matrix atoms = oracle::to_rows(gallery.vectors);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> x = to_vec(probe.vector(i));
      total += oracle::residual_energy(x, atoms, oracle::ridge_descent(x, atoms, lambda / static_cast<double>(m)));
    }
    EXPECT_NEAR(set_similarity(probe, gallery, coding(2, lambda)), -total / static_cast<double>(n), 1e-9);
  }
}

TEST(SetSimilarityTest, PermutationInvariantBitExact) {
  std::mt19937_64 rng(9);
  for (int p : {1, 2})
    for (int trial = 0; trial < 50; ++trial) {
      const PooledSet probe = testing::random_pooled(rng, testing::uniform_size(rng, 1, 8), 6);
      const PooledSet gallery = testing::random_pooled(rng, testing::uniform_size(rng, 1, 8), 6);
      const CodingConfig config = coding(p, 0.6);
      const double base = set_similarity(probe, gallery, config);
      const double moved = set_similarity(permuted(probe, testing::random_permutation(rng, probe.size())),
                                          permuted(gallery, testing::random_permutation(rng, gallery.size())),
                                          config);
      EXPECT_EQ(base, moved);
    }
}

TEST(SetSimilarityTest, GrowingGalleryNeverLowersObjective) {
  // Zero-padding keeps the old code feasible and lambda / M only shrinks, so
  // the optimal coding objective is non-increasing as atoms are added.
  std::mt19937_64 rng(10);
  for (int p : {1, 2})
    for (int trial = 0; trial < 50; ++trial) {
      const PooledSet full = testing::random_pooled(rng, 6, 4);
      const std::vector<double> x = to_vec(testing::random_pooled(rng, 1, 4).vector(0));
      const CodingConfig config = coding(p, 1.0);
      double previous = std::numeric_limits<double>::infinity();
      for (std::size_t m = 1; m <= 6; ++m) {
        DenseMatrix head(m, 4);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t c = 0; c < 4; ++c) head(i, c) = full.vectors(i, c);
        const PooledSet gallery{head};
        const DenseVector a = p == 1 ? solve_sparse(x, gallery, config) : solve_collaborative(x, gallery, config);
        const double objective = coding_objective(x, gallery, a, config);
        EXPECT_LE(objective, previous + 1e-12);
        previous = objective;
      }
    }
}

TEST(SetSimilarityTest, DimensionMismatchThrows) {
  EXPECT_THROW(set_similarity(rows({{1, 0, 0}}), kBasis, coding(2, 1.0)), DimensionError);
}

TEST(SymmetricSimilarityTest, IdenticalSetsScoreZero) {
  std::mt19937_64 rng(11);
  const PooledSet set = testing::random_pooled(rng, 3, 5);
  EXPECT_NEAR(symmetric_similarity(set, set, coding(2, 0.0)), 0.0, 1e-12);
}

TEST(SymmetricSimilarityTest, IsSymmetric) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const PooledSet a = testing::random_pooled(rng, testing::uniform_size(rng, 1, 5), 4);
    const PooledSet b = testing::random_pooled(rng, testing::uniform_size(rng, 1, 5), 4);
    EXPECT_EQ(symmetric_similarity(a, b, coding(2, 0.5)), symmetric_similarity(b, a, coding(2, 0.5)));
  }
}

TEST(SymmetricSimilarityTest, SingletonsAgreeWithPlainScore) {
  std::mt19937_64 rng(13);
  const PooledSet a = testing::random_pooled(rng, 1, 4);
  EXPECT_EQ(symmetric_similarity(a, a, coding(2, 0.5)), set_similarity(a, a, coding(2, 0.5)));
}

TEST(CodingConfigTest, Validation) {
  EXPECT_THROW(coding(3, 1.0).validate(), InvariantError);
  EXPECT_THROW(coding(2, -1.0).validate(), InvariantError);
  EXPECT_EQ(penalty_weight(coding(2, 2.0), 4), 0.5);
}

}  // namespace
}  // namespace pifr
