// Copyright 2026 The Clustered Sampling Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "clsamp/rng.h"

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "clsamp/error.h"

namespace clsamp {
namespace {

TEST(RngStreamTest, SameSeedSameSequence) {
  RngStream a(123), b(123);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.NextU64(), b.NextU64());
}

TEST(RngStreamTest, ForkDependsOnlyOnSeedAndKey) {
  RngStream a(9);
  RngStream b(9);
  for (int i = 0; i < 10; ++i) b.NextU64();
  RngStream fa = a.Fork(5), fb = b.Fork(5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(fa.NextU64(), fb.NextU64());
}

TEST(RngStreamTest, DistinctForksDiffer) {
  const RngStream root(1);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t k = 0; k < 1000; ++k) firsts.insert(root.Fork(k).NextU64());
  EXPECT_EQ(firsts.size(), 1000u);
  EXPECT_NE(root.Fork(1).Fork(2).NextU64(), root.Fork(2).Fork(1).NextU64());
}

TEST(RngStreamTest, UniformBelowStaysInRangeAndCoversIt) {
  RngStream rng(7);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.UniformBelow(7);
    ASSERT_LT(v, 7u);
    ++hist[v];
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 400);
  EXPECT_THROW(rng.UniformBelow(0), Error);
}

TEST(RngStreamTest, UniformUnitMoments) {
  RngStream rng(11);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.UniformUnit();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sum_sq += u * u;
  }
  EXPECT_NEAR(sum / n, 0.5, 3 * std::sqrt(1.0 / 12 / n));
  EXPECT_NEAR(sum_sq / n - (sum / n) * (sum / n), 1.0 / 12, 2e-3);
}

TEST(RngStreamTest, NormalMoments) {
  RngStream rng(13);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.Normal();
    sum += x;
    sum_sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 3 / std::sqrt(double(n)));
  EXPECT_NEAR(sum_sq / n, 1.0, 0.015);
}

class GammaMomentTest : public ::testing::TestWithParam<double> {};

TEST_P(GammaMomentTest, MeanAndVarianceMatchShape) {
  const double shape = GetParam();
  RngStream rng(17);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = std::exp(rng.LogGamma(shape));
    sum += g;
    sum_sq += g * g;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  EXPECT_NEAR(mean, shape, 4 * std::sqrt(shape / n));
  EXPECT_NEAR(var / shape, 1.0, 0.05);
}

INSTANTIATE_TEST_SUITE_P(Shapes, GammaMomentTest,
                         ::testing::Values(0.3, 1.0, 2.5, 40.0));

TEST(RngStreamTest, TinyGammaShapeStaysFinite) {
  RngStream rng(19);
  for (int i = 0; i < 1000; ++i) {
    const double lg = rng.LogGamma(1e-4);
    ASSERT_TRUE(std::isfinite(lg));
  }
  EXPECT_THROW(rng.LogGamma(0.0), Error);
}

TEST(RngStreamTest, DirichletSumsToOne) {
  RngStream rng(23);
  for (double alpha : {1e-4, 0.01, 1.0, 1e6}) {
    for (int rep = 0; rep < 100; ++rep) {
      const auto q = rng.Dirichlet(alpha, 10);
      const double s = std::accumulate(q.begin(), q.end(), 0.0);
      EXPECT_NEAR(s, 1.0, 1e-12);
      for (double x : q) EXPECT_GE(x, 0.0);
    }
  }
}

TEST(RngStreamTest, DirichletConcentrationExtremes) {
  RngStream rng(29);
  const auto flat = rng.Dirichlet(1e6, 10);
  for (double x : flat) EXPECT_NEAR(x, 0.1, 0.01);
  const auto peaked = rng.Dirichlet(1e-4, 10);
  EXPECT_GT(*std::max_element(peaked.begin(), peaked.end()), 0.99);
  EXPECT_THROW(rng.Dirichlet(1.0, 0), Error);
}

}  // namespace
}  // namespace clsamp
