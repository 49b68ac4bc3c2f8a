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

#include "clsamp/model.h"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "clsamp/error.h"
#include "oracles.h"

namespace clsamp {
namespace {

std::vector<Sample> RandomBatch(std::mt19937_64& gen, std::size_t count,
                                std::size_t dim, std::size_t classes) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::uint32_t> label(0, classes - 1);
  std::vector<Sample> batch(count);
  for (auto& s : batch) {
    s.features.resize(dim);
    for (auto& x : s.features) x = normal(gen);
    s.label = label(gen);
  }
  return batch;
}

ModelParams RandomParams(std::mt19937_64& gen, const Architecture& arch) {
  std::normal_distribution<double> normal(0.0, 0.5);
  ModelParams p{arch, std::vector<double>(arch.ParameterCount())};
  for (auto& x : p.theta) x = normal(gen);
  return p;
}

TEST(ArchitectureTest, ParameterCounts) {
  EXPECT_EQ(Architecture::SoftmaxRegression(4, 3).ParameterCount(), 15u);
  EXPECT_EQ(Architecture::Mlp1(4, 5, 3).ParameterCount(), 5u * 4 + 5 + 3 * 5 + 3);
  EXPECT_EQ(ParseArchKind("softmax"), ArchKind::kSoftmaxRegression);
  EXPECT_EQ(ParseArchKind("mlp"), ArchKind::kMlp1);
  EXPECT_THROW(ParseArchKind("cnn"), Error);
}

TEST(ModelTest, ZeroSoftmaxLossIsLogC) {
  std::mt19937_64 gen(1);
  const auto arch = Architecture::SoftmaxRegression(6, 7);
  const ModelParams zero{arch, std::vector<double>(arch.ParameterCount(), 0.0)};
  const auto batch = RandomBatch(gen, 9, 6, 7);
  EXPECT_DOUBLE_EQ(ForwardLossGrad(zero, std::span<const Sample>(batch)).loss,
                   std::log(7.0));
  EXPECT_DOUBLE_EQ(MeanLoss(zero, batch), std::log(7.0));
}

TEST(ModelTest, InitIsBoundedWithZeroBiases) {
  RngStream rng(2);
  const auto arch = Architecture::Mlp1(16, 8, 3);
  const auto params = InitParams(arch, rng);
  ASSERT_EQ(params.theta.size(), arch.ParameterCount());
  for (std::size_t p = 0; p < 8 * 16; ++p) EXPECT_LE(std::abs(params.theta[p]), 0.25);
  for (std::size_t p = 8 * 16; p < 8 * 16 + 8; ++p) EXPECT_EQ(params.theta[p], 0.0);
  const std::size_t w2 = 8 * 16 + 8;
  for (std::size_t p = w2; p < w2 + 3 * 8; ++p) {
    EXPECT_LE(std::abs(params.theta[p]), 1 / std::sqrt(8.0));
  }
  for (std::size_t p = w2 + 24; p < params.theta.size(); ++p) {
    EXPECT_EQ(params.theta[p], 0.0);
  }
}

class GradientCheckTest : public ::testing::TestWithParam<ArchKind> {};

TEST_P(GradientCheckTest, AnalyticMatchesFiniteDifferences) {
  std::mt19937_64 gen(GetParam() == ArchKind::kMlp1 ? 11 : 12);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 6)(gen);
    const std::size_t classes = std::uniform_int_distribution<std::size_t>(2, 5)(gen);
    const std::size_t hidden = std::uniform_int_distribution<std::size_t>(1, 6)(gen);
    const auto arch = GetParam() == ArchKind::kMlp1
                          ? Architecture::Mlp1(dim, hidden, classes)
                          : Architecture::SoftmaxRegression(dim, classes);
    const auto params = RandomParams(gen, arch);
    const auto batch = RandomBatch(
        gen, std::uniform_int_distribution<std::size_t>(1, 8)(gen), dim, classes);
    const auto analytic = ForwardLossGrad(params, std::span<const Sample>(batch)).grad;
    EXPECT_LT(testing::RelativeError(analytic, testing::CentralDifferences(params, batch)), 1e-5)
        << "case " << rep;
  }
}

INSTANTIATE_TEST_SUITE_P(Architectures, GradientCheckTest,
                         ::testing::Values(ArchKind::kSoftmaxRegression,
                                           ArchKind::kMlp1));

TEST(ModelTest, DuplicatedBatchIsMeanInvariant) {
  std::mt19937_64 gen(3);
  const auto arch = Architecture::Mlp1(3, 4, 3);
  const auto params = RandomParams(gen, arch);
  const auto batch = RandomBatch(gen, 5, 3, 3);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const auto a = ForwardLossGrad(params, std::span<const Sample>(batch));
  const auto b = ForwardLossGrad(params, std::span<const Sample>(doubled));
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  for (std::size_t p = 0; p < a.grad.size(); ++p) EXPECT_NEAR(a.grad[p], b.grad[p], 1e-14);
}

TEST(ModelTest, PointerAndValueBatchesAgree) {
  std::mt19937_64 gen(4);
  const auto arch = Architecture::SoftmaxRegression(3, 2);
  const auto params = RandomParams(gen, arch);
  const auto batch = RandomBatch(gen, 4, 3, 2);
  std::vector<const Sample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  const auto a = ForwardLossGrad(params, std::span<const Sample>(batch));
  const auto b = ForwardLossGrad(params, std::span<const Sample* const>(ptrs));
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(ModelTest, CountCorrectAndChunkedLoss) {
  std::mt19937_64 gen(5);
  const auto arch = Architecture::SoftmaxRegression(2, 2);
  // Logit of class 1 minus class 0 equals x_0.
  ModelParams params{arch, {0, 1, 0, 0, 0, 0}};
  std::vector<Sample> samples;
  for (int i = 0; i < 1500; ++i) {
    const double x = (i % 3 == 0) ? -1.0 : 1.0;
    samples.push_back({{x, 0.0}, static_cast<std::uint32_t>(i % 2)});
  }
  std::size_t expected = 0;
  for (const auto& s : samples) expected += (s.features[0] > 0) == (s.label == 1);
  EXPECT_EQ(CountCorrect(params, samples), expected);
  EXPECT_NEAR(MeanLoss(params, samples),
              ForwardLossGrad(params, std::span<const Sample>(samples)).loss, 1e-12);
}

TEST(ModelTest, DimensionErrors) {
  const auto arch = Architecture::SoftmaxRegression(3, 2);
  const ModelParams params{arch, std::vector<double>(arch.ParameterCount(), 0.0)};
  const std::vector<Sample> wrong_dim = {{{1.0, 2.0}, 0}};
  EXPECT_THROW(ForwardLossGrad(params, std::span<const Sample>(wrong_dim)), Error);
  const std::vector<Sample> wrong_label = {{{1.0, 2.0, 3.0}, 5}};
  EXPECT_THROW(ForwardLossGrad(params, std::span<const Sample>(wrong_label)), Error);
  const ModelParams short_theta{arch, {1.0}};
  const std::vector<Sample> ok = {{{1.0, 2.0, 3.0}, 1}};
  EXPECT_THROW(ForwardLossGrad(short_theta, std::span<const Sample>(ok)), Error);
  EXPECT_THROW(ForwardLossGrad(params, std::span<const Sample>()), Error);
}

}  // namespace
}  // namespace clsamp
