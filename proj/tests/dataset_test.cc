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

#include "clsamp/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "clsamp/error.h"
#include "test_support.h"

namespace clsamp {
namespace {

using testing::TempDir;

void ExpectErrorCode(ErrorCode code, const std::function<void()>& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected " << ErrorCodeName(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

void PutBigEndian(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back((v >> shift) & 0xFF);
}

void WriteBytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// IDX image file with `count` rows x cols images whose pixels are
// (record + p) mod 256, and a label file with `labels` entries.
void WriteIdxPair(const std::string& images, const std::string& labels,
                  std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                  std::uint32_t label_count, std::uint32_t image_magic = 0x803,
                  std::size_t drop_tail = 0) {
  std::vector<unsigned char> img;
  PutBigEndian(img, image_magic);
  PutBigEndian(img, count);
  PutBigEndian(img, rows);
  PutBigEndian(img, cols);
  for (std::uint32_t r = 0; r < count; ++r) {
    for (std::uint32_t p = 0; p < rows * cols; ++p) img.push_back((r + p) % 256);
  }
  img.resize(img.size() - drop_tail);
  WriteBytes(images, img);
  std::vector<unsigned char> lab;
  PutBigEndian(lab, 0x801);
  PutBigEndian(lab, label_count);
  for (std::uint32_t r = 0; r < label_count; ++r) lab.push_back(r % 10);
  WriteBytes(labels, lab);
}

TEST(SyntheticTest, HundredClientsInTenGroups) {
  const auto ds = MakeSynthetic(10, 10, 500, 20, 1.0, 42);
  EXPECT_EQ(ds.num_clients(), 100u);
  EXPECT_EQ(ds.num_classes(), 10u);
  EXPECT_EQ(ds.feature_dim(), 20u);
  EXPECT_EQ(ds.total_train(), 50000u);
  const auto hist = ds.ClassHistograms();
  for (std::size_t c = 0; c < 100; ++c) {
    EXPECT_EQ(ds.client(c).n_train(), 500u);
    EXPECT_EQ(ds.client(c).test.size(), 100u);
    EXPECT_EQ(hist[c][c / 10], 500u);
  }
}

TEST(SyntheticTest, ZeroNoiseCollapsesToGroupMean) {
  const auto ds = MakeSynthetic(1, 1, 5, 2, 0.0, 0);
  ASSERT_EQ(ds.num_clients(), 1u);
  const auto& train = ds.client(0).train;
  ASSERT_EQ(train.size(), 5u);
  for (const auto& s : train) EXPECT_EQ(s.features, train[0].features);
}

TEST(SyntheticTest, DeterministicUnderSeed) {
  EXPECT_EQ(MakeSynthetic(2, 2, 10, 3, 0.5, 7), MakeSynthetic(2, 2, 10, 3, 0.5, 7));
  EXPECT_FALSE(MakeSynthetic(2, 2, 10, 3, 0.5, 7) ==
               MakeSynthetic(2, 2, 10, 3, 0.5, 8));
}

TEST(SyntheticTest, RejectsBadArguments) {
  ExpectErrorCode(ErrorCode::kInvalidArgument,
                  [] { MakeSynthetic(0, 1, 1, 1, 1.0, 0); });
  ExpectErrorCode(ErrorCode::kInvalidArgument,
                  [] { MakeSynthetic(1, 1, 1, 1, -1.0, 0); });
}

TEST(FederatedDatasetTest, WeightsSumToOne) {
  const auto ds = MakeSynthetic(3, 4, 7, 2, 1.0, 1);
  const auto w = ds.Weights();
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
  const auto sizes = ds.ClientSizes();
  EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0}),
            ds.total_train());
}

TEST(FederatedDatasetTest, ValidatesShards) {
  Sample a{{1.0, 2.0}, 0};
  Sample b{{1.0}, 0};
  Sample c{{1.0, 2.0}, 3};
  ExpectErrorCode(ErrorCode::kInvalidArgument, [&] {
    FederatedDataset({ClientShard{{}, {}}}, 2);
  });
  ExpectErrorCode(ErrorCode::kDimensionMismatch, [&] {
    FederatedDataset({ClientShard{{a, b}, {}}}, 2);
  });
  ExpectErrorCode(ErrorCode::kInvalidArgument, [&] {
    FederatedDataset({ClientShard{{a, c}, {}}}, 2);
  });
}

TEST(IdxTest, LoadsScaledPixels) {
  TempDir dir;
  WriteIdxPair(dir.File("img"), dir.File("lab"), 12, 3, 4, 12);
  const auto samples = LoadIdx(dir.File("img"), dir.File("lab"));
  ASSERT_EQ(samples.size(), 12u);
  for (std::uint32_t r = 0; r < 12; ++r) {
    ASSERT_EQ(samples[r].features.size(), 12u);
    EXPECT_EQ(samples[r].label, r % 10);
    for (std::uint32_t p = 0; p < 12; ++p) {
      EXPECT_DOUBLE_EQ(samples[r].features[p], ((r + p) % 256) / 255.0);
    }
  }
}

TEST(IdxTest, WrongImageMagic) {
  TempDir dir;
  WriteIdxPair(dir.File("img"), dir.File("lab"), 2, 2, 2, 2, 0x801);
  ExpectErrorCode(ErrorCode::kBadMagic,
                  [&] { LoadIdx(dir.File("img"), dir.File("lab")); });
}

TEST(IdxTest, CountMismatch) {
  TempDir dir;
  WriteIdxPair(dir.File("img"), dir.File("lab"), 10, 2, 2, 9);
  ExpectErrorCode(ErrorCode::kCountMismatch,
                  [&] { LoadIdx(dir.File("img"), dir.File("lab")); });
}

TEST(IdxTest, TruncatedPixels) {
  TempDir dir;
  WriteIdxPair(dir.File("img"), dir.File("lab"), 4, 2, 2, 4, 0x803, 3);
  ExpectErrorCode(ErrorCode::kTruncatedFile,
                  [&] { LoadIdx(dir.File("img"), dir.File("lab")); });
}

TEST(IdxTest, TruncatedHeaderAndMissingFile) {
  TempDir dir;
  WriteBytes(dir.File("img"), {0, 0, 8});
  WriteIdxPair(dir.File("unused"), dir.File("lab"), 1, 1, 1, 1);
  ExpectErrorCode(ErrorCode::kTruncatedFile,
                  [&] { LoadIdx(dir.File("img"), dir.File("lab")); });
  ExpectErrorCode(ErrorCode::kIo,
                  [&] { LoadIdx(dir.File("absent"), dir.File("lab")); });
}

std::vector<std::size_t> Equal(std::size_t clients, std::size_t size) {
  return std::vector<std::size_t>(clients, size);
}

TEST(DirichletTest, SizesAreHonouredExactly) {
  const auto sizes = PaperUnbalancedSizes();
  const auto pool = MakeSyntheticPool(10, 12000, 2, 1.0, 3);
  const auto ds = PartitionDirichlet(pool, {}, sizes, 0.5, 3);
  ASSERT_EQ(ds.num_clients(), sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    EXPECT_EQ(ds.client(i).n_train(), sizes[i]);
    EXPECT_EQ(ds.client(i).test.size(), TestSizeFor(sizes[i]));
  }
}

TEST(DirichletTest, PaperUnbalancedProfile) {
  const auto sizes = PaperUnbalancedSizes();
  EXPECT_EQ(sizes.size(), 100u);
  EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}), 48500u);
  EXPECT_EQ(SizesFromProfile("paper-unbalanced"), sizes);
  EXPECT_EQ(SizesFromProfile("equal:4x7"), Equal(4, 7));
  ExpectErrorCode(ErrorCode::kInvalidArgument, [] { SizesFromProfile("equal:0x7"); });
  ExpectErrorCode(ErrorCode::kInvalidArgument, [] { SizesFromProfile("bogus"); });
}

TEST(DirichletTest, HugeAlphaIsNearlyUniform) {
  // Pooled chi-square statistic over every client's class histogram must
  // sit within 3 standard deviations of its expectation.
  const std::size_t clients = 100, n = 200, classes = 10;
  const auto pool = MakeSyntheticPool(classes, 4000, 2, 1.0, 5);
  const auto ds = PartitionDirichlet(pool, {}, Equal(clients, n), 1e6, 5);
  const auto hist = ds.ClassHistograms();
  const double expected = static_cast<double>(n) / classes;
  double chi2 = 0.0;
  for (const auto& h : hist) {
    for (auto c : h) chi2 += (c - expected) * (c - expected) / expected;
  }
  const double dof = static_cast<double>(clients * (classes - 1));
  EXPECT_LT(std::abs(chi2 - dof), 3 * std::sqrt(2 * dof)) << chi2;
}

TEST(DirichletTest, TinyAlphaGivesOneClassPerClient) {
  const std::size_t clients = 50, n = 100;
  const auto pool = MakeSyntheticPool(10, clients * (n + 20), 2, 1.0, 9);
  const auto ds = PartitionDirichlet(pool, {}, Equal(clients, n), 1e-4, 9);
  for (const auto& h : ds.ClassHistograms()) {
    EXPECT_GE(*std::max_element(h.begin(), h.end()), 99u);
  }
}

TEST(DirichletTest, ExhaustedClassFallsBackToOthers) {
  // Two classes of 30 samples each; every client prefers one class hard.
  const auto pool = MakeSyntheticPool(2, 30, 1, 1.0, 2);
  const auto ds = PartitionDirichlet(pool, {}, Equal(4, 10), 1e-4, 2);
  std::uint64_t used = 0;
  for (const auto& h : ds.ClassHistograms()) used += h[0] + h[1];
  EXPECT_EQ(used, 40u);
}

TEST(DirichletTest, SeparateTestPool) {
  const auto train = MakeSyntheticPool(5, 100, 2, 1.0, 4);
  const auto test = MakeSyntheticPool(5, 30, 2, 1.0, 40);
  const auto ds = PartitionDirichlet(train, test, Equal(5, 50), 1.0, 4);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(ds.client(i).test.size(), 10u);
    for (const auto& s : ds.client(i).test) {
      EXPECT_NE(std::find(test.begin(), test.end(), s), test.end());
    }
  }
}

TEST(DirichletTest, PoolExhausted) {
  const auto pool = MakeSyntheticPool(2, 10, 1, 1.0, 2);
  ExpectErrorCode(ErrorCode::kPoolExhausted,
                  [&] { PartitionDirichlet(pool, {}, Equal(2, 10), 1.0, 2); });
  ExpectErrorCode(ErrorCode::kInvalidArgument,
                  [&] { PartitionDirichlet(pool, {}, Equal(1, 2), 0.0, 2); });
}

TEST(DirichletTest, Deterministic) {
  const auto pool = MakeSyntheticPool(4, 200, 3, 1.0, 8);
  EXPECT_EQ(PartitionDirichlet(pool, {}, Equal(6, 40), 0.3, 8),
            PartitionDirichlet(pool, {}, Equal(6, 40), 0.3, 8));
}

TEST(ManifestTest, RoundTripsSynthetic) {
  TempDir dir;
  DatasetRecipe recipe;
  recipe.seed = 11;
  recipe.num_groups = 3;
  recipe.clients_per_group = 2;
  recipe.n_per_client = 15;
  recipe.d_in = 4;
  const auto ds = BuildDataset(recipe);
  {
    std::ofstream out(dir.File("m.json"));
    out << DatasetManifest(recipe, ds).dump();
  }
  EXPECT_EQ(LoadDatasetManifest(dir.File("m.json")), ds);
}

TEST(ManifestTest, RoundTripsDirichletProfile) {
  TempDir dir;
  DatasetRecipe recipe;
  recipe.seed = 1;
  recipe.alpha = 0.01;
  recipe.sizes_profile = "paper-unbalanced";
  const auto ds = BuildDataset(recipe);
  EXPECT_EQ(ds.total_train(), 48500u);
  const auto manifest = DatasetManifest(recipe, ds);
  EXPECT_EQ(manifest.at("total_train").get<std::uint64_t>(), 48500u);
  {
    std::ofstream out(dir.File("m.json"));
    out << manifest.dump();
  }
  EXPECT_EQ(LoadDatasetManifest(dir.File("m.json")), ds);
}

TEST(ManifestTest, RoundTripsIdx) {
  TempDir dir;
  WriteIdxPair(dir.File("img"), dir.File("lab"), 200, 2, 2, 200);
  DatasetRecipe recipe;
  recipe.source = DatasetRecipe::Source::kIdx;
  recipe.train_images = dir.File("img");
  recipe.train_labels = dir.File("lab");
  recipe.alpha = 1.0;
  recipe.sizes_profile = "equal:5x20";
  const auto ds = BuildDataset(recipe);
  EXPECT_EQ(ds.num_clients(), 5u);
  EXPECT_EQ(ds.feature_dim(), 4u);
  {
    std::ofstream out(dir.File("m.json"));
    out << DatasetManifest(recipe, ds).dump();
  }
  EXPECT_EQ(LoadDatasetManifest(dir.File("m.json")), ds);
}

TEST(ManifestTest, DetectsTamperedHistogram) {
  TempDir dir;
  DatasetRecipe recipe;
  recipe.num_groups = 2;
  recipe.clients_per_group = 2;
  recipe.n_per_client = 5;
  recipe.d_in = 2;
  const auto ds = BuildDataset(recipe);
  auto manifest = DatasetManifest(recipe, ds);
  manifest["client_sizes"][0] = 6;
  {
    std::ofstream out(dir.File("m.json"));
    out << manifest.dump();
  }
  ExpectErrorCode(ErrorCode::kFormat,
                  [&] { LoadDatasetManifest(dir.File("m.json")); });
  ExpectErrorCode(ErrorCode::kIo, [&] { LoadDatasetManifest(dir.File("none")); });
  {
    std::ofstream out(dir.File("bad.json"));
    out << "{not json";
  }
  ExpectErrorCode(ErrorCode::kFormat,
                  [&] { LoadDatasetManifest(dir.File("bad.json")); });
}

TEST(ManifestTest, IdxWithoutAlphaIsRejected) {
  DatasetRecipe recipe;
  recipe.source = DatasetRecipe::Source::kIdx;
  ExpectErrorCode(ErrorCode::kInvalidArgument, [&] { BuildDataset(recipe); });
}

}  // namespace
}  // namespace clsamp
