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
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "clsamp/error.h"
#include "clsamp/rng.h"

namespace clsamp {
namespace {

constexpr std::uint64_t kMeansTag = 1;
constexpr std::uint64_t kClientSamplesTag = 2;
constexpr std::uint64_t kPoolTag = 3;

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::vector<double>> GroupMeans(std::size_t groups,
                                            std::size_t d_in,
                                            std::uint64_t seed) {
  const RngStream means_rng = RngStream(seed).Fork(kMeansTag);
  std::vector<std::vector<double>> means(groups, std::vector<double>(d_in));
  for (std::size_t g = 0; g < groups; ++g) {
    RngStream rng = means_rng.Fork(g);
    for (auto& x : means[g]) x = rng.Normal();
  }
  return means;
}

Sample DrawAround(const std::vector<double>& mean, double sigma,
                  std::uint32_t label, RngStream& rng) {
  Sample s;
  s.label = label;
  s.features.resize(mean.size());
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double z = rng.Normal();
    s.features[j] = mean[j] + sigma * z;
  }
  return s;
}

void CheckPositive(std::size_t v, const char* what) {
  if (v == 0) {
    throw Error(ErrorCode::kInvalidArgument, std::string(what) + " must be >= 1");
  }
}

std::vector<unsigned char> ReadAll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t ReadBigEndian32(const std::vector<unsigned char>& bytes,
                              std::size_t offset, const std::string& path) {
  if (bytes.size() < offset + 4) {
    throw Error(ErrorCode::kTruncatedFile, path + ": header cut short");
  }
  return (std::uint32_t{bytes[offset]} << 24) |
         (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) |
         std::uint32_t{bytes[offset + 3]};
}

// Sample indices of a pool bucketed by label; drawn entries are swap-removed.
class ClassPools {
 public:
  ClassPools(std::span<const Sample> pool, std::size_t num_classes)
      : buckets_(num_classes) {
    for (std::size_t j = 0; j < pool.size(); ++j) {
      buckets_[pool[j].label].push_back(j);
    }
  }

  // Draws `count` indices following class proportions q; classes that ran
  // dry hand their share to the classes that still have samples.
  std::vector<std::size_t> Draw(const std::vector<double>& q,
                                std::size_t count, RngStream& rng) {
    std::vector<std::size_t> out;
    out.reserve(count);
    const std::size_t classes = buckets_.size();
    std::vector<double> weight(classes);
    for (std::size_t j = 0; j < count; ++j) {
      double total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        weight[c] = buckets_[c].empty() ? 0.0 : q[c];
        total += weight[c];
      }
      if (!(total > 0.0)) {
        for (std::size_t c = 0; c < classes; ++c) {
          weight[c] = static_cast<double>(buckets_[c].size());
          total += weight[c];
        }
      }
      if (!(total > 0.0)) {
        throw Error(ErrorCode::kPoolExhausted, "no samples left in pool");
      }
      const double u = rng.UniformUnit() * total;
      std::size_t chosen = classes;
      double cumulative = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        if (weight[c] <= 0.0) continue;
        cumulative += weight[c];
        chosen = c;
        if (u < cumulative) break;
      }
      auto& bucket = buckets_[chosen];
      const std::size_t pick = rng.UniformBelow(bucket.size());
      out.push_back(bucket[pick]);
      bucket[pick] = bucket.back();
      bucket.pop_back();
    }
    return out;
  }

 private:
  std::vector<std::vector<std::size_t>> buckets_;
};

std::size_t NumClassesOf(std::span<const Sample> a, std::span<const Sample> b) {
  std::uint32_t max_label = 0;
  for (const auto& s : a) max_label = std::max(max_label, s.label);
  for (const auto& s : b) max_label = std::max(max_label, s.label);
  return std::size_t{max_label} + 1;
}

std::string SourceName(DatasetRecipe::Source source) {
  return source == DatasetRecipe::Source::kSynthetic ? "synthetic" : "idx";
}

}  // namespace

std::size_t TestSizeFor(std::size_t n_train) { return (n_train + 4) / 5; }

FederatedDataset::FederatedDataset(std::vector<ClientShard> clients,
                                   std::size_t num_classes)
    : clients_(std::move(clients)),
      num_classes_(num_classes),
      feature_dim_(0),
      total_train_(0) {
  if (clients_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset needs at least one client");
  }
  if (num_classes_ == 0) {
    throw Error(ErrorCode::kInvalidArgument, "num_classes must be >= 1");
  }
  bool have_dim = false;
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    const auto& shard = clients_[i];
    if (shard.train.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "client " + std::to_string(i) + " has no training samples");
    }
    total_train_ += shard.train.size();
    for (const auto* part : {&shard.train, &shard.test}) {
      for (const auto& s : *part) {
        if (s.label >= num_classes_) {
          throw Error(ErrorCode::kInvalidArgument, "label out of range");
        }
        if (!have_dim) {
          feature_dim_ = s.features.size();
          have_dim = true;
        } else if (s.features.size() != feature_dim_) {
          throw Error(ErrorCode::kDimensionMismatch,
                      "feature length differs across samples");
        }
      }
    }
  }
}

std::vector<std::uint64_t> FederatedDataset::ClientSizes() const {
  std::vector<std::uint64_t> sizes;
  sizes.reserve(clients_.size());
  for (const auto& c : clients_) sizes.push_back(c.n_train());
  return sizes;
}

std::vector<double> FederatedDataset::Weights() const {
  std::vector<double> w;
  w.reserve(clients_.size());
  for (const auto& c : clients_) {
    w.push_back(static_cast<double>(c.n_train()) /
                static_cast<double>(total_train_));
  }
  return w;
}

std::vector<std::vector<std::uint64_t>> FederatedDataset::ClassHistograms()
    const {
  std::vector<std::vector<std::uint64_t>> hist(
      clients_.size(), std::vector<std::uint64_t>(num_classes_, 0));
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    for (const auto& s : clients_[i].train) ++hist[i][s.label];
  }
  return hist;
}

FederatedDataset MakeSynthetic(std::size_t num_latent,
                               std::size_t clients_per_latent,
                               std::size_t n_per_client, std::size_t d_in,
                               double noise_sigma, std::uint64_t seed) {
  CheckPositive(num_latent, "num_latent");
  CheckPositive(clients_per_latent, "clients_per_latent");
  CheckPositive(n_per_client, "n_per_client");
  CheckPositive(d_in, "d_in");
  if (!(noise_sigma >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise_sigma must be >= 0");
  }
  const auto means = GroupMeans(num_latent, d_in, seed);
  const RngStream samples_rng = RngStream(seed).Fork(kClientSamplesTag);
  const std::size_t n_clients = num_latent * clients_per_latent;
  const std::size_t n_test = TestSizeFor(n_per_client);

  std::vector<ClientShard> clients(n_clients);
  for (std::size_t c = 0; c < n_clients; ++c) {
    const auto group = static_cast<std::uint32_t>(c / clients_per_latent);
    RngStream rng = samples_rng.Fork(c);
    auto& shard = clients[c];
    shard.train.reserve(n_per_client);
    shard.test.reserve(n_test);
    for (std::size_t j = 0; j < n_per_client; ++j) {
      shard.train.push_back(DrawAround(means[group], noise_sigma, group, rng));
    }
    for (std::size_t j = 0; j < n_test; ++j) {
      shard.test.push_back(DrawAround(means[group], noise_sigma, group, rng));
    }
  }
  return FederatedDataset(std::move(clients), num_latent);
}

std::vector<Sample> MakeSyntheticPool(std::size_t num_classes,
                                      std::size_t per_class, std::size_t d_in,
                                      double noise_sigma, std::uint64_t seed) {
  CheckPositive(num_classes, "num_classes");
  CheckPositive(per_class, "per_class");
  CheckPositive(d_in, "d_in");
  const auto means = GroupMeans(num_classes, d_in, seed);
  const RngStream pool_rng = RngStream(seed).Fork(kPoolTag);
  std::vector<Sample> pool;
  pool.reserve(num_classes * per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    RngStream rng = pool_rng.Fork(c);
    for (std::size_t j = 0; j < per_class; ++j) {
      pool.push_back(DrawAround(means[c], noise_sigma,
                                static_cast<std::uint32_t>(c), rng));
    }
  }
  return pool;
}

std::vector<Sample> LoadIdx(const std::string& images_path,
                            const std::string& labels_path) {
  const auto images = ReadAll(images_path);
  const auto labels = ReadAll(labels_path);

  if (ReadBigEndian32(images, 0, images_path) != kIdxImagesMagic) {
    throw Error(ErrorCode::kBadMagic, images_path + ": not an IDX image file");
  }
  if (ReadBigEndian32(labels, 0, labels_path) != kIdxLabelsMagic) {
    throw Error(ErrorCode::kBadMagic, labels_path + ": not an IDX label file");
  }
  const std::size_t n_images = ReadBigEndian32(images, 4, images_path);
  const std::size_t rows = ReadBigEndian32(images, 8, images_path);
  const std::size_t cols = ReadBigEndian32(images, 12, images_path);
  const std::size_t n_labels = ReadBigEndian32(labels, 4, labels_path);
  if (n_images != n_labels) {
    throw Error(ErrorCode::kCountMismatch,
                std::to_string(n_images) + " images but " +
                    std::to_string(n_labels) + " labels");
  }
  const std::size_t pixels = rows * cols;
  constexpr std::size_t kImagesHeader = 16;
  constexpr std::size_t kLabelsHeader = 8;
  if (images.size() < kImagesHeader + n_images * pixels) {
    throw Error(ErrorCode::kTruncatedFile, images_path + ": pixel data cut short");
  }
  if (labels.size() < kLabelsHeader + n_labels) {
    throw Error(ErrorCode::kTruncatedFile, labels_path + ": label data cut short");
  }

  std::vector<Sample> samples(n_images);
  for (std::size_t r = 0; r < n_images; ++r) {
    auto& s = samples[r];
    s.label = labels[kLabelsHeader + r];
    s.features.resize(pixels);
    const unsigned char* src = images.data() + kImagesHeader + r * pixels;
    for (std::size_t p = 0; p < pixels; ++p) s.features[p] = src[p] / 255.0;
  }
  return samples;
}

FederatedDataset PartitionDirichlet(std::span<const Sample> train_pool,
                                    std::span<const Sample> test_pool,
                                    std::span<const std::size_t> client_sizes,
                                    double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "alpha must be > 0");
  }
  if (client_sizes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no client sizes given");
  }
  for (auto s : client_sizes) CheckPositive(s, "client size");

  const bool shared_pool = test_pool.empty();
  std::size_t train_demand = 0;
  std::size_t test_demand = 0;
  for (auto s : client_sizes) {
    train_demand += s;
    test_demand += TestSizeFor(s);
  }
  if (shared_pool ? train_demand + test_demand > train_pool.size()
                  : train_demand > train_pool.size() ||
                        test_demand > test_pool.size()) {
    throw Error(ErrorCode::kPoolExhausted,
                "requested " + std::to_string(train_demand) +
                    " training samples (plus " + std::to_string(test_demand) +
                    " test) from a pool of " +
                    std::to_string(train_pool.size()));
  }

  const std::size_t num_classes = NumClassesOf(train_pool, test_pool);
  const RngStream root(seed);
  ClassPools train_pools(train_pool, num_classes);

  std::vector<std::vector<double>> proportions(client_sizes.size());
  std::vector<ClientShard> clients(client_sizes.size());
  for (std::size_t i = 0; i < client_sizes.size(); ++i) {
    RngStream rng = root.Fork(i);
    proportions[i] = rng.Dirichlet(alpha, num_classes);
    for (auto j : train_pools.Draw(proportions[i], client_sizes[i], rng)) {
      clients[i].train.push_back(train_pool[j]);
    }
  }

  std::optional<ClassPools> test_pools;
  if (!shared_pool) test_pools.emplace(test_pool, num_classes);
  ClassPools& test_source = shared_pool ? train_pools : *test_pools;
  const std::span<const Sample> test_samples =
      shared_pool ? train_pool : test_pool;
  const RngStream test_root = root.Fork(client_sizes.size());
  for (std::size_t i = 0; i < client_sizes.size(); ++i) {
    RngStream rng = test_root.Fork(i);
    for (auto j : test_source.Draw(proportions[i], TestSizeFor(client_sizes[i]),
                                   rng)) {
      clients[i].test.push_back(test_samples[j]);
    }
  }
  return FederatedDataset(std::move(clients), num_classes);
}

std::vector<std::size_t> PaperUnbalancedSizes() {
  std::vector<std::size_t> sizes;
  const std::pair<std::size_t, std::size_t> profile[] = {
      {10, 100}, {30, 250}, {30, 500}, {20, 750}, {10, 1000}};
  for (auto [count, size] : profile) sizes.insert(sizes.end(), count, size);
  return sizes;
}

std::vector<std::size_t> SizesFromProfile(const std::string& profile) {
  if (profile == "paper-unbalanced") return PaperUnbalancedSizes();
  constexpr std::string_view kEqual = "equal:";
  if (profile.rfind(kEqual, 0) == 0) {
    const std::string rest = profile.substr(kEqual.size());
    const auto x = rest.find('x');
    if (x != std::string::npos) {
      try {
        std::size_t used = 0;
        const std::size_t clients = std::stoul(rest.substr(0, x), &used);
        const std::size_t size = std::stoul(rest.substr(x + 1));
        if (clients > 0 && size > 0) return std::vector<std::size_t>(clients, size);
      } catch (const std::exception&) {
      }
    }
  }
  throw Error(ErrorCode::kInvalidArgument,
              "unknown sizes profile '" + profile +
                  "' (expected paper-unbalanced or equal:<clients>x<size>)");
}

FederatedDataset BuildDataset(const DatasetRecipe& recipe) {
  using Source = DatasetRecipe::Source;
  if (recipe.source == Source::kSynthetic && !recipe.alpha) {
    return MakeSynthetic(recipe.num_groups, recipe.clients_per_group,
                         recipe.n_per_client, recipe.d_in, recipe.noise_sigma,
                         recipe.seed);
  }
  if (!recipe.alpha) {
    throw Error(ErrorCode::kInvalidArgument,
                "IDX source requires a Dirichlet alpha");
  }

  std::vector<std::size_t> sizes;
  if (!recipe.sizes_profile.empty()) {
    sizes = SizesFromProfile(recipe.sizes_profile);
  } else if (recipe.source == Source::kSynthetic) {
    sizes.assign(recipe.num_groups * recipe.clients_per_group,
                 recipe.n_per_client);
  } else {
    sizes = PaperUnbalancedSizes();
  }

  if (recipe.source == Source::kSynthetic) {
    std::size_t demand = 0;
    for (auto s : sizes) demand += s + TestSizeFor(s);
    // Twice the balanced demand per class leaves room for skewed draws; the
    // partitioner's fallback covers the rest.
    const std::size_t per_class =
        2 * ((demand + recipe.num_groups - 1) / recipe.num_groups);
    const auto pool = MakeSyntheticPool(recipe.num_groups, per_class,
                                        recipe.d_in, recipe.noise_sigma,
                                        recipe.seed);
    return PartitionDirichlet(pool, {}, sizes, *recipe.alpha, recipe.seed);
  }

  const auto train = LoadIdx(recipe.train_images, recipe.train_labels);
  std::vector<Sample> test;
  if (!recipe.test_images.empty() || !recipe.test_labels.empty()) {
    test = LoadIdx(recipe.test_images, recipe.test_labels);
  }
  return PartitionDirichlet(train, test, sizes, *recipe.alpha, recipe.seed);
}

nlohmann::json DatasetManifest(const DatasetRecipe& recipe,
                               const FederatedDataset& dataset) {
  nlohmann::json generator;
  if (recipe.source == DatasetRecipe::Source::kSynthetic) {
    generator = {{"num_groups", recipe.num_groups},
                 {"clients_per_group", recipe.clients_per_group},
                 {"n_per_client", recipe.n_per_client},
                 {"d_in", recipe.d_in},
                 {"noise_sigma", recipe.noise_sigma}};
  } else {
    generator = {{"train_images", recipe.train_images},
                 {"train_labels", recipe.train_labels},
                 {"test_images", recipe.test_images},
                 {"test_labels", recipe.test_labels}};
  }
  std::vector<std::uint64_t> test_sizes;
  for (const auto& c : dataset.clients()) test_sizes.push_back(c.test.size());

  nlohmann::json manifest = {
      {"format", "clsamp-dataset-manifest"},
      {"version", 1},
      {"source", SourceName(recipe.source)},
      {"seed", recipe.seed},
      {"generator", generator},
      {"alpha", recipe.alpha ? nlohmann::json(*recipe.alpha) : nlohmann::json()},
      {"sizes_profile", recipe.sizes_profile},
      {"num_clients", dataset.num_clients()},
      {"num_classes", dataset.num_classes()},
      {"feature_dim", dataset.feature_dim()},
      {"total_train", dataset.total_train()},
      {"client_sizes", dataset.ClientSizes()},
      {"test_sizes", test_sizes},
      {"class_histograms", dataset.ClassHistograms()},
  };
  return manifest;
}

DatasetRecipe RecipeFromManifest(const nlohmann::json& manifest) {
  try {
    DatasetRecipe recipe;
    const auto source = manifest.at("source").get<std::string>();
    if (source == "synthetic") {
      recipe.source = DatasetRecipe::Source::kSynthetic;
    } else if (source == "idx") {
      recipe.source = DatasetRecipe::Source::kIdx;
    } else {
      throw Error(ErrorCode::kFormat, "unknown dataset source '" + source + "'");
    }
    recipe.seed = manifest.at("seed").get<std::uint64_t>();
    const auto& gen = manifest.at("generator");
    if (recipe.source == DatasetRecipe::Source::kSynthetic) {
      recipe.num_groups = gen.at("num_groups").get<std::size_t>();
      recipe.clients_per_group = gen.at("clients_per_group").get<std::size_t>();
      recipe.n_per_client = gen.at("n_per_client").get<std::size_t>();
      recipe.d_in = gen.at("d_in").get<std::size_t>();
      recipe.noise_sigma = gen.at("noise_sigma").get<double>();
    } else {
      recipe.train_images = gen.at("train_images").get<std::string>();
      recipe.train_labels = gen.at("train_labels").get<std::string>();
      recipe.test_images = gen.value("test_images", "");
      recipe.test_labels = gen.value("test_labels", "");
    }
    if (!manifest.at("alpha").is_null()) {
      recipe.alpha = manifest.at("alpha").get<double>();
    }
    recipe.sizes_profile = manifest.value("sizes_profile", "");
    return recipe;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("bad manifest: ") + e.what());
  }
}

FederatedDataset LoadDatasetManifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
  auto dataset = BuildDataset(RecipeFromManifest(manifest));
  try {
    const auto sizes =
        manifest.at("client_sizes").get<std::vector<std::uint64_t>>();
    const auto hist = manifest.at("class_histograms")
                          .get<std::vector<std::vector<std::uint64_t>>>();
    if (sizes != dataset.ClientSizes() || hist != dataset.ClassHistograms()) {
      throw Error(ErrorCode::kFormat,
                  path + ": rebuilt dataset does not match recorded sizes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
  return dataset;
}

}  // namespace clsamp
