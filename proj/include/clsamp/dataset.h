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

#ifndef CLSAMP_DATASET_H_
#define CLSAMP_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace clsamp {

struct Sample {
  std::vector<double> features;
  std::uint32_t label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct ClientShard {
  std::vector<Sample> train;
  std::vector<Sample> test;

  std::size_t n_train() const { return train.size(); }

  friend bool operator==(const ClientShard&, const ClientShard&) = default;
};

// Test shard size used by every generator: a fifth of the training size,
// rounded up.
std::size_t TestSizeFor(std::size_t n_train);

// A set of clients with their local data. Construction validates that every
// client has at least one training sample, that labels are below
// num_classes and that all feature vectors share one length.
class FederatedDataset {
 public:
  FederatedDataset(std::vector<ClientShard> clients, std::size_t num_classes);

  std::size_t num_clients() const { return clients_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return feature_dim_; }
  // M = sum of n_i.
  std::uint64_t total_train() const { return total_train_; }

  const ClientShard& client(std::size_t i) const { return clients_.at(i); }
  const std::vector<ClientShard>& clients() const { return clients_; }

  std::vector<std::uint64_t> ClientSizes() const;
  // p_i = n_i / M.
  std::vector<double> Weights() const;
  // Per-client training-label histogram, num_clients x num_classes.
  std::vector<std::vector<std::uint64_t>> ClassHistograms() const;

  friend bool operator==(const FederatedDataset&,
                         const FederatedDataset&) = default;

 private:
  std::vector<ClientShard> clients_;
  std::size_t num_classes_;
  std::size_t feature_dim_;
  std::uint64_t total_train_;
};

// num_latent groups of clients_per_latent clients each. Client c belongs to
// group c / clients_per_latent, and all of its samples are Gaussian around
// that group's mean with label = group.
FederatedDataset MakeSynthetic(std::size_t num_latent,
                               std::size_t clients_per_latent,
                               std::size_t n_per_client, std::size_t d_in,
                               double noise_sigma, std::uint64_t seed);

// Unassigned pool of per_class samples for each of num_classes classes drawn
// from the same group means MakeSynthetic uses for that seed.
std::vector<Sample> MakeSyntheticPool(std::size_t num_classes,
                                      std::size_t per_class, std::size_t d_in,
                                      double noise_sigma, std::uint64_t seed);

// Reads an MNIST-layout IDX pair (big-endian; images magic 0x00000803,
// labels magic 0x00000801). Pixels are scaled to [0, 1].
std::vector<Sample> LoadIdx(const std::string& images_path,
                            const std::string& labels_path);

// Non-iid partition: each client draws class proportions q ~ Dir(alpha) and
// fills its quota by sampling without replacement from the class pools in
// proportion to q. When a class runs dry, the unmet demand moves to the
// classes that still have samples. Test shards (TestSizeFor each client)
// come from test_pool with the same q, or from what is left of train_pool
// when test_pool is empty.
FederatedDataset PartitionDirichlet(std::span<const Sample> train_pool,
                                    std::span<const Sample> test_pool,
                                    std::span<const std::size_t> client_sizes,
                                    double alpha, std::uint64_t seed);

// 10, 30, 30, 20 and 10 clients holding 100, 250, 500, 750 and 1000
// training samples.
std::vector<std::size_t> PaperUnbalancedSizes();

// Parses "paper-unbalanced" or "equal:<clients>x<size>".
std::vector<std::size_t> SizesFromProfile(const std::string& profile);

// Everything needed to rebuild a dataset bit-for-bit. Serialized as the JSON
// dataset manifest together with the resulting sizes and class histograms.
struct DatasetRecipe {
  enum class Source { kSynthetic, kIdx };

  Source source = Source::kSynthetic;
  std::uint64_t seed = 0;

  std::size_t num_groups = 10;
  std::size_t clients_per_group = 10;
  std::size_t n_per_client = 500;
  std::size_t d_in = 20;
  double noise_sigma = 1.0;

  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;

  // Present => Dirichlet partition over a pool.
  std::optional<double> alpha;
  std::string sizes_profile;
};

FederatedDataset BuildDataset(const DatasetRecipe& recipe);

nlohmann::json DatasetManifest(const DatasetRecipe& recipe,
                               const FederatedDataset& dataset);
DatasetRecipe RecipeFromManifest(const nlohmann::json& manifest);

// Rebuilds the dataset a manifest describes and checks that the client
// sizes and class histograms match what was recorded.
FederatedDataset LoadDatasetManifest(const std::string& path);

}  // namespace clsamp

#endif  // CLSAMP_DATASET_H_
