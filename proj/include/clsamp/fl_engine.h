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

#ifndef CLSAMP_FL_ENGINE_H_
#define CLSAMP_FL_ENGINE_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "clsamp/alloc_similarity.h"
#include "clsamp/allocation.h"
#include "clsamp/dataset.h"
#include "clsamp/model.h"
#include "clsamp/rng.h"
#include "json.hpp"

namespace clsamp {

struct LocalUpdateConfig {
  std::size_t steps = 50;
  double lr = 0.01;
  std::size_t batch = 50;
  // FedProx coefficient; 0 disables the proximal term.
  double mu = 0.0;

  void Validate() const;
};

// `steps` SGD steps from the global model, each on a batch drawn uniformly
// with replacement from the shard's training set:
//   theta <- theta - lr * (g_batch + mu * (theta - theta_global)).
ModelParams LocalUpdate(const ModelParams& global, const ClientShard& shard,
                        const LocalUpdateConfig& config, RngStream& rng);

// MD / clustered: plain mean of the sampled local models, repeats counted
// as often as drawn. Uniform: sum_{i in S} p_i theta_i plus
// sum_{i not in S} p_i theta_global, accumulated in client index order.
// `locals` holds one model per entry of `sampled`.
ModelParams Aggregate(const SamplerKind& sampler, const SampledSet& sampled,
                      std::span<const ModelParams> locals,
                      const ModelParams& global, std::span<const double> weights);

enum class SamplerPolicyKind { kUniform, kMd, kClusteredSize, kClusteredSimilarity };

struct SamplerPolicy {
  SamplerPolicyKind kind = SamplerPolicyKind::kMd;
  SimilarityMeasure measure = SimilarityMeasure::kArccos;
};

// "uniform", "md", "size", "similarity".
SamplerPolicyKind ParseSamplerPolicyKind(std::string_view name);
std::string_view SamplerPolicyName(SamplerPolicyKind kind);

struct TrainingConfig {
  // input_dim and num_classes are taken from the dataset when zero.
  Architecture arch;
  LocalUpdateConfig local;
  std::size_t m = 10;
  std::size_t rounds = 0;
  std::uint64_t seed = 0;
  // Worker threads for local updates and evaluation. Results do not depend
  // on it.
  std::size_t threads = 1;
};

struct RoundMetrics {
  std::size_t round = 0;
  // Sum_i p_i * mean cross-entropy on client i's training set.
  double train_loss = 0.0;
  // Accuracy over the union of all test shards.
  double test_accuracy = 0.0;
  SampledSet sampled;
  std::size_t distinct_count = 0;
  // Class c is held by at least one sampled client.
  std::vector<bool> per_class_presence;

  std::size_t DistinctClasses() const;
};

struct TrainingResult {
  std::vector<RoundMetrics> rounds;
  ModelParams initial;
  ModelParams final_model;
};

// FedAvg loop: per round, (re)build the sampler, draw, run local updates on
// the sampled clients, aggregate, refresh representative gradients and
// evaluate. The size-based allocation is computed once; the similarity
// allocation is rebuilt every round from the gradient cache.
TrainingResult RunTraining(
    const FederatedDataset& dataset, const SamplerPolicy& policy,
    const TrainingConfig& config,
    const std::function<void(const RoundMetrics&)>& on_round = {});

double GlobalTrainLoss(const ModelParams& params, const FederatedDataset& dataset,
                       std::size_t threads = 1);
double TestAccuracy(const ModelParams& params, const FederatedDataset& dataset,
                    std::size_t threads = 1);

struct DriftBounds {
  double b_md = 0.0;
  double b_cl = 0.0;
};

// Sampling-induced gradient dispersion under MD and under the given
// clustered allocation:
//   B_MD = (1/m) sum_i p_i |g_i|^2 - (1/m) |sum_i p_i g_i|^2
//   B_Cl = (1/m) sum_i p_i |g_i|^2 - (1/m^2) sum_k |sum_i r_ki g_i|^2
DriftBounds ComputeDriftBounds(std::span<const std::vector<double>> grads,
                               std::span<const double> weights,
                               const AllocationMatrix& alloc);

nlohmann::json RoundMetricsJson(const RoundMetrics& metrics);
// Header line followed by one line per round.
void WriteMetricsJsonl(const nlohmann::json& header,
                       std::span<const RoundMetrics> rounds, std::ostream& out);
// Adds a trailing rolling mean of the training loss over `window` rounds.
void WriteMetricsCsv(std::span<const RoundMetrics> rounds, std::ostream& out,
                     std::size_t window = 50);

}  // namespace clsamp

#endif  // CLSAMP_FL_ENGINE_H_
