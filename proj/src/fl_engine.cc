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

#include "clsamp/fl_engine.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>

#include "clsamp/alloc_size.h"
#include "clsamp/error.h"
#include "clsamp/parallel.h"

namespace clsamp {
namespace {

constexpr std::uint64_t kInitTag = 11;
constexpr std::uint64_t kRoundTag = 12;
constexpr std::uint64_t kDrawTag = 0;
constexpr std::uint64_t kLocalTag = 1;

void CheckSameShape(const ModelParams& a, const ModelParams& b) {
  if (a.theta.size() != b.theta.size() || !(a.arch == b.arch)) {
    throw Error(ErrorCode::kDimensionMismatch, "models differ in shape");
  }
}

double SquaredNorm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

void LocalUpdateConfig::Validate() const {
  if (steps == 0) throw Error(ErrorCode::kInvalidArgument, "N must be >= 1");
  if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr must be > 0");
  if (batch == 0) throw Error(ErrorCode::kInvalidArgument, "batch must be >= 1");
  if (!(mu >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "mu must be >= 0");
}

ModelParams LocalUpdate(const ModelParams& global, const ClientShard& shard,
                        const LocalUpdateConfig& config, RngStream& rng) {
  config.Validate();
  if (shard.train.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "client has no training data");
  }
  ModelParams params = global;
  std::vector<const Sample*> batch(config.batch);
  for (std::size_t step = 0; step < config.steps; ++step) {
    for (auto& s : batch) s = &shard.train[rng.UniformBelow(shard.train.size())];
    const LossGrad lg = ForwardLossGrad(params, batch);
    for (std::size_t p = 0; p < params.theta.size(); ++p) {
      const double prox = config.mu * (params.theta[p] - global.theta[p]);
      params.theta[p] -= config.lr * (lg.grad[p] + prox);
    }
  }
  return params;
}

ModelParams Aggregate(const SamplerKind& sampler, const SampledSet& sampled,
                      std::span<const ModelParams> locals,
                      const ModelParams& global, std::span<const double> weights) {
  if (locals.size() != sampled.members.size() || locals.empty()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "expected one local model per sampled entry");
  }
  for (const auto& local : locals) CheckSameShape(local, global);

  ModelParams out{global.arch, std::vector<double>(global.theta.size(), 0.0)};
  if (std::holds_alternative<UniformNoReplacement>(sampler)) {
    const std::size_t n = NumClients(sampler);
    if (weights.size() != n) {
      throw Error(ErrorCode::kDimensionMismatch, "one weight per client needed");
    }
    std::vector<const ModelParams*> source(n, &global);
    for (std::size_t j = 0; j < sampled.members.size(); ++j) {
      source.at(sampled.members[j]) = &locals[j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& theta = source[i]->theta;
      for (std::size_t p = 0; p < theta.size(); ++p) {
        out.theta[p] += weights[i] * theta[p];
      }
    }
    return out;
  }
  for (const auto& local : locals) {
    for (std::size_t p = 0; p < local.theta.size(); ++p) {
      out.theta[p] += local.theta[p];
    }
  }
  const double m = static_cast<double>(locals.size());
  for (auto& x : out.theta) x /= m;
  return out;
}

SamplerPolicyKind ParseSamplerPolicyKind(std::string_view name) {
  if (name == "uniform") return SamplerPolicyKind::kUniform;
  if (name == "md") return SamplerPolicyKind::kMd;
  if (name == "size") return SamplerPolicyKind::kClusteredSize;
  if (name == "similarity") return SamplerPolicyKind::kClusteredSimilarity;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown sampler '" + std::string(name) + "'");
}

std::string_view SamplerPolicyName(SamplerPolicyKind kind) {
  switch (kind) {
    case SamplerPolicyKind::kUniform:
      return "uniform";
    case SamplerPolicyKind::kMd:
      return "md";
    case SamplerPolicyKind::kClusteredSize:
      return "size";
    case SamplerPolicyKind::kClusteredSimilarity:
      return "similarity";
  }
  return "md";
}

std::size_t RoundMetrics::DistinctClasses() const {
  return static_cast<std::size_t>(
      std::count(per_class_presence.begin(), per_class_presence.end(), true));
}

double GlobalTrainLoss(const ModelParams& params, const FederatedDataset& dataset,
                       std::size_t threads) {
  std::vector<double> losses(dataset.num_clients());
  ParallelFor(dataset.num_clients(), threads, [&](std::size_t i) {
    losses[i] = MeanLoss(params, dataset.client(i).train);
  });
  const auto weights = dataset.Weights();
  double total = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) total += weights[i] * losses[i];
  return total;
}

double TestAccuracy(const ModelParams& params, const FederatedDataset& dataset,
                    std::size_t threads) {
  std::vector<std::size_t> correct(dataset.num_clients());
  ParallelFor(dataset.num_clients(), threads, [&](std::size_t i) {
    correct[i] = CountCorrect(params, dataset.client(i).test);
  });
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < correct.size(); ++i) {
    hits += correct[i];
    total += dataset.client(i).test.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

TrainingResult RunTraining(
    const FederatedDataset& dataset, const SamplerPolicy& policy,
    const TrainingConfig& config,
    const std::function<void(const RoundMetrics&)>& on_round) {
  config.local.Validate();
  const std::size_t n = dataset.num_clients();
  if (config.m == 0) throw Error(ErrorCode::kInvalidArgument, "m must be >= 1");

  Architecture arch = config.arch;
  if (arch.input_dim == 0) arch.input_dim = dataset.feature_dim();
  if (arch.num_classes == 0) arch.num_classes = dataset.num_classes();
  if (arch.input_dim != dataset.feature_dim() ||
      arch.num_classes < dataset.num_classes()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "architecture does not fit the dataset");
  }

  const RngStream root(config.seed);
  RngStream init_rng = root.Fork(kInitTag);
  TrainingResult result;
  result.initial = InitParams(arch, init_rng);
  ModelParams global = result.initial;

  const auto sizes = dataset.ClientSizes();
  const auto weights = dataset.Weights();
  const auto histograms = dataset.ClassHistograms();

  SamplerKind sampler = UniformNoReplacement{n, config.m};
  switch (policy.kind) {
    case SamplerPolicyKind::kUniform:
      if (config.m > n) {
        throw Error(ErrorCode::kInvalidArgument, "m exceeds the client count");
      }
      break;
    case SamplerPolicyKind::kMd:
      sampler = MakeMdSampler(sizes, config.m);
      break;
    case SamplerPolicyKind::kClusteredSize:
      sampler = ClusteredSampler{AllocateBySize(sizes, config.m)};
      break;
    case SamplerPolicyKind::kClusteredSimilarity:
      break;
  }
  const bool by_similarity =
      policy.kind == SamplerPolicyKind::kClusteredSimilarity;
  RepGradientCache cache(by_similarity ? n : 0, global.theta.size());
  SquareMatrix dissim(by_similarity ? n : 0);

  const RngStream rounds_root = root.Fork(kRoundTag);
  for (std::size_t t = 0; t < config.rounds; ++t) {
    if (by_similarity) {
      sampler = ClusteredSampler{AllocateBySimilarity(sizes, dissim, config.m)};
    }
    const RngStream round_rng = rounds_root.Fork(t);
    RoundMetrics metrics;
    metrics.round = t;
    metrics.sampled = Draw(sampler, round_rng.Fork(kDrawTag));
    const auto& members = metrics.sampled.members;

    // Each distinct client works once per round, on its own stream.
    std::vector<std::size_t> distinct = members;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<ModelParams> trained(distinct.size());
    const RngStream local_root = round_rng.Fork(kLocalTag);
    ParallelFor(distinct.size(), config.threads, [&](std::size_t j) {
      RngStream rng = local_root.Fork(distinct[j]);
      trained[j] = LocalUpdate(global, dataset.client(distinct[j]), config.local,
                               rng);
    });
    std::vector<ModelParams> locals;
    locals.reserve(members.size());
    for (const std::size_t i : members) {
      const auto pos = std::lower_bound(distinct.begin(), distinct.end(), i);
      locals.push_back(trained[static_cast<std::size_t>(pos - distinct.begin())]);
    }

    ModelParams next = Aggregate(sampler, metrics.sampled, locals, global, weights);
    if (by_similarity) {
      std::vector<std::vector<double>> thetas;
      thetas.reserve(locals.size());
      for (const auto& l : locals) thetas.push_back(l.theta);
      const auto changed = cache.Update(members, thetas, global.theta);
      RefreshSimilarityColumns(dissim, cache.gradients(), policy.measure, changed);
    }
    global = std::move(next);

    metrics.train_loss = GlobalTrainLoss(global, dataset, config.threads);
    metrics.test_accuracy = TestAccuracy(global, dataset, config.threads);
    metrics.distinct_count = distinct.size();
    metrics.per_class_presence.assign(dataset.num_classes(), false);
    for (const std::size_t i : distinct) {
      for (std::size_t c = 0; c < dataset.num_classes(); ++c) {
        if (histograms[i][c] > 0) metrics.per_class_presence[c] = true;
      }
    }
    if (on_round) on_round(metrics);
    result.rounds.push_back(std::move(metrics));
  }
  result.final_model = std::move(global);
  return result;
}

DriftBounds ComputeDriftBounds(std::span<const std::vector<double>> grads,
                               std::span<const double> weights,
                               const AllocationMatrix& alloc) {
  const std::size_t n = alloc.num_clients();
  if (grads.size() != n || weights.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "need one gradient and one weight per client");
  }
  const std::size_t dim = grads.front().size();
  for (const auto& g : grads) {
    if (g.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "gradients differ in length");
    }
  }
  const double m = static_cast<double>(alloc.num_distributions());

  double weighted_sq = 0.0;
  std::vector<double> mean(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    weighted_sq += weights[i] * SquaredNorm(grads[i]);
    for (std::size_t p = 0; p < dim; ++p) mean[p] += weights[i] * grads[i][p];
  }

  double cluster_sq = 0.0;
  std::vector<double> expected(dim);
  for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
    std::fill(expected.begin(), expected.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = alloc.probability(k, i);
      if (r == 0.0) continue;
      for (std::size_t p = 0; p < dim; ++p) expected[p] += r * grads[i][p];
    }
    cluster_sq += SquaredNorm(expected);
  }

  DriftBounds out;
  out.b_md = weighted_sq / m - SquaredNorm(mean) / m;
  out.b_cl = weighted_sq / m - cluster_sq / (m * m);
  return out;
}

nlohmann::json RoundMetricsJson(const RoundMetrics& metrics) {
  return {{"record", "round"},
          {"t", metrics.round},
          {"train_loss", metrics.train_loss},
          {"test_acc", metrics.test_accuracy},
          {"sampled", metrics.sampled.members},
          {"distinct_count", metrics.distinct_count},
          {"distinct_classes", metrics.DistinctClasses()},
          {"per_class_presence", metrics.per_class_presence}};
}

void WriteMetricsJsonl(const nlohmann::json& header,
                       std::span<const RoundMetrics> rounds, std::ostream& out) {
  nlohmann::json head = header;
  head["record"] = "header";
  out << head.dump() << '\n';
  for (const auto& r : rounds) out << RoundMetricsJson(r).dump() << '\n';
}

void WriteMetricsCsv(std::span<const RoundMetrics> rounds, std::ostream& out,
                     std::size_t window) {
  if (window == 0) throw Error(ErrorCode::kInvalidArgument, "window must be >= 1");
  out << "t,train_loss,train_loss_rolling" << window
      << ",test_acc,distinct_count,distinct_classes\n";
  double running = 0.0;
  for (std::size_t t = 0; t < rounds.size(); ++t) {
    running += rounds[t].train_loss;
    if (t >= window) running -= rounds[t - window].train_loss;
    const std::size_t span = std::min(t + 1, window);
    const auto& r = rounds[t];
    out << r.round << ',' << nlohmann::json(r.train_loss).dump() << ','
        << nlohmann::json(running / static_cast<double>(span)).dump() << ','
        << nlohmann::json(r.test_accuracy).dump() << ',' << r.distinct_count
        << ',' << r.DistinctClasses() << '\n';
  }
}

}  // namespace clsamp
