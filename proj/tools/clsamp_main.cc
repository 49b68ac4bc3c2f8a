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

// clsamp: partition datasets, build sampling allocations, run federated
// training and verify sampler statistics.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clsamp/alloc_similarity.h"
#include "clsamp/alloc_size.h"
#include "clsamp/allocation.h"
#include "clsamp/dataset.h"
#include "clsamp/error.h"
#include "clsamp/fl_engine.h"
#include "clsamp/verify_stats.h"
#include "json.hpp"

namespace {

using clsamp::Error;
using clsamp::ErrorCode;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

// Reads a JSON object of option values. Keys at the top level set global
// options; a nested object named after a subcommand sets that subcommand's
// options.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool,
                        std::string) const override {
    return "{}";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json root;
    try {
      root = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError("config", e.what());
    }
    if (!root.is_object()) {
      throw CLI::ConversionError("config", "top level must be a JSON object");
    }
    std::vector<CLI::ConfigItem> items;
    Collect(root, {}, items);
    return items;
  }

 private:
  static std::string Scalar(const json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
    return value.dump();
  }

  static void Collect(const json& node, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : node.items()) {
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        Collect(value, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(Scalar(v));
      } else {
        item.inputs.push_back(Scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

int ExitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo:
    case ErrorCode::kFormat:
    case ErrorCode::kBadMagic:
    case ErrorCode::kCountMismatch:
    case ErrorCode::kTruncatedFile:
      return kExitIo;
    default:
      return kExitUsage;
  }
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open '" + path + "' for writing");
  return out;
}

void WriteJsonFile(const std::string& path, const json& value) {
  auto out = OpenOut(path);
  out << value.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed for '" + path + "'");
}

json ReadJsonFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, "'" + path + "': " + e.what());
  }
}

std::vector<std::uint64_t> ToU64(const std::vector<std::size_t>& sizes) {
  return {sizes.begin(), sizes.end()};
}

// ---------------------------------------------------------------- partition

struct PartitionArgs {
  std::string source = "synthetic";
  clsamp::DatasetRecipe recipe;
  std::optional<double> alpha;
  std::string out;
};

int RunPartition(PartitionArgs& args) {
  auto& recipe = args.recipe;
  if (args.source == "synthetic") {
    recipe.source = clsamp::DatasetRecipe::Source::kSynthetic;
  } else if (args.source == "idx") {
    recipe.source = clsamp::DatasetRecipe::Source::kIdx;
    if (recipe.train_images.empty() || recipe.train_labels.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "--source idx needs --train-images and --train-labels");
    }
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown source '" + args.source + "'");
  }
  recipe.alpha = args.alpha;
  const auto dataset = clsamp::BuildDataset(recipe);
  WriteJsonFile(args.out, clsamp::DatasetManifest(recipe, dataset));
  std::cout << "clients=" << dataset.num_clients()
            << " classes=" << dataset.num_classes()
            << " M=" << dataset.total_train() << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- allocate

struct AllocateArgs {
  std::string dataset;
  std::size_t m = 10;
  std::string method = "size";
  std::string measure = "arccos";
  std::string grads;
  std::string out;
  std::string tree_out;
  std::string cut_out;
};

// {"gradients": [[...], ...]}, one row per client; null rows are zero.
std::vector<clsamp::RepGradient> ReadGradients(const std::string& path,
                                               std::size_t num_clients) {
  const json doc = ReadJsonFile(path);
  const json& rows = doc.is_object() ? doc.at("gradients") : doc;
  if (!rows.is_array() || rows.size() != num_clients) {
    throw Error(ErrorCode::kFormat, "gradient file needs one row per client");
  }
  std::size_t dim = 0;
  for (const auto& row : rows) {
    if (!row.is_null()) dim = std::max(dim, row.size());
  }
  std::vector<clsamp::RepGradient> grads(num_clients);
  for (std::size_t i = 0; i < num_clients; ++i) {
    grads[i].client = i;
    if (rows[i].is_null()) {
      grads[i].vector.assign(dim, 0.0);
      continue;
    }
    grads[i].vector = rows[i].get<std::vector<double>>();
    grads[i].fresh = true;
    if (grads[i].vector.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "gradient rows differ in length");
    }
  }
  return grads;
}

int RunAllocate(const AllocateArgs& args) {
  if (args.m == 0) throw Error(ErrorCode::kInvalidArgument, "--m must be >= 1");
  const auto dataset = clsamp::LoadDatasetManifest(args.dataset);
  const auto sizes = dataset.ClientSizes();
  const std::size_t n = sizes.size();

  clsamp::SimilarityDiagnostics diag;
  std::optional<clsamp::AllocationMatrix> alloc;
  if (args.method == "size") {
    alloc.emplace(clsamp::AllocateBySize(sizes, args.m));
  } else if (args.method == "similarity") {
    const auto measure = clsamp::ParseSimilarityMeasure(args.measure);
    std::vector<clsamp::RepGradient> grads;
    if (args.grads.empty()) {
      grads.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        grads[i].client = i;
        grads[i].vector.assign(1, 0.0);
      }
    } else {
      grads = ReadGradients(args.grads, n);
    }
    alloc.emplace(clsamp::AllocateBySimilarity(sizes, grads, args.m, measure, &diag));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown method '" + args.method + "'");
  }

  {
    auto out = OpenOut(args.out);
    clsamp::WriteAllocationCsv(*alloc, out);
  }
  WriteJsonFile(args.out + ".json", clsamp::AllocationSidecar(*alloc));
  if (args.method == "similarity") {
    if (!args.tree_out.empty()) {
      auto out = OpenOut(args.tree_out);
      out << diag.tree << '\n';
    }
    if (!args.cut_out.empty()) WriteJsonFile(args.cut_out, diag.cut.ToJson());
  }

  // The constructor already rejects matrices that break either identity;
  // recompute them here for the printed check.
  bool rows_ok = true, cols_ok = true;
  for (std::size_t k = 0; k < alloc->num_distributions(); ++k) {
    std::uint64_t s = 0;
    for (auto v : alloc->row(k)) s += v;
    rows_ok = rows_ok && s == alloc->total();
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t s = 0;
    for (std::size_t k = 0; k < alloc->num_distributions(); ++k) s += alloc->at(k, i);
    cols_ok = cols_ok && s == args.m * sizes[i];
  }
  std::cout << "unbiasedness: rows sum to M=" << alloc->total() << ' '
            << (rows_ok ? "OK" : "FAILED") << ", columns sum to m*n_i "
            << (cols_ok ? "OK" : "FAILED") << '\n';

  const auto report = clsamp::VarianceDominanceReport(*alloc);
  const auto supports = clsamp::ClientSupports(*alloc);
  std::cout << std::setw(6) << "client" << std::setw(8) << "n_i" << std::setw(14)
            << "var_md" << std::setw(14) << "var_cl" << std::setw(12) << "p_md"
            << std::setw(12) << "p_cl" << std::setw(9) << "support" << '\n';
  std::cout << std::setprecision(6);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = report[i];
    std::cout << std::setw(6) << i << std::setw(8) << sizes[i] << std::setw(14)
              << r.var_md << std::setw(14) << r.var_cl << std::setw(12) << r.p_md
              << std::setw(12) << r.p_cl << std::setw(9) << supports[i] << '\n';
  }
  std::cout << "dominance: "
            << (clsamp::DominanceHolds(report) ? "holds" : "VIOLATED") << '\n';
  if (std::all_of(supports.begin(), supports.end(),
                  [](std::size_t s) { return s == 1; })) {
    std::cout << "support=1 for all clients\n";
  }
  return rows_ok && cols_ok ? kExitOk : kExitVerifyFailed;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string dataset;
  std::string sampler = "md";
  std::string measure = "arccos";
  std::string arch = "mlp";
  std::size_t hidden = 50;
  std::size_t m = 10;
  std::size_t steps = 50;
  double lr = 0.01;
  std::size_t batch = 50;
  double mu = 0.0;
  std::size_t rounds = 100;
  std::uint64_t seed = 0;
  std::string metrics_out;
  std::string csv_out;
};

int RunTrain(const TrainArgs& args, std::size_t threads) {
  const auto dataset = clsamp::LoadDatasetManifest(args.dataset);
  clsamp::SamplerPolicy policy;
  policy.kind = clsamp::ParseSamplerPolicyKind(args.sampler);
  policy.measure = clsamp::ParseSimilarityMeasure(args.measure);

  clsamp::TrainingConfig config;
  config.arch.kind = clsamp::ParseArchKind(args.arch);
  config.arch.hidden = args.hidden;
  config.local.steps = args.steps;
  config.local.lr = args.lr;
  config.local.batch = args.batch;
  config.local.mu = args.mu;
  config.m = args.m;
  config.rounds = args.rounds;
  config.seed = args.seed;
  config.threads = threads;

  const json header = {
      {"format", "clsamp-metrics"},
      {"sampler", args.sampler},
      {"measure", args.measure},
      {"arch", args.arch},
      {"hidden", args.hidden},
      {"m", args.m},
      {"N", args.steps},
      {"lr", args.lr},
      {"batch", args.batch},
      {"mu", args.mu},
      {"rounds", args.rounds},
      {"seed", args.seed},
      {"num_clients", dataset.num_clients()},
      {"num_classes", dataset.num_classes()},
      {"M", dataset.total_train()}};

  std::optional<std::ofstream> metrics;
  if (!args.metrics_out.empty()) {
    metrics.emplace(OpenOut(args.metrics_out));
    json head = header;
    head["record"] = "header";
    *metrics << head.dump() << '\n';
  }
  const std::size_t report_every = std::max<std::size_t>(1, args.rounds / 10);
  const auto result = clsamp::RunTraining(
      dataset, policy, config, [&](const clsamp::RoundMetrics& r) {
        if (metrics) *metrics << clsamp::RoundMetricsJson(r).dump() << '\n';
        if ((r.round + 1) % report_every == 0 || r.round + 1 == args.rounds) {
          std::cout << "round " << r.round + 1 << '/' << args.rounds
                    << " train_loss=" << r.train_loss
                    << " test_acc=" << r.test_accuracy
                    << " distinct=" << r.distinct_count << '\n';
        }
      });
  if (metrics && !*metrics) throw Error(ErrorCode::kIo, "metrics write failed");
  if (!args.csv_out.empty()) {
    auto out = OpenOut(args.csv_out);
    clsamp::WriteMetricsCsv(result.rounds, out);
  }
  if (args.rounds == 0) std::cout << "no rounds requested\n";
  return kExitOk;
}

// ------------------------------------------------------------------- verify

struct VerifyArgs {
  std::string spec;
  std::optional<std::size_t> trials;
  bool fast = false;
  std::uint64_t seed = 0;
  std::string out;
};

// Sampler spec: {"kind": "uniform" | "md" | "size" | "similarity" | "matrix",
// "m": int, "sizes": [...] or "sizes_profile": "...", "matrix_csv": path}.
// "matrix" reads an allocation CSV (and its .json sidecar when present).
clsamp::SamplerKind SamplerFromSpec(const json& spec, std::string& kind) {
  kind = spec.at("kind").get<std::string>();
  if (kind == "matrix") {
    const std::string path = spec.at("matrix_csv").get<std::string>();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path + "'");
    std::ifstream side_in(path + ".json", std::ios::binary);
    std::optional<json> sidecar;
    if (side_in) sidecar = json::parse(side_in);
    return clsamp::ClusteredSampler{
        clsamp::ReadAllocationCsv(in, sidecar ? &*sidecar : nullptr)};
  }
  const std::size_t m = spec.at("m").get<std::size_t>();
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "m must be >= 1");
  std::vector<std::uint64_t> sizes;
  if (spec.contains("sizes")) {
    sizes = spec.at("sizes").get<std::vector<std::uint64_t>>();
  } else {
    sizes = ToU64(clsamp::SizesFromProfile(spec.at("sizes_profile").get<std::string>()));
  }
  if (sizes.empty()) throw Error(ErrorCode::kInvalidArgument, "no clients given");
  if (kind == "uniform") {
    if (m > sizes.size()) {
      throw Error(ErrorCode::kInvalidArgument, "m exceeds the client count");
    }
    return clsamp::UniformNoReplacement{sizes.size(), m};
  }
  if (kind == "md") return clsamp::MakeMdSampler(sizes, m);
  if (kind == "size") return clsamp::ClusteredSampler{clsamp::AllocateBySize(sizes, m)};
  if (kind == "similarity") {
    const clsamp::SquareMatrix zero(sizes.size());
    return clsamp::ClusteredSampler{clsamp::AllocateBySimilarity(sizes, zero, m)};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown sampler kind '" + kind + "'");
}

int RunVerify(const VerifyArgs& args, std::size_t threads) {
  json spec;
  try {
    spec = !args.spec.empty() && args.spec.front() == '{' ? json::parse(args.spec)
                                                          : ReadJsonFile(args.spec);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("sampler spec: ") + e.what());
  }
  const std::size_t trials =
      args.trials ? *args.trials
                  : (args.fast ? clsamp::kFastTrials : clsamp::kDefaultTrials);

  std::string kind;
  std::optional<clsamp::SamplerKind> sampler;
  try {
    sampler.emplace(SamplerFromSpec(spec, kind));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kInvalidAllocation) throw;
    std::cout << "rejected: " << e.what() << '\n';
    if (!args.out.empty()) {
      WriteJsonFile(args.out, {{"format", "clsamp-verify-report"},
                               {"sampler", kind},
                               {"error", e.what()},
                               {"pass", false}});
    }
    return kExitVerifyFailed;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("sampler spec: ") + e.what());
  }

  const json report = clsamp::VerifyReport(*sampler, kind, trials, args.seed, threads);
  if (!args.out.empty()) WriteJsonFile(args.out, report);
  const bool pass = report.at("pass").get<bool>();
  std::cout << "sampler=" << kind << " n=" << report.at("n") << " m=" << report.at("m")
            << " trials=" << trials << " failed_clients=" << report.at("failed_clients")
            << " -> " << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Clustered client sampling for federated learning"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of option values; flags override it");
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker thread cap")
      ->check(CLI::PositiveNumber);

  PartitionArgs part;
  auto* partition = app.add_subcommand("partition", "Build a federated dataset manifest");
  partition->add_option("--source", part.source, "synthetic or idx")
      ->check(CLI::IsMember({"synthetic", "idx"}));
  partition->add_option("--groups", part.recipe.num_groups, "Latent groups");
  partition->add_option("--per-group", part.recipe.clients_per_group,
                        "Clients per group");
  partition->add_option("--n-per-client", part.recipe.n_per_client,
                        "Training samples per client");
  partition->add_option("--d-in", part.recipe.d_in, "Feature dimension");
  partition->add_option("--noise", part.recipe.noise_sigma, "Noise standard deviation");
  partition->add_option("--alpha", part.alpha, "Dirichlet concentration");
  partition->add_option("--sizes-profile", part.recipe.sizes_profile,
                        "paper-unbalanced or equal:<clients>x<size>");
  partition->add_option("--train-images", part.recipe.train_images);
  partition->add_option("--train-labels", part.recipe.train_labels);
  partition->add_option("--test-images", part.recipe.test_images);
  partition->add_option("--test-labels", part.recipe.test_labels);
  partition->add_option("--seed", part.recipe.seed);
  partition->add_option("--out", part.out, "Manifest path")->required();

  AllocateArgs alloc;
  auto* allocate = app.add_subcommand("allocate", "Compute a clustered allocation");
  allocate->add_option("--dataset", alloc.dataset, "Dataset manifest")->required();
  allocate->add_option("--m", alloc.m, "Clients per round")->check(CLI::PositiveNumber);
  allocate->add_option("--method", alloc.method)
      ->check(CLI::IsMember({"size", "similarity"}));
  allocate->add_option("--measure", alloc.measure)
      ->check(CLI::IsMember({"arccos", "l2", "l1"}));
  allocate->add_option("--grads", alloc.grads, "Representative gradients (JSON)");
  allocate->add_option("--out", alloc.out, "Allocation CSV")->required();
  allocate->add_option("--tree-out", alloc.tree_out, "Merge tree (similarity)");
  allocate->add_option("--cut-out", alloc.cut_out, "Tree cut JSON (similarity)");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Run federated training");
  train->add_option("--dataset", tr.dataset, "Dataset manifest")->required();
  train->add_option("--sampler", tr.sampler)
      ->check(CLI::IsMember({"uniform", "md", "size", "similarity"}));
  train->add_option("--measure", tr.measure)
      ->check(CLI::IsMember({"arccos", "l2", "l1"}));
  train->add_option("--arch", tr.arch)->check(CLI::IsMember({"softmax", "mlp"}));
  train->add_option("--hidden", tr.hidden)->check(CLI::PositiveNumber);
  train->add_option("--m", tr.m)->check(CLI::PositiveNumber);
  train->add_option("--N", tr.steps, "Local SGD steps")->check(CLI::PositiveNumber);
  train->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
  train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
  train->add_option("--mu", tr.mu)->check(CLI::NonNegativeNumber);
  train->add_option("--rounds", tr.rounds);
  train->add_option("--seed", tr.seed);
  train->add_option("--metrics-out", tr.metrics_out, "JSON-lines metrics");
  train->add_option("--csv-out", tr.csv_out, "CSV metrics with rolling loss");

  VerifyArgs ver;
  auto* verify = app.add_subcommand("verify", "Monte-Carlo check of a sampler");
  verify->add_option("--sampler-spec", ver.spec, "JSON file or inline JSON")
      ->required();
  verify->add_option("--trials", ver.trials)->check(CLI::PositiveNumber);
  verify->add_flag("--fast", ver.fast, "Use the reduced trial count");
  verify->add_option("--seed", ver.seed);
  verify->add_option("--out", ver.out, "Report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*partition) return RunPartition(part);
    if (*allocate) return RunAllocate(alloc);
    if (*train) return RunTrain(tr, threads);
    if (*verify) return RunVerify(ver, threads);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ExitCodeFor(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
