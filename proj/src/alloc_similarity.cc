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

#include "clsamp/alloc_similarity.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <tuple>

#include "clsamp/error.h"

namespace clsamp {
namespace {

std::string HeightString(double h) {
  std::ostringstream out;
  out.precision(10);
  out << h;
  return out.str();
}

}  // namespace

SimilarityMeasure ParseSimilarityMeasure(std::string_view name) {
  if (name == "arccos") return SimilarityMeasure::kArccos;
  if (name == "l2") return SimilarityMeasure::kL2;
  if (name == "l1") return SimilarityMeasure::kL1;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown similarity measure '" + std::string(name) + "'");
}

std::string_view SimilarityMeasureName(SimilarityMeasure measure) {
  switch (measure) {
    case SimilarityMeasure::kArccos:
      return "arccos";
    case SimilarityMeasure::kL2:
      return "l2";
    case SimilarityMeasure::kL1:
      return "l1";
  }
  return "arccos";
}

double Dissimilarity(std::span<const double> a, std::span<const double> b,
                     SimilarityMeasure measure) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "representative gradients differ in length");
  }
  switch (measure) {
    case SimilarityMeasure::kArccos: {
      double dot = 0.0, aa = 0.0, bb = 0.0;
      bool identical = true;
      for (std::size_t j = 0; j < a.size(); ++j) {
        dot += a[j] * b[j];
        aa += a[j] * a[j];
        bb += b[j] * b[j];
        identical = identical && a[j] == b[j];
      }
      if (identical) return 0.0;
      if (aa == 0.0 || bb == 0.0) return std::numbers::pi / 2.0;
      const double cosine = dot / (std::sqrt(aa) * std::sqrt(bb));
      return std::acos(std::clamp(cosine, -1.0, 1.0));
    }
    case SimilarityMeasure::kL2: {
      double sum = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        sum += d * d;
      }
      return std::sqrt(sum);
    }
    case SimilarityMeasure::kL1: {
      double sum = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) sum += std::abs(a[j] - b[j]);
      return sum;
    }
  }
  return 0.0;
}

SquareMatrix SimilarityMatrix(std::span<const RepGradient> grads,
                              SimilarityMeasure measure) {
  SquareMatrix dissim(grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (std::size_t j = i + 1; j < grads.size(); ++j) {
      const double d = Dissimilarity(grads[i].vector, grads[j].vector, measure);
      dissim(i, j) = d;
      dissim(j, i) = d;
    }
  }
  return dissim;
}

void RefreshSimilarityColumns(SquareMatrix& dissim,
                              std::span<const RepGradient> grads,
                              SimilarityMeasure measure,
                              std::span<const std::size_t> changed) {
  if (dissim.size() != grads.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "matrix and cache sizes differ");
  }
  for (const std::size_t c : changed) {
    for (std::size_t j = 0; j < grads.size(); ++j) {
      const double d =
          j == c ? 0.0 : Dissimilarity(grads[c].vector, grads[j].vector, measure);
      dissim(c, j) = d;
      dissim(j, c) = d;
    }
  }
}

SimilarityTree::SimilarityTree(std::vector<std::uint64_t> leaf_weights,
                               std::vector<std::size_t> leaf_ids,
                               std::vector<MergeNode> merges)
    : leaf_weights_(std::move(leaf_weights)),
      leaf_ids_(std::move(leaf_ids)),
      merges_(std::move(merges)) {
  if (leaf_weights_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "tree needs at least one leaf");
  }
  if (leaf_ids_.size() != leaf_weights_.size() ||
      merges_.size() + 1 != leaf_weights_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "inconsistent tree shape");
  }
}

std::size_t SimilarityTree::root() const {
  return num_leaves() == 1 ? 0 : num_leaves() + merges_.size() - 1;
}

std::uint64_t SimilarityTree::weight(std::size_t node) const {
  return is_leaf(node) ? leaf_weights_[node]
                       : merges_[node - num_leaves()].weight;
}

std::vector<std::size_t> SimilarityTree::Leaves(std::size_t node) const {
  std::vector<std::size_t> out;
  std::vector<std::size_t> stack = {node};
  while (!stack.empty()) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    if (is_leaf(cur)) {
      out.push_back(leaf_ids_[cur]);
    } else {
      const auto& m = merges_[cur - num_leaves()];
      stack.push_back(m.left);
      stack.push_back(m.right);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string SimilarityTree::ToString() const {
  std::vector<std::string> text(num_leaves() + merges_.size());
  for (std::size_t i = 0; i < num_leaves(); ++i) {
    text[i] = std::to_string(leaf_ids_[i]);
  }
  for (std::size_t j = 0; j < merges_.size(); ++j) {
    const auto& m = merges_[j];
    text[num_leaves() + j] = "(" + text[m.left] + "," + text[m.right] +
                             "):" + HeightString(m.height);
  }
  return text[root()];
}

SimilarityTree WardTree(const SquareMatrix& dissim,
                        std::span<const std::uint64_t> leaf_weights,
                        std::span<const std::size_t> leaf_ids) {
  const std::size_t n = dissim.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty dissimilarity");
  if (leaf_weights.size() != n || (!leaf_ids.empty() && leaf_ids.size() != n)) {
    throw Error(ErrorCode::kDimensionMismatch, "leaf count mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (dissim(i, i) != 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "nonzero diagonal");
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (dissim(i, j) != dissim(j, i) || !(dissim(i, j) >= 0.0)) {
        throw Error(ErrorCode::kInvalidArgument,
                    "dissimilarity must be symmetric and non-negative");
      }
    }
  }

  // Working copy of squared dissimilarities indexed by slot; a merged
  // cluster takes over the slot of its first member.
  SquareMatrix sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sq(i, j) = dissim(i, j) * dissim(i, j);
  }
  std::vector<std::size_t> node(n), size(n, 1), min_leaf(n);
  std::vector<std::uint64_t> weight(leaf_weights.begin(), leaf_weights.end());
  std::vector<bool> active(n, true);
  std::iota(node.begin(), node.end(), std::size_t{0});
  std::iota(min_leaf.begin(), min_leaf.end(), std::size_t{0});

  std::vector<MergeNode> merges;
  merges.reserve(n - 1);
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_a = n, best_b = n;
    std::tuple<double, std::size_t, std::size_t, std::size_t> best_key;
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!active[b]) continue;
        const auto key = std::make_tuple(
            sq(a, b) / 2.0, size[a] + size[b], std::min(min_leaf[a], min_leaf[b]),
            std::max(min_leaf[a], min_leaf[b]));
        if (best_a == n || key < best_key) {
          best_key = key;
          best_a = a;
          best_b = b;
        }
      }
    }
    const std::size_t a = best_a, b = best_b;
    MergeNode merge;
    const bool a_first = min_leaf[a] < min_leaf[b];
    merge.left = a_first ? node[a] : node[b];
    merge.right = a_first ? node[b] : node[a];
    merge.height = std::get<0>(best_key);
    merge.weight = weight[a] + weight[b];
    merge.size = size[a] + size[b];
    merge.min_leaf = std::min(min_leaf[a], min_leaf[b]);
    merges.push_back(merge);

    const double sa = static_cast<double>(size[a]);
    const double sb = static_cast<double>(size[b]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == a || k == b) continue;
      const double sk = static_cast<double>(size[k]);
      const double updated =
          ((sa + sk) * sq(a, k) + (sb + sk) * sq(b, k) - sk * sq(a, b)) /
          (sa + sb + sk);
      sq(a, k) = updated;
      sq(k, a) = updated;
    }
    node[a] = n + step;
    size[a] = merge.size;
    weight[a] = merge.weight;
    min_leaf[a] = merge.min_leaf;
    active[b] = false;
  }

  std::vector<std::size_t> ids(n);
  if (leaf_ids.empty()) {
    std::iota(ids.begin(), ids.end(), std::size_t{0});
  } else {
    ids.assign(leaf_ids.begin(), leaf_ids.end());
  }
  return SimilarityTree({leaf_weights.begin(), leaf_weights.end()},
                        std::move(ids), std::move(merges));
}

nlohmann::json ClusterCut::ToJson() const {
  return {{"groups", groups}, {"q", weights}};
}

ClusterCut CutTree(const SimilarityTree& tree, std::uint64_t capacity) {
  ClusterCut cut;
  std::vector<std::size_t> stack = {tree.root()};
  while (!stack.empty()) {
    const std::size_t node = stack.back();
    stack.pop_back();
    if (tree.weight(node) <= capacity) {
      cut.groups.push_back(tree.Leaves(node));
      cut.weights.push_back(tree.weight(node));
      continue;
    }
    if (tree.is_leaf(node)) {
      throw Error(ErrorCode::kLeafOverCapacity,
                  "client " + std::to_string(tree.leaf_id(node)) + " weighs " +
                      std::to_string(tree.weight(node)) + " > capacity " +
                      std::to_string(capacity));
    }
    const auto& m = tree.merges()[node - tree.num_leaves()];
    stack.push_back(m.right);
    stack.push_back(m.left);
  }
  return cut;
}

LargeClientSplit SplitLargeClients(std::span<const std::uint64_t> client_sizes,
                                   std::size_t m) {
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "m must be >= 1");
  const std::uint64_t M = std::accumulate(client_sizes.begin(),
                                          client_sizes.end(), std::uint64_t{0});
  LargeClientSplit split;
  split.residual.resize(client_sizes.size());
  std::size_t used = 0;
  for (std::size_t i = 0; i < client_sizes.size(); ++i) {
    const std::uint64_t mass = m * client_sizes[i];
    const std::uint64_t owned = mass / M;
    if (owned >= m && client_sizes.size() >= 2) {
      throw Error(ErrorCode::kDegenerateConfig,
                  "client " + std::to_string(i) +
                      " would take every distribution");
    }
    split.dedicated.insert(split.dedicated.end(), owned, i);
    split.residual[i] = mass - owned * M;
    used += owned;
  }
  split.free_distributions = m - used;
  return split;
}

AllocationMatrix AllocateBySimilarity(std::span<const std::uint64_t> client_sizes,
                                      const SquareMatrix& dissim, std::size_t m,
                                      SimilarityDiagnostics* diagnostics) {
  const std::size_t n = client_sizes.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no clients");
  if (dissim.size() != n) {
    throw Error(ErrorCode::kDimensionMismatch,
                "dissimilarity matrix does not match client count");
  }
  for (auto s : client_sizes) {
    if (s == 0) throw Error(ErrorCode::kInvalidArgument, "client size 0");
  }
  const std::uint64_t M = std::accumulate(client_sizes.begin(),
                                          client_sizes.end(), std::uint64_t{0});
  const LargeClientSplit split = SplitLargeClients(client_sizes, m);

  std::vector<std::uint64_t> entries(m * n, 0);
  for (std::size_t k = 0; k < split.dedicated.size(); ++k) {
    entries[k * n + split.dedicated[k]] = M;
  }
  const std::size_t offset = split.dedicated.size();
  const std::size_t free = split.free_distributions;
  if (free == 0) {
    return AllocationMatrix({client_sizes.begin(), client_sizes.end()}, m,
                            std::move(entries));
  }

  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < n; ++i) {
    if (split.residual[i] > 0) members.push_back(i);
  }
  SquareMatrix sub(members.size());
  std::vector<std::uint64_t> leaf_weights(members.size());
  for (std::size_t a = 0; a < members.size(); ++a) {
    leaf_weights[a] = split.residual[members[a]];
    for (std::size_t b = 0; b < members.size(); ++b) {
      sub(a, b) = dissim(members[a], members[b]);
    }
  }
  const SimilarityTree tree = WardTree(sub, leaf_weights, members);
  ClusterCut cut = CutTree(tree, M);
  if (cut.groups.size() < free) {
    throw Error(ErrorCode::kDegenerateConfig, "tree cut produced fewer groups "
                                              "than free distributions");
  }

  std::vector<std::size_t> rank(cut.groups.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::sort(rank.begin(), rank.end(), [&](std::size_t x, std::size_t y) {
    if (cut.weights[x] != cut.weights[y]) return cut.weights[x] > cut.weights[y];
    return cut.groups[x].front() < cut.groups[y].front();
  });

  std::vector<std::uint64_t> fill(free, 0);
  for (std::size_t g = 0; g < free; ++g) {
    for (const std::size_t i : cut.groups[rank[g]]) {
      entries[(offset + g) * n + i] = split.residual[i];
    }
    fill[g] = cut.weights[rank[g]];
  }

  std::size_t k = 0;
  for (std::size_t g = free; g < rank.size(); ++g) {
    for (const std::size_t i : cut.groups[rank[g]]) {
      std::uint64_t remaining = split.residual[i];
      while (remaining > 0) {
        if (k >= free) {
          throw Error(ErrorCode::kDegenerateConfig, "water-filling overflowed");
        }
        if (fill[k] + remaining < M) {
          entries[(offset + k) * n + i] += remaining;
          fill[k] += remaining;
          remaining = 0;
        } else {
          const std::uint64_t take = M - fill[k];
          entries[(offset + k) * n + i] += take;
          remaining -= take;
          fill[k] = M;
          ++k;
        }
      }
    }
  }

  if (diagnostics != nullptr) {
    diagnostics->tree = tree.ToString();
    diagnostics->cut = std::move(cut);
  }
  return AllocationMatrix({client_sizes.begin(), client_sizes.end()}, m,
                          std::move(entries));
}

AllocationMatrix AllocateBySimilarity(std::span<const std::uint64_t> client_sizes,
                                      std::span<const RepGradient> grads,
                                      std::size_t m, SimilarityMeasure measure,
                                      SimilarityDiagnostics* diagnostics) {
  return AllocateBySimilarity(client_sizes, SimilarityMatrix(grads, measure), m,
                              diagnostics);
}

RepGradientCache::RepGradientCache(std::size_t num_clients, std::size_t dim)
    : dim_(dim), grads_(num_clients) {
  for (std::size_t i = 0; i < num_clients; ++i) {
    grads_[i].client = i;
    grads_[i].vector.assign(dim, 0.0);
  }
}

std::vector<std::size_t> RepGradientCache::Update(
    std::span<const std::size_t> sampled,
    std::span<const std::vector<double>> locals,
    std::span<const double> global) {
  if (locals.size() != sampled.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "expected one local model per sampled entry");
  }
  if (global.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "global model has wrong length");
  }
  std::vector<std::size_t> changed;
  for (std::size_t j = 0; j < sampled.size(); ++j) {
    const std::size_t i = sampled[j];
    if (locals[j].size() != dim_) {
      throw Error(ErrorCode::kDimensionMismatch, "local model has wrong length");
    }
    auto& g = grads_.at(i);
    for (std::size_t p = 0; p < dim_; ++p) g.vector[p] = locals[j][p] - global[p];
    g.fresh = true;
    changed.push_back(i);
  }
  std::sort(changed.begin(), changed.end());
  changed.erase(std::unique(changed.begin(), changed.end()), changed.end());
  return changed;
}

}  // namespace clsamp
