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

#ifndef CLSAMP_ALLOC_SIMILARITY_H_
#define CLSAMP_ALLOC_SIMILARITY_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clsamp/allocation.h"
#include "json.hpp"

namespace clsamp {

enum class SimilarityMeasure { kArccos, kL2, kL1 };

SimilarityMeasure ParseSimilarityMeasure(std::string_view name);
std::string_view SimilarityMeasureName(SimilarityMeasure measure);

// Latest update direction of a client: its local model minus the global
// model it started from. Never-sampled clients keep the zero vector.
struct RepGradient {
  std::size_t client = 0;
  std::vector<double> vector;
  bool fresh = false;
};

class SquareMatrix {
 public:
  explicit SquareMatrix(std::size_t n = 0, double fill = 0.0)
      : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * n_ + j];
  }

 private:
  std::size_t n_;
  std::vector<double> data_;
};

// Arccos: angle between the vectors, pi/2 between a zero vector and a
// nonzero one, 0 between two zero vectors. L2 / L1: norm of the difference.
double Dissimilarity(std::span<const double> a, std::span<const double> b,
                     SimilarityMeasure measure);

SquareMatrix SimilarityMatrix(std::span<const RepGradient> grads,
                              SimilarityMeasure measure);

// Recomputes rows and columns of `changed` clients only.
void RefreshSimilarityColumns(SquareMatrix& dissim,
                              std::span<const RepGradient> grads,
                              SimilarityMeasure measure,
                              std::span<const std::size_t> changed);

struct MergeNode {
  std::size_t left = 0;
  std::size_t right = 0;
  // Ward cost of the merge: |A||B| / (|A| + |B|) * ||mu_A - mu_B||^2 for
  // Euclidean input.
  double height = 0.0;
  // Sum of leaf weights below the node.
  std::uint64_t weight = 0;
  std::size_t size = 0;
  std::size_t min_leaf = 0;
};

// Binary merge tree in the usual linkage numbering: leaves are 0..n-1 and
// the j-th merge creates node n + j. Leaves carry a client id used when
// reporting leaf sets.
class SimilarityTree {
 public:
  SimilarityTree(std::vector<std::uint64_t> leaf_weights,
                 std::vector<std::size_t> leaf_ids,
                 std::vector<MergeNode> merges);

  std::size_t num_leaves() const { return leaf_weights_.size(); }
  const std::vector<MergeNode>& merges() const { return merges_; }
  std::size_t root() const;
  bool is_leaf(std::size_t node) const { return node < num_leaves(); }
  std::uint64_t weight(std::size_t node) const;
  std::size_t leaf_id(std::size_t leaf) const { return leaf_ids_[leaf]; }

  // Client ids below `node`, ascending.
  std::vector<std::size_t> Leaves(std::size_t node) const;

  // Parenthesized leaf sets with merge heights, e.g. "((0,1):0.5,2):13.5".
  std::string ToString() const;

 private:
  std::vector<std::uint64_t> leaf_weights_;
  std::vector<std::size_t> leaf_ids_;
  std::vector<MergeNode> merges_;
};

// Agglomerative Ward clustering over a dissimilarity matrix using the
// Lance-Williams recurrence on squared dissimilarities, unit mass per leaf.
// Equal-cost candidates are ordered by merged size, then by the pair of
// the clusters' smallest leaf indices. `leaf_ids` defaults to 0..n-1.
SimilarityTree WardTree(const SquareMatrix& dissim,
                        std::span<const std::uint64_t> leaf_weights,
                        std::span<const std::size_t> leaf_ids = {});

struct ClusterCut {
  // Client ids of each group, ascending.
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::uint64_t> weights;

  nlohmann::json ToJson() const;
};

// Walks down from the root; a node becomes a group as soon as its weight
// fits into `capacity`.
ClusterCut CutTree(const SimilarityTree& tree, std::uint64_t capacity);

struct LargeClientSplit {
  // One entry per dedicated distribution: the client sampled there with
  // probability 1.
  std::vector<std::size_t> dedicated;
  // m n_i - floor(m n_i / M) M for every client.
  std::vector<std::uint64_t> residual;
  std::size_t free_distributions = 0;
};

LargeClientSplit SplitLargeClients(std::span<const std::uint64_t> client_sizes,
                                   std::size_t m);

struct SimilarityDiagnostics {
  std::string tree;
  ClusterCut cut;
};

// Clustered sampling based on model similarity. Clients with m n_i >= M
// first receive their dedicated distributions; the residual mass is
// clustered (Ward tree cut at capacity M), the m' heaviest groups seed the
// free distributions and the remaining clients are water-filled into them
// in order.
AllocationMatrix AllocateBySimilarity(std::span<const std::uint64_t> client_sizes,
                                      const SquareMatrix& dissim, std::size_t m,
                                      SimilarityDiagnostics* diagnostics = nullptr);

AllocationMatrix AllocateBySimilarity(std::span<const std::uint64_t> client_sizes,
                                      std::span<const RepGradient> grads,
                                      std::size_t m, SimilarityMeasure measure,
                                      SimilarityDiagnostics* diagnostics = nullptr);

// Per-client representative gradients, all zero and stale initially.
class RepGradientCache {
 public:
  RepGradientCache(std::size_t num_clients, std::size_t dim);

  const std::vector<RepGradient>& gradients() const { return grads_; }
  std::size_t dim() const { return dim_; }

  // Stores local - global for every sampled entry (one local parameter
  // vector per entry of `sampled`). Returns the clients that changed,
  // ascending.
  std::vector<std::size_t> Update(std::span<const std::size_t> sampled,
                                  std::span<const std::vector<double>> locals,
                                  std::span<const double> global);

 private:
  std::size_t dim_;
  std::vector<RepGradient> grads_;
};

}  // namespace clsamp

#endif  // CLSAMP_ALLOC_SIMILARITY_H_
