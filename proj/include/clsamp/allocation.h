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

#ifndef CLSAMP_ALLOCATION_H_
#define CLSAMP_ALLOCATION_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "clsamp/rng.h"
#include "json.hpp"

namespace clsamp {

// m sampling distributions over n clients stored as integer sample counts:
// entry (k, i) is the number of client i's samples placed in distribution k,
// so that client i is drawn from distribution k with probability
// entry / M.
//
// Invariants, checked exactly at construction:
//   every row sums to M = sum of client sizes;
//   column i sums to m * n_i.
class AllocationMatrix {
 public:
  // `entries` is row-major, m rows of n entries.
  AllocationMatrix(std::vector<std::uint64_t> client_sizes,
                   std::size_t num_distributions,
                   std::vector<std::uint64_t> entries);

  std::size_t num_distributions() const { return m_; }
  std::size_t num_clients() const { return sizes_.size(); }
  std::uint64_t total() const { return total_; }

  std::uint64_t at(std::size_t k, std::size_t i) const {
    return entries_[k * sizes_.size() + i];
  }
  std::span<const std::uint64_t> row(std::size_t k) const {
    return {entries_.data() + k * sizes_.size(), sizes_.size()};
  }
  std::uint64_t client_size(std::size_t i) const { return sizes_[i]; }
  const std::vector<std::uint64_t>& client_sizes() const { return sizes_; }

  double probability(std::size_t k, std::size_t i) const {
    return static_cast<double>(at(k, i)) / static_cast<double>(total_);
  }

  // Inverse CDF over row k for u in [0, M).
  std::size_t ClientAt(std::size_t k, std::uint64_t u) const;

  friend bool operator==(const AllocationMatrix& a, const AllocationMatrix& b) {
    return a.m_ == b.m_ && a.sizes_ == b.sizes_ && a.entries_ == b.entries_;
  }

 private:
  std::vector<std::uint64_t> sizes_;
  std::size_t m_;
  std::uint64_t total_;
  std::vector<std::uint64_t> entries_;
  std::vector<std::uint64_t> cumulative_;
};

// Every row equals the client size vector: all m distributions are W_0.
AllocationMatrix MdAllocation(std::span<const std::uint64_t> client_sizes,
                              std::size_t m);

struct SampledSet {
  // One client per distribution, in distribution order. Repeats allowed.
  std::vector<std::size_t> members;

  std::size_t DistinctCount() const;
  // Number of times each client appears, length num_clients.
  std::vector<std::uint32_t> Counts(std::size_t num_clients) const;
};

// FedAvg's original scheme: m distinct clients uniformly at random.
struct UniformNoReplacement {
  std::size_t num_clients = 0;
  std::size_t m = 0;
};

// Multinomial sampling with respect to p_i; holds MdAllocation rows.
struct MultinomialSampler {
  AllocationMatrix alloc;
};

struct ClusteredSampler {
  AllocationMatrix alloc;
};

using SamplerKind =
    std::variant<UniformNoReplacement, MultinomialSampler, ClusteredSampler>;

SamplerKind MakeMdSampler(std::span<const std::uint64_t> client_sizes,
                          std::size_t m);

std::size_t NumClients(const SamplerKind& sampler);
std::size_t NumSampled(const SamplerKind& sampler);
// Null for UniformNoReplacement.
const AllocationMatrix* AllocationOf(const SamplerKind& sampler);

// MD / clustered: distribution k draws one uniform integer in [0, M) from
// stream.Fork(k) and maps it through row k. Uniform: a partial
// Fisher-Yates shuffle driven by stream.Fork(0).
SampledSet Draw(const SamplerKind& sampler, const RngStream& stream);

// (1/m) sum_k r'[k][i] / M. Equals p_i for every valid matrix.
double ExpectedWeight(const AllocationMatrix& alloc, std::size_t i);
// (1/m^2) sum_k q (1 - q) with q = r'[k][i] / M.
double WeightVariance(const AllocationMatrix& alloc, std::size_t i);
// 1 - prod_k (1 - r'[k][i] / M).
double ProbSampled(const AllocationMatrix& alloc, std::size_t i);

// Closed forms for MD sampling of client i, evaluated with the same
// arithmetic as the general forms so the MD allocation matches bit for bit.
double MdWeightVariance(const AllocationMatrix& alloc, std::size_t i);
double MdProbSampled(const AllocationMatrix& alloc, std::size_t i);

struct DominanceRecord {
  double var_md = 0.0;
  double var_cl = 0.0;
  double p_md = 0.0;
  double p_cl = 0.0;
  // Every entry of the client's column equals n_i.
  bool md_column = false;
};

inline constexpr double kDominanceTolerance = 1e-12;

std::vector<DominanceRecord> VarianceDominanceReport(
    const AllocationMatrix& alloc);

// True iff var_cl <= var_md + tol and p_cl >= p_md - tol for every client,
// with both equalities holding exactly on MD columns.
bool DominanceHolds(std::span<const DominanceRecord> report);

// CSV: a header row of client ids, then one row of integers per
// distribution. The JSON sidecar carries {m, n, M, client_sizes}.
void WriteAllocationCsv(const AllocationMatrix& alloc, std::ostream& out);
nlohmann::json AllocationSidecar(const AllocationMatrix& alloc);
// Client sizes are recovered from the column sums. When a sidecar is given
// its m, n and M must agree with the matrix.
AllocationMatrix ReadAllocationCsv(std::istream& in,
                                   const nlohmann::json* sidecar = nullptr);

}  // namespace clsamp

#endif  // CLSAMP_ALLOCATION_H_
