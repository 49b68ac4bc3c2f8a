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

#ifndef CLSAMP_TESTS_TEST_SUPPORT_H_
#define CLSAMP_TESTS_TEST_SUPPORT_H_

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "clsamp/alloc_similarity.h"
#include "clsamp/allocation.h"

namespace clsamp::testing {

inline std::vector<std::uint64_t> RandomSizes(std::mt19937_64& gen, std::size_t n,
                                              std::uint64_t max_size) {
  std::uniform_int_distribution<std::uint64_t> dist(1, max_size);
  std::vector<std::uint64_t> sizes(n);
  for (auto& s : sizes) s = dist(gen);
  return sizes;
}

inline std::vector<RepGradient> RandomGradients(std::mt19937_64& gen, std::size_t n,
                                                std::size_t dim) {
  std::normal_distribution<double> normal;
  std::bernoulli_distribution stale(0.1);
  std::vector<RepGradient> grads(n);
  for (std::size_t i = 0; i < n; ++i) {
    grads[i].client = i;
    grads[i].vector.assign(dim, 0.0);
    if (stale(gen)) continue;
    grads[i].fresh = true;
    for (auto& x : grads[i].vector) x = normal(gen);
  }
  return grads;
}

// A valid allocation: either the MD rows or a water-fill in random client
// order, followed by random 2x2 transfers that keep every row and column sum.
inline void PerturbAllocation(std::mt19937_64& gen,
                              std::vector<std::uint64_t>& entries, std::size_t m,
                              std::size_t n) {
  if (m < 2 || n < 2) return;
  std::uniform_int_distribution<std::size_t> pick_k(0, m - 1), pick_i(0, n - 1);
  for (std::size_t move = 0; move < 4 * (m + n); ++move) {
    const std::size_t k1 = pick_k(gen), k2 = pick_k(gen);
    const std::size_t i1 = pick_i(gen), i2 = pick_i(gen);
    if (k1 == k2 || i1 == i2) continue;
    const std::uint64_t room =
        std::min(entries[k1 * n + i2], entries[k2 * n + i1]);
    if (room == 0) continue;
    const std::uint64_t delta =
        std::uniform_int_distribution<std::uint64_t>(1, room)(gen);
    entries[k1 * n + i1] += delta;
    entries[k2 * n + i2] += delta;
    entries[k1 * n + i2] -= delta;
    entries[k2 * n + i1] -= delta;
  }
}

inline AllocationMatrix RandomAllocation(std::mt19937_64& gen,
                                         const std::vector<std::uint64_t>& sizes,
                                         std::size_t m) {
  const std::size_t n = sizes.size();
  std::uint64_t total = 0;
  for (auto s : sizes) total += s;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::uint64_t> entries(m * n, 0);
  if (std::bernoulli_distribution(0.3)(gen)) {
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t i = 0; i < n; ++i) entries[k * n + i] = sizes[i];
    }
    PerturbAllocation(gen, entries, m, n);
    return AllocationMatrix(sizes, m, std::move(entries));
  }
  std::size_t k = 0;
  std::uint64_t fill = 0;
  for (const std::size_t i : order) {
    std::uint64_t remaining = m * sizes[i];
    while (remaining > 0) {
      const std::uint64_t take = std::min(remaining, total - fill);
      entries[k * n + i] += take;
      remaining -= take;
      fill += take;
      if (fill == total) {
        ++k;
        fill = 0;
      }
    }
  }
  PerturbAllocation(gen, entries, m, n);
  return AllocationMatrix(sizes, m, std::move(entries));
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("clsamp_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string File(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace clsamp::testing

#endif  // CLSAMP_TESTS_TEST_SUPPORT_H_
