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

#include "clsamp/alloc_size.h"

#include <algorithm>
#include <numeric>

#include "clsamp/error.h"

namespace clsamp {

AllocationMatrix AllocateBySize(std::span<const std::uint64_t> client_sizes,
                                std::size_t m) {
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "m must be >= 1");
  const std::size_t n = client_sizes.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no clients");
  for (auto s : client_sizes) {
    if (s == 0) throw Error(ErrorCode::kInvalidArgument, "client size 0");
  }
  const std::uint64_t M =
      std::accumulate(client_sizes.begin(), client_sizes.end(), std::uint64_t{0});

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return client_sizes[a] > client_sizes[b];
  });

  std::vector<std::uint64_t> entries(m * n, 0);
  std::uint64_t poured = 0;
  for (const std::size_t i : order) {
    const std::uint64_t start = poured;
    const std::uint64_t end = poured + m * client_sizes[i];
    for (std::uint64_t k = start / M; k * M < end; ++k) {
      const std::uint64_t lo = std::max(start, k * M);
      const std::uint64_t hi = std::min(end, (k + 1) * M);
      entries[k * n + i] = hi - lo;
    }
    poured = end;
  }
  return AllocationMatrix({client_sizes.begin(), client_sizes.end()}, m,
                          std::move(entries));
}

std::vector<std::size_t> ClientSupports(const AllocationMatrix& alloc) {
  std::vector<std::size_t> support(alloc.num_clients(), 0);
  for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
    for (std::size_t i = 0; i < alloc.num_clients(); ++i) {
      if (alloc.at(k, i) != 0) ++support[i];
    }
  }
  return support;
}

bool SupportBoundCheck(const AllocationMatrix& alloc) {
  const auto support = ClientSupports(alloc);
  for (std::size_t i = 0; i < alloc.num_clients(); ++i) {
    const std::uint64_t bound =
        alloc.num_distributions() * alloc.client_size(i) / alloc.total() + 2;
    if (support[i] > bound) return false;
  }
  return true;
}

bool SupportIsContiguous(const AllocationMatrix& alloc) {
  for (std::size_t i = 0; i < alloc.num_clients(); ++i) {
    bool seen = false;
    bool closed = false;
    for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
      const bool present = alloc.at(k, i) != 0;
      if (present && closed) return false;
      if (present) seen = true;
      if (!present && seen) closed = true;
    }
  }
  return true;
}

}  // namespace clsamp
