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

#ifndef CLSAMP_ALLOC_SIZE_H_
#define CLSAMP_ALLOC_SIZE_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "clsamp/allocation.h"

namespace clsamp {

// Clustered sampling based on sample size.
//
// Clients are ordered by descending n_i (ties by ascending index) and their
// m * n_i samples are poured one after the other into m bins of capacity M,
// spilling into the next bin at each boundary. A client therefore owns
// floor(m n_i / M) bins outright, possibly plus the partial bins at either
// end of its run. O(n log n).
AllocationMatrix AllocateBySize(std::span<const std::uint64_t> client_sizes,
                                std::size_t m);

// Number of distributions in which each client has a nonzero entry.
std::vector<std::size_t> ClientSupports(const AllocationMatrix& alloc);

// Every client has support in at most floor(m n_i / M) + 2 distributions.
bool SupportBoundCheck(const AllocationMatrix& alloc);

// Every client's nonzero distributions form one contiguous range of k.
bool SupportIsContiguous(const AllocationMatrix& alloc);

}  // namespace clsamp

#endif  // CLSAMP_ALLOC_SIZE_H_
