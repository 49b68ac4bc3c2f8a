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

#ifndef CLSAMP_RNG_H_
#define CLSAMP_RNG_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace clsamp {

// Deterministic 64-bit generator (xoshiro256** seeded through splitmix64).
//
// Streams form a tree: Fork(key) derives a child from the parent's seed
// material only, never from its consumed state, so a child stream is the
// same no matter how many values were drawn from the parent or in which
// order siblings are used. The engine derives one stream per round, per
// distribution and per client this way.
//
// All distributions are implemented here rather than with <random>
// distribution objects, whose output is implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  RngStream Fork(std::uint64_t key) const;

  std::uint64_t NextU64();

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t UniformBelow(std::uint64_t bound);

  // Uniform on [0, 1) with 53 random bits.
  double UniformUnit();
  // Uniform on (0, 1).
  double UniformOpenUnit();

  double Normal();

  // log of a Gamma(shape, 1) variate. Working in log space keeps tiny
  // shapes (alpha ~ 1e-4) from underflowing to zero.
  double LogGamma(double shape);

  // Symmetric Dirichlet(alpha) over `dim` categories.
  std::vector<double> Dirichlet(double alpha, std::size_t dim);

 private:
  std::uint64_t key_;
  std::array<std::uint64_t, 4> state_;
};

}  // namespace clsamp

#endif  // CLSAMP_RNG_H_
