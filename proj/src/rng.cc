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

#include "clsamp/rng.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "clsamp/error.h"

namespace clsamp {
namespace {

std::uint64_t SplitMix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed) : key_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : state_) word = SplitMix64(sm);
}

RngStream RngStream::Fork(std::uint64_t key) const {
  std::uint64_t a = key_ ^ 0x6A09E667F3BCC909ULL;
  std::uint64_t b = key + 0x3C6EF372FE94F82BULL;
  std::uint64_t child = SplitMix64(a) ^ Rotl(SplitMix64(b), 23);
  return RngStream(child);
}

std::uint64_t RngStream::NextU64() {
  const std::uint64_t result = Rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = Rotl(state_[3], 45);
  return result;
}

std::uint64_t RngStream::UniformBelow(std::uint64_t bound) {
  if (bound == 0) {
    throw Error(ErrorCode::kInvalidArgument, "UniformBelow bound must be > 0");
  }
  // Lemire's nearly-divisionless rejection method.
  unsigned __int128 product =
      static_cast<unsigned __int128>(NextU64()) * bound;
  auto low = static_cast<std::uint64_t>(product);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      product = static_cast<unsigned __int128>(NextU64()) * bound;
      low = static_cast<std::uint64_t>(product);
    }
  }
  return static_cast<std::uint64_t>(product >> 64);
}

double RngStream::UniformUnit() {
  return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
}

double RngStream::UniformOpenUnit() {
  return (static_cast<double>(NextU64() >> 12) + 0.5) * 0x1.0p-52;
}

double RngStream::Normal() {
  const double u1 = UniformOpenUnit();
  const double u2 = UniformUnit();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::LogGamma(double shape) {
  if (!(shape > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma shape must be > 0");
  }
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a).
    const double boosted = LogGamma(shape + 1.0);
    return boosted + std::log(UniformOpenUnit()) / shape;
  }
  // Marsaglia & Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = Normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double log_u = std::log(UniformOpenUnit());
    if (log_u < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return std::log(d) + std::log(v);
    }
  }
}

std::vector<double> RngStream::Dirichlet(double alpha, std::size_t dim) {
  if (dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "Dirichlet dimension must be > 0");
  }
  std::vector<double> logs(dim);
  for (auto& l : logs) l = LogGamma(alpha);
  const double max_log = *std::max_element(logs.begin(), logs.end());
  double total = 0.0;
  for (auto& l : logs) {
    l = std::exp(l - max_log);
    total += l;
  }
  for (auto& l : logs) l /= total;
  return logs;
}

}  // namespace clsamp
