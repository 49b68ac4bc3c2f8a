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

#ifndef CLSAMP_VERIFY_STATS_H_
#define CLSAMP_VERIFY_STATS_H_

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "clsamp/allocation.h"
#include "json.hpp"

namespace clsamp {

inline constexpr std::size_t kDefaultTrials = 100000;
inline constexpr std::size_t kFastTrials = 10000;

// Per-client statistics of the aggregation weight w_i = count_i / m.
struct WeightStats {
  std::size_t trials = 0;
  std::vector<double> mean;
  // Unbiased sample variance over the trials.
  std::vector<double> var;
  std::vector<double> inclusion;
};

// Trial r draws from RngStream(seed).Fork(r); counts are accumulated in
// integers so the result does not depend on `threads`.
WeightStats EstimateWeightStats(const SamplerKind& sampler, std::size_t trials,
                                std::uint64_t seed, std::size_t threads = 1);

// Entry d counts the trials with exactly d distinct clients; length m + 1.
std::vector<std::uint64_t> DistinctClientDistribution(const SamplerKind& sampler,
                                                      std::size_t trials,
                                                      std::uint64_t seed,
                                                      std::size_t threads = 1);

// Exact moments of w_i. The count of client i is a sum of independent
// Bernoulli variables, one per distribution (a single Bernoulli(m/n) for
// uniform sampling), which also yields the fourth central moment.
struct WeightClosedForms {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inclusion;
  std::vector<double> fourth_moment;
};

WeightClosedForms ClosedForms(const SamplerKind& sampler);

// Standard errors for a `trials`-sample estimate of each closed form.
struct WeightStandardErrors {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inclusion;
};

WeightStandardErrors StandardErrors(const WeightClosedForms& closed,
                                    std::size_t trials);

// Two-sided z threshold keeping the family-wise false alarm rate of
// `num_checks` simultaneous checks at that of a single 3-sigma band.
double FamilyWiseThreshold(std::size_t num_checks);

// Report with one {closed, empirical, z} triple per client and statistic,
// the distinct-count histogram and an overall "pass" flag. A check passes
// when |z| <= z_threshold; zero-variance statistics must match exactly.
nlohmann::json VerifyReport(const SamplerKind& sampler, std::string_view kind,
                            std::size_t trials, std::uint64_t seed,
                            std::size_t threads = 1);

}  // namespace clsamp

#endif  // CLSAMP_VERIFY_STATS_H_
