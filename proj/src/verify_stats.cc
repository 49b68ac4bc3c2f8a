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

#include "clsamp/verify_stats.h"

#include <cmath>
#include <string>

#include "clsamp/error.h"
#include "clsamp/parallel.h"
#include "clsamp/rng.h"

namespace clsamp {
namespace {

constexpr std::size_t kBlocks = 64;
constexpr double kSingleBandAlpha = 0.0026997960632601866;  // P(|Z| > 3)

struct Accumulator {
  std::vector<std::uint64_t> sum;
  std::vector<std::uint64_t> sum_sq;
  std::vector<std::uint64_t> hits;
  std::vector<std::uint64_t> distinct;
};

// Runs trials [0, trials) in kBlocks fixed blocks and merges integer sums.
Accumulator RunTrials(const SamplerKind& sampler, std::size_t trials,
                      std::uint64_t seed, std::size_t threads) {
  if (trials == 0) throw Error(ErrorCode::kInvalidArgument, "trials must be >= 1");
  const std::size_t n = NumClients(sampler);
  const std::size_t m = NumSampled(sampler);
  const RngStream root(seed);
  const std::size_t blocks = std::min(kBlocks, trials);
  std::vector<Accumulator> partial(blocks);
  ParallelFor(blocks, threads, [&](std::size_t b) {
    Accumulator& acc = partial[b];
    acc.sum.assign(n, 0);
    acc.sum_sq.assign(n, 0);
    acc.hits.assign(n, 0);
    acc.distinct.assign(m + 1, 0);
    std::vector<std::uint32_t> counts(n, 0);
    for (std::size_t r = trials * b / blocks; r < trials * (b + 1) / blocks; ++r) {
      const SampledSet s = Draw(sampler, root.Fork(r));
      std::size_t distinct = 0;
      for (const std::size_t i : s.members) {
        if (counts[i]++ == 0) ++distinct;
      }
      for (const std::size_t i : s.members) {
        const std::uint64_t c = counts[i];
        if (c == 0) continue;
        acc.sum[i] += c;
        acc.sum_sq[i] += c * c;
        acc.hits[i] += 1;
        counts[i] = 0;
      }
      acc.distinct[distinct] += 1;
    }
  });
  Accumulator total = std::move(partial[0]);
  for (std::size_t b = 1; b < blocks; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      total.sum[i] += partial[b].sum[i];
      total.sum_sq[i] += partial[b].sum_sq[i];
      total.hits[i] += partial[b].hits[i];
    }
    for (std::size_t d = 0; d <= m; ++d) total.distinct[d] += partial[b].distinct[d];
  }
  return total;
}

double InverseUpperTail(double alpha) {
  // Solves erfc(z / sqrt 2) = alpha by bisection.
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (std::erfc(mid / std::sqrt(2.0)) > alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

nlohmann::json Check(double closed, double empirical, double se, double threshold,
                     bool& ok) {
  nlohmann::json out = {{"closed", closed}, {"empirical", empirical}};
  if (se > 0.0) {
    const double z = (empirical - closed) / se;
    out["z"] = z;
    if (!(std::abs(z) <= threshold)) ok = false;
  } else {
    const bool exact = std::abs(empirical - closed) <= 1e-12;
    out["z"] = exact ? nlohmann::json(0.0) : nlohmann::json(nullptr);
    if (!exact) ok = false;
  }
  return out;
}

}  // namespace

WeightStats EstimateWeightStats(const SamplerKind& sampler, std::size_t trials,
                                std::uint64_t seed, std::size_t threads) {
  const Accumulator acc = RunTrials(sampler, trials, seed, threads);
  const std::size_t n = NumClients(sampler);
  const long double m = static_cast<long double>(NumSampled(sampler));
  const long double r = static_cast<long double>(trials);
  WeightStats out;
  out.trials = trials;
  out.mean.resize(n);
  out.var.resize(n);
  out.inclusion.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long double s = static_cast<long double>(acc.sum[i]);
    const long double ss = static_cast<long double>(acc.sum_sq[i]);
    out.mean[i] = static_cast<double>(s / (r * m));
    out.var[i] = trials > 1
                     ? static_cast<double>((ss - s * s / r) / (r - 1) / (m * m))
                     : 0.0;
    out.inclusion[i] = static_cast<double>(static_cast<long double>(acc.hits[i]) / r);
  }
  return out;
}

std::vector<std::uint64_t> DistinctClientDistribution(const SamplerKind& sampler,
                                                      std::size_t trials,
                                                      std::uint64_t seed,
                                                      std::size_t threads) {
  return RunTrials(sampler, trials, seed, threads).distinct;
}

WeightClosedForms ClosedForms(const SamplerKind& sampler) {
  const std::size_t n = NumClients(sampler);
  const double m = static_cast<double>(NumSampled(sampler));
  WeightClosedForms out;
  out.mean.resize(n);
  out.var.resize(n);
  out.inclusion.resize(n);
  out.fourth_moment.resize(n);
  const AllocationMatrix* alloc = AllocationOf(sampler);
  const bool md = std::holds_alternative<MultinomialSampler>(sampler);
  for (std::size_t i = 0; i < n; ++i) {
    double k2 = 0.0, k4 = 0.0;
    if (alloc == nullptr) {
      const double q = m / static_cast<double>(n);
      out.mean[i] = 1.0 / static_cast<double>(n);
      out.var[i] = q * (1.0 - q) / (m * m);
      out.inclusion[i] = q;
      k2 = q * (1.0 - q);
      k4 = k2 * (1.0 - 6.0 * k2);
    } else {
      out.mean[i] = ExpectedWeight(*alloc, i);
      out.var[i] = md ? MdWeightVariance(*alloc, i) : WeightVariance(*alloc, i);
      out.inclusion[i] = md ? MdProbSampled(*alloc, i) : ProbSampled(*alloc, i);
      for (std::size_t k = 0; k < alloc->num_distributions(); ++k) {
        const double q = alloc->probability(k, i);
        const double v = q * (1.0 - q);
        k2 += v;
        k4 += v * (1.0 - 6.0 * v);
      }
    }
    out.fourth_moment[i] = (k4 + 3.0 * k2 * k2) / (m * m * m * m);
  }
  return out;
}

WeightStandardErrors StandardErrors(const WeightClosedForms& closed,
                                    std::size_t trials) {
  const double r = static_cast<double>(trials);
  const std::size_t n = closed.mean.size();
  WeightStandardErrors se;
  se.mean.resize(n);
  se.var.resize(n);
  se.inclusion.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = closed.var[i];
    const double p = closed.inclusion[i];
    se.mean[i] = std::sqrt(v / r);
    se.var[i] = std::sqrt(std::max(0.0, closed.fourth_moment[i] - v * v) / r);
    se.inclusion[i] = std::sqrt(p * (1.0 - p) / r);
  }
  return se;
}

double FamilyWiseThreshold(std::size_t num_checks) {
  if (num_checks <= 1) return 3.0;
  return InverseUpperTail(kSingleBandAlpha / static_cast<double>(num_checks));
}

nlohmann::json VerifyReport(const SamplerKind& sampler, std::string_view kind,
                            std::size_t trials, std::uint64_t seed,
                            std::size_t threads) {
  const std::size_t n = NumClients(sampler);
  const std::size_t m = NumSampled(sampler);
  const WeightStats stats = EstimateWeightStats(sampler, trials, seed, threads);
  const auto histogram = DistinctClientDistribution(sampler, trials, seed, threads);
  const WeightClosedForms closed = ClosedForms(sampler);
  const WeightStandardErrors se = StandardErrors(closed, trials);
  const double threshold = FamilyWiseThreshold(3 * n);

  bool ok = true;
  std::size_t failures = 0;
  nlohmann::json clients = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    bool client_ok = true;
    nlohmann::json row = {{"client", i}};
    row["mean"] = Check(closed.mean[i], stats.mean[i], se.mean[i], threshold,
                        client_ok);
    row["var"] = Check(closed.var[i], stats.var[i], se.var[i], threshold, client_ok);
    row["inclusion"] = Check(closed.inclusion[i], stats.inclusion[i],
                             se.inclusion[i], threshold, client_ok);
    row["pass"] = client_ok;
    if (!client_ok) {
      ok = false;
      ++failures;
    }
    clients.push_back(std::move(row));
  }
  return {{"format", "clsamp-verify-report"},
          {"sampler", std::string(kind)},
          {"n", n},
          {"m", m},
          {"trials", trials},
          {"seed", seed},
          {"z_threshold", threshold},
          {"clients", std::move(clients)},
          {"distinct_histogram", histogram},
          {"failed_clients", failures},
          {"pass", ok}};
}

}  // namespace clsamp
