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

#ifndef CLSAMP_TESTS_ORACLES_H_
#define CLSAMP_TESTS_ORACLES_H_

// Reference implementations written independently of the library code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <tuple>
#include <vector>

#include "clsamp/model.h"

namespace clsamp::testing {

// Size-ordered water-filling by prefix sums: in descending-size order
// (ties by index) client j covers [Q_{j-1}, Q_j) of the line [0, m M) cut
// into bins of length M. Entry (k, i) is the overlap with bin k.
inline std::vector<std::uint64_t> PrefixSumAllocation(
    const std::vector<std::uint64_t>& sizes, std::size_t m) {
  const std::size_t n = sizes.size();
  const std::uint64_t M = std::accumulate(sizes.begin(), sizes.end(), std::uint64_t{0});
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sizes[a] > sizes[b]; });
  std::vector<std::uint64_t> entries(m * n, 0);
  std::uint64_t start = 0;
  for (const std::size_t i : order) {
    const std::uint64_t end = start + m * sizes[i];
    for (std::size_t k = start / M; k <= (end - 1) / M; ++k) {
      const std::uint64_t lo = std::max<std::uint64_t>(start, k * M);
      const std::uint64_t hi = std::min<std::uint64_t>(end, (k + 1) * M);
      entries[k * n + i] = hi - lo;
    }
    start = end;
  }
  return entries;
}

struct OracleMerge {
  std::vector<std::size_t> a, b;  // a holds the smaller leaf id
  double cost = 0.0;
};

// Ward clustering that recomputes |A||B|/(|A|+|B|) |mu_A - mu_B|^2 for every
// pair of current clusters from the raw points at each step. Ties go to the
// smaller merged cluster, then to the smaller leaf-id pair.
inline std::vector<OracleMerge> NaiveWard(const std::vector<std::vector<double>>& pts) {
  using Leaves = std::vector<std::size_t>;
  std::vector<Leaves> clusters;
  for (std::size_t i = 0; i < pts.size(); ++i) clusters.push_back({i});
  auto centroid = [&](const Leaves& c) {
    std::vector<double> mu(pts[0].size(), 0.0);
    for (auto i : c) {
      for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += pts[i][j];
    }
    for (auto& x : mu) x /= static_cast<double>(c.size());
    return mu;
  };
  std::vector<OracleMerge> out;
  while (clusters.size() > 1) {
    std::size_t ba = 0, bb = 0;
    std::tuple<double, std::size_t, std::size_t, std::size_t> best;
    bool first = true;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const auto ma = centroid(clusters[a]), mb = centroid(clusters[b]);
        double dist2 = 0.0;
        for (std::size_t j = 0; j < ma.size(); ++j) {
          dist2 += (ma[j] - mb[j]) * (ma[j] - mb[j]);
        }
        const double na = static_cast<double>(clusters[a].size());
        const double nb = static_cast<double>(clusters[b].size());
        const auto key = std::make_tuple(
            na * nb / (na + nb) * dist2, clusters[a].size() + clusters[b].size(),
            std::min(clusters[a][0], clusters[b][0]),
            std::max(clusters[a][0], clusters[b][0]));
        if (first || key < best) {
          first = false;
          best = key;
          ba = a;
          bb = b;
        }
      }
    }
    OracleMerge merge{clusters[ba], clusters[bb], std::get<0>(best)};
    if (merge.b[0] < merge.a[0]) std::swap(merge.a, merge.b);
    out.push_back(merge);
    Leaves joined = clusters[ba];
    joined.insert(joined.end(), clusters[bb].begin(), clusters[bb].end());
    std::sort(joined.begin(), joined.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    clusters[ba] = joined;
  }
  return out;
}

inline std::vector<double> CentralDifferences(ModelParams params,
                                              const std::vector<Sample>& batch,
                                              double h = 1e-6) {
  std::vector<double> grad(params.theta.size());
  for (std::size_t p = 0; p < grad.size(); ++p) {
    const double saved = params.theta[p];
    params.theta[p] = saved + h;
    const double up = ForwardLossGrad(params, std::span<const Sample>(batch)).loss;
    params.theta[p] = saved - h;
    const double down = ForwardLossGrad(params, std::span<const Sample>(batch)).loss;
    params.theta[p] = saved;
    grad[p] = (up - down) / (2 * h);
  }
  return grad;
}

// |a - b| / max(|a|, |b|) in the Euclidean norm.
inline double RelativeError(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

}  // namespace clsamp::testing

#endif  // CLSAMP_TESTS_ORACLES_H_
