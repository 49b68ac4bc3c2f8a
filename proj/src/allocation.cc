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

#include "clsamp/allocation.h"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "clsamp/error.h"

namespace clsamp {
namespace {

using u128 = unsigned __int128;

std::string Str(std::uint64_t v) { return std::to_string(v); }

double VarianceFromNumerator(u128 numerator, std::size_t m, std::uint64_t M) {
  const double dm = static_cast<double>(m);
  const double dM = static_cast<double>(M);
  return static_cast<double>(numerator) / (dm * dm) / (dM * dM);
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::uint64_t ParseCount(const std::string& field) {
  std::string trimmed = field;
  while (!trimmed.empty() && (trimmed.back() == '\r' || trimmed.back() == ' ')) {
    trimmed.pop_back();
  }
  std::size_t used = 0;
  std::uint64_t value = 0;
  try {
    if (trimmed.empty() || trimmed.front() == '-') throw std::invalid_argument("");
    value = std::stoull(trimmed, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kFormat, "not a non-negative integer: '" + field + "'");
  }
  if (used != trimmed.size()) {
    throw Error(ErrorCode::kFormat, "not a non-negative integer: '" + field + "'");
  }
  return value;
}

}  // namespace

AllocationMatrix::AllocationMatrix(std::vector<std::uint64_t> client_sizes,
                                   std::size_t num_distributions,
                                   std::vector<std::uint64_t> entries)
    : sizes_(std::move(client_sizes)),
      m_(num_distributions),
      total_(0),
      entries_(std::move(entries)) {
  const std::size_t n = sizes_.size();
  if (m_ == 0) {
    throw Error(ErrorCode::kInvalidAllocation, "m must be >= 1");
  }
  if (n == 0) {
    throw Error(ErrorCode::kInvalidAllocation, "no clients");
  }
  if (entries_.size() != m_ * n) {
    throw Error(ErrorCode::kInvalidAllocation,
                "expected " + Str(m_ * n) + " entries, got " +
                    Str(entries_.size()));
  }
  for (auto s : sizes_) {
    if (s == 0) throw Error(ErrorCode::kInvalidAllocation, "client size 0");
    total_ += s;
  }
  cumulative_.resize(entries_.size());
  for (std::size_t k = 0; k < m_; ++k) {
    std::uint64_t running = 0;
    for (std::size_t i = 0; i < n; ++i) {
      running += entries_[k * n + i];
      cumulative_[k * n + i] = running;
    }
    if (running != total_) {
      throw Error(ErrorCode::kInvalidAllocation,
                  "distribution " + Str(k) + " sums to " + Str(running) +
                      ", expected M = " + Str(total_));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t column = 0;
    for (std::size_t k = 0; k < m_; ++k) column += entries_[k * n + i];
    if (column != m_ * sizes_[i]) {
      throw Error(ErrorCode::kInvalidAllocation,
                  "client " + Str(i) + " allocated " + Str(column) +
                      " samples, expected m * n_i = " + Str(m_ * sizes_[i]));
    }
  }
}

std::size_t AllocationMatrix::ClientAt(std::size_t k, std::uint64_t u) const {
  const auto begin = cumulative_.begin() + k * sizes_.size();
  const auto end = begin + sizes_.size();
  return static_cast<std::size_t>(std::upper_bound(begin, end, u) - begin);
}

AllocationMatrix MdAllocation(std::span<const std::uint64_t> client_sizes,
                              std::size_t m) {
  std::vector<std::uint64_t> entries;
  entries.reserve(m * client_sizes.size());
  for (std::size_t k = 0; k < m; ++k) {
    entries.insert(entries.end(), client_sizes.begin(), client_sizes.end());
  }
  return AllocationMatrix({client_sizes.begin(), client_sizes.end()}, m,
                          std::move(entries));
}

std::size_t SampledSet::DistinctCount() const {
  auto sorted = members;
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(
      std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

std::vector<std::uint32_t> SampledSet::Counts(std::size_t num_clients) const {
  std::vector<std::uint32_t> counts(num_clients, 0);
  for (auto i : members) ++counts.at(i);
  return counts;
}

SamplerKind MakeMdSampler(std::span<const std::uint64_t> client_sizes,
                          std::size_t m) {
  return MultinomialSampler{MdAllocation(client_sizes, m)};
}

std::size_t NumClients(const SamplerKind& sampler) {
  if (const auto* u = std::get_if<UniformNoReplacement>(&sampler)) {
    return u->num_clients;
  }
  return AllocationOf(sampler)->num_clients();
}

std::size_t NumSampled(const SamplerKind& sampler) {
  if (const auto* u = std::get_if<UniformNoReplacement>(&sampler)) return u->m;
  return AllocationOf(sampler)->num_distributions();
}

const AllocationMatrix* AllocationOf(const SamplerKind& sampler) {
  if (const auto* md = std::get_if<MultinomialSampler>(&sampler)) {
    return &md->alloc;
  }
  if (const auto* cl = std::get_if<ClusteredSampler>(&sampler)) {
    return &cl->alloc;
  }
  return nullptr;
}

SampledSet Draw(const SamplerKind& sampler, const RngStream& stream) {
  SampledSet out;
  if (const auto* u = std::get_if<UniformNoReplacement>(&sampler)) {
    if (u->m > u->num_clients) {
      throw Error(ErrorCode::kInvalidArgument,
                  "cannot draw " + Str(u->m) + " distinct clients out of " +
                      Str(u->num_clients));
    }
    std::vector<std::size_t> order(u->num_clients);
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream rng = stream.Fork(0);
    for (std::size_t j = 0; j < u->m; ++j) {
      const std::size_t pick = j + rng.UniformBelow(u->num_clients - j);
      std::swap(order[j], order[pick]);
    }
    out.members.assign(order.begin(), order.begin() + u->m);
    return out;
  }
  const AllocationMatrix& alloc = *AllocationOf(sampler);
  out.members.reserve(alloc.num_distributions());
  for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
    RngStream rng = stream.Fork(k);
    out.members.push_back(alloc.ClientAt(k, rng.UniformBelow(alloc.total())));
  }
  return out;
}

double ExpectedWeight(const AllocationMatrix& alloc, std::size_t i) {
  std::uint64_t column = 0;
  for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
    column += alloc.at(k, i);
  }
  return static_cast<double>(column) /
         static_cast<double>(alloc.num_distributions()) /
         static_cast<double>(alloc.total());
}

double WeightVariance(const AllocationMatrix& alloc, std::size_t i) {
  const std::uint64_t M = alloc.total();
  u128 numerator = 0;
  for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
    const std::uint64_t r = alloc.at(k, i);
    numerator += static_cast<u128>(r) * (M - r);
  }
  return VarianceFromNumerator(numerator, alloc.num_distributions(), M);
}

double ProbSampled(const AllocationMatrix& alloc, std::size_t i) {
  const double dM = static_cast<double>(alloc.total());
  double miss = 1.0;
  for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
    miss *= static_cast<double>(alloc.total() - alloc.at(k, i)) / dM;
  }
  return 1.0 - miss;
}

double MdWeightVariance(const AllocationMatrix& alloc, std::size_t i) {
  const std::uint64_t M = alloc.total();
  const std::uint64_t n_i = alloc.client_size(i);
  const u128 numerator =
      static_cast<u128>(alloc.num_distributions()) * n_i * (M - n_i);
  return VarianceFromNumerator(numerator, alloc.num_distributions(), M);
}

double MdProbSampled(const AllocationMatrix& alloc, std::size_t i) {
  const double dM = static_cast<double>(alloc.total());
  const double stay_out =
      static_cast<double>(alloc.total() - alloc.client_size(i)) / dM;
  double miss = 1.0;
  for (std::size_t k = 0; k < alloc.num_distributions(); ++k) miss *= stay_out;
  return 1.0 - miss;
}

std::vector<DominanceRecord> VarianceDominanceReport(
    const AllocationMatrix& alloc) {
  std::vector<DominanceRecord> report(alloc.num_clients());
  for (std::size_t i = 0; i < alloc.num_clients(); ++i) {
    auto& rec = report[i];
    rec.var_md = MdWeightVariance(alloc, i);
    rec.var_cl = WeightVariance(alloc, i);
    rec.p_md = MdProbSampled(alloc, i);
    rec.p_cl = ProbSampled(alloc, i);
    rec.md_column = true;
    for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
      if (alloc.at(k, i) != alloc.client_size(i)) rec.md_column = false;
    }
  }
  return report;
}

bool DominanceHolds(std::span<const DominanceRecord> report) {
  for (const auto& rec : report) {
    if (rec.var_cl > rec.var_md + kDominanceTolerance) return false;
    if (rec.p_cl < rec.p_md - kDominanceTolerance) return false;
    if (rec.md_column && (rec.var_cl != rec.var_md || rec.p_cl != rec.p_md)) {
      return false;
    }
  }
  return true;
}

void WriteAllocationCsv(const AllocationMatrix& alloc, std::ostream& out) {
  const std::size_t n = alloc.num_clients();
  for (std::size_t i = 0; i < n; ++i) out << (i ? "," : "") << i;
  out << '\n';
  for (std::size_t k = 0; k < alloc.num_distributions(); ++k) {
    for (std::size_t i = 0; i < n; ++i) out << (i ? "," : "") << alloc.at(k, i);
    out << '\n';
  }
}

nlohmann::json AllocationSidecar(const AllocationMatrix& alloc) {
  return {{"m", alloc.num_distributions()},
          {"n", alloc.num_clients()},
          {"M", alloc.total()},
          {"client_sizes", alloc.client_sizes()}};
}

AllocationMatrix ReadAllocationCsv(std::istream& in,
                                   const nlohmann::json* sidecar) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kFormat, "empty allocation CSV");
  }
  const std::size_t n = SplitCsvLine(line).size();
  std::vector<std::uint64_t> entries;
  std::size_t m = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto fields = SplitCsvLine(line);
    if (fields.size() != n) {
      throw Error(ErrorCode::kFormat, "row " + Str(m) + " has " +
                                          Str(fields.size()) +
                                          " fields, header has " + Str(n));
    }
    for (const auto& f : fields) entries.push_back(ParseCount(f));
    ++m;
  }
  if (m == 0) throw Error(ErrorCode::kFormat, "allocation CSV has no rows");

  std::vector<std::uint64_t> sizes(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t column = 0;
    for (std::size_t k = 0; k < m; ++k) column += entries[k * n + i];
    if (column % m != 0) {
      throw Error(ErrorCode::kInvalidAllocation,
                  "client " + Str(i) + " column sum " + Str(column) +
                      " is not a multiple of m = " + Str(m));
    }
    sizes[i] = column / m;
  }
  if (sidecar != nullptr) {
    try {
      if (sidecar->at("m").get<std::size_t>() != m ||
          sidecar->at("n").get<std::size_t>() != n) {
        throw Error(ErrorCode::kInvalidAllocation,
                    "sidecar shape disagrees with CSV");
      }
      if (sidecar->contains("client_sizes") &&
          sidecar->at("client_sizes").get<std::vector<std::uint64_t>>() !=
              sizes) {
        throw Error(ErrorCode::kInvalidAllocation,
                    "column sums disagree with sidecar client sizes");
      }
      AllocationMatrix alloc(std::move(sizes), m, std::move(entries));
      if (sidecar->at("M").get<std::uint64_t>() != alloc.total()) {
        throw Error(ErrorCode::kInvalidAllocation, "sidecar M disagrees");
      }
      return alloc;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat, std::string("bad sidecar: ") + e.what());
    }
  }
  return AllocationMatrix(std::move(sizes), m, std::move(entries));
}

}  // namespace clsamp
