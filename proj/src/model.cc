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

#include "clsamp/model.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "clsamp/error.h"

namespace clsamp {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using ConstMat = Eigen::Map<const MatrixXd>;
using ConstVec = Eigen::Map<const VectorXd>;
using MutMat = Eigen::Map<MatrixXd>;
using MutVec = Eigen::Map<VectorXd>;

constexpr std::size_t kEvalChunk = 512;

void CheckParams(const ModelParams& params) {
  if (params.theta.size() != params.arch.ParameterCount()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "parameter vector has " + std::to_string(params.theta.size()) +
                    " entries, architecture needs " +
                    std::to_string(params.arch.ParameterCount()));
  }
}

template <typename SampleAt>
MatrixXd PackFeatures(const Architecture& arch, std::size_t count,
                      SampleAt&& sample_at) {
  MatrixXd x(static_cast<Index>(arch.input_dim), static_cast<Index>(count));
  for (std::size_t j = 0; j < count; ++j) {
    const Sample& s = sample_at(j);
    if (s.features.size() != arch.input_dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "sample has " + std::to_string(s.features.size()) +
                      " features, model expects " +
                      std::to_string(arch.input_dim));
    }
    if (s.label >= arch.num_classes) {
      throw Error(ErrorCode::kDimensionMismatch, "label outside model classes");
    }
    x.col(static_cast<Index>(j)) = ConstVec(s.features.data(), x.rows());
  }
  return x;
}

// Forward pass. Returns logits (C x B); for mlp1 also the hidden
// pre-activations and activations.
MatrixXd Logits(const ModelParams& params, const MatrixXd& x, MatrixXd* pre,
                MatrixXd* act) {
  const Architecture& a = params.arch;
  const double* p = params.theta.data();
  const auto d = static_cast<Index>(a.input_dim);
  const auto c = static_cast<Index>(a.num_classes);
  if (a.kind == ArchKind::kSoftmaxRegression) {
    ConstMat w(p, c, d);
    ConstVec b(p + c * d, c);
    MatrixXd z = w * x;
    z.colwise() += b;
    return z;
  }
  const auto h = static_cast<Index>(a.hidden);
  ConstMat w1(p, h, d);
  ConstVec b1(p + h * d, h);
  ConstMat w2(p + h * d + h, c, h);
  ConstVec b2(p + h * d + h + c * h, c);
  MatrixXd z1 = w1 * x;
  z1.colwise() += b1;
  MatrixXd a1 = z1.cwiseMax(0.0);
  MatrixXd z2 = w2 * a1;
  z2.colwise() += b2;
  if (pre != nullptr) *pre = std::move(z1);
  if (act != nullptr) *act = std::move(a1);
  return z2;
}

// Turns logits into probabilities in place and returns the summed
// cross-entropy of the given labels.
template <typename LabelAt>
double SoftmaxCrossEntropy(MatrixXd& logits, LabelAt&& label_at) {
  double total = 0.0;
  for (Index j = 0; j < logits.cols(); ++j) {
    auto col = logits.col(j);
    const double max = col.maxCoeff();
    col.array() -= max;
    const double log_norm = std::log(col.array().exp().sum());
    total += log_norm - col(static_cast<Index>(label_at(j)));
    col.array() = (col.array() - log_norm).exp();
  }
  return total;
}

template <typename SampleAt>
LossGrad LossGradImpl(const ModelParams& params, std::size_t count,
                      SampleAt&& sample_at) {
  CheckParams(params);
  if (count == 0) throw Error(ErrorCode::kInvalidArgument, "empty batch");
  const Architecture& a = params.arch;
  const MatrixXd x = PackFeatures(a, count, sample_at);
  MatrixXd pre, act;
  MatrixXd probs = Logits(params, x, &pre, &act);
  const double inv_b = 1.0 / static_cast<double>(count);

  LossGrad out;
  out.loss = SoftmaxCrossEntropy(
                 probs, [&](Index j) { return sample_at(std::size_t(j)).label; }) *
             inv_b;
  // dL/dlogits = (softmax - onehot) / B.
  for (Index j = 0; j < probs.cols(); ++j) {
    probs(static_cast<Index>(sample_at(std::size_t(j)).label), j) -= 1.0;
  }
  probs *= inv_b;

  out.grad.assign(params.theta.size(), 0.0);
  double* g = out.grad.data();
  const auto d = static_cast<Index>(a.input_dim);
  const auto c = static_cast<Index>(a.num_classes);
  if (a.kind == ArchKind::kSoftmaxRegression) {
    MutMat(g, c, d).noalias() = probs * x.transpose();
    MutVec(g + c * d, c) = probs.rowwise().sum();
    return out;
  }
  const auto h = static_cast<Index>(a.hidden);
  ConstMat w2(params.theta.data() + h * d + h, c, h);
  MutMat(g + h * d + h, c, h).noalias() = probs * act.transpose();
  MutVec(g + h * d + h + c * h, c) = probs.rowwise().sum();
  MatrixXd dz1 = w2.transpose() * probs;
  dz1.array() *= (pre.array() > 0.0).cast<double>();
  MutMat(g, h, d).noalias() = dz1 * x.transpose();
  MutVec(g + h * d, h) = dz1.rowwise().sum();
  return out;
}

}  // namespace

Architecture Architecture::SoftmaxRegression(std::size_t input_dim,
                                             std::size_t num_classes) {
  return {ArchKind::kSoftmaxRegression, input_dim, 0, num_classes};
}

Architecture Architecture::Mlp1(std::size_t input_dim, std::size_t hidden,
                                std::size_t num_classes) {
  return {ArchKind::kMlp1, input_dim, hidden, num_classes};
}

std::size_t Architecture::ParameterCount() const {
  if (kind == ArchKind::kSoftmaxRegression) {
    return num_classes * input_dim + num_classes;
  }
  return hidden * input_dim + hidden + num_classes * hidden + num_classes;
}

ArchKind ParseArchKind(std::string_view name) {
  if (name == "softmax") return ArchKind::kSoftmaxRegression;
  if (name == "mlp") return ArchKind::kMlp1;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown architecture '" + std::string(name) + "'");
}

ModelParams InitParams(const Architecture& arch, RngStream& rng) {
  if (arch.input_dim == 0 || arch.num_classes == 0 ||
      (arch.kind == ArchKind::kMlp1 && arch.hidden == 0)) {
    throw Error(ErrorCode::kInvalidArgument, "degenerate architecture");
  }
  ModelParams params{arch, std::vector<double>(arch.ParameterCount(), 0.0)};
  auto fill_uniform = [&](std::size_t begin, std::size_t count,
                          std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t j = 0; j < count; ++j) {
      params.theta[begin + j] = bound * (2.0 * rng.UniformUnit() - 1.0);
    }
  };
  const std::size_t d = arch.input_dim, c = arch.num_classes, h = arch.hidden;
  if (arch.kind == ArchKind::kSoftmaxRegression) {
    fill_uniform(0, c * d, d);
  } else {
    fill_uniform(0, h * d, d);
    fill_uniform(h * d + h, c * h, h);
  }
  return params;
}

LossGrad ForwardLossGrad(const ModelParams& params,
                         std::span<const Sample* const> batch) {
  return LossGradImpl(params, batch.size(),
                      [&](std::size_t j) -> const Sample& { return *batch[j]; });
}

LossGrad ForwardLossGrad(const ModelParams& params,
                         std::span<const Sample> batch) {
  return LossGradImpl(params, batch.size(),
                      [&](std::size_t j) -> const Sample& { return batch[j]; });
}

double MeanLoss(const ModelParams& params, std::span<const Sample> samples) {
  CheckParams(params);
  if (samples.empty()) throw Error(ErrorCode::kInvalidArgument, "no samples");
  double total = 0.0;
  for (std::size_t begin = 0; begin < samples.size(); begin += kEvalChunk) {
    const auto chunk =
        samples.subspan(begin, std::min(kEvalChunk, samples.size() - begin));
    const MatrixXd x = PackFeatures(
        params.arch, chunk.size(),
        [&](std::size_t j) -> const Sample& { return chunk[j]; });
    MatrixXd logits = Logits(params, x, nullptr, nullptr);
    total += SoftmaxCrossEntropy(
        logits, [&](Index j) { return chunk[std::size_t(j)].label; });
  }
  return total / static_cast<double>(samples.size());
}

std::size_t CountCorrect(const ModelParams& params,
                         std::span<const Sample> samples) {
  CheckParams(params);
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < samples.size(); begin += kEvalChunk) {
    const auto chunk =
        samples.subspan(begin, std::min(kEvalChunk, samples.size() - begin));
    const MatrixXd x = PackFeatures(
        params.arch, chunk.size(),
        [&](std::size_t j) -> const Sample& { return chunk[j]; });
    const MatrixXd logits = Logits(params, x, nullptr, nullptr);
    for (Index j = 0; j < logits.cols(); ++j) {
      Index best = 0;
      logits.col(j).maxCoeff(&best);
      if (static_cast<std::uint32_t>(best) == chunk[std::size_t(j)].label) {
        ++correct;
      }
    }
  }
  return correct;
}

}  // namespace clsamp
