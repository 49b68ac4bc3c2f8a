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

#ifndef CLSAMP_MODEL_H_
#define CLSAMP_MODEL_H_

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "clsamp/dataset.h"
#include "clsamp/rng.h"

namespace clsamp {

enum class ArchKind { kSoftmaxRegression, kMlp1 };

struct Architecture {
  ArchKind kind = ArchKind::kMlp1;
  std::size_t input_dim = 0;
  std::size_t hidden = 50;
  std::size_t num_classes = 0;

  static Architecture SoftmaxRegression(std::size_t input_dim,
                                        std::size_t num_classes);
  static Architecture Mlp1(std::size_t input_dim, std::size_t hidden,
                           std::size_t num_classes);

  std::size_t ParameterCount() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

ArchKind ParseArchKind(std::string_view name);

// Flat parameter vector. Layout, each matrix column-major:
//   softmax: W (C x d), b (C)
//   mlp1:    W1 (h x d), b1 (h), W2 (C x h), b2 (C)
struct ModelParams {
  Architecture arch;
  std::vector<double> theta;
};

// Weights uniform in +-1/sqrt(fan_in), biases zero.
ModelParams InitParams(const Architecture& arch, RngStream& rng);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean cross-entropy over the batch and its exact gradient (ReLU hidden
// layer for mlp1).
LossGrad ForwardLossGrad(const ModelParams& params,
                         std::span<const Sample* const> batch);
LossGrad ForwardLossGrad(const ModelParams& params,
                         std::span<const Sample> batch);

// Mean cross-entropy without the gradient.
double MeanLoss(const ModelParams& params, std::span<const Sample> samples);

std::size_t CountCorrect(const ModelParams& params,
                         std::span<const Sample> samples);

}  // namespace clsamp

#endif  // CLSAMP_MODEL_H_
