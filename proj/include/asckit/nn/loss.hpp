// Copyright 2026 The asckit Authors
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

#pragma once

#include <vector>

#include "asckit/nn/layers.hpp"

namespace asckit::nn {

/// Clamp applied to predictions inside the KL logarithm.
inline constexpr double kPredictionFloor = 1e-8;

template <typename T>
struct LossValue {
  double value = 0.0;
  Tensor<T> grad;  // d loss / d y_pred
};

/// Sum over the batch of KL(y_true || y_pred) in nats, with 0 ln(0/q) = 0.
/// Both arguments are B x C with rows on the probability simplex.
template <typename T>
LossValue<T> kl_divergence(const Tensor<T>& y_true, const Tensor<T>& y_pred);

/// (lambda / 2) * sum of squared trainable parameters. When `accumulate` is set
/// lambda * theta is added to each parameter gradient.
template <typename T>
double l2_penalty(const std::vector<ParamRef<T>>& params, double lambda, bool accumulate);

/// KL divergence plus the L2 penalty over `params`.
template <typename T>
LossValue<T> kl_loss(const Tensor<T>& y_true, const Tensor<T>& y_pred,
                     const std::vector<ParamRef<T>>& params, double lambda, bool accumulate = true);

}  // namespace asckit::nn
