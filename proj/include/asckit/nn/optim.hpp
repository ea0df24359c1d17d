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

#include <cstdint>
#include <vector>

#include "asckit/nn/layers.hpp"

namespace asckit::nn {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 50;
  int epochs = 100;
  double l2_lambda = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless every value is positive (learning_rate may be
  /// zero) and batch_size is even.
  void validate() const;
};

template <typename T>
class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  explicit Adam(const TrainConfig& cfg)
      : Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon) {}

  /// Applies one bias-corrected update to every trainable parameter using its
  /// accumulated gradient.
  void step(const std::vector<ParamRef<T>>& params);

  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace asckit::nn
