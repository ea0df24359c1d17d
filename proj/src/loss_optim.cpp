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

#include "asckit/nn/loss.hpp"

#include <cmath>
#include <type_traits>

#include "asckit/nn/optim.hpp"

namespace asckit::nn {
namespace {

template <typename T>
void check_simplex(const Tensor<T>& t, const char* what) {
  const double tol = std::is_same_v<T, float> ? 1e-4 : 1e-6;
  const std::size_t c = t.shape.back();
  for (std::size_t r = 0; r < t.size() / c; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = t.values[r * c + j];
      if (!(v >= -tol)) throw LossError(std::string(what) + " has a negative or NaN entry in row " + std::to_string(r));
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw LossError(std::string(what) + " row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
  }
}

}  // namespace

template <typename T>
LossValue<T> kl_divergence(const Tensor<T>& y_true, const Tensor<T>& y_pred) {
  if (y_true.shape != y_pred.shape || y_true.rank() != 2) {
    throw ShapeError("kl loss expects equal B x C shapes, got " + shape_str(y_true.shape) + " and " +
                     shape_str(y_pred.shape));
  }
  check_simplex(y_true, "y_true");
  check_simplex(y_pred, "y_pred");
  LossValue<T> out;
  out.grad = Tensor<T>(y_pred.shape);
  double total = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double y = y_true.values[i];
    if (y <= 0.0) continue;
    const double p = double(y_pred.values[i]);
    const double q = std::max(p, kPredictionFloor);
    total += y * std::log(y / q);
    out.grad.values[i] = p > kPredictionFloor ? T(-y / q) : T(0);
  }
  out.value = total;
  return out;
}

template <typename T>
double l2_penalty(const std::vector<ParamRef<T>>& params, double lambda, bool accumulate) {
  double sum = 0.0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    auto& t = *p.tensor;
    for (std::size_t i = 0; i < t.size(); ++i) {
      sum += double(t.values[i]) * double(t.values[i]);
      if (accumulate) t.grad[i] += T(lambda * t.values[i]);
    }
  }
  return 0.5 * lambda * sum;
}

template <typename T>
LossValue<T> kl_loss(const Tensor<T>& y_true, const Tensor<T>& y_pred,
                     const std::vector<ParamRef<T>>& params, double lambda, bool accumulate) {
  LossValue<T> out = kl_divergence(y_true, y_pred);
  out.value += l2_penalty(params, lambda, accumulate);
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("batch_size must be even and >= 2 (mixup pairs), got " + std::to_string(batch_size));
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(l2_lambda >= 0.0)) throw ConfigError("l2_lambda must be non-negative");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
}

template <typename T>
void Adam<T>::step(const std::vector<ParamRef<T>>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor->size(), 0.0);
      v_.emplace_back(p.tensor->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ShapeError("adam parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].trainable) continue;
    auto& t = *params[k].tensor;
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.size() != t.size()) throw ShapeError("adam state does not match " + params[k].name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      t.values[i] = T(double(t.values[i]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

template LossValue<float> kl_divergence(const Tensor<float>&, const Tensor<float>&);
template LossValue<double> kl_divergence(const Tensor<double>&, const Tensor<double>&);
template double l2_penalty(const std::vector<ParamRef<float>>&, double, bool);
template double l2_penalty(const std::vector<ParamRef<double>>&, double, bool);
template LossValue<float> kl_loss(const Tensor<float>&, const Tensor<float>&,
                                  const std::vector<ParamRef<float>>&, double, bool);
template LossValue<double> kl_loss(const Tensor<double>&, const Tensor<double>&,
                                   const std::vector<ParamRef<double>>&, double, bool);
template class Adam<float>;
template class Adam<double>;

}  // namespace asckit::nn
