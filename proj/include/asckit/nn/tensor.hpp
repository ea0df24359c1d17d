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

#include <cstddef>
#include <string>
#include <vector>

#include "asckit/error.hpp"

namespace asckit::nn {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major n-d array. Parameters carry a same-sized gradient buffer;
/// activations leave `grad` empty and pass gradients explicitly.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), values(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != numel(shape)) throw ShapeError("value count does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return values.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  T* data() { return values.data(); }
  const T* data() const { return values.data(); }

  /// Product of all dimensions after the first.
  std::size_t row_size() const { return shape.empty() ? 0 : size() / shape.front(); }

  void enable_grad() {
    requires_grad = true;
    grad.assign(values.size(), T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Per-sample shape of a batched tensor (drops the batch dimension).
template <typename T>
Shape sample_shape(const Tensor<T>& t) {
  return Shape(t.shape.begin() + 1, t.shape.end());
}

/// Prepends a batch dimension.
inline Shape batched(std::size_t batch, const Shape& sample) {
  Shape s{batch};
  s.insert(s.end(), sample.begin(), sample.end());
  return s;
}

}  // namespace asckit::nn
