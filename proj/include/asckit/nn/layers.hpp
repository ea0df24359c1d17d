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
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "asckit/nn/tensor.hpp"

namespace asckit::nn {

enum class Mode { kTrain, kEval };

/// A named view on a tensor owned by a layer. Running statistics are
/// registered as non-trainable so they are checkpointed but never optimized.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
  bool trainable = true;
};

struct TraceEntry {
  std::string block;
  Shape shape;
};

/// Reverse-mode building block. `forward` caches whatever `backward` needs;
/// `backward` accumulates parameter gradients and returns the input gradient.
/// Shapes passed to `output_shape` exclude the batch dimension.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor<T> forward(Tensor<T> x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual void collect(const std::string& /*prefix*/, std::vector<ParamRef<T>>& /*out*/) {}
  virtual void initialize(std::mt19937_64& /*rng*/) {}
  /// Resets every stochastic layer below this one to a seed derived from `seed`.
  virtual void reseed(std::uint64_t /*seed*/) {}
  virtual void trace(const Shape& /*in*/, std::vector<TraceEntry>& /*out*/) const {}
  /// Called after running statistics were restored from a checkpoint.
  virtual void mark_stats_loaded() {}
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  /// Stride-1 cross-correlation with TensorFlow-style "same" zero padding.
  Conv2d(int kernel_h, int kernel_w, int in_channels, int out_channels);

  std::string kind() const override { return "conv2d"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void initialize(std::mt19937_64& rng) override;

  Tensor<T>& kernel() { return kernel_; }
  Tensor<T>& bias() { return bias_; }

 private:
  void im2col(const T* image, std::size_t h, std::size_t w, T* col) const;
  void col2im(const T* col, std::size_t h, std::size_t w, T* image) const;

  int kh_, kw_, cin_, cout_;
  Tensor<T> kernel_;  // kh x kw x cin x cout
  Tensor<T> bias_;    // cout
  Tensor<T> input_;
};

template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  /// Normalizes the last (channel) dimension over every other dimension.
  explicit BatchNorm(int channels);

  std::string kind() const override { return "batchnorm"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;

  Tensor<T>& scale() { return scale_; }
  Tensor<T>& shift() { return shift_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }
  bool has_batch_stats() const { return trained_; }
  void mark_stats_loaded() override { trained_ = true; }

 private:
  int channels_;
  Tensor<T> scale_, shift_, running_mean_, running_var_;
  Tensor<T> normalized_;
  std::vector<T> inv_std_;
  bool trained_ = false;
  bool warned_ = false;
  bool last_train_ = false;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> output_;
};

template <typename T>
class AvgPool2d final : public Layer<T> {
 public:
  AvgPool2d(int pool_h, int pool_w);

  std::string kind() const override { return "avgpool"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  int ph_, pw_;
  Shape in_shape_;
};

/// B x H x W x C -> B x C.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  std::string kind() const override { return "gap"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape in_shape_;
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) in training, identity
/// in evaluation.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  explicit Dropout(double rate, std::uint64_t seed = 0);

  std::string kind() const override { return "dropout"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void reseed(std::uint64_t seed) override { rng_.seed(seed); }

  double rate() const { return rate_; }

 private:
  double rate_;
  std::mt19937_64 rng_;
  std::vector<T> mask_;
  bool last_train_ = false;
};

/// Fully connected layer over the flattened per-sample features.
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(int in_features, int units);

  std::string kind() const override { return "dense"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void initialize(std::mt19937_64& rng) override;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  int in_, units_;
  Tensor<T> weight_;  // in x units
  Tensor<T> bias_;
  Tensor<T> input_;
};

/// Softmax over the last dimension, stabilized by max subtraction.
template <typename T>
class Softmax final : public Layer<T> {
 public:
  std::string kind() const override { return "softmax"; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> output_;
};

/// Bidirectional GRU over B x T x D, emitting B x T x 2H (forward direction
/// first), followed by output dropout.
///   z = sigmoid(x W_z + h U_z + b_z)
///   r = sigmoid(x W_r + h U_r + b_r)
///   c = tanh(x W_h + (r * h) U_h + b_h)
///   h' = (1 - z) * h + z * c
template <typename T>
class BiGru final : public Layer<T> {
 public:
  BiGru(int input_size, int hidden, double dropout);

  std::string kind() const override { return "bigru"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void initialize(std::mt19937_64& rng) override;
  void reseed(std::uint64_t seed) override { dropout_.reseed(seed); }

  struct Direction {
    Tensor<T> w_z, w_r, w_h;  // D x H
    Tensor<T> u_z, u_r, u_h;  // H x H
    Tensor<T> b_z, b_r, b_h;  // H
    // Per-step caches, (B*T) x H in processing order.
    std::vector<T> z, r, c, h_prev;
  };

  Direction& direction(int d) { return dirs_[d]; }

 private:
  void run_direction(Direction& dir, bool reverse, const Tensor<T>& x, Tensor<T>& out, int offset);
  void back_direction(Direction& dir, bool reverse, const Tensor<T>& grad, Tensor<T>& grad_x,
                      int offset);

  int input_size_, hidden_;
  Direction dirs_[2];
  Dropout<T> dropout_;
  Tensor<T> input_;
};

/// B x T x D -> B x T, mean over the feature dimension.
template <typename T>
class FeatureMean final : public Layer<T> {
 public:
  std::string kind() const override { return "feature_mean"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape in_shape_;
};

template <typename T>
class Reshape final : public Layer<T> {
 public:
  explicit Reshape(Shape target) : target_(std::move(target)) {}

  std::string kind() const override { return "reshape"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Shape target_;
  Shape in_shape_;
};

/// Ordered container. When `traced` is set its output shape is reported as
/// one row of the architecture trace.
template <typename T>
class Sequential final : public Layer<T> {
 public:
  explicit Sequential(std::string name = {}, bool traced = false)
      : name_(std::move(name)), traced_(traced) {}

  Sequential& add(std::string name, LayerPtr<T> layer);
  template <typename L, typename... Args>
  L& emplace(std::string name, Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(name), std::move(layer));
    return ref;
  }

  std::string kind() const override { return "sequential"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void initialize(std::mt19937_64& rng) override;
  void reseed(std::uint64_t seed) override;
  void mark_stats_loaded() override;
  void trace(const Shape& in, std::vector<TraceEntry>& out) const override;

  const std::string& name() const { return name_; }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i).second; }

 private:
  std::string name_;
  bool traced_;
  std::vector<std::pair<std::string, LayerPtr<T>>> layers_;
};

/// Feeds the same input to every branch and concatenates their flat outputs.
template <typename T>
class ParallelConcat final : public Layer<T> {
 public:
  explicit ParallelConcat(std::string name = {}, bool traced = false)
      : name_(std::move(name)), traced_(traced) {}

  Sequential<T>& add_branch(std::unique_ptr<Sequential<T>> branch);

  std::string kind() const override { return "concat"; }
  Shape output_shape(const Shape& in) const override;
  Tensor<T> forward(Tensor<T> x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) override;
  void initialize(std::mt19937_64& rng) override;
  void reseed(std::uint64_t seed) override;
  void mark_stats_loaded() override;
  void trace(const Shape& in, std::vector<TraceEntry>& out) const override;

  Sequential<T>& branch(std::size_t i) { return *branches_.at(i); }

 private:
  std::string name_;
  bool traced_;
  std::vector<std::unique_ptr<Sequential<T>>> branches_;
  std::vector<std::size_t> widths_;
};

}  // namespace asckit::nn
