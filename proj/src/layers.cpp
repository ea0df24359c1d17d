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

#include "asckit/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

namespace asckit::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Column sums in a fixed row order. Eigen's vectorized reductions peel on
// alignment, which makes results depend on heap addresses.
template <typename M, typename T>
void add_column_sums(const M& m, T* out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[c] += m(r, c);
}

template <typename T>
MapMat<T> as_mat(Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return MapMat<T>(t.data(), Eigen::Index(rows), Eigen::Index(cols));
}

template <typename T>
ConstMapMat<T> as_mat(const Tensor<T>& t, std::size_t rows, std::size_t cols) {
  return ConstMapMat<T>(t.data(), Eigen::Index(rows), Eigen::Index(cols));
}

template <typename T>
Tensor<T> make_param(Shape shape) {
  Tensor<T> t(std::move(shape));
  t.enable_grad();
  return t;
}

template <typename T>
void fill_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values) v = T(dist(rng));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

void require_rank(const Shape& s, std::size_t rank, const char* layer) {
  if (s.size() != rank) {
    throw ShapeError(std::string(layer) + " expects rank " + std::to_string(rank) +
                     " input, got " + shape_str(s));
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int kernel_h, int kernel_w, int in_channels, int out_channels)
    : kh_(kernel_h), kw_(kernel_w), cin_(in_channels), cout_(out_channels) {
  if (kh_ < 1 || kw_ < 1 || cin_ < 1 || cout_ < 1) throw ConfigError("bad conv2d geometry");
  kernel_ = make_param<T>({std::size_t(kh_), std::size_t(kw_), std::size_t(cin_), std::size_t(cout_)});
  bias_ = make_param<T>({std::size_t(cout_)});
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& in) const {
  require_rank(in, 3, "conv2d");
  if (in[2] != std::size_t(cin_)) {
    throw ShapeError("conv2d expects " + std::to_string(cin_) + " channels, got " + shape_str(in));
  }
  return {in[0], in[1], std::size_t(cout_)};
}

template <typename T>
void Conv2d<T>::im2col(const T* image, std::size_t h, std::size_t w, T* col) const {
  const std::ptrdiff_t pt = (kh_ - 1) / 2, pl = (kw_ - 1) / 2;
  const std::size_t k = std::size_t(kh_) * kw_ * cin_;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      T* row = col + (y * w + x) * k;
      for (int i = 0; i < kh_; ++i) {
        const std::ptrdiff_t yy = std::ptrdiff_t(y) + i - pt;
        for (int j = 0; j < kw_; ++j) {
          const std::ptrdiff_t xx = std::ptrdiff_t(x) + j - pl;
          T* dst = row + (std::size_t(i) * kw_ + j) * cin_;
          if (yy < 0 || yy >= std::ptrdiff_t(h) || xx < 0 || xx >= std::ptrdiff_t(w)) {
            std::fill(dst, dst + cin_, T(0));
          } else {
            std::memcpy(dst, image + (std::size_t(yy) * w + std::size_t(xx)) * cin_, sizeof(T) * cin_);
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* col, std::size_t h, std::size_t w, T* image) const {
  const std::ptrdiff_t pt = (kh_ - 1) / 2, pl = (kw_ - 1) / 2;
  const std::size_t k = std::size_t(kh_) * kw_ * cin_;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const T* row = col + (y * w + x) * k;
      for (int i = 0; i < kh_; ++i) {
        const std::ptrdiff_t yy = std::ptrdiff_t(y) + i - pt;
        if (yy < 0 || yy >= std::ptrdiff_t(h)) continue;
        for (int j = 0; j < kw_; ++j) {
          const std::ptrdiff_t xx = std::ptrdiff_t(x) + j - pl;
          if (xx < 0 || xx >= std::ptrdiff_t(w)) continue;
          const T* src = row + (std::size_t(i) * kw_ + j) * cin_;
          T* dst = image + (std::size_t(yy) * w + std::size_t(xx)) * cin_;
          for (int c = 0; c < cin_; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(Tensor<T> x, Mode) {
  require_rank(x.shape, 4, "conv2d");
  const Shape out_sample = output_shape(sample_shape(x));
  const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t k = std::size_t(kh_) * kw_ * cin_;
  Tensor<T> out(batched(batch, out_sample));
  std::vector<T> col(h * w * k);
  auto kmat = as_mat(kernel_, k, cout_);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(bias_.data(), cout_);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data() + b * h * w * cin_, h, w, col.data());
    ConstMapMat<T> cmat(col.data(), Eigen::Index(h * w), Eigen::Index(k));
    MapMat<T> omat(out.data() + b * h * w * cout_, Eigen::Index(h * w), cout_);
    omat.noalias() = cmat * kmat;
    omat.rowwise() += bias;
  }
  input_ = std::move(x);
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t batch = input_.dim(0), h = input_.dim(1), w = input_.dim(2);
  if (grad_out.shape != batched(batch, {h, w, std::size_t(cout_)})) {
    throw ShapeError("conv2d backward got gradient " + shape_str(grad_out.shape));
  }
  const std::size_t k = std::size_t(kh_) * kw_ * cin_;
  Tensor<T> grad_in(input_.shape);
  std::vector<T> col(h * w * k), dcol(h * w * k);
  auto kmat = as_mat(kernel_, k, cout_);
  MapMat<T> dk(kernel_.grad.data(), Eigen::Index(k), cout_);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(input_.data() + b * h * w * cin_, h, w, col.data());
    ConstMapMat<T> cmat(col.data(), Eigen::Index(h * w), Eigen::Index(k));
    ConstMapMat<T> gmat(grad_out.data() + b * h * w * cout_, Eigen::Index(h * w), cout_);
    dk.noalias() += cmat.transpose() * gmat;
    add_column_sums(gmat, bias_.grad.data());
    MapMat<T> dcmat(dcol.data(), Eigen::Index(h * w), Eigen::Index(k));
    dcmat.noalias() = gmat * kmat.transpose();
    col2im(dcol.data(), h, w, grad_in.data() + b * h * w * cin_);
  }
  return grad_in;
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({join(prefix, "kernel"), &kernel_, true});
  out.push_back({join(prefix, "bias"), &bias_, true});
}

template <typename T>
void Conv2d<T>::initialize(std::mt19937_64& rng) {
  fill_normal(kernel_, std::sqrt(2.0 / (kh_ * kw_ * cin_)), rng);
  std::fill(bias_.values.begin(), bias_.values.end(), T(0));
}

// ------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(int channels) : channels_(channels) {
  if (channels < 1) throw ConfigError("batchnorm needs at least one channel");
  const std::size_t c = std::size_t(channels);
  scale_ = make_param<T>({c});
  std::fill(scale_.values.begin(), scale_.values.end(), T(1));
  shift_ = make_param<T>({c});
  running_mean_ = Tensor<T>({c}, T(0));
  running_var_ = Tensor<T>({c}, T(1));
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(Tensor<T> x, Mode mode) {
  if (x.rank() < 2 || x.shape.back() != std::size_t(channels_)) {
    throw ShapeError("batchnorm expects channel-last input with " + std::to_string(channels_) +
                     " channels, got " + shape_str(x.shape));
  }
  const std::size_t c = std::size_t(channels_);
  const std::size_t m = x.size() / c;
  inv_std_.assign(c, T(0));
  normalized_ = Tensor<T>(x.shape);
  Tensor<T> out(x.shape);

  std::vector<T> mean(c), var(c);
  if (mode == Mode::kTrain) {
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const T* row = x.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) sum[j] += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) mean[j] = T(sum[j] / double(m));
    for (std::size_t i = 0; i < m; ++i) {
      const T* row = x.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) {
        const double d = double(row[j]) - double(mean[j]);
        sq[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < c; ++j) {
      var[j] = T(sq[j] / double(m));
      running_mean_.values[j] = T(kMomentum * running_mean_.values[j] + (1.0 - kMomentum) * mean[j]);
      running_var_.values[j] = T(kMomentum * running_var_.values[j] + (1.0 - kMomentum) * var[j]);
    }
    trained_ = true;
  } else {
    if (!trained_ && !warned_) {
      spdlog::warn("batchnorm evaluated before any training step; using initial statistics");
      warned_ = true;
    }
    mean = running_mean_.values;
    var = running_var_.values;
  }
  for (std::size_t j = 0; j < c; ++j) inv_std_[j] = T(1.0 / std::sqrt(double(var[j]) + kEpsilon));
  for (std::size_t i = 0; i < m; ++i) {
    const T* src = x.data() + i * c;
    T* nrm = normalized_.data() + i * c;
    T* dst = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      nrm[j] = (src[j] - mean[j]) * inv_std_[j];
      dst[j] = scale_.values[j] * nrm[j] + shift_.values[j];
    }
  }
  last_train_ = mode == Mode::kTrain;
  return out;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape != normalized_.shape) throw ShapeError("batchnorm backward shape mismatch");
  const std::size_t c = std::size_t(channels_);
  const std::size_t m = grad_out.size() / c;
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const T* dy = grad_out.data() + i * c;
    const T* xh = normalized_.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      sum_dy[j] += dy[j];
      sum_dy_xhat[j] += double(dy[j]) * xh[j];
    }
  }
  for (std::size_t j = 0; j < c; ++j) {
    scale_.grad[j] += T(sum_dy_xhat[j]);
    shift_.grad[j] += T(sum_dy[j]);
  }
  Tensor<T> grad_in(grad_out.shape);
  for (std::size_t i = 0; i < m; ++i) {
    const T* dy = grad_out.data() + i * c;
    const T* xh = normalized_.data() + i * c;
    T* dx = grad_in.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      const double g = double(scale_.values[j]) * inv_std_[j];
      if (last_train_) {
        dx[j] = T(g * (double(dy[j]) - sum_dy[j] / double(m) - xh[j] * sum_dy_xhat[j] / double(m)));
      } else {
        dx[j] = T(g * dy[j]);
      }
    }
  }
  return grad_in;
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({join(prefix, "scale"), &scale_, true});
  out.push_back({join(prefix, "shift"), &shift_, true});
  out.push_back({join(prefix, "running_mean"), &running_mean_, false});
  out.push_back({join(prefix, "running_var"), &running_var_, false});
}

// ------------------------------------------------------------------ ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(Tensor<T> x, Mode) {
  for (auto& v : x.values) v = v > T(0) ? v : T(0);
  output_ = x;
  return x;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape != output_.shape) throw ShapeError("relu backward shape mismatch");
  Tensor<T> grad_in(grad_out.shape);
  for (std::size_t i = 0; i < grad_in.size(); ++i) {
    grad_in.values[i] = output_.values[i] > T(0) ? grad_out.values[i] : T(0);
  }
  return grad_in;
}

// ------------------------------------------------------------- AvgPool2d

template <typename T>
AvgPool2d<T>::AvgPool2d(int pool_h, int pool_w) : ph_(pool_h), pw_(pool_w) {
  if (ph_ < 1 || pw_ < 1) throw ConfigError("pool size must be positive");
}

template <typename T>
Shape AvgPool2d<T>::output_shape(const Shape& in) const {
  require_rank(in, 3, "avgpool");
  if (in[0] % std::size_t(ph_) != 0 || in[1] % std::size_t(pw_) != 0) {
    throw ShapeError("avgpool " + std::to_string(ph_) + "x" + std::to_string(pw_) +
                     " does not divide " + shape_str(in));
  }
  return {in[0] / ph_, in[1] / pw_, in[2]};
}

template <typename T>
Tensor<T> AvgPool2d<T>::forward(Tensor<T> x, Mode) {
  require_rank(x.shape, 4, "avgpool");
  const Shape os = output_shape(sample_shape(x));
  const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t oh = os[0], ow = os[1];
  Tensor<T> out(batched(batch, os));
  const T inv = T(1.0 / (ph_ * pw_));
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = x.data() + b * h * w * c;
    T* dst = out.data() + b * oh * ow * c;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const T* s = src + (y * w + xx) * c;
        T* d = dst + ((y / ph_) * ow + xx / pw_) * c;
        for (std::size_t j = 0; j < c; ++j) d[j] += s[j];
      }
    }
    for (std::size_t i = 0; i < oh * ow * c; ++i) dst[i] *= inv;
  }
  in_shape_ = x.shape;
  return out;
}

template <typename T>
Tensor<T> AvgPool2d<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t batch = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
  const std::size_t oh = h / ph_, ow = w / pw_;
  if (grad_out.shape != Shape{batch, oh, ow, c}) throw ShapeError("avgpool backward shape mismatch");
  Tensor<T> grad_in(in_shape_);
  const T inv = T(1.0 / (ph_ * pw_));
  for (std::size_t b = 0; b < batch; ++b) {
    const T* src = grad_out.data() + b * oh * ow * c;
    T* dst = grad_in.data() + b * h * w * c;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const T* s = src + ((y / ph_) * ow + xx / pw_) * c;
        T* d = dst + (y * w + xx) * c;
        for (std::size_t j = 0; j < c; ++j) d[j] = s[j] * inv;
      }
    }
  }
  return grad_in;
}

// --------------------------------------------------------- GlobalAvgPool

template <typename T>
Shape GlobalAvgPool<T>::output_shape(const Shape& in) const {
  require_rank(in, 3, "gap");
  return {in[2]};
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(Tensor<T> x, Mode) {
  require_rank(x.shape, 4, "gap");
  const std::size_t batch = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> out({batch, c});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> acc(c, 0.0);
    const T* src = x.data() + b * hw * c;
    for (std::size_t i = 0; i < hw; ++i) {
      for (std::size_t j = 0; j < c; ++j) acc[j] += src[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out.values[b * c + j] = T(acc[j] / double(hw));
  }
  in_shape_ = x.shape;
  return out;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t batch = in_shape_[0], hw = in_shape_[1] * in_shape_[2], c = in_shape_[3];
  if (grad_out.shape != Shape{batch, c}) throw ShapeError("gap backward shape mismatch");
  Tensor<T> grad_in(in_shape_);
  const T inv = T(1.0 / double(hw));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        grad_in.values[(b * hw + i) * c + j] = grad_out.values[b * c + j] * inv;
      }
    }
  }
  return grad_in;
}

// --------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(Tensor<T> x, Mode mode) {
  last_train_ = mode == Mode::kTrain && rate_ > 0.0;
  if (!last_train_) return x;
  const T keep_scale = T(1.0 / (1.0 - rate_));
  mask_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double u = double(rng_() >> 11) * 0x1.0p-53;
    mask_[i] = u >= rate_ ? keep_scale : T(0);
    x.values[i] *= mask_[i];
  }
  return x;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& grad_out) {
  if (!last_train_) return grad_out;
  if (grad_out.size() != mask_.size()) throw ShapeError("dropout backward shape mismatch");
  Tensor<T> grad_in = grad_out;
  for (std::size_t i = 0; i < mask_.size(); ++i) grad_in.values[i] *= mask_[i];
  return grad_in;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(int in_features, int units) : in_(in_features), units_(units) {
  if (in_ < 1 || units_ < 1) throw ConfigError("dense layer needs positive sizes");
  weight_ = make_param<T>({std::size_t(in_), std::size_t(units_)});
  bias_ = make_param<T>({std::size_t(units_)});
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& in) const {
  if (numel(in) != std::size_t(in_)) {
    throw ShapeError("dense expects " + std::to_string(in_) + " features, got " + shape_str(in));
  }
  return {std::size_t(units_)};
}

template <typename T>
Tensor<T> Dense<T>::forward(Tensor<T> x, Mode) {
  output_shape(sample_shape(x));
  const std::size_t batch = x.dim(0);
  Tensor<T> out({batch, std::size_t(units_)});
  auto o = as_mat(out, batch, units_);
  o.noalias() = as_mat(std::as_const(x), batch, in_) * as_mat(std::as_const(weight_), in_, units_);
  o.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.data(), units_);
  input_ = std::move(x);
  return out;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t batch = input_.dim(0);
  if (grad_out.shape != Shape{batch, std::size_t(units_)}) throw ShapeError("dense backward shape mismatch");
  auto g = as_mat(grad_out, batch, units_);
  MapMat<T>(weight_.grad.data(), in_, units_).noalias() +=
      as_mat(std::as_const(input_), batch, in_).transpose() * g;
  add_column_sums(g, bias_.grad.data());
  Tensor<T> grad_in(input_.shape);
  as_mat(grad_in, batch, in_).noalias() = g * as_mat(std::as_const(weight_), in_, units_).transpose();
  return grad_in;
}

template <typename T>
void Dense<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  out.push_back({join(prefix, "weight"), &weight_, true});
  out.push_back({join(prefix, "bias"), &bias_, true});
}

template <typename T>
void Dense<T>::initialize(std::mt19937_64& rng) {
  fill_normal(weight_, std::sqrt(2.0 / in_), rng);
  std::fill(bias_.values.begin(), bias_.values.end(), T(0));
}

// --------------------------------------------------------------- Softmax

template <typename T>
Tensor<T> Softmax<T>::forward(Tensor<T> x, Mode) {
  if (x.rank() < 1 || x.size() == 0) throw ShapeError("softmax of an empty tensor");
  const std::size_t c = x.shape.back();
  const std::size_t rows = x.size() / c;
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = x.data() + r * c;
    const T mx = *std::max_element(row, row + c);
    T sum = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
  }
  output_ = x;
  return x;
}

template <typename T>
Tensor<T> Softmax<T>::backward(const Tensor<T>& grad_out) {
  if (grad_out.shape != output_.shape) throw ShapeError("softmax backward shape mismatch");
  const std::size_t c = output_.shape.back();
  const std::size_t rows = output_.size() / c;
  Tensor<T> grad_in(grad_out.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* y = output_.data() + r * c;
    const T* g = grad_out.data() + r * c;
    T dot = T(0);
    for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
    for (std::size_t j = 0; j < c; ++j) grad_in.values[r * c + j] = y[j] * (g[j] - dot);
  }
  return grad_in;
}

// ----------------------------------------------------------------- BiGru

template <typename T>
BiGru<T>::BiGru(int input_size, int hidden, double dropout)
    : input_size_(input_size), hidden_(hidden), dropout_(dropout) {
  if (input_size < 1 || hidden < 1) throw ConfigError("bigru needs positive sizes");
  const std::size_t d = std::size_t(input_size), h = std::size_t(hidden);
  for (auto& dir : dirs_) {
    dir.w_z = make_param<T>({d, h});
    dir.w_r = make_param<T>({d, h});
    dir.w_h = make_param<T>({d, h});
    dir.u_z = make_param<T>({h, h});
    dir.u_r = make_param<T>({h, h});
    dir.u_h = make_param<T>({h, h});
    dir.b_z = make_param<T>({h});
    dir.b_r = make_param<T>({h});
    dir.b_h = make_param<T>({h});
  }
}

template <typename T>
Shape BiGru<T>::output_shape(const Shape& in) const {
  require_rank(in, 2, "bigru");
  if (in[1] != std::size_t(input_size_) || in[0] < 1) {
    throw ShapeError("bigru expects T x " + std::to_string(input_size_) + ", got " + shape_str(in));
  }
  return {in[0], 2 * std::size_t(hidden_)};
}

template <typename T>
void BiGru<T>::run_direction(Direction& dir, bool reverse, const Tensor<T>& x, Tensor<T>& out,
                             int offset) {
  const std::size_t batch = x.dim(0), steps = x.dim(1), d = x.dim(2), h = std::size_t(hidden_);
  const std::size_t rows = batch * steps;
  const Eigen::Index hi = Eigen::Index(h);
  auto xm = as_mat(x, rows, d);
  using RowVec = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
  RowMat<T> xz = xm * as_mat(std::as_const(dir.w_z), d, h);
  RowMat<T> xr = xm * as_mat(std::as_const(dir.w_r), d, h);
  RowMat<T> xh = xm * as_mat(std::as_const(dir.w_h), d, h);
  xz.rowwise() += RowVec(dir.b_z.data(), hi);
  xr.rowwise() += RowVec(dir.b_r.data(), hi);
  xh.rowwise() += RowVec(dir.b_h.data(), hi);

  dir.z.assign(rows * h, T(0));
  dir.r.assign(rows * h, T(0));
  dir.c.assign(rows * h, T(0));
  dir.h_prev.assign(rows * h, T(0));

  auto uz = as_mat(std::as_const(dir.u_z), h, h);
  auto ur = as_mat(std::as_const(dir.u_r), h, h);
  auto uh = as_mat(std::as_const(dir.u_h), h, h);
  RowMat<T> state = RowMat<T>::Zero(Eigen::Index(batch), hi);
  RowMat<T> hz(Eigen::Index(batch), hi), hr(Eigen::Index(batch), hi), gated(Eigen::Index(batch), hi),
      hc(Eigen::Index(batch), hi);
  const std::size_t out_width = 2 * h;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    hz.noalias() = state * uz;
    hr.noalias() = state * ur;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * steps + t;
      for (std::size_t j = 0; j < h; ++j) {
        const T r = sigmoid(xr(Eigen::Index(row), Eigen::Index(j)) + hr(Eigen::Index(b), Eigen::Index(j)));
        dir.r[row * h + j] = r;
        dir.z[row * h + j] = sigmoid(xz(Eigen::Index(row), Eigen::Index(j)) + hz(Eigen::Index(b), Eigen::Index(j)));
        dir.h_prev[row * h + j] = state(Eigen::Index(b), Eigen::Index(j));
        gated(Eigen::Index(b), Eigen::Index(j)) = r * state(Eigen::Index(b), Eigen::Index(j));
      }
    }
    hc.noalias() = gated * uh;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * steps + t;
      T* dst = out.data() + row * out_width + std::size_t(offset);
      for (std::size_t j = 0; j < h; ++j) {
        const T c = std::tanh(xh(Eigen::Index(row), Eigen::Index(j)) + hc(Eigen::Index(b), Eigen::Index(j)));
        const T z = dir.z[row * h + j];
        dir.c[row * h + j] = c;
        const T next = (T(1) - z) * state(Eigen::Index(b), Eigen::Index(j)) + z * c;
        state(Eigen::Index(b), Eigen::Index(j)) = next;
        dst[j] = next;
      }
    }
  }
}

template <typename T>
Tensor<T> BiGru<T>::forward(Tensor<T> x, Mode mode) {
  require_rank(x.shape, 3, "bigru");
  const Shape os = output_shape(sample_shape(x));
  Tensor<T> out(batched(x.dim(0), os));
  run_direction(dirs_[0], false, x, out, 0);
  run_direction(dirs_[1], true, x, out, hidden_);
  input_ = std::move(x);
  return dropout_.forward(std::move(out), mode);
}

template <typename T>
void BiGru<T>::back_direction(Direction& dir, bool reverse, const Tensor<T>& grad,
                              Tensor<T>& grad_x, int offset) {
  const std::size_t batch = input_.dim(0), steps = input_.dim(1), d = input_.dim(2);
  const std::size_t h = std::size_t(hidden_), rows = batch * steps, out_width = 2 * h;
  const Eigen::Index bi = Eigen::Index(batch), hi = Eigen::Index(h);
  RowMat<T> daz(Eigen::Index(rows), hi), dar(Eigen::Index(rows), hi), dac(Eigen::Index(rows), hi);
  RowMat<T> carry = RowMat<T>::Zero(bi, hi);
  RowMat<T> step_az(bi, hi), step_ar(bi, hi), step_ac(bi, hi), dgated(bi, hi), dprev(bi, hi);
  auto uz = as_mat(std::as_const(dir.u_z), h, h);
  auto ur = as_mat(std::as_const(dir.u_r), h, h);
  auto uh = as_mat(std::as_const(dir.u_h), h, h);

  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * steps + t;
      const T* g = grad.data() + row * out_width + std::size_t(offset);
      for (std::size_t j = 0; j < h; ++j) {
        const std::size_t k = row * h + j;
        const T dh = carry(Eigen::Index(b), Eigen::Index(j)) + g[j];
        const T z = dir.z[k], c = dir.c[k], hp = dir.h_prev[k];
        step_ac(Eigen::Index(b), Eigen::Index(j)) = dh * z * (T(1) - c * c);
        step_az(Eigen::Index(b), Eigen::Index(j)) = dh * (c - hp) * z * (T(1) - z);
        dprev(Eigen::Index(b), Eigen::Index(j)) = dh * (T(1) - z);
      }
    }
    dgated.noalias() = step_ac * uh.transpose();
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t row = b * steps + t;
      for (std::size_t j = 0; j < h; ++j) {
        const std::size_t k = row * h + j;
        const T r = dir.r[k], hp = dir.h_prev[k];
        const T dg = dgated(Eigen::Index(b), Eigen::Index(j));
        step_ar(Eigen::Index(b), Eigen::Index(j)) = dg * hp * r * (T(1) - r);
        dprev(Eigen::Index(b), Eigen::Index(j)) += dg * r;
      }
    }
    dprev.noalias() += step_az * uz.transpose();
    dprev.noalias() += step_ar * ur.transpose();
    carry = dprev;
    for (std::size_t b = 0; b < batch; ++b) {
      const Eigen::Index row = Eigen::Index(b * steps + t);
      daz.row(row) = step_az.row(Eigen::Index(b));
      dar.row(row) = step_ar.row(Eigen::Index(b));
      dac.row(row) = step_ac.row(Eigen::Index(b));
    }
  }

  ConstMapMat<T> hprev(dir.h_prev.data(), Eigen::Index(rows), hi);
  RowMat<T> gated = hprev.cwiseProduct(ConstMapMat<T>(dir.r.data(), Eigen::Index(rows), hi));
  auto xm = as_mat(input_, rows, d);
  MapMat<T>(dir.w_z.grad.data(), Eigen::Index(d), hi).noalias() += xm.transpose() * daz;
  MapMat<T>(dir.w_r.grad.data(), Eigen::Index(d), hi).noalias() += xm.transpose() * dar;
  MapMat<T>(dir.w_h.grad.data(), Eigen::Index(d), hi).noalias() += xm.transpose() * dac;
  MapMat<T>(dir.u_z.grad.data(), hi, hi).noalias() += hprev.transpose() * daz;
  MapMat<T>(dir.u_r.grad.data(), hi, hi).noalias() += hprev.transpose() * dar;
  MapMat<T>(dir.u_h.grad.data(), hi, hi).noalias() += gated.transpose() * dac;
  add_column_sums(daz, dir.b_z.grad.data());
  add_column_sums(dar, dir.b_r.grad.data());
  add_column_sums(dac, dir.b_h.grad.data());

  auto gx = as_mat(grad_x, rows, d);
  gx.noalias() += daz * as_mat(std::as_const(dir.w_z), d, h).transpose();
  gx.noalias() += dar * as_mat(std::as_const(dir.w_r), d, h).transpose();
  gx.noalias() += dac * as_mat(std::as_const(dir.w_h), d, h).transpose();
}

template <typename T>
Tensor<T> BiGru<T>::backward(const Tensor<T>& grad_out) {
  const Shape expect = batched(input_.dim(0), {input_.dim(1), 2 * std::size_t(hidden_)});
  if (grad_out.shape != expect) throw ShapeError("bigru backward shape mismatch");
  const Tensor<T> grad = dropout_.backward(grad_out);
  Tensor<T> grad_x(input_.shape);
  back_direction(dirs_[0], false, grad, grad_x, 0);
  back_direction(dirs_[1], true, grad, grad_x, hidden_);
  return grad_x;
}

template <typename T>
void BiGru<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  const char* names[2] = {"fwd", "bwd"};
  for (int i = 0; i < 2; ++i) {
    auto& d = dirs_[i];
    const std::string p = join(prefix, names[i]);
    out.push_back({p + ".w_z", &d.w_z, true});
    out.push_back({p + ".w_r", &d.w_r, true});
    out.push_back({p + ".w_h", &d.w_h, true});
    out.push_back({p + ".u_z", &d.u_z, true});
    out.push_back({p + ".u_r", &d.u_r, true});
    out.push_back({p + ".u_h", &d.u_h, true});
    out.push_back({p + ".b_z", &d.b_z, true});
    out.push_back({p + ".b_r", &d.b_r, true});
    out.push_back({p + ".b_h", &d.b_h, true});
  }
}

template <typename T>
void BiGru<T>::initialize(std::mt19937_64& rng) {
  const double wx = std::sqrt(1.0 / input_size_), wh = std::sqrt(1.0 / hidden_);
  for (auto& d : dirs_) {
    fill_normal(d.w_z, wx, rng);
    fill_normal(d.w_r, wx, rng);
    fill_normal(d.w_h, wx, rng);
    fill_normal(d.u_z, wh, rng);
    fill_normal(d.u_r, wh, rng);
    fill_normal(d.u_h, wh, rng);
    for (auto* b : {&d.b_z, &d.b_r, &d.b_h}) std::fill(b->values.begin(), b->values.end(), T(0));
  }
}

// ----------------------------------------------------------- FeatureMean

template <typename T>
Shape FeatureMean<T>::output_shape(const Shape& in) const {
  require_rank(in, 2, "feature_mean");
  return {in[0]};
}

template <typename T>
Tensor<T> FeatureMean<T>::forward(Tensor<T> x, Mode) {
  require_rank(x.shape, 3, "feature_mean");
  const std::size_t rows = x.dim(0) * x.dim(1), d = x.dim(2);
  Tensor<T> out({x.dim(0), x.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += x.values[r * d + j];
    out.values[r] = T(acc / double(d));
  }
  in_shape_ = x.shape;
  return out;
}

template <typename T>
Tensor<T> FeatureMean<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t rows = in_shape_[0] * in_shape_[1], d = in_shape_[2];
  if (grad_out.size() != rows) throw ShapeError("feature_mean backward shape mismatch");
  Tensor<T> grad_in(in_shape_);
  const T inv = T(1.0 / double(d));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) grad_in.values[r * d + j] = grad_out.values[r] * inv;
  }
  return grad_in;
}

// --------------------------------------------------------------- Reshape

template <typename T>
Shape Reshape<T>::output_shape(const Shape& in) const {
  if (numel(in) != numel(target_)) {
    throw ShapeError("cannot reshape " + shape_str(in) + " to " + shape_str(target_));
  }
  return target_;
}

template <typename T>
Tensor<T> Reshape<T>::forward(Tensor<T> x, Mode) {
  const Shape os = output_shape(sample_shape(x));
  in_shape_ = x.shape;
  x.shape = batched(x.dim(0), os);
  return x;
}

template <typename T>
Tensor<T> Reshape<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  g.shape = in_shape_;
  return g;
}

// ------------------------------------------------------------ Sequential

template <typename T>
Sequential<T>& Sequential<T>::add(std::string name, LayerPtr<T> layer) {
  layers_.emplace_back(std::move(name), std::move(layer));
  return *this;
}

template <typename T>
Shape Sequential<T>::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& [name, layer] : layers_) s = layer->output_shape(s);
  return s;
}

template <typename T>
Tensor<T> Sequential<T>::forward(Tensor<T> x, Mode mode) {
  for (auto& [name, layer] : layers_) x = layer->forward(std::move(x), mode);
  return x;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->second->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  for (auto& [name, layer] : layers_) layer->collect(join(prefix, name), out);
}

template <typename T>
void Sequential<T>::initialize(std::mt19937_64& rng) {
  for (auto& [name, layer] : layers_) layer->initialize(rng);
}

template <typename T>
void Sequential<T>::mark_stats_loaded() {
  for (auto& [name, layer] : layers_) layer->mark_stats_loaded();
}

template <typename T>
void Sequential<T>::reseed(std::uint64_t seed) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].second->reseed(derive_seed(seed, i));
}

template <typename T>
void Sequential<T>::trace(const Shape& in, std::vector<TraceEntry>& out) const {
  Shape s = in;
  for (const auto& [name, layer] : layers_) {
    layer->trace(s, out);
    s = layer->output_shape(s);
  }
  if (traced_) out.push_back({name_, s});
}

// -------------------------------------------------------- ParallelConcat

template <typename T>
Sequential<T>& ParallelConcat<T>::add_branch(std::unique_ptr<Sequential<T>> branch) {
  branches_.push_back(std::move(branch));
  return *branches_.back();
}

template <typename T>
Shape ParallelConcat<T>::output_shape(const Shape& in) const {
  std::size_t width = 0;
  for (const auto& b : branches_) width += numel(b->output_shape(in));
  return {width};
}

template <typename T>
Tensor<T> ParallelConcat<T>::forward(Tensor<T> x, Mode mode) {
  if (branches_.empty()) throw ConfigError("concat without branches");
  const std::size_t batch = x.dim(0);
  std::vector<Tensor<T>> outs;
  widths_.clear();
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const bool last = i + 1 == branches_.size();
    outs.push_back(branches_[i]->forward(last ? std::move(x) : x, mode));
    widths_.push_back(outs.back().row_size());
  }
  std::size_t total = 0;
  for (auto w : widths_) total += w;
  Tensor<T> out({batch, total});
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < outs.size(); ++i) {
      std::copy_n(outs[i].data() + b * widths_[i], widths_[i], out.data() + b * total + off);
      off += widths_[i];
    }
  }
  return out;
}

template <typename T>
Tensor<T> ParallelConcat<T>::backward(const Tensor<T>& grad_out) {
  const std::size_t batch = grad_out.dim(0);
  std::size_t total = 0;
  for (auto w : widths_) total += w;
  if (grad_out.shape != Shape{batch, total}) throw ShapeError("concat backward shape mismatch");
  Tensor<T> grad_in;
  std::size_t off = 0;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    Tensor<T> part({batch, widths_[i]});
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(grad_out.data() + b * total + off, widths_[i], part.data() + b * widths_[i]);
    }
    off += widths_[i];
    // Branch outputs may be shaped (e.g. B x T); flatten shapes agree by size.
    Tensor<T> g = branches_[i]->backward(part);
    if (i == 0) {
      grad_in = std::move(g);
    } else {
      for (std::size_t k = 0; k < grad_in.size(); ++k) grad_in.values[k] += g.values[k];
    }
  }
  return grad_in;
}

template <typename T>
void ParallelConcat<T>::collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
  for (auto& b : branches_) b->collect(join(prefix, b->name()), out);
}

template <typename T>
void ParallelConcat<T>::initialize(std::mt19937_64& rng) {
  for (auto& b : branches_) b->initialize(rng);
}

template <typename T>
void ParallelConcat<T>::mark_stats_loaded() {
  for (auto& b : branches_) b->mark_stats_loaded();
}

template <typename T>
void ParallelConcat<T>::reseed(std::uint64_t seed) {
  for (std::size_t i = 0; i < branches_.size(); ++i) branches_[i]->reseed(derive_seed(seed, 100 + i));
}

template <typename T>
void ParallelConcat<T>::trace(const Shape& in, std::vector<TraceEntry>& out) const {
  for (const auto& b : branches_) b->trace(in, out);
  if (traced_) out.push_back({name_, output_shape(in)});
}

#define ASCKIT_INSTANTIATE(T)           \
  template class Conv2d<T>;             \
  template class BatchNorm<T>;          \
  template class ReLU<T>;               \
  template class AvgPool2d<T>;          \
  template class GlobalAvgPool<T>;      \
  template class Dropout<T>;            \
  template class Dense<T>;              \
  template class Softmax<T>;            \
  template class BiGru<T>;              \
  template class FeatureMean<T>;        \
  template class Reshape<T>;            \
  template class Sequential<T>;         \
  template class ParallelConcat<T>;

ASCKIT_INSTANTIATE(float)
ASCKIT_INSTANTIATE(double)

#undef ASCKIT_INSTANTIATE

}  // namespace asckit::nn
