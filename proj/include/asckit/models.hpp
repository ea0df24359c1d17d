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
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "asckit/nn/layers.hpp"
#include "asckit/nn/optim.hpp"
#include "asckit/patchlab.hpp"
#include "asckit/spectra.hpp"

namespace asckit::models {

enum class Architecture { kCdnn, kJoint };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& token);

/// A layer graph plus the metadata needed to run it on 128x128x1 patches.
template <typename T>
class Network {
 public:
  Network(Architecture arch, int n_classes, std::unique_ptr<nn::Sequential<T>> root,
          nn::Shape input_shape);

  nn::Tensor<T> forward(nn::Tensor<T> x, nn::Mode mode) { return root_->forward(std::move(x), mode); }
  nn::Tensor<T> backward(const nn::Tensor<T>& grad) { return root_->backward(grad); }

  /// Registry of parameters and running statistics in topological order.
  const std::vector<nn::ParamRef<T>>& params() const { return params_; }
  std::size_t parameter_count(bool trainable_only = true) const;
  void zero_grad();
  void initialize(std::uint64_t seed);
  void reseed(std::uint64_t seed) { root_->reseed(seed); }
  std::vector<nn::TraceEntry> trace() const;

  Architecture architecture() const { return arch_; }
  int n_classes() const { return n_classes_; }
  const nn::Shape& input_shape() const { return input_shape_; }
  nn::Sequential<T>& root() { return *root_; }

 private:
  Architecture arch_;
  int n_classes_;
  std::unique_ptr<nn::Sequential<T>> root_;
  nn::Shape input_shape_;
  std::vector<nn::ParamRef<T>> params_;
};

/// Output shapes of the table rows each architecture must reproduce.
std::vector<nn::TraceEntry> expected_cdnn_trace(int n_classes);
std::vector<nn::TraceEntry> expected_crnn_trace();
std::vector<nn::TraceEntry> expected_joint_trace(int n_classes);

/// Convolutional part of the C-DNN (six Vg-Cv blocks, 256-d embedding).
template <typename T>
std::unique_ptr<nn::Sequential<T>> build_cnn_branch();

/// Convolutional-recurrent embedding branch (128-d).
template <typename T>
std::unique_ptr<nn::Sequential<T>> build_crnn_branch();

/// C-DNN classifier. The build asserts the layer trace against the table.
template <typename T>
Network<T> build_cdnn(int n_classes, std::uint64_t seed = 0);

/// CNN and C-RNN branches in parallel, concatenated into DNN-02.
template <typename T>
Network<T> build_joint(int n_classes, std::uint64_t seed = 0);

template <typename T>
Network<T> build(Architecture arch, int n_classes, std::uint64_t seed = 0);

/// Per-frequency-bin standardization statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  static constexpr double kStdFloor = 1e-6;
  void validate() const;
};

NormStats fit_stats(const std::vector<spectra::Spectrogram>& train);
void normalize(patchlab::Patch& patch, const NormStats& stats);
patchlab::Patch normalized(patchlab::Patch patch, const NormStats& stats);

struct ModelConfig {
  Architecture architecture = Architecture::kJoint;
  int n_classes = 2;
  spectra::Kind kind = spectra::Kind::kLogMel;
  nn::TrainConfig train;
  NormStats stats;

  void validate() const;
};

struct Model {
  ModelConfig config;
  Network<float> net;
};

Model make_model(const ModelConfig& config);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
};

/// Stacks patches into a B x 128 x 128 x 1 tensor.
nn::Tensor<float> stack_patches(const std::vector<patchlab::Patch>& patches, std::size_t begin,
                                std::size_t count);

/// Eval-mode class posteriors, one row per patch.
std::vector<std::vector<double>> predict_patches(Network<float>& net,
                                                 const std::vector<patchlab::Patch>& patches,
                                                 std::size_t chunk = 16);

double accuracy(Network<float>& net, const std::vector<patchlab::Patch>& patches);

/// Oversample (once), then per epoch: seeded shuffle, batches, mixup, forward,
/// KL + L2 loss, backward, Adam. Patches are expected to be normalized.
/// Trains for config.epochs epochs, or until `stop_after` returns true.
TrainResult train(Network<float>& net, const std::vector<patchlab::Patch>& patches,
                  const nn::TrainConfig& config, const patchlab::MixupConfig& mixup,
                  const std::function<void(const EpochLog&)>& on_epoch = {},
                  const std::function<bool(const EpochLog&)>& stop_after = {});

/// CSV `epoch,loss,train_acc`.
std::string format_epoch_log(const std::vector<EpochLog>& log);

inline constexpr int kEngineVersion = 1;

/// ASCK1 magic line, JSON header line, little-endian float32 blob. Written
/// to a temporary file and renamed into place.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
std::string encode_checkpoint(const Model& model);
Model load_checkpoint(const std::filesystem::path& path);
Model decode_checkpoint(const std::string& bytes);

}  // namespace asckit::models
