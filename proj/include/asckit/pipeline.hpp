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

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "asckit/audio_io.hpp"
#include "asckit/models.hpp"
#include "asckit/patchlab.hpp"
#include "asckit/spectra.hpp"

namespace asckit::pipeline {

/// JSON run configuration. Unknown keys are rejected at every level.
struct RunConfig {
  std::filesystem::path manifest;
  std::filesystem::path feature_dir;
  std::filesystem::path checkpoint_dir = "checkpoints";
  std::filesystem::path report_dir = "reports";
  models::Architecture architecture = models::Architecture::kJoint;
  std::vector<spectra::Kind> kinds = {spectra::Kind::kLogMel};
  nn::TrainConfig train;
  patchlab::MixupConfig mixup;
  spectra::FrameParams frame;

  /// Checks values and that the manifest exists; creates nothing.
  void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& cfg);

/// <dir>/<kind>/<entry path with a .spec extension>.
std::filesystem::path feature_path(const std::filesystem::path& dir, const std::string& entry_path,
                                   spectra::Kind kind);

/// Spectrograms for `entries`, read from `feature_dir` when a cached file
/// with matching frame parameters exists, extracted from audio otherwise.
std::vector<spectra::Spectrogram> load_features(const audio::Manifest& manifest,
                                                const std::vector<audio::ManifestEntry>& entries,
                                                spectra::Kind kind, const spectra::FrameParams& params,
                                                const std::filesystem::path& feature_dir = {});

struct ExtractSummary {
  int written = 0;
  int skipped = 0;
  std::vector<std::string> failures;
};

/// Writes one SPEC1 file per (entry, kind). Existing files are kept unless `force`.
ExtractSummary extract_features(const audio::Manifest& manifest, const std::vector<spectra::Kind>& kinds,
                                const spectra::FrameParams& params, const std::filesystem::path& out_dir,
                                bool force);

/// Normalized patches of one split, in manifest order.
std::vector<patchlab::Patch> make_patches(const audio::Manifest& manifest,
                                          const std::vector<audio::ManifestEntry>& entries,
                                          const std::vector<spectra::Spectrogram>& specs,
                                          const models::NormStats& stats);

struct TrainedModel {
  models::Model model;
  models::TrainResult result;
};

/// Fits normalization on the train split, builds and trains one model.
TrainedModel train_kind(const audio::Manifest& manifest, spectra::Kind kind, models::Architecture arch,
                        const nn::TrainConfig& train, const patchlab::MixupConfig& mixup,
                        const spectra::FrameParams& params, const std::filesystem::path& feature_dir = {},
                        const std::function<void(const models::EpochLog&)>& on_epoch = {},
                        const std::function<bool(const models::EpochLog&)>& stop_after = {});

/// Order-sensitive FNV-1a digest over every regular file below `dir`
/// (relative path and contents, sorted by path).
std::string tree_checksum(const std::filesystem::path& dir);

}  // namespace asckit::pipeline
