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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "asckit/audio_io.hpp"
#include "asckit/models.hpp"
#include "asckit/spectra.hpp"

namespace asckit::fusion {

enum class Level { kPatch, kFile, kFused };

struct ProbVector {
  std::vector<double> probs;
  Level level = Level::kFile;
  std::string file_id;
  std::vector<spectra::Kind> kinds;
};

/// File-level posterior as the mean of patch posteriors.
ProbVector patch_mean(const std::vector<std::vector<double>>& patch_probs, const std::string& file_id = {},
                      std::optional<spectra::Kind> kind = std::nullopt);

struct Prediction {
  int index = 0;
  bool tie = false;
};

/// Argmax with ties going to the lowest index.
Prediction predict(const std::vector<double>& probs);

enum class Strategy { kMean, kProd, kMax };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& token);

inline constexpr double kProdFloor = 1e-12;

std::vector<double> fuse(const std::vector<std::vector<double>>& rows, Strategy strategy);
/// Fuses one file's posteriors from several systems; all must share file_id and width.
ProbVector fuse(const std::vector<ProbVector>& systems, Strategy strategy);

/// The two- to five-kind groups evaluated by default.
std::vector<std::vector<spectra::Kind>> standard_combinations();
std::string combination_name(const std::vector<spectra::Kind>& kinds);

struct EvalReport {
  std::string system;
  std::optional<Strategy> strategy;
  std::vector<std::string> categories;
  std::vector<std::vector<int>> confusion;
  double accuracy = 0.0;
  std::vector<double> per_category;
  /// Device -> (correct, total); empty when the manifest has no devices.
  std::map<std::string, std::pair<int, int>> devices;
  int ties = 0;

  std::string to_json() const;
  std::string format_table() const;
  std::string per_category_csv() const;
};

/// Builds a report from true labels and fused per-file posteriors.
EvalReport build_report(const std::vector<std::string>& categories, const std::vector<int>& truth,
                        const std::vector<std::vector<double>>& probs,
                        const std::vector<std::optional<std::string>>& devices = {});

/// File-level posteriors of one model over a manifest split, in manifest order.
std::vector<ProbVector> infer_files(models::Model& model, const audio::Manifest& manifest,
                                    audio::Split split, const spectra::FrameParams& params = {},
                                    const std::filesystem::path& feature_dir = {});

using FileProbs = std::map<spectra::Kind, std::vector<ProbVector>>;

/// Aligns per-kind file posteriors by position and fuses them. Throws
/// AlignError when the systems disagree on files or category count.
std::vector<ProbVector> fuse_files(const std::vector<std::vector<ProbVector>>& systems, Strategy strategy);

/// Reports for every single kind present plus every standard combination
/// whose kinds are all present, under each strategy.
std::vector<EvalReport> evaluate(const audio::Manifest& manifest, audio::Split split, const FileProbs& probs,
                                 const std::vector<std::vector<spectra::Kind>>& combinations,
                                 const std::vector<Strategy>& strategies);

/// Runs every model on the split, then evaluates. Throws ConfigError when a
/// requested combination has no model for one of its kinds.
std::vector<EvalReport> evaluate(const audio::Manifest& manifest, audio::Split split,
                                 std::map<spectra::Kind, models::Model*> models,
                                 const std::vector<std::vector<spectra::Kind>>& combinations,
                                 const std::vector<Strategy>& strategies);

std::string format_probs(const std::vector<ProbVector>& rows);
std::vector<ProbVector> parse_probs(const std::string& csv);
void dump_probs(const std::vector<ProbVector>& rows, const std::filesystem::path& path);
std::vector<ProbVector> load_probs(const std::filesystem::path& path);

}  // namespace asckit::fusion
