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
#include <string>
#include <vector>

#include "asckit/spectra.hpp"

namespace asckit::patchlab {

inline constexpr int kPatchSize = 128;

/// A 128x128 slice, stored frequency-major (row f, column t), with a soft
/// label on the probability simplex.
struct Patch {
  std::vector<double> data;
  std::vector<double> label;
  std::string file_id;
  int index = 0;

  int hard_label() const;
};

struct MixupConfig {
  bool enabled = true;
  double beta_alpha = 0.4;
  /// Probability of drawing gamma from Uniform(0,1) instead of Beta.
  double uniform_share = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<double> one_hot(int label, int n_classes);

/// Non-overlapping 128-frame patches; the remainder is dropped. Spectrograms
/// shorter than 128 frames are tiled cyclically into one patch.
std::vector<Patch> split_patches(const spectra::Spectrogram& spec, int label, int n_classes);

/// Randomly duplicates minority-class patches until every class matches the
/// majority count. Originals keep their order; duplicates are appended class
/// by class.
std::vector<Patch> oversample(const std::vector<Patch>& patches, std::uint64_t seed);

/// Mixes one pair with a given coefficient. Outputs are adjusted by a few ulps
/// when needed so that m1 + m2 == a + b holds bit-exactly in double.
std::pair<Patch, Patch> mix_pair(const Patch& a, const Patch& b, double gamma);

/// Pairs (0,1), (2,3), ... and mixes each pair with its own coefficient.
std::vector<Patch> mixup_batch(const std::vector<Patch>& batch, const MixupConfig& cfg);

/// Coefficients mixup_batch would draw for `n_pairs` pairs.
std::vector<double> mixup_gammas(std::size_t n_pairs, const MixupConfig& cfg);

/// Dumps a patch as a SPEC1 file with its label in the header.
void save_patch(const std::filesystem::path& path, const Patch& patch, spectra::Kind kind,
                const spectra::FrameParams& params);

}  // namespace asckit::patchlab
