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
#include <random>
#include <string>
#include <vector>

#include "asckit/audio_io.hpp"

namespace asckit::testing {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("asckit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline audio::AudioClip noise_clip(std::size_t n, double fs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  audio::AudioClip clip;
  clip.samples.resize(n);
  for (auto& v : clip.samples) v = u(rng);
  clip.sample_rate = int(fs);
  clip.source_id = "noise" + std::to_string(seed);
  return clip;
}

inline audio::AudioClip tone_clip(std::size_t n, double fs, double hz, double amp = 0.5) {
  audio::AudioClip clip;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = amp * std::sin(2.0 * 3.141592653589793 * hz * double(i) / fs);
  clip.sample_rate = int(fs);
  clip.source_id = "tone";
  return clip;
}

}  // namespace asckit::testing
