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
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace asckit::audio {

/// Decoded mono signal. Only the first channel of a multi-channel file is
/// kept; mono files are their own channel 1.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 0;
  std::string source_id;
  int channel_taken = 0;
};

enum class SampleFormat { kPcm16, kPcm24, kFloat32 };

/// Reads a RIFF/WAVE file (PCM16, PCM24 or IEEE float32; 1 or 2 channels).
/// Integer PCM is scaled by 1 / 2^(bits-1). No resampling is performed.
AudioClip read_wav(const std::filesystem::path& path);

/// Decodes an in-memory WAV image; `source_id` is copied into the clip.
AudioClip decode_wav(const std::vector<std::uint8_t>& bytes, std::string source_id = {});

/// Encodes interleaved frames. For PCM formats samples are clipped to [-1, 1)
/// and rounded to the nearest integer word.
std::vector<std::uint8_t> encode_wav(const std::vector<double>& interleaved, int channels,
                                     int sample_rate, SampleFormat format = SampleFormat::kPcm16);

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
               int sample_rate, SampleFormat format = SampleFormat::kPcm16);

enum class Split { kTrain, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& token);

struct ManifestEntry {
  std::string path;
  std::string label;
  std::optional<std::string> device;
  std::optional<int> fold;
  Split split = Split::kTrain;

  bool operator==(const ManifestEntry&) const = default;
};

/// Sorted distinct labels; the index of a category is its sorted rank.
class CategorySet {
 public:
  CategorySet() = default;
  explicit CategorySet(std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  int index_of(const std::string& label) const;
  const std::string& name(int index) const { return names_.at(index); }

 private:
  std::vector<std::string> names_;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  CategorySet categories;
  /// Directory relative paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ManifestEntry& entry) const;
  std::vector<ManifestEntry> split(Split which) const;
};

Manifest parse_manifest(const std::string& csv_text, const std::filesystem::path& base_dir = {});
Manifest load_manifest(const std::filesystem::path& path);
std::string format_manifest(const std::vector<ManifestEntry>& entries);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Converts a DCASE-style tab separated meta file (`file<TAB>label[<TAB>...]`)
/// into manifest entries with the given split. The device is taken from the
/// trailing `-a`/`-b`/`-c` suffix of the file stem when present.
std::vector<ManifestEntry> import_dcase_meta(const std::string& tsv_text, Split split);

/// Parameters of the deterministic synthetic scene corpus.
struct SynthSpec {
  int n_classes = 4;
  int clips_per_class = 30;
  double clip_seconds = 2.2;
  int sample_rate = 16000;
  std::uint64_t seed = 7;
  /// Per-class multiplier on clips_per_class (missing classes use 1.0).
  std::map<int, double> imbalance;

  void validate() const;
  int clip_count(int cls) const;
};

SynthSpec synth_spec_from_json(const std::string& json_text);

/// Synthesizes one clip of class `cls`; a pure function of (spec, cls, index).
std::vector<double> synth_clip(const SynthSpec& spec, int cls, int index);

/// Writes `audio/*.wav` plus `manifest.csv` below `out_dir` and returns the
/// manifest path. Each class is split 80/20 train/test by a seeded shuffle.
std::filesystem::path synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

std::string synth_label(int cls);

}  // namespace asckit::audio
