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

#include "asckit/patchlab.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "asckit/error.hpp"

namespace asckit::patchlab {

int Patch::hard_label() const {
  return int(std::max_element(label.begin(), label.end()) - label.begin());
}

void MixupConfig::validate() const {
  if (!(beta_alpha > 0.0)) throw ConfigError("mixup beta_alpha must be positive");
  if (!(uniform_share >= 0.0 && uniform_share <= 1.0)) {
    throw ConfigError("mixup uniform_share must lie in [0, 1]");
  }
}

std::vector<double> one_hot(int label, int n_classes) {
  if (label < 0 || label >= n_classes) throw ConfigError("label out of range");
  std::vector<double> y(std::size_t(n_classes), 0.0);
  y[std::size_t(label)] = 1.0;
  return y;
}

std::vector<Patch> split_patches(const spectra::Spectrogram& spec, int label, int n_classes) {
  if (spec.bands() != kPatchSize) throw ShapeError("split_patches expects 128 bands");
  const int frames = spec.frames();
  if (frames < 1) throw ShapeError("spectrogram has no frames");
  const auto y = one_hot(label, n_classes);

  auto cut = [&](int start, int index) {
    Patch p;
    p.data.resize(std::size_t(kPatchSize) * kPatchSize);
    for (int f = 0; f < kPatchSize; ++f) {
      for (int t = 0; t < kPatchSize; ++t) {
        p.data[std::size_t(f) * kPatchSize + t] = spec.data(f, (start + t) % frames);
      }
    }
    p.label = y;
    p.file_id = spec.source_id;
    p.index = index;
    return p;
  };

  std::vector<Patch> out;
  if (frames < kPatchSize) {
    out.push_back(cut(0, 0));
    return out;
  }
  for (int i = 0; (i + 1) * kPatchSize <= frames; ++i) out.push_back(cut(i * kPatchSize, i));
  return out;
}

std::vector<Patch> oversample(const std::vector<Patch>& patches, std::uint64_t seed) {
  if (patches.empty()) throw BalanceError("no patches to balance");
  const std::size_t n_classes = patches.front().label.size();
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    by_class.at(std::size_t(patches[i].hard_label())).push_back(i);
  }
  std::size_t majority = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (by_class[c].empty()) throw BalanceError("class " + std::to_string(c) + " has no patches");
    majority = std::max(majority, by_class[c].size());
  }
  std::vector<Patch> out(patches);
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto& members = by_class[c];
    std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
    for (std::size_t k = members.size(); k < majority; ++k) out.push_back(patches[members[pick(rng)]]);
  }
  return out;
}

namespace {

// Returns (v1, v2) close to the mixed values with v1 + v2 == x1 + x2 in
// double. The direct values are kept when they already conserve the sum;
// otherwise the smaller output absorbs the residual and the larger one walks
// outward ulp by ulp until the residual is representable.
std::pair<double, double> conserving_pair(double x1, double x2, double v1, double v2) {
  const double target = x1 + x2;
  if (v1 + v2 == target) return {v1, v2};
  const bool first_big = std::abs(v1) >= std::abs(v2);
  const double big = first_big ? v1 : v2;
  double up = big, down = big;
  for (int step = 0; step < 256; ++step) {
    for (double c : {up, down}) {
      const double rest = target - c;
      if (c + rest == target) return first_big ? std::pair{c, rest} : std::pair{rest, c};
    }
    up = std::nextafter(up, HUGE_VAL);
    down = std::nextafter(down, -HUGE_VAL);
  }
  return {v1, v2};
}

}  // namespace

std::pair<Patch, Patch> mix_pair(const Patch& a, const Patch& b, double gamma) {
  if (a.data.size() != b.data.size() || a.label.size() != b.label.size()) {
    throw BatchError("mixup pair has mismatched shapes");
  }
  Patch m1 = a, m2 = b;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double x1 = a.data[i], x2 = b.data[i];
    const auto [v1, v2] = conserving_pair(x1, x2, x1 * gamma + x2 * (1.0 - gamma), x1 * (1.0 - gamma) + x2 * gamma);
    m1.data[i] = v1;
    m2.data[i] = v2;
  }
  for (std::size_t c = 0; c < a.label.size(); ++c) {
    m1.label[c] = a.label[c] * gamma + b.label[c] * (1.0 - gamma);
    m2.label[c] = a.label[c] * (1.0 - gamma) + b.label[c] * gamma;
  }
  return {std::move(m1), std::move(m2)};
}

std::vector<double> mixup_gammas(std::size_t n_pairs, const MixupConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::gamma_distribution<double> shape(cfg.beta_alpha, 1.0);
  std::vector<double> out;
  out.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    if (unit(rng) < cfg.uniform_share) {
      out.push_back(unit(rng));
      continue;
    }
    double x = 0.0, y = 0.0;
    do {
      x = shape(rng);
      y = shape(rng);
    } while (x + y <= 0.0);
    out.push_back(x / (x + y));
  }
  return out;
}

std::vector<Patch> mixup_batch(const std::vector<Patch>& batch, const MixupConfig& cfg) {
  if (batch.size() % 2 != 0) {
    throw BatchError("mixup needs an even batch, got " + std::to_string(batch.size()));
  }
  if (!cfg.enabled) return batch;
  const auto gammas = mixup_gammas(batch.size() / 2, cfg);
  std::vector<Patch> out;
  out.reserve(batch.size());
  for (std::size_t p = 0; p < gammas.size(); ++p) {
    auto [m1, m2] = mix_pair(batch[2 * p], batch[2 * p + 1], gammas[p]);
    out.push_back(std::move(m1));
    out.push_back(std::move(m2));
  }
  return out;
}

void save_patch(const std::filesystem::path& path, const Patch& patch, spectra::Kind kind,
                const spectra::FrameParams& params) {
  spectra::Spectrogram spec;
  spec.kind = kind;
  spec.params = params;
  spec.source_id = patch.file_id;
  spec.data.resize(kPatchSize, kPatchSize);
  for (int f = 0; f < kPatchSize; ++f) {
    for (int t = 0; t < kPatchSize; ++t) spec.data(f, t) = patch.data[std::size_t(f) * kPatchSize + t];
  }
  nlohmann::json extra = {{"label", patch.label}, {"patch_index", patch.index}};
  spectra::save_spectrogram(path, spec, extra.dump());
}

}  // namespace asckit::patchlab
