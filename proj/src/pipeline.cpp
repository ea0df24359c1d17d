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

#include "asckit/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "asckit/error.hpp"
#include "asckit/parallel.hpp"

namespace asckit::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;
using spectra::Kind;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename V>
void read(const json& obj, const char* key, V& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

void read_path(const json& obj, const char* key, fs::path& out) {
  std::string s;
  read(obj, key, s, "config");
  if (obj.contains(key)) out = s;
}

}  // namespace

void RunConfig::validate() const {
  if (manifest.empty()) throw ConfigError("config needs a manifest path");
  if (!fs::is_regular_file(manifest)) throw ConfigError("manifest not found: " + manifest.string());
  if (kinds.empty()) throw ConfigError("config lists no kinds");
  for (const auto& dir : {feature_dir, checkpoint_dir, report_dir}) {
    if (!dir.empty() && fs::exists(dir) && !fs::is_directory(dir)) {
      throw ConfigError(dir.string() + " exists and is not a directory");
    }
  }
  train.validate();
  mixup.validate();
  frame.validate();
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"manifest", "feature_dir", "checkpoint_dir", "report_dir", "architecture", "kinds", "train",
                     "mixup", "frame"},
                 "config");
  RunConfig cfg;
  read_path(j, "manifest", cfg.manifest);
  read_path(j, "feature_dir", cfg.feature_dir);
  read_path(j, "checkpoint_dir", cfg.checkpoint_dir);
  read_path(j, "report_dir", cfg.report_dir);
  if (j.contains("architecture")) {
    std::string a;
    read(j, "architecture", a, "config");
    cfg.architecture = models::parse_architecture(a);
  }
  if (j.contains("kinds")) {
    std::vector<std::string> names;
    read(j, "kinds", names, "config");
    cfg.kinds.clear();
    for (const auto& n : names) cfg.kinds.push_back(spectra::parse_kind(n));
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    reject_unknown(t, {"learning_rate", "batch_size", "epochs", "l2_lambda", "adam_beta1", "adam_beta2",
                       "adam_epsilon", "seed"},
                   "train");
    read(t, "learning_rate", cfg.train.learning_rate, "train");
    read(t, "batch_size", cfg.train.batch_size, "train");
    read(t, "epochs", cfg.train.epochs, "train");
    read(t, "l2_lambda", cfg.train.l2_lambda, "train");
    read(t, "adam_beta1", cfg.train.adam_beta1, "train");
    read(t, "adam_beta2", cfg.train.adam_beta2, "train");
    read(t, "adam_epsilon", cfg.train.adam_epsilon, "train");
    read(t, "seed", cfg.train.seed, "train");
  }
  if (j.contains("mixup")) {
    const auto& m = j["mixup"];
    reject_unknown(m, {"enabled", "beta_alpha", "uniform_share", "seed"}, "mixup");
    read(m, "enabled", cfg.mixup.enabled, "mixup");
    read(m, "beta_alpha", cfg.mixup.beta_alpha, "mixup");
    read(m, "uniform_share", cfg.mixup.uniform_share, "mixup");
    read(m, "seed", cfg.mixup.seed, "mixup");
  }
  if (j.contains("frame")) {
    const auto& f = j["frame"];
    reject_unknown(f, {"window_len", "hop", "n_fft", "n_bands", "f_min", "window"}, "frame");
    read(f, "window_len", cfg.frame.window_len, "frame");
    read(f, "hop", cfg.frame.hop, "frame");
    read(f, "n_fft", cfg.frame.n_fft, "frame");
    read(f, "n_bands", cfg.frame.n_bands, "frame");
    read(f, "f_min", cfg.frame.f_min, "frame");
    if (f.contains("window")) {
      std::string w;
      read(f, "window", w, "frame");
      if (w == "hamming") {
        cfg.frame.window = spectra::Window::kHamming;
      } else if (w == "rectangular") {
        cfg.frame.window = spectra::Window::kRectangular;
      } else {
        throw ConfigError("frame.window must be hamming or rectangular, got '" + w + "'");
      }
    }
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& cfg) {
  json j;
  j["manifest"] = cfg.manifest.string();
  j["feature_dir"] = cfg.feature_dir.string();
  j["checkpoint_dir"] = cfg.checkpoint_dir.string();
  j["report_dir"] = cfg.report_dir.string();
  j["architecture"] = models::to_string(cfg.architecture);
  j["kinds"] = json::array();
  for (auto k : cfg.kinds) j["kinds"].push_back(spectra::to_string(k));
  j["train"] = {{"learning_rate", cfg.train.learning_rate}, {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},               {"l2_lambda", cfg.train.l2_lambda},
                {"adam_beta1", cfg.train.adam_beta1},       {"adam_beta2", cfg.train.adam_beta2},
                {"adam_epsilon", cfg.train.adam_epsilon},   {"seed", cfg.train.seed}};
  j["mixup"] = {{"enabled", cfg.mixup.enabled},
                {"beta_alpha", cfg.mixup.beta_alpha},
                {"uniform_share", cfg.mixup.uniform_share},
                {"seed", cfg.mixup.seed}};
  j["frame"] = {{"window_len", cfg.frame.window_len},
                {"hop", cfg.frame.hop},
                {"n_fft", cfg.frame.n_fft},
                {"n_bands", cfg.frame.n_bands},
                {"f_min", cfg.frame.f_min},
                {"window", cfg.frame.window == spectra::Window::kHamming ? "hamming" : "rectangular"}};
  return j.dump(2) + "\n";
}

fs::path feature_path(const fs::path& dir, const std::string& entry_path, Kind kind) {
  fs::path rel(entry_path);
  if (rel.is_absolute()) rel = rel.relative_path();
  rel.replace_extension(".spec");
  return dir / spectra::to_string(kind) / rel;
}

std::vector<spectra::Spectrogram> load_features(const audio::Manifest& manifest,
                                                const std::vector<audio::ManifestEntry>& entries, Kind kind,
                                                const spectra::FrameParams& params, const fs::path& feature_dir) {
  std::vector<spectra::Spectrogram> out(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    if (!feature_dir.empty()) {
      const auto cached = feature_path(feature_dir, entries[i].path, kind);
      if (fs::is_regular_file(cached)) {
        auto spec = spectra::load_spectrogram(cached);
        if (spec.kind == kind && spec.params == params) {
          out[i] = std::move(spec);
          return;
        }
        spdlog::debug("ignoring stale feature file {}", cached.string());
      }
    }
    out[i] = spectra::extract(audio::read_wav(manifest.resolve(entries[i])), kind, params);
    out[i].source_id = entries[i].path;
  });
  return out;
}

ExtractSummary extract_features(const audio::Manifest& manifest, const std::vector<Kind>& kinds,
                                const spectra::FrameParams& params, const fs::path& out_dir, bool force) {
  params.validate();
  const auto& entries = manifest.entries;
  std::vector<int> written(entries.size(), 0), skipped(entries.size(), 0);
  std::vector<std::string> failure(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    std::vector<Kind> todo;
    for (auto k : kinds) {
      if (!force && fs::is_regular_file(feature_path(out_dir, entries[i].path, k))) {
        ++skipped[i];
      } else {
        todo.push_back(k);
      }
    }
    if (todo.empty()) return;
    try {
      const auto clip = audio::read_wav(manifest.resolve(entries[i]));
      for (auto k : todo) {
        auto spec = spectra::extract(clip, k, params);
        spec.source_id = entries[i].path;
        const auto path = feature_path(out_dir, entries[i].path, k);
        fs::create_directories(path.parent_path());
        spectra::save_spectrogram(path, spec);
        ++written[i];
      }
    } catch (const DecodeError& e) {
      failure[i] = entries[i].path + ": " + e.what();
    } catch (const UnsupportedFormat& e) {
      failure[i] = entries[i].path + ": " + e.what();
    } catch (const TooShort& e) {
      failure[i] = entries[i].path + ": " + e.what();
    } catch (const IoError& e) {
      failure[i] = entries[i].path + ": " + e.what();
    }
  });
  ExtractSummary s;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    s.written += written[i];
    s.skipped += skipped[i];
    if (!failure[i].empty()) s.failures.push_back(failure[i]);
  }
  return s;
}

std::vector<patchlab::Patch> make_patches(const audio::Manifest& manifest,
                                          const std::vector<audio::ManifestEntry>& entries,
                                          const std::vector<spectra::Spectrogram>& specs,
                                          const models::NormStats& stats) {
  if (entries.size() != specs.size()) throw AlignError("entries and spectrograms differ in count");
  const int c = int(manifest.categories.size());
  std::vector<patchlab::Patch> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto patches = patchlab::split_patches(specs[i], manifest.categories.index_of(entries[i].label), c);
    for (auto& p : patches) {
      p.file_id = entries[i].path;
      models::normalize(p, stats);
      out.push_back(std::move(p));
    }
  }
  return out;
}

TrainedModel train_kind(const audio::Manifest& manifest, Kind kind, models::Architecture arch,
                        const nn::TrainConfig& train, const patchlab::MixupConfig& mixup,
                        const spectra::FrameParams& params, const fs::path& feature_dir,
                        const std::function<void(const models::EpochLog&)>& on_epoch,
                        const std::function<bool(const models::EpochLog&)>& stop_after) {
  const auto entries = manifest.split(audio::Split::kTrain);
  if (entries.empty()) throw EmptyError("manifest has no train entries");
  const auto specs = load_features(manifest, entries, kind, params, feature_dir);
  models::ModelConfig mc;
  mc.architecture = arch;
  mc.n_classes = int(manifest.categories.size());
  mc.kind = kind;
  mc.train = train;
  mc.stats = models::fit_stats(specs);
  auto patches = make_patches(manifest, entries, specs, mc.stats);
  TrainedModel out{models::make_model(mc), {}};
  out.result = models::train(out.model.net, patches, train, mixup, on_epoch, stop_after);
  return out;
}

std::string tree_checksum(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = 14695981039346656037ULL;
  auto feed = [&h](const char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= std::uint8_t(p[i]);
      h *= 1099511628211ULL;
    }
  };
  std::vector<char> buf(1 << 16);
  for (const auto& rel : files) {
    const auto name = rel.generic_string();
    feed(name.c_str(), name.size() + 1);
    std::ifstream in(dir / rel, std::ios::binary);
    while (in) {
      in.read(buf.data(), std::streamsize(buf.size()));
      feed(buf.data(), std::size_t(in.gcount()));
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace asckit::pipeline
