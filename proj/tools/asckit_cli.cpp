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

// asckit command-line tool. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "asckit/audio_io.hpp"
#include "asckit/error.hpp"
#include "asckit/fusion.hpp"
#include "asckit/models.hpp"
#include "asckit/pipeline.hpp"
#include "asckit/spectra.hpp"

namespace fs = std::filesystem;
using namespace asckit;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

struct SynthArgs {
  std::string spec_path;
  std::string out;
  std::optional<int> n_classes, clips_per_class, sample_rate;
  std::optional<double> clip_seconds;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  nlohmann::json j = nlohmann::json::object();
  if (!a.spec_path.empty()) {
    try {
      j = nlohmann::json::parse(read_text(a.spec_path));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("synth spec is not valid JSON: ") + e.what());
    }
  }
  if (a.n_classes) j["n_classes"] = *a.n_classes;
  if (a.clips_per_class) j["clips_per_class"] = *a.clips_per_class;
  if (a.sample_rate) j["sample_rate"] = *a.sample_rate;
  if (a.clip_seconds) j["clip_seconds"] = *a.clip_seconds;
  if (a.seed) j["seed"] = *a.seed;
  const auto spec = audio::synth_spec_from_json(j.dump());
  const auto manifest = audio::synth_dataset(spec, a.out);
  std::cout << manifest.string() << "\n";
  std::cout << "checksum " << pipeline::tree_checksum(a.out) << "\n";
  return kOk;
}

spectra::FrameParams frame_from(const std::string& config_path) {
  if (config_path.empty()) return {};
  return pipeline::load_run_config(config_path).frame;
}

struct ExtractArgs {
  std::string manifest, kinds = "all", out, config;
  bool force = false;
};

int cmd_extract(const ExtractArgs& a) {
  const auto kinds = spectra::parse_kinds(a.kinds);
  const auto params = frame_from(a.config);
  params.validate();
  const auto manifest = audio::load_manifest(a.manifest);
  const auto summary = pipeline::extract_features(manifest, kinds, params, a.out, a.force);
  std::cout << "wrote " << summary.written << " skipped " << summary.skipped << "\n";
  if (!summary.failures.empty()) {
    std::cerr << summary.failures.size() << " file(s) failed:\n";
    for (const auto& f : summary.failures) std::cerr << "  " << f << "\n";
    return kRuntime;
  }
  return kOk;
}

struct TrainArgs {
  std::string config, kind, kinds, arch;
};

int cmd_train(const TrainArgs& a) {
  auto cfg = pipeline::load_run_config(a.config);
  if (!a.arch.empty()) cfg.architecture = models::parse_architecture(a.arch);
  if (!a.kind.empty()) cfg.kinds = {spectra::parse_kind(a.kind)};
  if (!a.kinds.empty()) cfg.kinds = spectra::parse_kinds(a.kinds);
  cfg.validate();
  const auto manifest = audio::load_manifest(cfg.manifest);
  fs::create_directories(cfg.checkpoint_dir);
  fs::create_directories(cfg.report_dir);

  for (auto kind : cfg.kinds) {
    const std::string stem = spectra::to_string(kind) + "-" + models::to_string(cfg.architecture);
    spdlog::info("training {} on {}", models::to_string(cfg.architecture), spectra::to_string(kind));
    auto trained = pipeline::train_kind(
        manifest, kind, cfg.architecture, cfg.train, cfg.mixup, cfg.frame, cfg.feature_dir,
        [](const models::EpochLog& e) {
          spdlog::info("epoch {} loss {:.6f} train_acc {:.4f}", e.epoch, e.loss, e.train_acc);
        });
    const auto ckpt = cfg.checkpoint_dir / (stem + ".ckpt");
    const auto log = cfg.report_dir / (stem + "-epochs.csv");
    models::save_checkpoint(trained.model, ckpt);
    write_text(log, models::format_epoch_log(trained.result.epochs));
    char acc[32];
    std::snprintf(acc, sizeof acc, "%.6f", trained.result.epochs.back().train_acc);
    std::cout << spectra::to_string(kind) << " checkpoint " << ckpt.string() << "\n";
    std::cout << spectra::to_string(kind) << " epoch_log " << log.string() << "\n";
    std::cout << spectra::to_string(kind) << " final_train_acc " << acc << "\n";
  }
  return kOk;
}

struct InferArgs {
  std::string checkpoint, manifest, split = "test", out, kind, features, config;
};

int cmd_infer(const InferArgs& a) {
  const auto split = audio::parse_split(a.split);
  const auto params = frame_from(a.config);
  params.validate();
  auto model = models::load_checkpoint(a.checkpoint);
  if (!a.kind.empty() && spectra::parse_kind(a.kind) != model.config.kind) {
    throw KindError("checkpoint holds a " + spectra::to_string(model.config.kind) + " model, not " + a.kind);
  }
  const auto manifest = audio::load_manifest(a.manifest);
  const auto rows = fusion::infer_files(model, manifest, split, params, a.features);
  fusion::dump_probs(rows, a.out);
  std::cout << a.out << " " << rows.size() << " files\n";
  return kOk;
}

struct FuseArgs {
  std::vector<std::string> probs;
  std::string strategy = "prod", manifest, split = "test", out;
};

int cmd_fuse_eval(const FuseArgs& a) {
  const auto strategy = fusion::parse_strategy(a.strategy);
  const auto split = audio::parse_split(a.split);
  const auto manifest = audio::load_manifest(a.manifest);
  const auto entries = manifest.split(split);

  std::set<std::string> expected;
  for (const auto& e : entries) expected.insert(e.path);
  std::vector<std::map<std::string, fusion::ProbVector>> systems;
  for (const auto& path : a.probs) {
    std::map<std::string, fusion::ProbVector> by_id;
    for (auto& row : fusion::load_probs(path)) {
      const auto id = row.file_id;
      if (!by_id.emplace(id, std::move(row)).second) {
        throw AlignError(path + " lists " + id + " twice");
      }
    }
    std::vector<std::string> missing, extra;
    for (const auto& id : expected) {
      if (!by_id.count(id)) missing.push_back(id);
    }
    for (const auto& [id, row] : by_id) {
      if (!expected.count(id)) extra.push_back(id);
    }
    if (!missing.empty() || !extra.empty()) {
      std::cerr << "file_id sets differ between " << path << " and the " << a.split << " split:\n";
      for (const auto& id : missing) std::cerr << "  - " << id << "\n";
      for (const auto& id : extra) std::cerr << "  + " << id << "\n";
      return kRuntime;
    }
    systems.push_back(std::move(by_id));
  }

  std::vector<std::vector<fusion::ProbVector>> ordered(systems.size());
  std::vector<int> truth;
  std::vector<std::optional<std::string>> devices;
  for (const auto& e : entries) {
    for (std::size_t s = 0; s < systems.size(); ++s) ordered[s].push_back(systems[s].at(e.path));
    truth.push_back(manifest.categories.index_of(e.label));
    devices.push_back(e.device);
  }
  const bool single = ordered.size() == 1;
  const auto fused = single ? ordered.front() : fusion::fuse_files(ordered, strategy);
  std::vector<std::vector<double>> probs;
  for (const auto& f : fused) probs.push_back(f.probs);
  auto report = fusion::build_report(manifest.categories.names(), truth, probs, devices);
  report.system = fused.empty() ? std::string() : fusion::combination_name(fused.front().kinds);
  if (!single) report.strategy = strategy;

  if (a.out.empty()) {
    std::cout << report.to_json() << "\n";
  } else {
    write_text(a.out, report.to_json() + "\n");
    std::cout << report.format_table();
  }
  return kOk;
}

struct ImportArgs {
  std::string meta, split = "train", out;
  bool append = false;
};

int cmd_import_dcase(const ImportArgs& a) {
  auto entries = audio::import_dcase_meta(read_text(a.meta), audio::parse_split(a.split));
  if (a.append && fs::exists(a.out)) {
    auto existing = audio::parse_manifest(read_text(a.out)).entries;
    existing.insert(existing.end(), entries.begin(), entries.end());
    entries = std::move(existing);
  }
  audio::write_manifest(a.out, entries);
  std::cout << a.out << " " << entries.size() << " entries\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asckit: acoustic scene classification toolkit"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a deterministic synthetic scene corpus");
  c_synth->add_option("--spec", synth.spec_path, "Synth spec JSON")->check(CLI::ExistingFile);
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--n-classes", synth.n_classes, "Number of classes");
  c_synth->add_option("--clips-per-class", synth.clips_per_class, "Clips per class");
  c_synth->add_option("--clip-seconds", synth.clip_seconds, "Clip length in seconds");
  c_synth->add_option("--sample-rate", synth.sample_rate, "Sample rate in Hz");
  c_synth->add_option("--seed", synth.seed, "Corpus seed");

  ExtractArgs extract;
  auto* c_extract = app.add_subcommand("extract", "Extract SPEC1 feature files");
  c_extract->add_option("--manifest", extract.manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  c_extract->add_option("--kinds", extract.kinds, "Comma separated kinds or 'all'")->capture_default_str();
  c_extract->add_option("--out", extract.out, "Feature directory")->required();
  c_extract->add_option("--config", extract.config, "Run config (frame parameters)")->check(CLI::ExistingFile);
  c_extract->add_flag("--force", extract.force, "Rewrite existing feature files");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train one model per spectrogram kind");
  c_train->add_option("--config", train.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  auto* o_kind = c_train->add_option("--kind", train.kind, "Spectrogram kind");
  c_train->add_option("--kinds", train.kinds, "Train several kinds in turn")->excludes(o_kind);
  c_train->add_option("--arch", train.arch, "cdnn or joint");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Write file-level posteriors for one checkpoint");
  c_infer->add_option("--checkpoint", infer.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c_infer->add_option("--manifest", infer.manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  c_infer->add_option("--split", infer.split, "train or test")->capture_default_str()->check(CLI::IsMember({"train", "test"}));
  c_infer->add_option("--out", infer.out, "Probability CSV")->required();
  c_infer->add_option("--kind", infer.kind, "Expected checkpoint kind");
  c_infer->add_option("--features", infer.features, "Feature directory to reuse");
  c_infer->add_option("--config", infer.config, "Run config (frame parameters)")->check(CLI::ExistingFile);

  FuseArgs fuse;
  auto* c_fuse = app.add_subcommand("fuse-eval", "Fuse probability files and evaluate");
  c_fuse->add_option("--probs", fuse.probs, "Probability CSVs")->required()->check(CLI::ExistingFile);
  c_fuse->add_option("--strategy", fuse.strategy, "mean, prod or max")->capture_default_str();
  c_fuse->add_option("--manifest", fuse.manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  c_fuse->add_option("--split", fuse.split, "train or test")->capture_default_str()->check(CLI::IsMember({"train", "test"}));
  c_fuse->add_option("--out", fuse.out, "Report JSON (stdout when omitted)");

  ImportArgs import;
  auto* c_import = app.add_subcommand("import-dcase", "Convert a DCASE meta file to a manifest");
  c_import->add_option("--meta", import.meta, "Tab separated meta file")->required()->check(CLI::ExistingFile);
  c_import->add_option("--split", import.split, "train or test")->capture_default_str()->check(CLI::IsMember({"train", "test"}));
  c_import->add_option("--out", import.out, "Manifest CSV")->required();
  c_import->add_flag("--append", import.append, "Append to an existing manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("asckit"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_extract) return cmd_extract(extract);
    if (*c_train) return cmd_train(train);
    if (*c_infer) return cmd_infer(infer);
    if (*c_fuse) return cmd_fuse_eval(fuse);
    if (*c_import) return cmd_import_dcase(import);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const KindError& e) {
    std::cerr << "kind error: " << e.what() << "\n";
    return kUsage;
  } catch (const TrainError& e) {
    std::cerr << "training failed: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
