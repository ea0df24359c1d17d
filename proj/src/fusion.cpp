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

#include "asckit/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "asckit/error.hpp"
#include "asckit/pipeline.hpp"
#include "asckit/patchlab.hpp"

namespace asckit::fusion {

using spectra::Kind;

ProbVector patch_mean(const std::vector<std::vector<double>>& patch_probs, const std::string& file_id,
                      std::optional<Kind> kind) {
  if (patch_probs.empty()) throw EmptyError("patch_mean of zero patches for '" + file_id + "'");
  const std::size_t c = patch_probs.front().size();
  ProbVector out;
  out.probs.assign(c, 0.0);
  out.file_id = file_id;
  if (kind) out.kinds.push_back(*kind);
  for (const auto& row : patch_probs) {
    if (row.size() != c) throw AlignError("patch posteriors of differing width");
    for (std::size_t j = 0; j < c; ++j) out.probs[j] += row[j];
  }
  for (double& v : out.probs) v /= double(patch_probs.size());
  return out;
}

Prediction predict(const std::vector<double>& probs) {
  Prediction p;
  for (std::size_t j = 1; j < probs.size(); ++j) {
    if (probs[j] > probs[std::size_t(p.index)]) p.index = int(j);
  }
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (int(j) != p.index && probs[j] == probs[std::size_t(p.index)]) p.tie = true;
  }
  if (p.tie) spdlog::debug("argmax tie resolved to index {}", p.index);
  return p;
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kMean: return "mean";
    case Strategy::kProd: return "prod";
    case Strategy::kMax: return "max";
  }
  return "?";
}

Strategy parse_strategy(const std::string& token) {
  if (token == "mean") return Strategy::kMean;
  if (token == "prod") return Strategy::kProd;
  if (token == "max") return Strategy::kMax;
  throw ConfigError("unknown fusion strategy '" + token + "' (expected mean, prod or max)");
}

std::vector<double> fuse(const std::vector<std::vector<double>>& rows, Strategy strategy) {
  if (rows.empty()) throw EmptyError("fuse needs at least one system");
  const std::size_t c = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != c) throw AlignError("systems disagree on the number of categories");
  }
  const double s = double(rows.size());
  std::vector<double> out(c);
  for (std::size_t j = 0; j < c; ++j) {
    switch (strategy) {
      case Strategy::kMean: {
        double acc = 0.0;
        for (const auto& r : rows) acc += r[j];
        out[j] = acc / s;
        break;
      }
      case Strategy::kProd: {
        double acc = 1.0;
        for (const auto& r : rows) acc *= std::max(r[j], kProdFloor);
        out[j] = acc / s;
        break;
      }
      case Strategy::kMax: {
        double acc = rows.front()[j];
        for (const auto& r : rows) acc = std::max(acc, r[j]);
        out[j] = acc;
        break;
      }
    }
  }
  return out;
}

ProbVector fuse(const std::vector<ProbVector>& systems, Strategy strategy) {
  if (systems.empty()) throw EmptyError("fuse needs at least one system");
  std::vector<std::vector<double>> rows;
  ProbVector out;
  out.level = Level::kFused;
  out.file_id = systems.front().file_id;
  for (const auto& sys : systems) {
    if (sys.file_id != out.file_id) {
      throw AlignError("cannot fuse '" + sys.file_id + "' with '" + out.file_id + "'");
    }
    rows.push_back(sys.probs);
    out.kinds.insert(out.kinds.end(), sys.kinds.begin(), sys.kinds.end());
  }
  out.probs = fuse(rows, strategy);
  return out;
}

std::vector<std::vector<Kind>> standard_combinations() {
  return {{Kind::kCqt, Kind::kStft},
          {Kind::kCqt, Kind::kGam},
          {Kind::kCqt, Kind::kLogMel},
          {Kind::kCqt, Kind::kMfcc},
          {Kind::kCqt, Kind::kLogMel, Kind::kGam},
          {Kind::kCqt, Kind::kGam, Kind::kMfcc},
          {Kind::kCqt, Kind::kGam, Kind::kStft, Kind::kMfcc},
          {Kind::kCqt, Kind::kGam, Kind::kStft, Kind::kLogMel},
          {Kind::kCqt, Kind::kLogMel, Kind::kGam, Kind::kStft, Kind::kMfcc}};
}

std::string combination_name(const std::vector<Kind>& kinds) {
  std::string out;
  for (Kind k : kinds) out += (out.empty() ? "" : "+") + spectra::to_string(k);
  return out;
}

EvalReport build_report(const std::vector<std::string>& categories, const std::vector<int>& truth,
                        const std::vector<std::vector<double>>& probs,
                        const std::vector<std::optional<std::string>>& devices) {
  if (truth.size() != probs.size()) throw AlignError("labels and posteriors differ in length");
  if (!devices.empty() && devices.size() != truth.size()) throw AlignError("device list length mismatch");
  const std::size_t c = categories.size();
  EvalReport r;
  r.categories = categories;
  r.confusion.assign(c, std::vector<int>(c, 0));
  int correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (probs[i].size() != c) throw AlignError("posterior width does not match the category count");
    const auto p = predict(probs[i]);
    r.ties += p.tie ? 1 : 0;
    r.confusion.at(std::size_t(truth[i]))[std::size_t(p.index)] += 1;
    const bool hit = p.index == truth[i];
    correct += hit ? 1 : 0;
    if (!devices.empty() && devices[i]) {
      auto& d = r.devices[*devices[i]];
      d.first += hit ? 1 : 0;
      d.second += 1;
    }
  }
  r.accuracy = truth.empty() ? 0.0 : double(correct) / double(truth.size());
  r.per_category.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    int total = 0;
    for (int v : r.confusion[k]) total += v;
    r.per_category[k] = total ? double(r.confusion[k][k]) / total : 0.0;
  }
  if (r.ties > 0) spdlog::info("{} file(s) had tied posteriors", r.ties);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::json j = {{"system", system},
                      {"strategy", strategy ? to_string(*strategy) : "none"},
                      {"accuracy", accuracy},
                      {"categories", categories},
                      {"per_category", per_category},
                      {"confusion", confusion},
                      {"ties", ties}};
  nlohmann::json dev = nlohmann::json::object();
  for (const auto& [name, ct] : devices) {
    dev[name] = {{"correct", ct.first}, {"total", ct.second},
                 {"accuracy", ct.second ? double(ct.first) / ct.second : 0.0}};
  }
  j["devices"] = dev;
  return j.dump(2);
}

std::string EvalReport::format_table() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s [%s] accuracy %.2f%%\n", system.c_str(),
                strategy ? to_string(*strategy).c_str() : "single", 100.0 * accuracy);
  out << buf;
  for (std::size_t k = 0; k < categories.size(); ++k) {
    std::snprintf(buf, sizeof buf, "  %-24s %6.2f%%\n", categories[k].c_str(), 100.0 * per_category[k]);
    out << buf;
  }
  for (const auto& [name, ct] : devices) {
    std::snprintf(buf, sizeof buf, "  device %-17s %6.2f%% (%d/%d)\n", name.c_str(),
                  ct.second ? 100.0 * ct.first / ct.second : 0.0, ct.first, ct.second);
    out << buf;
  }
  return out.str();
}

std::string EvalReport::per_category_csv() const {
  std::ostringstream out;
  out << "category,accuracy\n";
  char buf[64];
  for (std::size_t k = 0; k < categories.size(); ++k) {
    std::snprintf(buf, sizeof buf, ",%.6f\n", per_category[k]);
    out << categories[k] << buf;
  }
  return out.str();
}

std::vector<ProbVector> infer_files(models::Model& model, const audio::Manifest& manifest, audio::Split split,
                                    const spectra::FrameParams& params, const std::filesystem::path& feature_dir) {
  const auto entries = manifest.split(split);
  const int c = model.config.n_classes;
  if (std::size_t(c) != manifest.categories.size()) {
    throw ConfigError("model has " + std::to_string(c) + " classes but the manifest has " +
                      std::to_string(manifest.categories.size()));
  }
  const auto specs = pipeline::load_features(manifest, entries, model.config.kind, params, feature_dir);
  std::vector<ProbVector> out;
  out.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto patches = pipeline::make_patches(manifest, {entries[i]}, {specs[i]}, model.config.stats);
    out.push_back(patch_mean(models::predict_patches(model.net, patches), entries[i].path, model.config.kind));
  }
  return out;
}

std::vector<ProbVector> fuse_files(const std::vector<std::vector<ProbVector>>& systems, Strategy strategy) {
  if (systems.empty()) throw EmptyError("fuse_files needs at least one system");
  const std::size_t n = systems.front().size();
  for (const auto& s : systems) {
    if (s.size() != n) throw AlignError("systems cover different numbers of files");
  }
  std::vector<ProbVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<ProbVector> row;
    for (const auto& s : systems) row.push_back(s[i]);
    out.push_back(fuse(row, strategy));
  }
  return out;
}

std::vector<EvalReport> evaluate(const audio::Manifest& manifest, audio::Split split, const FileProbs& probs,
                                 const std::vector<std::vector<Kind>>& combinations,
                                 const std::vector<Strategy>& strategies) {
  const auto entries = manifest.split(split);
  std::vector<int> truth;
  std::vector<std::optional<std::string>> devices;
  for (const auto& e : entries) {
    truth.push_back(manifest.categories.index_of(e.label));
    devices.push_back(e.device);
  }
  for (const auto& [kind, rows] : probs) {
    if (rows.size() != entries.size()) throw AlignError(spectra::to_string(kind) + " posteriors do not cover the split");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].file_id != entries[i].path) {
        throw AlignError("posterior row '" + rows[i].file_id + "' does not match manifest file '" +
                         entries[i].path + "'");
      }
    }
  }
  auto rows_of = [](const std::vector<ProbVector>& v) {
    std::vector<std::vector<double>> out;
    for (const auto& p : v) out.push_back(p.probs);
    return out;
  };
  std::vector<EvalReport> reports;
  for (const auto& [kind, rows] : probs) {
    auto r = build_report(manifest.categories.names(), truth, rows_of(rows), devices);
    r.system = spectra::to_string(kind);
    reports.push_back(std::move(r));
  }
  for (const auto& combo : combinations) {
    std::vector<std::vector<ProbVector>> systems;
    for (Kind k : combo) {
      auto it = probs.find(k);
      if (it == probs.end()) throw ConfigError("no posteriors for kind " + spectra::to_string(k));
      systems.push_back(it->second);
    }
    for (Strategy s : strategies) {
      auto r = build_report(manifest.categories.names(), truth, rows_of(fuse_files(systems, s)), devices);
      r.system = combination_name(combo);
      r.strategy = s;
      reports.push_back(std::move(r));
    }
  }
  return reports;
}

std::vector<EvalReport> evaluate(const audio::Manifest& manifest, audio::Split split,
                                 std::map<Kind, models::Model*> models,
                                 const std::vector<std::vector<Kind>>& combinations,
                                 const std::vector<Strategy>& strategies) {
  for (const auto& combo : combinations) {
    for (Kind k : combo) {
      if (!models.count(k) || models[k] == nullptr) {
        throw ConfigError("combination " + combination_name(combo) + " needs a " + spectra::to_string(k) +
                          " model");
      }
    }
  }
  FileProbs probs;
  for (auto& [kind, model] : models) {
    if (model->config.kind != kind) {
      throw ConfigError("model registered for " + spectra::to_string(kind) + " was trained on " +
                        spectra::to_string(model->config.kind));
    }
    probs[kind] = infer_files(*model, manifest, split);
  }
  return evaluate(manifest, split, probs, combinations, strategies);
}

std::string format_probs(const std::vector<ProbVector>& rows) {
  std::ostringstream out;
  const std::size_t c = rows.empty() ? 0 : rows.front().probs.size();
  out << "file_id,kind";
  for (std::size_t j = 0; j < c; ++j) out << ",p_" << j;
  out << "\n";
  char buf[32];
  for (const auto& r : rows) {
    if (r.probs.size() != c) throw FormatError("rows of differing width cannot share one file");
    if (r.file_id.find_first_of(",\n") != std::string::npos) {
      throw FormatError("file id '" + r.file_id + "' contains a separator");
    }
    out << r.file_id << "," << combination_name(r.kinds);
    for (double v : r.probs) {
      std::snprintf(buf, sizeof buf, ",%.9f", v);
      out << buf;
    }
    out << "\n";
  }
  return out.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::vector<ProbVector> parse_probs(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty probability file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 4 || header[0] != "file_id" || header[1] != "kind") {
    throw FormatError("probability header must be file_id,kind,p_0,...");
  }
  const std::size_t c = header.size() - 2;
  std::vector<ProbVector> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != c + 2) {
      throw FormatError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(c + 2));
    }
    ProbVector p;
    p.file_id = cells[0];
    std::istringstream kinds(cells[1]);
    std::string k;
    try {
      while (std::getline(kinds, k, '+')) p.kinds.push_back(spectra::parse_kind(k));
    } catch (const KindError& e) {
      throw FormatError("row " + std::to_string(row) + ": " + e.what());
    }
    p.level = p.kinds.size() > 1 ? Level::kFused : Level::kFile;
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[j + 2], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[j + 2].size() || !std::isfinite(v)) {
        throw FormatError("row " + std::to_string(row) + ": bad probability '" + cells[j + 2] + "'");
      }
      p.probs.push_back(v);
    }
    out.push_back(std::move(p));
  }
  return out;
}

void dump_probs(const std::vector<ProbVector>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_probs(rows);
}

std::vector<ProbVector> load_probs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_probs(buf.str());
}

}  // namespace asckit::fusion
