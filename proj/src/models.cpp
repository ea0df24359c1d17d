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

#include "asckit/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "asckit/error.hpp"
#include "asckit/nn/loss.hpp"

namespace asckit::models {

using nn::Shape;
using nn::TraceEntry;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string trace_str(const std::vector<TraceEntry>& t) {
  std::string s;
  for (const auto& e : t) s += e.block + nn::shape_str(e.shape) + " ";
  return s;
}

bool same_trace(const std::vector<TraceEntry>& a, const std::vector<TraceEntry>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].block != b[i].block || a[i].shape != b[i].shape) return false;
  }
  return true;
}

// Conv - ReLU - Bn [- pool] [- gap] - dropout, optionally preceded by an input Bn.
template <typename T>
std::unique_ptr<nn::Sequential<T>> conv_block(const std::string& name, bool input_bn, int cin,
                                              int cout, int kh, int kw, int pool_h, int pool_w,
                                              bool gap, double drop) {
  auto block = std::make_unique<nn::Sequential<T>>(name, true);
  if (input_bn) block->template emplace<nn::BatchNorm<T>>("bn_in", cin);
  block->template emplace<nn::Conv2d<T>>("conv", kh, kw, cin, cout);
  block->template emplace<nn::ReLU<T>>("relu");
  block->template emplace<nn::BatchNorm<T>>("bn", cout);
  if (pool_h > 0) block->template emplace<nn::AvgPool2d<T>>("pool", pool_h, pool_w);
  if (gap) block->template emplace<nn::GlobalAvgPool<T>>("gap");
  block->template emplace<nn::Dropout<T>>("drop", drop);
  return block;
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> dense_block(const std::string& name, int in, int units,
                                               double drop, bool softmax) {
  auto block = std::make_unique<nn::Sequential<T>>(name, true);
  block->template emplace<nn::Dense<T>>("fc", in, units);
  if (softmax) {
    block->template emplace<nn::Softmax<T>>("softmax");
  } else {
    block->template emplace<nn::ReLU<T>>("relu");
    block->template emplace<nn::Dropout<T>>("drop", drop);
  }
  return block;
}

template <typename T>
void verify_trace(const Network<T>& net, const std::vector<TraceEntry>& expected) {
  const auto got = net.trace();
  if (!same_trace(got, expected)) {
    throw ConfigError("architecture trace mismatch: got " + trace_str(got) + "expected " +
                      trace_str(expected));
  }
}

void check_classes(int n_classes) {
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
}

}  // namespace

std::string to_string(Architecture arch) { return arch == Architecture::kCdnn ? "cdnn" : "joint"; }

Architecture parse_architecture(const std::string& token) {
  if (token == "cdnn") return Architecture::kCdnn;
  if (token == "joint") return Architecture::kJoint;
  throw ConfigError("unknown architecture '" + token + "'");
}

template <typename T>
Network<T>::Network(Architecture arch, int n_classes, std::unique_ptr<nn::Sequential<T>> root,
                    Shape input_shape)
    : arch_(arch), n_classes_(n_classes), root_(std::move(root)), input_shape_(std::move(input_shape)) {
  root_->collect("", params_);
}

template <typename T>
std::size_t Network<T>::parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable || !trainable_only) n += p.tensor->size();
  }
  return n;
}

template <typename T>
void Network<T>::zero_grad() {
  for (const auto& p : params_) {
    if (p.trainable) p.tensor->zero_grad();
  }
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  root_->initialize(rng);
  root_->reseed(mix(seed, 0xD80));
}

template <typename T>
std::vector<TraceEntry> Network<T>::trace() const {
  std::vector<TraceEntry> out;
  root_->trace(input_shape_, out);
  return out;
}

std::vector<TraceEntry> expected_cdnn_trace(int c) {
  const std::size_t n = std::size_t(c);
  return {{"vgcv1", {64, 64, 32}},   {"vgcv2", {32, 32, 64}},   {"vgcv3", {32, 32, 128}},
          {"vgcv4", {16, 16, 128}},  {"vgcv5", {16, 16, 256}},  {"vgcv6", {256}},
          {"vgfl1", {512}},          {"vgfl2", {1024}},         {"vgfl3", {n}}};
}

std::vector<TraceEntry> expected_crnn_trace() {
  return {{"recv1", {64, 128, 32}}, {"recv2", {32, 128, 64}}, {"recv3", {16, 128, 128}},
          {"recv4", {128, 256}},    {"rebigru", {128, 256}},  {"reglav", {128}}};
}

std::vector<TraceEntry> expected_joint_trace(int c) {
  auto t = expected_cdnn_trace(c);
  t.resize(6);
  for (auto& e : expected_crnn_trace()) t.push_back(e);
  const std::size_t n = std::size_t(c);
  t.push_back({"concat", {384}});
  t.push_back({"refl1", {2048}});
  t.push_back({"refl2", {1024}});
  t.push_back({"refl3", {n}});
  return t;
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> build_cnn_branch() {
  auto cnn = std::make_unique<nn::Sequential<T>>("cnn");
  cnn->add("vgcv1", conv_block<T>("vgcv1", true, 1, 32, 9, 9, 2, 2, false, 0.10));
  cnn->add("vgcv2", conv_block<T>("vgcv2", false, 32, 64, 7, 7, 2, 2, false, 0.15));
  cnn->add("vgcv3", conv_block<T>("vgcv3", false, 64, 128, 5, 5, 0, 0, false, 0.20));
  cnn->add("vgcv4", conv_block<T>("vgcv4", false, 128, 128, 5, 5, 2, 2, false, 0.20));
  cnn->add("vgcv5", conv_block<T>("vgcv5", false, 128, 256, 3, 3, 0, 0, false, 0.25));
  cnn->add("vgcv6", conv_block<T>("vgcv6", false, 256, 256, 3, 3, 0, 0, true, 0.25));
  return cnn;
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> build_crnn_branch() {
  auto crnn = std::make_unique<nn::Sequential<T>>("crnn");
  crnn->add("recv1", conv_block<T>("recv1", true, 1, 32, 4, 1, 2, 1, false, 0.10));
  crnn->add("recv2", conv_block<T>("recv2", false, 32, 64, 4, 1, 2, 1, false, 0.15));
  crnn->add("recv3", conv_block<T>("recv3", false, 64, 128, 4, 1, 2, 1, false, 0.20));
  auto last = conv_block<T>("recv4", false, 128, 256, 4, 1, 16, 1, false, 0.20);
  // Frequency is fully pooled away: 1 x 128 x 256 becomes a 128-step sequence.
  last->template emplace<nn::Reshape<T>>("to_sequence", Shape{128, 256});
  crnn->add("recv4", std::move(last));
  auto gru = std::make_unique<nn::Sequential<T>>("rebigru", true);
  gru->template emplace<nn::BiGru<T>>("bigru", 256, 128, 0.30);
  crnn->add("rebigru", std::move(gru));
  auto glav = std::make_unique<nn::Sequential<T>>("reglav", true);
  glav->template emplace<nn::FeatureMean<T>>("mean");
  crnn->add("reglav", std::move(glav));
  return crnn;
}

template <typename T>
Network<T> build_cdnn(int n_classes, std::uint64_t seed) {
  check_classes(n_classes);
  auto root = std::make_unique<nn::Sequential<T>>("cdnn");
  auto cnn = build_cnn_branch<T>();
  root->add("cnn", std::move(cnn));
  root->add("vgfl1", dense_block<T>("vgfl1", 256, 512, 0.30, false));
  root->add("vgfl2", dense_block<T>("vgfl2", 512, 1024, 0.30, false));
  root->add("vgfl3", dense_block<T>("vgfl3", 1024, n_classes, 0.0, true));
  Network<T> net(Architecture::kCdnn, n_classes, std::move(root), Shape{128, 128, 1});
  verify_trace(net, expected_cdnn_trace(n_classes));
  net.initialize(seed);
  return net;
}

template <typename T>
Network<T> build_joint(int n_classes, std::uint64_t seed) {
  check_classes(n_classes);
  auto root = std::make_unique<nn::Sequential<T>>("joint");
  auto concat = std::make_unique<nn::ParallelConcat<T>>("concat", true);
  concat->add_branch(build_cnn_branch<T>());
  concat->add_branch(build_crnn_branch<T>());
  root->add("concat", std::move(concat));
  root->add("refl1", dense_block<T>("refl1", 384, 2048, 0.30, false));
  root->add("refl2", dense_block<T>("refl2", 2048, 1024, 0.30, false));
  root->add("refl3", dense_block<T>("refl3", 1024, n_classes, 0.0, true));
  Network<T> net(Architecture::kJoint, n_classes, std::move(root), Shape{128, 128, 1});
  verify_trace(net, expected_joint_trace(n_classes));
  net.initialize(seed);
  return net;
}

template <typename T>
Network<T> build(Architecture arch, int n_classes, std::uint64_t seed) {
  return arch == Architecture::kCdnn ? build_cdnn<T>(n_classes, seed) : build_joint<T>(n_classes, seed);
}

void NormStats::validate() const {
  if (mean.size() != 128 || std.size() != 128) throw ConfigError("normalization stats must have 128 bins");
  for (double s : std) {
    if (!(s > 0.0)) throw ConfigError("normalization std must be positive");
  }
}

NormStats fit_stats(const std::vector<spectra::Spectrogram>& train) {
  if (train.empty()) throw ConfigError("fit_stats needs at least one spectrogram");
  std::vector<double> sum(128, 0.0), sq(128, 0.0);
  double count = 0.0;
  for (const auto& s : train) {
    if (s.bands() != 128) throw ShapeError("fit_stats expects 128-band spectrograms");
    for (int f = 0; f < 128; ++f) sum[f] += s.data.row(f).sum();
    count += s.frames();
  }
  NormStats stats;
  stats.mean.resize(128);
  stats.std.resize(128);
  for (int f = 0; f < 128; ++f) stats.mean[f] = sum[f] / count;
  for (const auto& s : train) {
    for (int f = 0; f < 128; ++f) sq[f] += (s.data.row(f).array() - stats.mean[f]).square().sum();
  }
  for (int f = 0; f < 128; ++f) stats.std[f] = std::max(std::sqrt(sq[f] / count), NormStats::kStdFloor);
  return stats;
}

void normalize(patchlab::Patch& patch, const NormStats& stats) {
  constexpr int n = patchlab::kPatchSize;
  if (patch.data.size() != std::size_t(n) * n) throw ShapeError("normalize expects a 128x128 patch");
  for (int f = 0; f < n; ++f) {
    const double m = stats.mean.at(f), s = std::max(stats.std.at(f), NormStats::kStdFloor);
    double* row = patch.data.data() + std::size_t(f) * n;
    for (int t = 0; t < n; ++t) row[t] = (row[t] - m) / s;
  }
}

patchlab::Patch normalized(patchlab::Patch patch, const NormStats& stats) {
  normalize(patch, stats);
  return patch;
}

void ModelConfig::validate() const {
  check_classes(n_classes);
  train.validate();
  stats.validate();
}

Model make_model(const ModelConfig& config) {
  config.validate();
  return Model{config, build<float>(config.architecture, config.n_classes, config.train.seed)};
}

nn::Tensor<float> stack_patches(const std::vector<patchlab::Patch>& patches, std::size_t begin,
                                std::size_t count) {
  constexpr std::size_t n = patchlab::kPatchSize;
  nn::Tensor<float> x({count, n, n, 1});
  for (std::size_t i = 0; i < count; ++i) {
    const auto& p = patches.at(begin + i);
    if (p.data.size() != n * n) throw ShapeError("patch is not 128x128");
    std::transform(p.data.begin(), p.data.end(), x.data() + i * n * n, [](double v) { return float(v); });
  }
  return x;
}

std::vector<std::vector<double>> predict_patches(Network<float>& net,
                                                 const std::vector<patchlab::Patch>& patches,
                                                 std::size_t chunk) {
  std::vector<std::vector<double>> out;
  out.reserve(patches.size());
  for (std::size_t start = 0; start < patches.size(); start += chunk) {
    const std::size_t count = std::min(chunk, patches.size() - start);
    auto probs = net.forward(stack_patches(patches, start, count), nn::Mode::kEval);
    const std::size_t c = probs.shape.back();
    for (std::size_t i = 0; i < count; ++i) {
      out.emplace_back(probs.data() + i * c, probs.data() + (i + 1) * c);
    }
  }
  return out;
}

double accuracy(Network<float>& net, const std::vector<patchlab::Patch>& patches) {
  if (patches.empty()) return 0.0;
  const auto probs = predict_patches(net, patches);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto& p = probs[i];
    const int pred = int(std::max_element(p.begin(), p.end()) - p.begin());
    if (pred == patches[i].hard_label()) ++correct;
  }
  return double(correct) / double(patches.size());
}

TrainResult train(Network<float>& net, const std::vector<patchlab::Patch>& patches,
                  const nn::TrainConfig& config, const patchlab::MixupConfig& mixup,
                  const std::function<void(const EpochLog&)>& on_epoch,
                  const std::function<bool(const EpochLog&)>& stop_after) {
  config.validate();
  mixup.validate();
  if (patches.size() < std::size_t(config.batch_size)) {
    throw ConfigError("training needs at least batch_size=" + std::to_string(config.batch_size) +
                      " patches, got " + std::to_string(patches.size()));
  }
  for (const auto& p : patches) {
    if (p.label.size() != std::size_t(net.n_classes())) throw ShapeError("patch label width != n_classes");
  }
  const auto pool = patchlab::oversample(patches, mix(config.seed, 1));
  nn::Adam<float> adam(config);
  const auto& params = net.params();
  const std::size_t c = std::size_t(net.n_classes());
  const std::size_t bs = std::size_t(config.batch_size);

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::mt19937_64 shuffle_rng(mix(config.seed, 1000 + std::uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    net.reseed(mix(config.seed, 2000000 + std::uint64_t(epoch)));

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::size_t count = std::min(bs, order.size() - start);
      count -= count % 2;  // mixup pairs
      if (count < 2) break;
      std::vector<patchlab::Patch> batch;
      batch.reserve(count);
      for (std::size_t i = 0; i < count; ++i) batch.push_back(pool[order[start + i]]);
      patchlab::MixupConfig mcfg = mixup;
      mcfg.seed = mix(mix(mixup.seed, std::uint64_t(epoch)), std::uint64_t(batches));
      batch = patchlab::mixup_batch(batch, mcfg);

      nn::Tensor<float> y({count, c});
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < c; ++j) y.values[i * c + j] = float(batch[i].label[j]);
      }
      net.zero_grad();
      auto pred = net.forward(stack_patches(batch, 0, count), nn::Mode::kTrain);
      nn::LossValue<float> loss;
      try {
        loss = nn::kl_loss(y, pred, params, config.l2_lambda);
      } catch (const LossError& e) {
        throw TrainError("epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) +
                         ": " + e.what());
      }
      if (!std::isfinite(loss.value)) {
        throw TrainError("loss diverged at epoch " + std::to_string(epoch) + " batch " +
                         std::to_string(batches));
      }
      net.backward(loss.grad);
      adam.step(params);
      loss_sum += loss.value / double(count);
      ++batches;
    }
    EpochLog log{epoch, batches ? loss_sum / batches : 0.0, accuracy(net, patches)};
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (stop_after && stop_after(log)) break;
  }
  return result;
}

std::string format_epoch_log(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,loss,train_acc\n";
  char buf[96];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f\n", e.epoch, e.loss, e.train_acc);
    out << buf;
  }
  return out.str();
}

std::string encode_checkpoint(const Model& model) {
  const auto& cfg = model.config;
  nlohmann::json registry = nlohmann::json::array();
  std::size_t floats = 0;
  for (const auto& p : model.net.params()) {
    registry.push_back({{"name", p.name}, {"shape", p.tensor->shape}});
    floats += p.tensor->size();
  }
  nlohmann::json header = {
      {"engine_version", kEngineVersion},
      {"architecture", to_string(cfg.architecture)},
      {"n_classes", cfg.n_classes},
      {"kind", spectra::to_string(cfg.kind)},
      {"stats", {{"mean", cfg.stats.mean}, {"std", cfg.stats.std}}},
      {"train",
       {{"learning_rate", cfg.train.learning_rate},
        {"batch_size", cfg.train.batch_size},
        {"epochs", cfg.train.epochs},
        {"l2_lambda", cfg.train.l2_lambda},
        {"adam_beta1", cfg.train.adam_beta1},
        {"adam_beta2", cfg.train.adam_beta2},
        {"adam_epsilon", cfg.train.adam_epsilon},
        {"seed", cfg.train.seed}}},
      {"params", registry}};
  std::string out = "ASCK1\n" + header.dump() + "\n";
  const std::size_t offset = out.size();
  out.resize(offset + floats * sizeof(float));
  char* dst = out.data() + offset;
  for (const auto& p : model.net.params()) {
    std::memcpy(dst, p.tensor->data(), p.tensor->size() * sizeof(float));
    dst += p.tensor->size() * sizeof(float);
  }
  return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(model);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Model decode_checkpoint(const std::string& bytes) {
  if (bytes.rfind("ASCK1\n", 0) != 0) throw CheckpointError("missing ASCK1 magic");
  const std::size_t eol = bytes.find('\n', 6);
  if (eol == std::string::npos) throw CheckpointError("unterminated checkpoint header");
  nlohmann::json header;
  ModelConfig cfg;
  try {
    header = nlohmann::json::parse(bytes.substr(6, eol - 6));
    const int version = header.at("engine_version").get<int>();
    if (version != kEngineVersion) {
      throw CheckpointError("checkpoint engine version " + std::to_string(version) +
                            " does not match " + std::to_string(kEngineVersion));
    }
    cfg.architecture = parse_architecture(header.at("architecture").get<std::string>());
    cfg.n_classes = header.at("n_classes").get<int>();
    cfg.kind = spectra::parse_kind(header.at("kind").get<std::string>());
    cfg.stats.mean = header.at("stats").at("mean").get<std::vector<double>>();
    cfg.stats.std = header.at("stats").at("std").get<std::vector<double>>();
    const auto& t = header.at("train");
    cfg.train.learning_rate = t.at("learning_rate").get<double>();
    cfg.train.batch_size = t.at("batch_size").get<int>();
    cfg.train.epochs = t.at("epochs").get<int>();
    cfg.train.l2_lambda = t.at("l2_lambda").get<double>();
    cfg.train.adam_beta1 = t.at("adam_beta1").get<double>();
    cfg.train.adam_beta2 = t.at("adam_beta2").get<double>();
    cfg.train.adam_epsilon = t.at("adam_epsilon").get<double>();
    cfg.train.seed = t.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  } catch (const KindError& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }

  Model model{cfg, build<float>(cfg.architecture, cfg.n_classes, cfg.train.seed)};
  const auto& params = model.net.params();
  const auto& registry = header.at("params");
  if (registry.size() != params.size()) throw CheckpointError("parameter registry size mismatch");
  std::size_t floats = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto name = registry[i].at("name").get<std::string>();
    const auto shape = registry[i].at("shape").get<Shape>();
    if (name != params[i].name || shape != params[i].tensor->shape) {
      throw CheckpointError("parameter " + std::to_string(i) + " (" + name + ") does not match the graph");
    }
    floats += params[i].tensor->size();
  }
  if (bytes.size() - eol - 1 != floats * sizeof(float)) {
    throw CheckpointError("checkpoint blob has " + std::to_string(bytes.size() - eol - 1) +
                          " bytes, expected " + std::to_string(floats * sizeof(float)));
  }
  const char* src = bytes.data() + eol + 1;
  for (const auto& p : params) {
    std::memcpy(p.tensor->data(), src, p.tensor->size() * sizeof(float));
    src += p.tensor->size() * sizeof(float);
  }
  model.net.root().mark_stats_loaded();
  return model;
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

template class Network<float>;
template class Network<double>;
template std::unique_ptr<nn::Sequential<float>> build_cnn_branch<float>();
template std::unique_ptr<nn::Sequential<double>> build_cnn_branch<double>();
template std::unique_ptr<nn::Sequential<float>> build_crnn_branch<float>();
template std::unique_ptr<nn::Sequential<double>> build_crnn_branch<double>();
template Network<float> build_cdnn<float>(int, std::uint64_t);
template Network<double> build_cdnn<double>(int, std::uint64_t);
template Network<float> build_joint<float>(int, std::uint64_t);
template Network<double> build_joint<double>(int, std::uint64_t);
template Network<float> build<float>(Architecture, int, std::uint64_t);
template Network<double> build<double>(Architecture, int, std::uint64_t);

}  // namespace asckit::models
