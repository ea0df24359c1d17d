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

// Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "asckit/audio_io.hpp"
#include "asckit/error.hpp"
#include "asckit/fusion.hpp"
#include "asckit/models.hpp"
#include "asckit/nn/loss.hpp"
#include "asckit/patchlab.hpp"
#include "asckit/pipeline.hpp"
#include "asckit/spectra.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace asckit;
using namespace asckit::nn;
using asckit::testing::GradCheck;
using asckit::testing::projection;
using asckit::testing::random_tensor;
using spectra::Kind;
using spectra::Matrix;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 ------------------------------------------------------------------------

Matrix naive_stft(const std::vector<double>& x, int win, int hop, int n_fft) {
  const int frames = int((x.size() - win) / hop) + 1;
  const int bins = n_fft / 2 + 1;
  std::vector<double> w(static_cast<std::size_t>(win));
  for (int n = 0; n < win; ++n) w[std::size_t(n)] = 0.54 - 0.46 * std::cos(2 * kPi * n / win);
  // Twiddles indexed by (k * n) mod n_fft keep the O(N^2) sum cheap enough.
  std::vector<std::complex<double>> tw(static_cast<std::size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i) tw[std::size_t(i)] = std::polar(1.0, -2 * kPi * i / n_fft);
  Matrix out(bins, frames);
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      std::complex<double> acc = 0.0;
      for (int n = 0; n < win; ++n) {
        acc += x[std::size_t(t * hop + n)] * w[std::size_t(n)] * tw[std::size_t((std::int64_t(k) * n) % n_fft)];
      }
      out(k, t) = std::abs(acc);
    }
  }
  return out;
}

Outcome dsp_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto clip = testing::noise_clip(5000, 16000, 1000 + seed);
    const Matrix got = spectra::stft(clip, {});
    const Matrix want = naive_stft(clip.samples, 1290, 256, 2048);
    if (got.rows() != want.rows() || got.cols() != want.cols()) return {false, "shape mismatch"};
    worst = std::max(worst, (got - want).norm() / want.norm());
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 10.0, fmt("worst rel Frobenius %.2e over 20 clips, %.2f s", worst, secs)};
}

// 2 ------------------------------------------------------------------------

Outcome formulas() {
  const double mel = spectra::hz_to_mel(700.0);
  const double erb = spectra::erb(1000.0);
  const double q = spectra::CqtParams{}.q();
  const auto w = spectra::hamming(1290);
  const double endpoint = w.front(), peak = w[645];
  const double cqt_edge = spectra::cqt_window(0.54, 1001, 500.0);
  const double cqt_centre = spectra::cqt_window(0.54, 1001, 0.0);
  const bool ok = std::abs(mel - 781.17) <= 0.01 && std::abs(erb - 132.639) <= 0.001 && std::abs(q - 34.127) <= 0.001 &&
                  endpoint == 0.08 && peak == 1.0 && cqt_centre == 1.0 && std::abs(cqt_edge - 0.08) <= 1e-15;
  return {ok, fmt("mel(700)=%.4f ERB(1000)=%.4f Q=%.4f hamming[0]=%.17g peak=%.17g cqt(0)=%.17g cqt(edge)=%.17g",
                  mel, erb, q, endpoint, peak, cqt_centre, cqt_edge)};
}

// 3 ------------------------------------------------------------------------

Outcome dct() {
  const Matrix d = spectra::dct_matrix(64, 128);
  const double ortho = (d * d.transpose() - Matrix::Identity(64, 64)).cwiseAbs().maxCoeff();
  spectra::Spectrogram lm;
  lm.kind = Kind::kLogMel;
  lm.data = Matrix::Constant(128, 3, -1.75);
  const auto m = spectra::mfcc(lm);
  int worst_nonzero = 0, best_nonzero = 64;
  for (int t = 0; t < m.frames(); ++t) {
    int nz = 0;
    for (int k = 0; k < 64; ++k) nz += std::abs(m.data(k, t)) > 1e-9 ? 1 : 0;
    worst_nonzero = std::max(worst_nonzero, nz);
    best_nonzero = std::min(best_nonzero, nz);
  }
  return {ortho <= 1e-9 && worst_nonzero == 1 && best_nonzero == 1,
          fmt("max |D D^T - I| = %.2e; nonzero MFCCs of a constant frame: %d", ortho, worst_nonzero)};
}

// 4 ------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  std::map<std::string, double> errs;
  {
    Conv2d<double> conv(3, 3, 2, 3);
    testing::init(conv, 1);
    conv.bias().values = {0.1, -0.2, 0.3};
    GradCheck gc{conv};
    gc.objective = projection(5);
    errs["conv2d"] = gc.run(random_tensor({2, 5, 4, 2}, 2));
  }
  {
    BatchNorm<double> bn(3);
    bn.scale().values = {1.5, 0.7, -0.4};
    bn.shift().values = {0.1, 0.2, -0.3};
    GradCheck gc{bn};
    gc.objective = projection(6);
    errs["batchnorm"] = gc.run(random_tensor({3, 2, 2, 3}, 7));
  }
  {
    AvgPool2d<double> pool(2, 2);
    GradCheck gc{pool};
    gc.objective = projection(11);
    errs["avgpool"] = gc.run(random_tensor({2, 4, 6, 3}, 12));
    GlobalAvgPool<double> gap;
    GradCheck gg{gap};
    gg.objective = projection(15);
    errs["globalpool"] = gg.run(random_tensor({2, 3, 3, 4}, 16));
  }
  {
    Dense<double> dense(6, 4);
    testing::init(dense, 17);
    dense.bias().values = {0.1, 0.2, 0.3, 0.4};
    GradCheck gc{dense};
    gc.objective = projection(18);
    errs["dense"] = gc.run(random_tensor({3, 6}, 19));
  }
  {
    Softmax<double> softmax;
    Tensor<double> y_true({2, 3}, std::vector<double>{1, 0, 0, 0.2, 0.3, 0.5});
    GradCheck gc{softmax};
    gc.objective = [&](const Tensor<double>& y, Tensor<double>& g) {
      auto loss = kl_divergence(y_true, y);
      g = loss.grad;
      return loss.value;
    };
    errs["softmax+kl"] = gc.run(random_tensor({2, 3}, 29));
  }
  {
    BiGru<double> gru(3, 4, 0.0);
    testing::init(gru, 30);
    GradCheck gc{gru};
    gc.objective = projection(32);
    errs["bigru"] = gc.run(random_tensor({2, 5, 3}, 33));
  }
  {
    Sequential<double> net("mini");
    auto b1 = std::make_unique<Sequential<double>>("block1", true);
    b1->emplace<BatchNorm<double>>("bn_in", 1);
    b1->emplace<Conv2d<double>>("conv", 3, 3, 1, 3);
    b1->emplace<ReLU<double>>("relu");
    b1->emplace<BatchNorm<double>>("bn", 3);
    b1->emplace<AvgPool2d<double>>("pool", 2, 2);
    auto b2 = std::make_unique<Sequential<double>>("block2", true);
    b2->emplace<GlobalAvgPool<double>>("gap");
    b2->emplace<Dense<double>>("fc", 3, 3);
    b2->emplace<Softmax<double>>("softmax");
    net.add("block1", std::move(b1));
    net.add("block2", std::move(b2));
    testing::init(net, 34);
    Tensor<double> y_true({4, 3}, 0.0);
    for (int i = 0; i < 4; ++i) y_true.values[std::size_t(i * 3 + i % 3)] = 1.0;
    GradCheck gc{net};
    gc.objective = [&](const Tensor<double>& y, Tensor<double>& g) {
      auto loss = kl_divergence(y_true, y);
      g = loss.grad;
      return loss.value;
    };
    errs["two-block network"] = gc.run(random_tensor({4, 6, 6, 1}, 35));
  }
  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, e] : errs) {
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          fmt("%zu checks, worst rel err %.2e (%s), %.1f s", errs.size(), worst, worst_name.c_str(), secs)};
}

// 5 ------------------------------------------------------------------------

using Rows = std::vector<std::pair<std::string, Shape>>;

bool same_trace(const std::vector<TraceEntry>& got, const Rows& want, std::string& why) {
  if (got.size() != want.size()) {
    why = fmt("%zu rows instead of %zu", got.size(), want.size());
    return false;
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (got[i].block != want[i].first || got[i].shape != want[i].second) {
      why = "row " + got[i].block + " differs";
      return false;
    }
  }
  return true;
}

Outcome architectures() {
  // C-DNN classifier (10 classes), C-RNN branch and joint network (10 classes).
  const Rows cdnn = {{"vgcv1", {64, 64, 32}},  {"vgcv2", {32, 32, 64}}, {"vgcv3", {32, 32, 128}},
                     {"vgcv4", {16, 16, 128}}, {"vgcv5", {16, 16, 256}}, {"vgcv6", {256}},
                     {"vgfl1", {512}},         {"vgfl2", {1024}},       {"vgfl3", {10}}};
  const Rows crnn = {{"recv1", {64, 128, 32}},  {"recv2", {32, 128, 64}}, {"recv3", {16, 128, 128}},
                     {"recv4", {128, 256}},     {"rebigru", {128, 256}}, {"reglav", {128}}};
  Rows joint(cdnn.begin(), cdnn.begin() + 6);
  joint.insert(joint.end(), crnn.begin(), crnn.end());
  joint.insert(joint.end(), {{"concat", {384}}, {"refl1", {2048}}, {"refl2", {1024}}, {"refl3", {10}}});

  std::string why;
  std::vector<TraceEntry> branch;
  models::build_crnn_branch<float>()->trace({128, 128, 1}, branch);
  if (!same_trace(models::build_cdnn<float>(10).trace(), cdnn, why)) return {false, "C-DNN: " + why};
  if (!same_trace(branch, crnn, why)) return {false, "C-RNN: " + why};
  if (!same_trace(models::build_joint<float>(10).trace(), joint, why)) return {false, "joint: " + why};

  // Forward shapes must agree with the traces too.
  auto net = models::build_joint<float>(10);
  const auto y = net.forward(Tensor<float>({2, 128, 128, 1}, 0.5f), Mode::kTrain);
  return {y.shape == Shape{2, 10}, fmt("%zu + %zu + %zu rows match", cdnn.size(), crnn.size(), joint.size())};
}

// 6 ------------------------------------------------------------------------

patchlab::Patch random_patch(std::mt19937_64& rng, int c) {
  std::normal_distribution<double> g(0.0, 3.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  patchlab::Patch p;
  p.data.resize(128 * 128);
  for (auto& v : p.data) v = g(rng);
  double s = 0.0;
  p.label.resize(std::size_t(c));
  for (auto& v : p.label) s += (v = -std::log(1.0 - u(rng)));
  for (auto& v : p.label) v /= s;
  return p;
}

Outcome mixup() {
  std::mt19937_64 rng(2024);
  patchlab::MixupConfig cfg;
  cfg.seed = 77;
  const auto gammas = patchlab::mixup_gammas(1000, cfg);
  double worst_simplex = 0.0, worst_offset = 0.0;
  std::size_t exact = 0, total = 0;
  bool identity = true;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    const auto a = random_patch(rng, 4), b = random_patch(rng, 4);
    const auto [m1, m2] = patchlab::mix_pair(a, b, gammas[i]);
    for (const auto* lab : {&m1.label, &m2.label}) {
      double s = 0.0;
      for (double v : *lab) {
        s += v;
        if (v < 0.0) worst_simplex = std::max(worst_simplex, -v);
      }
      worst_simplex = std::max(worst_simplex, std::abs(s - 1.0));
    }
    const double g = gammas[i];
    for (std::size_t j = 0; j < a.data.size(); ++j) {
      const double x1 = a.data[j], x2 = b.data[j];
      ++total;
      exact += m1.data[j] + m2.data[j] == x1 + x2 ? 1 : 0;
      // Distance from the textbook convex combination, relative to the inputs.
      const double scale = std::abs(x1) + std::abs(x2);
      worst_offset = std::max(worst_offset, std::abs(m1.data[j] - (g * x1 + (1 - g) * x2)) / scale);
    }
    const auto [i1, i2] = patchlab::mix_pair(a, b, 1.0);
    identity = identity && i1.data == a.data && i2.data == b.data && i1.label == a.label && i2.label == b.label;
  }
  return {worst_simplex <= 1e-9 && exact == total && identity,
          fmt("label drift %.1e; X1+X2 conserved exactly in %zu of %zu elements (max offset from the convex "
              "combination %.1e relative); gamma=1 identity %s",
              worst_simplex, exact, total, worst_offset, identity ? "exact" : "broken")};
}

// 7 ------------------------------------------------------------------------

std::vector<double> simplex_row(std::mt19937_64& rng, int c) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> r(static_cast<std::size_t>(c));
  double s = 0.0;
  for (auto& v : r) s += (v = 1e-6 - std::log(1.0 - u(rng)));
  for (auto& v : r) v /= s;
  return r;
}

int argmax(const std::vector<double>& v) { return fusion::predict(v).index; }

Outcome fusion_invariants() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> systems(1, 5), classes(2, 10);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  int identity_bad = 0, scaling_bad = 0, closure_bad = 0;
  constexpr int kTuples = 10000;
  for (int t = 0; t < kTuples; ++t) {
    const int s = systems(rng), c = classes(rng);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < s; ++i) rows.push_back(simplex_row(rng, c));

    for (auto strat : {fusion::Strategy::kMean, fusion::Strategy::kProd, fusion::Strategy::kMax}) {
      if (fusion::fuse({rows.front()}, strat) != rows.front()) ++identity_bad;
    }
    auto scaled = rows;
    for (auto& r : scaled) {
      const double k = scale(rng);
      for (auto& v : r) v *= k;
    }
    if (argmax(fusion::fuse(rows, fusion::Strategy::kProd)) != argmax(fusion::fuse(scaled, fusion::Strategy::kProd))) {
      ++scaling_bad;
    }
    const auto mean = fusion::fuse(rows, fusion::Strategy::kMean);
    double sum = 0.0;
    bool negative = false;
    for (double v : mean) {
      sum += v;
      negative = negative || v < 0.0;
    }
    if (negative || std::abs(sum - 1.0) > 1e-12) ++closure_bad;
  }
  return {identity_bad == 0 && scaling_bad == 0 && closure_bad == 0,
          fmt("%d tuples; violations: S=1 identity %d, prod scaling %d, mean closure %d", kTuples, identity_bad,
              scaling_bad, closure_bad)};
}

// Shared synthetic corpus ----------------------------------------------------

struct Corpus {
  audio::Manifest manifest;
  fs::path features;
};

const Corpus& corpus() {
  static const Corpus c = [] {
    const auto dir = testing::scratch_dir("acceptance_corpus");
    audio::SynthSpec spec;  // 4 classes x 30 clips, seed 7
    Corpus out{audio::load_manifest(audio::synth_dataset(spec, dir / "corpus")), dir / "features"};
    const auto summary = pipeline::extract_features(out.manifest, {Kind::kLogMel, Kind::kCqt, Kind::kGam}, {},
                                                    out.features, false);
    if (!summary.failures.empty()) throw Error("feature extraction failed: " + summary.failures.front());
    return out;
  }();
  return c;
}

struct Run {
  pipeline::TrainedModel trained;
  std::vector<fusion::ProbVector> test_probs;
  double test_acc = 0.0;
};

double file_accuracy(const audio::Manifest& m, const std::vector<fusion::ProbVector>& probs) {
  const auto entries = m.split(audio::Split::kTest);
  int correct = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    correct += argmax(probs[i].probs) == m.categories.index_of(entries[i].label) ? 1 : 0;
  }
  return double(correct) / double(entries.size());
}

Run train_and_test(Kind kind, models::Architecture arch, std::uint64_t seed, int max_epochs,
                   const std::function<void(const models::EpochLog&)>& on_epoch = {}) {
  const auto& c = corpus();
  nn::TrainConfig train;
  train.learning_rate = 1e-3;
  train.batch_size = 10;
  train.epochs = max_epochs;
  train.seed = seed;
  patchlab::MixupConfig mix;
  mix.seed = seed + 2;
  Run run{pipeline::train_kind(c.manifest, kind, arch, train, mix, {}, c.features, on_epoch,
                               [](const models::EpochLog& e) { return e.train_acc >= 0.95; }),
          {}, 0.0};
  run.test_probs = fusion::infer_files(run.trained.model, c.manifest, audio::Split::kTest, {}, c.features);
  run.test_acc = file_accuracy(c.manifest, run.test_probs);
  return run;
}

// 8 ------------------------------------------------------------------------

Outcome learnability() {
  corpus();
  const auto t0 = Clock::now();
  const auto run = train_and_test(Kind::kLogMel, models::Architecture::kJoint, 3, 200, [&](const models::EpochLog& e) {
    std::fprintf(stderr, "  [8] epoch %d loss %.4f train_acc %.3f (%.0f s)\n", e.epoch, e.loss, e.train_acc,
                 seconds_since(t0));
  });
  const double secs = seconds_since(t0);
  const auto& last = run.trained.result.epochs.back();
  return {last.train_acc >= 0.95 && run.test_acc >= 0.8 && secs <= 900.0,
          fmt("joint/log-mel: train %.3f after %d epochs, test %.3f, %.0f s on %d thread(s)", last.train_acc,
              last.epoch + 1, run.test_acc, secs, 1)};
}

// 9 ------------------------------------------------------------------------

Outcome fusion_trend() {
  const auto& c = corpus();
  const std::vector<Kind> kinds = {Kind::kLogMel, Kind::kCqt, Kind::kGam};
  std::map<Kind, double> single;
  double two = 0.0, three = 0.0;
  std::string per_seed;
  for (std::uint64_t seed : {11, 12, 13}) {
    std::map<Kind, std::vector<fusion::ProbVector>> probs;
    for (auto k : kinds) {
      auto run = train_and_test(k, models::Architecture::kCdnn, seed, 60);
      std::fprintf(stderr, "  [9] seed %llu %s: %d epochs, test %.3f\n", static_cast<unsigned long long>(seed),
                   spectra::to_string(k).c_str(), int(run.trained.result.epochs.size()), run.test_acc);
      single[k] += run.test_acc / 3.0;
      probs[k] = std::move(run.test_probs);
    }
    const double a2 = file_accuracy(
        c.manifest, fusion::fuse_files({probs[Kind::kLogMel], probs[Kind::kCqt]}, fusion::Strategy::kProd));
    const double a3 = file_accuracy(
        c.manifest,
        fusion::fuse_files({probs[Kind::kLogMel], probs[Kind::kCqt], probs[Kind::kGam]}, fusion::Strategy::kProd));
    two += a2 / 3.0;
    three += a3 / 3.0;
    per_seed += fmt(" seed%llu(2=%.3f,3=%.3f)", static_cast<unsigned long long>(seed), a2, a3);
  }
  const double best = std::max(single[Kind::kLogMel], single[Kind::kCqt]);
  return {two >= best - 0.02 && three >= two - 0.02,
          fmt("mean test acc: logmel %.3f cqt %.3f gam %.3f | prod logmel+cqt %.3f | prod +gam %.3f |%s",
              single[Kind::kLogMel], single[Kind::kCqt], single[Kind::kGam], two, three, per_seed.c_str())};
}

// 10 -----------------------------------------------------------------------

Outcome reproducibility() {
  const auto dir = testing::scratch_dir("acceptance_repro");
  audio::SynthSpec spec;
  spec.n_classes = 2;
  spec.clips_per_class = 8;
  spec.seed = 21;
  const auto manifest = audio::load_manifest(audio::synth_dataset(spec, dir / "corpus"));
  nn::TrainConfig train;
  train.learning_rate = 1e-3;
  train.batch_size = 4;
  train.epochs = 3;
  train.seed = 8;
  patchlab::MixupConfig mix;
  mix.seed = 9;
  std::vector<std::string> logs;
  std::optional<pipeline::TrainedModel> kept;
  for (int r = 0; r < 2; ++r) {
    auto t = pipeline::train_kind(manifest, Kind::kLogMel, models::Architecture::kJoint, train, mix, {});
    logs.push_back(models::format_epoch_log(t.result.epochs));
    kept = std::move(t);
  }
  const bool same_logs = logs[0] == logs[1];

  const auto path = dir / "model.ckpt";
  models::save_checkpoint(kept->model, path);
  auto loaded = models::load_checkpoint(path);
  std::mt19937_64 rng(31);
  std::vector<patchlab::Patch> patches;
  for (int i = 0; i < 10; ++i) patches.push_back(random_patch(rng, 2));
  const auto x = models::stack_patches(patches, 0, patches.size());
  const auto y1 = kept->model.net.forward(x, Mode::kEval);
  const auto y2 = loaded.net.forward(x, Mode::kEval);
  const bool same_out = y1.shape == y2.shape && std::memcmp(y1.data(), y2.data(), y1.size() * sizeof(float)) == 0;
  return {same_logs && same_out, fmt("epoch logs %s (%zu bytes); round-trip outputs on 10 patches %s",
                                     same_logs ? "identical" : "differ", logs[0].size(),
                                     same_out ? "bit-identical" : "differ")};
}

// 11 -----------------------------------------------------------------------

Outcome kl_values() {
  Tensor<double> q({2, 3}, std::vector<double>{0.2, 0.3, 0.5, 0.6, 0.4, 0.0});
  const double self = kl_loss(q, q, std::vector<ParamRef<double>>{}, 0.0).value;
  const double ln2 = kl_divergence(Tensor<double>({1, 2}, std::vector<double>{1.0, 0.0}),
                                   Tensor<double>({1, 2}, std::vector<double>{0.5, 0.5}))
                         .value;
  Tensor<double> theta({1}, std::vector<double>{2.0});
  const double l2 = l2_penalty(std::vector<ParamRef<double>>{{"theta", &theta, true}}, 1e-4, false);
  return {self == 0.0 && std::abs(ln2 - std::log(2.0)) <= 1e-9 && std::abs(l2 - 2e-4) <= 1e-15,
          fmt("KL(y,y)=%g KL([1,0],[.5,.5])=%.12f L2=%.3g", self, ln2, l2)};
}

}  // namespace

int main(int argc, char** argv) {
  setenv("ASCKIT_THREADS", "1", 1);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"DSP oracle equivalence", dsp_oracle},
      {"formula spot checks", formulas},
      {"DCT orthonormality", dct},
      {"gradient suite", gradients},
      {"architecture fidelity", architectures},
      {"mixup invariants", mixup},
      {"fusion invariants", fusion_invariants},
      {"desk-scale learnability", learnability},
      {"fusion trend", fusion_trend},
      {"reproducibility and persistence", reproducibility},
      {"KL loss values", kl_values},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
