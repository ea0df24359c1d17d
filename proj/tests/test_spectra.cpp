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

#include <cmath>
#include <complex>
#include <numbers>

#include "asckit/error.hpp"
#include "asckit/spectra.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace asckit;
using spectra::Matrix;

namespace {

constexpr double kPi = std::numbers::pi;

// Per-frame O(N^2) DFT with an independently written window.
Matrix naive_stft(const std::vector<double>& x, int win, int hop, int n_fft, bool hamming) {
  const int frames = int((x.size() - win) / hop) + 1;
  const int bins = n_fft / 2 + 1;
  Matrix out(bins, frames);
  for (int t = 0; t < frames; ++t) {
    for (int k = 0; k < bins; ++k) {
      std::complex<double> acc = 0.0;
      for (int n = 0; n < win; ++n) {
        const double w = hamming ? 0.54 - 0.46 * std::cos(2 * kPi * n / win) : 1.0;
        acc += x[std::size_t(t * hop + n)] * w * std::polar(1.0, -2 * kPi * double(k) * n / n_fft);
      }
      out(k, t) = std::abs(acc);
    }
  }
  return out;
}

double rel_frobenius(const Matrix& a, const Matrix& b) { return (a - b).norm() / b.norm(); }

}  // namespace

TEST_CASE("stft agrees with a naive dft") {
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    const auto clip = testing::noise_clip(5000, 16000, seed);
    const Matrix got = spectra::stft(clip, {});
    const Matrix want = naive_stft(clip.samples, 1290, 256, 2048, true);
    REQUIRE(got.rows() == 1025);
    REQUIRE(got.cols() == 15);
    CHECK(rel_frobenius(got, want) <= 1e-6);
  }
}

TEST_CASE("stft frame count and zero signal") {
  spectra::FrameParams p;
  CHECK(p.frame_count(1290 + 2 * 256) == 3);
  CHECK(p.frame_count(441000) == 1718);
  CHECK(p.frame_count(1289) == 0);
  audio::AudioClip zero{std::vector<double>(1290 + 2 * 256, 0.0), 16000, "z", 0};
  const Matrix m = spectra::stft(zero, p);
  CHECK(m.rows() == 1025);
  CHECK(m.cols() == 3);
  CHECK(m.cwiseAbs().maxCoeff() == 0.0);
  zero.samples.resize(1000);
  CHECK_THROWS_AS(spectra::stft(zero, p), TooShort);
}

TEST_CASE("rectangular window puts a bin-centred cosine on its row") {
  spectra::FrameParams p;
  p.window = spectra::Window::kRectangular;
  const int k = 37;
  audio::AudioClip clip;
  clip.sample_rate = 16000;
  for (int n = 0; n < 3000; ++n) clip.samples.push_back(std::cos(2 * kPi * k * n / 2048.0));
  const Matrix m = spectra::stft(clip, p);
  for (int t = 0; t < m.cols(); ++t) {
    Eigen::Index row = 0;
    m.col(t).maxCoeff(&row);
    CHECK(row == k);
  }
  CHECK(rel_frobenius(m, naive_stft(clip.samples, 1290, 256, 2048, false)) <= 1e-6);
}

TEST_CASE("window endpoints") {
  const auto w = spectra::hamming(1290);
  CHECK(w[0] == 0.08);
  CHECK(w[645] == 1.0);
  CHECK(spectra::cqt_window(0.54, 101, 0.0) == 1.0);
  CHECK(spectra::cqt_window(0.54, 101, 50.0) == doctest::Approx(0.08).epsilon(1e-14));
  CHECK(spectra::cqt_window(0.54, 101, -50.0) == doctest::Approx(0.08).epsilon(1e-14));
}

TEST_CASE("rescale_freq") {
  Matrix ones = Matrix::Ones(1025, 3);
  CHECK((spectra::rescale_freq(ones).array() - 1.0).abs().maxCoeff() < 1e-15);

  Matrix ramp(1025, 1);
  for (int f = 0; f < 1025; ++f) ramp(f, 0) = f;
  const Matrix r = spectra::rescale_freq(ramp);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(127, 0) == doctest::Approx(1024.0).epsilon(1e-14));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  Matrix rnd(1025, 4);
  for (int i = 0; i < rnd.size(); ++i) rnd.data()[i] = u(rng);
  const Matrix got = spectra::rescale_freq(rnd);
  for (int i = 0; i < 128; ++i) {
    const double pos = i * 1024.0 / 127.0;
    const int lo = std::min(int(pos), 1023);
    const double a = pos - lo;
    for (int t = 0; t < 4; ++t) {
      const double want = rnd(lo, t) + a * (rnd(lo + 1, t) - rnd(lo, t));
      CHECK(std::abs(got(i, t) - want) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(spectra::rescale_freq(Matrix::Ones(100, 2)), ShapeError);
}

TEST_CASE("mel scale and filterbank") {
  CHECK(spectra::hz_to_mel(0.0) == 0.0);
  CHECK(spectra::hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-5));
  CHECK(std::abs(spectra::hz_to_mel(700.0) - 2595.0 * std::log10(2.0)) < 1e-12);
  CHECK(spectra::mel_to_hz(spectra::hz_to_mel(1234.5)) == doctest::Approx(1234.5));
  for (double fs : {16000.0, 22050.0, 44100.0}) {
    const auto bank = spectra::mel_filterbank(fs);
    REQUIRE(bank.weights.rows() == 128);
    REQUIRE(bank.weights.cols() == 1025);
    CHECK(bank.weights.minCoeff() >= 0.0);
    for (int r = 0; r < 128; ++r) {
      CHECK(std::abs(bank.weights.row(r).sum() - 1.0) <= 1e-9);
      CHECK(bank.weights.row(r).maxCoeff() > 0.0);
      if (r > 0) CHECK(bank.center_freqs[r] > bank.center_freqs[r - 1]);
    }
  }
  CHECK_THROWS_AS(spectra::mel_filterbank(16000, 2048, 2000), ConfigError);
  CHECK_THROWS_AS(spectra::mel_filterbank(16000, 2048, 128, 9000), ConfigError);
}

TEST_CASE("log mel composition, floor and gain law") {
  const auto clip = testing::noise_clip(8000, 16000, 9);
  const auto lm = spectra::log_mel(clip, {});
  const auto bank = spectra::mel_filterbank(16000);
  const Matrix lin = naive_stft(clip.samples, 1290, 256, 2048, true);
  const Matrix mel = bank.weights * lin;
  for (int i = 0; i < mel.size(); ++i) {
    CHECK(std::abs(lm.data.data()[i] - std::log10(std::max(mel.data()[i], 1e-10))) <= 1e-9);
  }

  audio::AudioClip zero{std::vector<double>(5000, 0.0), 16000, "z", 0};
  CHECK(spectra::log_mel(zero, {}).data.cwiseAbs().minCoeff() == 10.0);
  CHECK(spectra::gam(zero, {}).data.maxCoeff() == -10.0);

  audio::AudioClip loud = clip;
  for (auto& v : loud.samples) v *= 10.0;
  const auto lm10 = spectra::log_mel(loud, {});
  CHECK(((lm10.data - lm.data).array() - 1.0).abs().maxCoeff() < 1e-9);
  const auto g1 = spectra::gam(clip, {}), g10 = spectra::gam(loud, {});
  CHECK(((g10.data - g1.data).array() - 1.0).abs().maxCoeff() < 1e-9);
  const auto s1 = spectra::stft_spectrogram(clip, {}), s10 = spectra::stft_spectrogram(loud, {});
  CHECK(((s10.data - s1.data).array() - 1.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("dct matrix is orthonormal and matches the brute force sum") {
  const Matrix d = spectra::dct_matrix(64, 128);
  CHECK((d * d.transpose() - Matrix::Identity(64, 64)).cwiseAbs().maxCoeff() <= 1e-9);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  Matrix x(128, 128);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  const Matrix got = d * x;
  for (int k = 0; k < 64; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / 128) : std::sqrt(2.0 / 128);
    for (int t = 0; t < 128; t += 7) {
      double acc = 0.0;
      for (int i = 0; i < 128; ++i) acc += x(i, t) * std::cos(kPi * k * (2 * i + 1) / 256.0);
      CHECK(std::abs(got(k, t) - scale * acc) <= 1e-9);
    }
  }
}

TEST_CASE("mfcc of constant inputs") {
  spectra::Spectrogram lm;
  lm.kind = spectra::Kind::kLogMel;
  lm.data = Matrix::Constant(128, 5, -2.5);
  const auto m = spectra::mfcc(lm);
  REQUIRE(m.bands() == 128);
  CHECK(m.frames() == 5);
  for (int t = 0; t < 5; ++t) {
    CHECK(m.data(0, t) == doctest::Approx(-2.5 * std::sqrt(128.0)).epsilon(1e-12));
    int nonzero = 0;
    for (int k = 0; k < 64; ++k) nonzero += std::abs(m.data(k, t)) > 1e-9 ? 1 : 0;
    CHECK(nonzero == 1);
    CHECK(m.data.col(t).tail(64).cwiseAbs().maxCoeff() == 0.0);
  }
  lm.kind = spectra::Kind::kGam;
  CHECK_THROWS_AS(spectra::mfcc(lm), KindError);
}

TEST_CASE("mfcc deltas replicate the edges") {
  spectra::Spectrogram lm;
  lm.kind = spectra::Kind::kLogMel;
  lm.data.resize(128, 4);
  for (int t = 0; t < 4; ++t) lm.data.col(t).setConstant(double(t * t));
  const auto m = spectra::mfcc(lm);
  const double s = std::sqrt(128.0);
  CHECK(m.data(64, 0) == doctest::Approx(0.5 * (0 - 1) * s));
  CHECK(m.data(64, 1) == doctest::Approx(0.5 * (0 - 4) * s));
  CHECK(m.data(64, 3) == doctest::Approx(0.5 * (4 - 9) * s));
}

TEST_CASE("constant-q parameters") {
  spectra::CqtParams cp;
  CHECK(cp.q() == doctest::Approx(34.127).epsilon(1e-5));
  CHECK(std::abs(cp.q() - 34.127) <= 1e-3);
  CHECK(cp.center_freq(24) == doctest::Approx(20.0));
  CHECK(cp.center_freq(0) == 10.0);
  CHECK(cp.kernel_length(0, 16000) == int(std::lround(cp.q() * 1600)));
  audio::AudioClip clip = testing::noise_clip(5000, 500, 1);
  CHECK_THROWS_AS(spectra::cqt(clip, cp, {}), ConfigError);
}

TEST_CASE("cqt matches a brute force evaluation and locates tones") {
  spectra::CqtParams cp;
  const double fs = 2000;
  const auto clip = testing::tone_clip(8000, fs, cp.center_freq(40));
  const auto spec = spectra::cqt(clip, cp, {});
  REQUIRE(spec.bands() == 128);
  REQUIRE(spec.frames() == spectra::FrameParams{}.frame_count(8000));
  for (int t = 0; t < spec.frames(); t += 5) {
    Eigen::Index arg = 0;
    spec.data.col(t).maxCoeff(&arg);
    CHECK(std::abs(int(arg) - 40) <= 1);
  }
  // Direct complex correlation for a handful of cells.
  const double q = cp.q();
  for (int k : {0, 40, 90, 127}) {
    for (int t : {0, 10, 25}) {
      const int len = int(std::lround(q * fs / cp.center_freq(k)));
      const long centre = long(t) * 256 + 645;
      std::complex<double> acc = 0.0;
      for (int n = 0; n < len; ++n) {
        const long idx = centre - len / 2 + n;
        if (idx < 0 || idx >= long(clip.samples.size())) continue;
        const double m = n - 0.5 * (len - 1);
        const double w = 0.54 + 0.46 * std::cos(2 * kPi * m / (len - 1));
        acc += clip.samples[std::size_t(idx)] * w / double(len) * std::polar(1.0, -2 * kPi * n * q / len);
      }
      CHECK(spec.data(k, t) == doctest::Approx(std::abs(acc)).epsilon(1e-9));
    }
  }
}

TEST_CASE("cqt bandwidth grows in proportion to the centre frequency") {
  spectra::CqtParams cp;
  const double fs = 2000;
  spectra::FrameParams one;  // single column centred in a long clip
  one.window_len = one.n_fft = 16384;
  one.hop = 16384;
  auto response = [&](int k, double hz) {
    return spectra::cqt(testing::tone_clip(16384, fs, hz, 1.0), cp, one).data(k, 0);
  };
  std::vector<double> ratios;
  for (int k : {20, 50, 80, 110, 127}) {
    const double fk = cp.center_freq(k);
    const double peak = response(k, fk);
    auto edge = [&](double dir) {
      double inside = 0.0, outside = 2.0 / cp.q();
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (inside + outside);
        (response(k, fk * (1 + dir * mid)) >= peak / std::sqrt(2.0) ? inside : outside) = mid;
      }
      return fk * (1 + dir * inside);
    };
    ratios.push_back((edge(1) - edge(-1)) / fk);
  }
  for (double r : ratios) CHECK(r == doctest::Approx(ratios.front()).epsilon(0.05));
}

TEST_CASE("gammatone bank") {
  CHECK(spectra::erb(0) == doctest::Approx(24.7).epsilon(1e-12));
  CHECK(std::abs(spectra::erb(1000) - 132.639) <= 1e-9);
  const auto bank = spectra::gammatone_bank(16000, 2048, {});
  REQUIRE(bank.weights.rows() == 128);
  CHECK(bank.weights.minCoeff() >= 0.0);
  for (int r = 0; r < 128; ++r) {
    CHECK(std::abs(bank.weights.row(r).sum() - 1.0) <= 1e-9);
    if (r > 0) CHECK(bank.center_freqs[r] > bank.center_freqs[r - 1]);
  }
  CHECK(bank.center_freqs.front() == doctest::Approx(10.0));
  CHECK(bank.center_freqs.back() < 8000.0);
  // Row peaks sit on the bin nearest the centre frequency.
  for (int r : {10, 60, 127}) {
    Eigen::Index arg = 0;
    bank.weights.row(r).maxCoeff(&arg);
    CHECK(std::abs(double(arg) - bank.center_freqs[r] * 2048 / 16000) <= 0.5 + 1e-9);
  }
}

TEST_CASE("gam composition and tone location") {
  const auto clip = testing::noise_clip(6000, 16000, 12);
  const auto g = spectra::gam(clip, {});
  const auto bank = spectra::gammatone_bank(16000, 2048, {});
  const Matrix want = (bank.weights * naive_stft(clip.samples, 1290, 256, 2048, true))
                          .unaryExpr([](double v) { return std::log10(std::max(v, 1e-10)); });
  CHECK((g.data - want).cwiseAbs().maxCoeff() <= 1e-9);

  const int r = 100;
  const auto tone = testing::tone_clip(6000, 16000, bank.center_freqs[r]);
  const auto gt = spectra::gam(tone, {});
  Eigen::Index arg = 0;
  gt.data.col(3).maxCoeff(&arg);
  CHECK(std::abs(int(arg) - r) <= 1);
}

TEST_CASE("all kinds share the 128 x T shape") {
  const auto clip = testing::noise_clip(44100 * 3 / 2, 44100, 13);
  const int t = spectra::FrameParams{}.frame_count(clip.samples.size());
  for (auto kind : spectra::kAllKinds) {
    const auto s = spectra::extract(clip, kind);
    CHECK(s.kind == kind);
    CHECK(s.bands() == 128);
    CHECK(s.frames() == t);
  }
  CHECK(spectra::FrameParams{}.frame_count(441000) == (441000 - 1290) / 256 + 1);
}

TEST_CASE("kind tokens") {
  CHECK(spectra::parse_kind("logmel") == spectra::Kind::kLogMel);
  CHECK(spectra::parse_kinds("all").size() == 5);
  CHECK(spectra::parse_kinds("cqt,gam") == std::vector<spectra::Kind>{spectra::Kind::kCqt, spectra::Kind::kGam});
  CHECK_THROWS_AS(spectra::parse_kind("chroma"), KindError);
}

TEST_CASE("spec1 round trip") {
  const auto s = spectra::extract(testing::noise_clip(6000, 16000, 14), spectra::Kind::kGam);
  const auto back = spectra::decode_spectrogram(spectra::encode_spectrogram(s));
  CHECK(back.kind == s.kind);
  CHECK(back.params == s.params);
  CHECK(back.source_id == s.source_id);
  CHECK((back.data - s.data.cast<float>().cast<double>()).cwiseAbs().maxCoeff() == 0.0);
  const auto dir = testing::scratch_dir("spec1");
  spectra::save_spectrogram(dir / "g.spec", s);
  CHECK(spectra::load_spectrogram(dir / "g.spec").data.rows() == 128);
  CHECK_THROWS_AS(spectra::decode_spectrogram("SPEC2\n{}\n"), FormatError);
  auto bytes = spectra::encode_spectrogram(s);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(spectra::decode_spectrogram(bytes), FormatError);
}
