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

#include <complex>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "asckit/audio_io.hpp"

namespace asckit::spectra {

using Matrix = Eigen::MatrixXd;

enum class Window { kHamming, kRectangular };

/// Framing shared by every spectrogram kind.
struct FrameParams {
  int window_len = 1290;
  int hop = 256;
  int n_fft = 2048;
  int n_bands = 128;
  double f_min = 10.0;
  Window window = Window::kHamming;

  void validate() const;
  int n_bins() const { return n_fft / 2 + 1; }
  /// T = floor((N - window_len) / hop) + 1.
  int frame_count(std::size_t n_samples) const;
  bool operator==(const FrameParams&) const = default;
};

enum class Kind { kStft, kLogMel, kMfcc, kCqt, kGam };

inline constexpr Kind kAllKinds[] = {Kind::kStft, Kind::kLogMel, Kind::kMfcc, Kind::kCqt,
                                     Kind::kGam};

std::string to_string(Kind kind);
/// Accepts stft, logmel (or log-mel), mfcc, cqt, gam; throws KindError otherwise.
Kind parse_kind(const std::string& token);
/// Comma separated list; "all" expands to the five kinds.
std::vector<Kind> parse_kinds(const std::string& list);

struct Spectrogram {
  Kind kind = Kind::kLogMel;
  Matrix data;  // 128 x T, frequency-major
  FrameParams params;
  std::string source_id;

  int bands() const { return int(data.rows()); }
  int frames() const { return int(data.cols()); }
};

struct FilterBank {
  enum class Type { kMel, kGammatone };
  Matrix weights;  // n_bands x n_bins, rows sum to 1
  Type type = Type::kMel;
  std::vector<double> center_freqs;
};

struct CqtParams {
  double f_min = 10.0;
  int bins_per_octave = 24;
  int n_bins = 128;
  double alpha = 0.54;

  double q() const;
  double center_freq(int k) const;
  /// Kernel length N(k) = Q fs / f_k, rounded to the nearest sample.
  int kernel_length(int k, double fs) const;
};

struct GammatoneParams {
  int order = 4;
  double f_min = 10.0;
  int n_bands = 128;
  double bandwidth_scale = 1.019;
};

/// Log floor applied before every log10.
inline constexpr double kLogFloor = 1e-10;

/// Periodic Hamming window of length `len` (peak 1 at len/2, 0.08 at 0).
std::vector<double> hamming(int len);

/// Constant-Q window from its offset `m` relative to the kernel center:
/// alpha + (1 - alpha) cos(2 pi m / (N - 1)).
double cqt_window(double alpha, int kernel_len, double m);

/// Magnitude STFT, n_bins x T.
Matrix stft(const audio::AudioClip& clip, const FrameParams& params);
/// Linear interpolation of the rows onto `n_out` points spanning [0, rows-1].
Matrix rescale_freq(const Matrix& lin, int n_out = 128);

double hz_to_mel(double hz);
double mel_to_hz(double mel);
FilterBank mel_filterbank(double fs, int n_fft = 2048, int n_mels = 128, double f_min = 10.0);

double erb(double hz);
double hz_to_erb_rate(double hz);
double erb_rate_to_hz(double rate);
FilterBank gammatone_bank(double fs, int n_fft, const GammatoneParams& gparams);

/// Orthonormal DCT-II basis truncated to `n_coeffs` rows (n_coeffs x n_in).
Matrix dct_matrix(int n_coeffs, int n_in);

Spectrogram log_mel(const audio::AudioClip& clip, const FrameParams& params);
/// 64 DCT coefficients stacked over their 64 first-order deltas.
Spectrogram mfcc(const Spectrogram& logmel);
Spectrogram cqt(const audio::AudioClip& clip, const CqtParams& cparams, const FrameParams& params);
Spectrogram gam(const audio::AudioClip& clip, const FrameParams& params);
Spectrogram stft_spectrogram(const audio::AudioClip& clip, const FrameParams& params);

/// Dispatches to the kind's extractor and checks 128 x T shape parity.
Spectrogram extract(const audio::AudioClip& clip, Kind kind, const FrameParams& params = {});

/// Elementwise log10(max(x, 1e-10)).
Matrix log_floor(const Matrix& m);

// SPEC1 feature files. `extra` is merged into the JSON header (used for
// patch labels).
void save_spectrogram(const std::filesystem::path& path, const Spectrogram& spec,
                      const std::string& extra_json = {});
Spectrogram load_spectrogram(const std::filesystem::path& path);
std::string encode_spectrogram(const Spectrogram& spec, const std::string& extra_json = {});
Spectrogram decode_spectrogram(const std::string& bytes);

}  // namespace asckit::spectra
