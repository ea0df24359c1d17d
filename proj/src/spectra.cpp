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

#include "asckit/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "asckit/error.hpp"
#include "fft.hpp"

namespace asckit::spectra {
namespace {

constexpr double kPi = std::numbers::pi;

// Read-mostly cache of filter banks and CQT kernels keyed by construction
// parameters. Entries are immutable once published.
template <typename Key, typename Value>
class BuildCache {
 public:
  template <typename Make>
  std::shared_ptr<const Value> get(const Key& key, Make&& make) {
    {
      std::shared_lock lock(mutex_);
      auto it = table_.find(key);
      if (it != table_.end()) return it->second;
    }
    auto value = std::make_shared<const Value>(make());
    std::unique_lock lock(mutex_);
    return table_.emplace(key, std::move(value)).first->second;
  }

 private:
  std::shared_mutex mutex_;
  std::map<Key, std::shared_ptr<const Value>> table_;
};

using BankKey = std::tuple<int, double, int, int, double>;  // type, fs, n_fft, bands, f_min

BuildCache<BankKey, FilterBank>& bank_cache() {
  static BuildCache<BankKey, FilterBank> cache;
  return cache;
}

struct CqtKernels {
  // Per bin, already scaled by 1/N(k). Eigen storage keeps the dot products'
  // alignment, and so their rounding, independent of the heap layout.
  std::vector<Eigen::VectorXd> re, im;
  int max_len = 0;
};

using CqtKey = std::tuple<double, double, int, int, double>;  // fs, f_min, b, K, alpha

BuildCache<CqtKey, CqtKernels>& cqt_cache() {
  static BuildCache<CqtKey, CqtKernels> cache;
  return cache;
}

void normalize_rows(Matrix& w, const std::vector<double>& centers, double bin_hz) {
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    double sum = w.row(r).sum();
    if (sum <= 0.0) {
      // Filter narrower than the bin spacing: fall back to the nearest bin.
      auto bin = Eigen::Index(std::lround(centers[r] / bin_hz));
      bin = std::clamp<Eigen::Index>(bin, 0, w.cols() - 1);
      w(r, bin) = 1.0;
      sum = 1.0;
    }
    w.row(r) /= sum;
  }
}

nlohmann::json params_to_json(const FrameParams& p) {
  return {{"window_len", p.window_len}, {"hop", p.hop},     {"n_fft", p.n_fft},
          {"n_bands", p.n_bands},       {"f_min", p.f_min},
          {"window", p.window == Window::kHamming ? "hamming" : "rectangular"}};
}

FrameParams params_from_json(const nlohmann::json& j) {
  FrameParams p;
  p.window_len = j.at("window_len").get<int>();
  p.hop = j.at("hop").get<int>();
  p.n_fft = j.at("n_fft").get<int>();
  p.n_bands = j.at("n_bands").get<int>();
  p.f_min = j.at("f_min").get<double>();
  p.window = j.value("window", std::string("hamming")) == "rectangular" ? Window::kRectangular
                                                                         : Window::kHamming;
  return p;
}

}  // namespace

void FrameParams::validate() const {
  if (window_len < 1 || hop < 1) throw ConfigError("window_len and hop must be >= 1");
  if (!detail::is_power_of_two(std::size_t(n_fft))) throw ConfigError("n_fft must be a power of two");
  if (window_len > n_fft) throw ConfigError("window_len must not exceed n_fft");
  if (n_bands != 128) throw ConfigError("n_bands must be 128");
  if (!(f_min > 0.0)) throw ConfigError("f_min must be positive");
}

int FrameParams::frame_count(std::size_t n_samples) const {
  if (n_samples < std::size_t(window_len)) return 0;
  return int((n_samples - std::size_t(window_len)) / std::size_t(hop)) + 1;
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::kStft: return "stft";
    case Kind::kLogMel: return "logmel";
    case Kind::kMfcc: return "mfcc";
    case Kind::kCqt: return "cqt";
    case Kind::kGam: return "gam";
  }
  return "?";
}

Kind parse_kind(const std::string& token) {
  std::string t;
  for (char c : token) t.push_back(char(std::tolower(static_cast<unsigned char>(c))));
  if (t == "stft") return Kind::kStft;
  if (t == "logmel" || t == "log-mel") return Kind::kLogMel;
  if (t == "mfcc") return Kind::kMfcc;
  if (t == "cqt") return Kind::kCqt;
  if (t == "gam" || t == "gammatone") return Kind::kGam;
  throw KindError("unknown spectrogram kind '" + token + "'");
}

std::vector<Kind> parse_kinds(const std::string& list) {
  if (list == "all") return {std::begin(kAllKinds), std::end(kAllKinds)};
  std::vector<Kind> kinds;
  std::stringstream in(list);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    Kind k = parse_kind(tok);
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  if (kinds.empty()) throw KindError("empty kind list");
  return kinds;
}

std::vector<double> hamming(int len) {
  std::vector<double> w(static_cast<std::size_t>(len));
  for (int n = 0; n < len; ++n) w[n] = 0.08 + 0.46 * (1.0 - std::cos(2.0 * kPi * n / len));
  return w;
}

double cqt_window(double alpha, int kernel_len, double m) {
  if (kernel_len < 2) return 1.0;
  return alpha + (1.0 - alpha) * std::cos(2.0 * kPi * m / double(kernel_len - 1));
}

Matrix stft(const audio::AudioClip& clip, const FrameParams& params) {
  params.validate();
  const int frames = params.frame_count(clip.samples.size());
  if (frames < 1) {
    throw TooShort("clip " + clip.source_id + " has " + std::to_string(clip.samples.size()) +
                   " samples, fewer than one window of " + std::to_string(params.window_len));
  }
  std::vector<double> window = params.window == Window::kHamming
                                   ? hamming(params.window_len)
                                   : std::vector<double>(std::size_t(params.window_len), 1.0);
  const int bins = params.n_bins();
  Matrix out(bins, frames);
  std::vector<std::complex<double>> buf(std::size_t(params.n_fft));
  for (int t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    const double* s = clip.samples.data() + std::size_t(t) * std::size_t(params.hop);
    for (int n = 0; n < params.window_len; ++n) buf[n] = s[n] * window[n];
    detail::fft_inplace(buf);
    for (int k = 0; k < bins; ++k) out(k, t) = std::abs(buf[k]);
  }
  return out;
}

Matrix rescale_freq(const Matrix& lin, int n_out) {
  if (lin.rows() < n_out || n_out < 2) {
    throw ShapeError("rescale_freq needs at least " + std::to_string(n_out) + " input rows");
  }
  const double last = double(lin.rows() - 1);
  Matrix out(n_out, lin.cols());
  for (int i = 0; i < n_out; ++i) {
    const double q = last * double(i) / double(n_out - 1);
    auto lo = Eigen::Index(std::floor(q));
    if (lo >= lin.rows() - 1) lo = lin.rows() - 2;
    const double frac = q - double(lo);
    out.row(i) = (1.0 - frac) * lin.row(lo) + frac * lin.row(lo + 1);
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FilterBank mel_filterbank(double fs, int n_fft, int n_mels, double f_min) {
  const int bins = n_fft / 2 + 1;
  if (n_mels < 1 || n_mels > bins) {
    throw ConfigError("n_mels=" + std::to_string(n_mels) + " exceeds the " +
                      std::to_string(bins) + " representable bins");
  }
  if (!(f_min >= 0.0) || f_min >= fs / 2.0) throw ConfigError("f_min must lie below fs/2");
  auto make = [&] {
    const double lo = hz_to_mel(f_min), hi = hz_to_mel(fs / 2.0);
    std::vector<double> edges(std::size_t(n_mels + 2));
    for (int i = 0; i < n_mels + 2; ++i) edges[i] = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));
    const double bin_hz = fs / n_fft;
    FilterBank bank;
    bank.type = FilterBank::Type::kMel;
    bank.weights = Matrix::Zero(n_mels, bins);
    bank.center_freqs.assign(edges.begin() + 1, edges.end() - 1);
    for (int m = 0; m < n_mels; ++m) {
      const double l = edges[m], c = edges[m + 1], r = edges[m + 2];
      for (int k = 0; k < bins; ++k) {
        const double f = k * bin_hz;
        const double w = std::min((f - l) / (c - l), (r - f) / (r - c));
        if (w > 0.0) bank.weights(m, k) = w;
      }
    }
    normalize_rows(bank.weights, bank.center_freqs, bin_hz);
    return bank;
  };
  BankKey key{0, fs, n_fft, n_mels, f_min};
  return *bank_cache().get(key, make);
}

double erb(double hz) { return 24.7 * (4.37e-3 * hz + 1.0); }
double hz_to_erb_rate(double hz) { return 21.4 * std::log10(4.37e-3 * hz + 1.0); }
double erb_rate_to_hz(double rate) { return (std::pow(10.0, rate / 21.4) - 1.0) / 4.37e-3; }

FilterBank gammatone_bank(double fs, int n_fft, const GammatoneParams& g) {
  const int bins = n_fft / 2 + 1;
  if (g.n_bands < 1 || g.n_bands > bins) throw ConfigError("too many gammatone bands");
  if (!(g.f_min >= 0.0) || g.f_min >= fs / 2.0) throw ConfigError("f_min must lie below fs/2");
  if (g.order < 1) throw ConfigError("gammatone order must be >= 1");
  auto make = [&] {
    const double lo = hz_to_erb_rate(g.f_min), hi = hz_to_erb_rate(fs / 2.0);
    const double bin_hz = fs / n_fft;
    FilterBank bank;
    bank.type = FilterBank::Type::kGammatone;
    bank.weights = Matrix::Zero(g.n_bands, bins);
    for (int r = 0; r < g.n_bands; ++r) {
      bank.center_freqs.push_back(erb_rate_to_hz(lo + (hi - lo) * r / g.n_bands));
    }
    for (int r = 0; r < g.n_bands; ++r) {
      const double fr = bank.center_freqs[r];
      const double bw = g.bandwidth_scale * erb(fr);
      for (int k = 0; k < bins; ++k) {
        const double x = (k * bin_hz - fr) / bw;
        bank.weights(r, k) = std::pow(1.0 + x * x, -0.5 * g.order);
      }
    }
    normalize_rows(bank.weights, bank.center_freqs, bin_hz);
    return bank;
  };
  BankKey key{1000 + g.order, fs, n_fft, g.n_bands, g.f_min + 1e6 * g.bandwidth_scale};
  return *bank_cache().get(key, make);
}

Matrix dct_matrix(int n_coeffs, int n_in) {
  Matrix d(n_coeffs, n_in);
  for (int k = 0; k < n_coeffs; ++k) {
    const double lambda = k == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
    for (int n = 0; n < n_in; ++n) {
      d(k, n) = std::sqrt(2.0 / n_in) * lambda * std::cos(kPi * k * (2.0 * n + 1.0) / (2.0 * n_in));
    }
  }
  return d;
}

Matrix log_floor(const Matrix& m) {
  return m.unaryExpr([](double v) { return std::log10(std::max(v, kLogFloor)); });
}

Spectrogram log_mel(const audio::AudioClip& clip, const FrameParams& params) {
  const Matrix lin = stft(clip, params);
  const FilterBank bank = mel_filterbank(clip.sample_rate, params.n_fft, params.n_bands, params.f_min);
  return {Kind::kLogMel, log_floor(bank.weights * lin), params, clip.source_id};
}

Spectrogram mfcc(const Spectrogram& logmel) {
  if (logmel.kind != Kind::kLogMel) throw KindError("mfcc expects a log-mel spectrogram");
  if (logmel.bands() != 128) throw ShapeError("mfcc expects 128 mel bands");
  const int half = 64;
  const Matrix coeffs = dct_matrix(half, 128) * logmel.data;
  const int frames = logmel.frames();
  Matrix out(128, frames);
  out.topRows(half) = coeffs;
  for (int t = 0; t < frames; ++t) {
    const int prev = std::max(t - 1, 0);
    const int next = std::min(t + 1, frames - 1);
    out.block(half, t, half, 1) = 0.5 * (coeffs.col(prev) - coeffs.col(next));
  }
  return {Kind::kMfcc, std::move(out), logmel.params, logmel.source_id};
}

double CqtParams::q() const { return 1.0 / (std::pow(2.0, 1.0 / bins_per_octave) - 1.0); }

double CqtParams::center_freq(int k) const {
  return std::pow(2.0, double(k) / bins_per_octave) * f_min;
}

int CqtParams::kernel_length(int k, double fs) const {
  return std::max(1, int(std::lround(q() * fs / center_freq(k))));
}

Spectrogram cqt(const audio::AudioClip& clip, const CqtParams& cp, const FrameParams& params) {
  params.validate();
  const double fs = clip.sample_rate;
  if (cp.center_freq(cp.n_bins - 1) >= fs / 2.0) {
    throw ConfigError("highest CQT bin lies at or above fs/2");
  }
  const int frames = params.frame_count(clip.samples.size());
  if (frames < 1) throw TooShort("clip " + clip.source_id + " shorter than one window");

  auto make = [&] {
    CqtKernels kern;
    const double q = cp.q();
    for (int k = 0; k < cp.n_bins; ++k) {
      const int len = cp.kernel_length(k, fs);
      Eigen::VectorXd re(len), im(len);
      const double center = 0.5 * double(len - 1);
      for (int n = 0; n < len; ++n) {
        const double w = cqt_window(cp.alpha, len, n - center) / len;
        const double phase = -2.0 * kPi * n * q / len;
        re[n] = w * std::cos(phase);
        im[n] = w * std::sin(phase);
      }
      kern.max_len = std::max(kern.max_len, len);
      kern.re.push_back(std::move(re));
      kern.im.push_back(std::move(im));
    }
    return kern;
  };
  auto kernels = cqt_cache().get(CqtKey{fs, cp.f_min, cp.bins_per_octave, cp.n_bins, cp.alpha}, make);

  // Zero padding so every kernel window can be read without bounds checks.
  const std::size_t pad = std::size_t(kernels->max_len) + 1;
  Eigen::VectorXd padded = Eigen::VectorXd::Zero(Eigen::Index(clip.samples.size() + 2 * pad));
  std::copy(clip.samples.begin(), clip.samples.end(), padded.data() + pad);

  Matrix out(cp.n_bins, frames);
  for (int t = 0; t < frames; ++t) {
    const std::ptrdiff_t center = std::ptrdiff_t(t) * params.hop + params.window_len / 2;
    for (int k = 0; k < cp.n_bins; ++k) {
      const auto& re = kernels->re[k];
      const auto& im = kernels->im[k];
      const std::size_t len = re.size();
      const Eigen::Map<const Eigen::VectorXd> s(padded.data() + pad + (center - std::ptrdiff_t(len / 2)),
                                               Eigen::Index(len));
      const double acc_re = s.dot(re);
      const double acc_im = s.dot(im);
      out(k, t) = std::hypot(acc_re, acc_im);
    }
  }
  return {Kind::kCqt, std::move(out), params, clip.source_id};
}

Spectrogram gam(const audio::AudioClip& clip, const FrameParams& params) {
  const Matrix lin = stft(clip, params);
  GammatoneParams g;
  g.f_min = params.f_min;
  g.n_bands = params.n_bands;
  const FilterBank bank = gammatone_bank(clip.sample_rate, params.n_fft, g);
  return {Kind::kGam, log_floor(bank.weights * lin), params, clip.source_id};
}

Spectrogram stft_spectrogram(const audio::AudioClip& clip, const FrameParams& params) {
  return {Kind::kStft, log_floor(rescale_freq(stft(clip, params), params.n_bands)), params,
          clip.source_id};
}

Spectrogram extract(const audio::AudioClip& clip, Kind kind, const FrameParams& params) {
  params.validate();
  Spectrogram out;
  switch (kind) {
    case Kind::kStft: out = stft_spectrogram(clip, params); break;
    case Kind::kLogMel: out = log_mel(clip, params); break;
    case Kind::kMfcc: out = mfcc(log_mel(clip, params)); break;
    case Kind::kCqt: {
      CqtParams cp;
      cp.f_min = params.f_min;
      cp.n_bins = params.n_bands;
      out = cqt(clip, cp, params);
      break;
    }
    case Kind::kGam: out = gam(clip, params); break;
    default: throw KindError("unknown spectrogram kind");
  }
  const int expected_t = params.frame_count(clip.samples.size());
  if (out.bands() != 128 || out.frames() != expected_t) {
    throw ShapeError(to_string(kind) + " produced " + std::to_string(out.bands()) + "x" +
                     std::to_string(out.frames()) + ", expected 128x" + std::to_string(expected_t));
  }
  if (!out.data.allFinite()) throw ShapeError(to_string(kind) + " produced non-finite values");
  return out;
}

std::string encode_spectrogram(const Spectrogram& spec, const std::string& extra_json) {
  nlohmann::json header = {{"kind", to_string(spec.kind)},
                           {"F", spec.bands()},
                           {"T", spec.frames()},
                           {"params", params_to_json(spec.params)},
                           {"source_id", spec.source_id}};
  if (!extra_json.empty()) {
    auto extra = nlohmann::json::parse(extra_json);
    for (const auto& [k, v] : extra.items()) header[k] = v;
  }
  std::string out = "SPEC1\n" + header.dump() + "\n";
  const std::size_t offset = out.size();
  out.resize(offset + sizeof(float) * std::size_t(spec.data.size()));
  char* dst = out.data() + offset;
  for (int f = 0; f < spec.bands(); ++f) {
    for (int t = 0; t < spec.frames(); ++t) {
      // Little-endian host assumed (x86-64 / aarch64).
      const float v = float(spec.data(f, t));
      std::memcpy(dst, &v, sizeof v);
      dst += sizeof v;
    }
  }
  return out;
}

Spectrogram decode_spectrogram(const std::string& bytes) {
  if (bytes.rfind("SPEC1\n", 0) != 0) throw FormatError("missing SPEC1 magic");
  const std::size_t eol = bytes.find('\n', 6);
  if (eol == std::string::npos) throw FormatError("unterminated SPEC1 header");
  Spectrogram spec;
  int rows = 0, cols = 0;
  try {
    auto header = nlohmann::json::parse(bytes.substr(6, eol - 6));
    spec.kind = parse_kind(header.at("kind").get<std::string>());
    rows = header.at("F").get<int>();
    cols = header.at("T").get<int>();
    spec.params = params_from_json(header.at("params"));
    spec.source_id = header.value("source_id", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad SPEC1 header: ") + e.what());
  }
  const std::size_t need = std::size_t(rows) * std::size_t(cols) * sizeof(float);
  if (rows < 1 || cols < 1 || bytes.size() - eol - 1 != need) {
    throw FormatError("SPEC1 payload length does not match F*T");
  }
  spec.data.resize(rows, cols);
  const char* src = bytes.data() + eol + 1;
  for (int f = 0; f < rows; ++f) {
    for (int t = 0; t < cols; ++t) {
      float v;
      std::memcpy(&v, src, sizeof v);
      src += sizeof v;
      spec.data(f, t) = v;
    }
  }
  return spec;
}

void save_spectrogram(const std::filesystem::path& path, const Spectrogram& spec,
                      const std::string& extra_json) {
  const std::string bytes = encode_spectrogram(spec, extra_json);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Spectrogram load_spectrogram(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return decode_spectrogram(buf.str());
}

}  // namespace asckit::spectra
