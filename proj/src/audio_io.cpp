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

#include "asckit/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "asckit/error.hpp"

namespace asckit::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xFF));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xFF));
  out.push_back(std::uint8_t(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

// splitmix64 finalizer; used to derive independent per-clip seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

AudioClip decode_wav(const std::vector<std::uint8_t>& bytes, std::string source_id) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DecodeError("not a RIFF/WAVE file: " + source_id);
  }
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    std::uint32_t len = read_u32(chunk + 4);
    if (len > bytes.size() - pos - 8) {
      throw DecodeError("chunk length exceeds file size in " + source_id);
    }
    const std::uint8_t* body = chunk + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw DecodeError("fmt chunk too short in " + source_id);
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      block_align = read_u16(body + 12);
      bits = read_u16(body + 14);
      if (format == kFormatExtensible) {
        if (len < 26) throw DecodeError("extensible fmt chunk too short in " + source_id);
        format = read_u16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = body;
      data_len = len;
      break;
    }
    pos += 8 + len + (len & 1u);
  }
  if (!have_fmt) throw DecodeError("missing fmt chunk in " + source_id);
  if (data == nullptr) throw DecodeError("missing data chunk in " + source_id);
  if (rate == 0) throw DecodeError("zero sample rate in " + source_id);
  if (channels < 1 || channels > 2) {
    throw UnsupportedFormat("only mono or stereo is supported: " + source_id);
  }
  const bool pcm = format == kFormatPcm && (bits == 16 || bits == 24);
  const bool flt = format == kFormatFloat && bits == 32;
  if (!pcm && !flt) {
    throw UnsupportedFormat("unsupported encoding (format " + std::to_string(format) + ", " +
                            std::to_string(bits) + " bits): " + source_id);
  }
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels) {
    throw DecodeError("inconsistent block alignment in " + source_id);
  }
  const std::size_t frames = data_len / block_align;
  if (frames == 0) throw DecodeError("empty data chunk in " + source_id);

  AudioClip clip;
  clip.sample_rate = int(rate);
  clip.source_id = std::move(source_id);
  clip.channel_taken = 0;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* s = data + i * block_align;
    double v = 0.0;
    if (flt) {
      float f;
      std::uint32_t word = read_u32(s);
      std::memcpy(&f, &word, sizeof f);
      v = f;
      if (!std::isfinite(v)) throw DecodeError("non-finite sample in " + clip.source_id);
    } else if (bits == 16) {
      v = std::int16_t(read_u16(s)) / 32768.0;
    } else {
      std::int32_t w = std::int32_t(std::uint32_t(s[0]) << 8 | std::uint32_t(s[1]) << 16 |
                                    std::uint32_t(s[2]) << 24) >> 8;
      v = w / 8388608.0;
    }
    clip.samples[i] = v;
  }
  return clip;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(const std::vector<double>& interleaved, int channels,
                                     int sample_rate, SampleFormat format) {
  if (channels < 1 || channels > 2) throw UnsupportedFormat("channels must be 1 or 2");
  const std::uint16_t bits = format == SampleFormat::kPcm16 ? 16 : format == SampleFormat::kPcm24 ? 24 : 32;
  const std::uint16_t tag = format == SampleFormat::kFloat32 ? kFormatFloat : kFormatPcm;
  const std::uint16_t block = std::uint16_t(channels * bits / 8);
  const std::uint32_t data_len = std::uint32_t(interleaved.size() * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_len + (data_len & 1u));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, std::uint16_t(channels));
  put_u32(out, std::uint32_t(sample_rate));
  put_u32(out, std::uint32_t(sample_rate) * block);
  put_u16(out, block);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_len);
  for (double x : interleaved) {
    if (format == SampleFormat::kFloat32) {
      float f = float(x);
      std::uint32_t word;
      std::memcpy(&word, &f, sizeof word);
      put_u32(out, word);
      continue;
    }
    const double scale = format == SampleFormat::kPcm16 ? 32768.0 : 8388608.0;
    double q = std::round(std::clamp(x, -1.0, 1.0) * scale);
    q = std::clamp(q, -scale, scale - 1.0);
    auto word = std::int32_t(q);
    if (format == SampleFormat::kPcm16) {
      put_u16(out, std::uint16_t(std::int16_t(word)));
    } else {
      auto u = std::uint32_t(word);
      out.push_back(std::uint8_t(u & 0xFF));
      out.push_back(std::uint8_t((u >> 8) & 0xFF));
      out.push_back(std::uint8_t((u >> 16) & 0xFF));
    }
  }
  if (data_len & 1u) out.push_back(0);
  return out;
}

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
               int sample_rate, SampleFormat format) {
  auto bytes = encode_wav(samples, 1, sample_rate, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(const std::string& token) {
  if (token == "train") return Split::kTrain;
  if (token == "test") return Split::kTest;
  throw ManifestError("unknown split token '" + token + "'");
}

CategorySet::CategorySet(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

int CategorySet::index_of(const std::string& label) const {
  auto it = std::lower_bound(names_.begin(), names_.end(), label);
  if (it == names_.end() || *it != label) throw ManifestError("unknown category '" + label + "'");
  return int(it - names_.begin());
}

std::filesystem::path Manifest::resolve(const ManifestEntry& entry) const {
  std::filesystem::path p(entry.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<ManifestEntry> Manifest::split(Split which) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries) {
    if (e.split == which) out.push_back(e);
  }
  return out;
}

Manifest parse_manifest(const std::string& csv_text, const std::filesystem::path& base_dir) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw ManifestError("no entries");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label,device,fold,split") {
    throw ManifestError("bad manifest header '" + line + "'");
  }
  Manifest m;
  m.base_dir = base_dir;
  std::set<std::string> seen;
  std::vector<std::string> labels;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    const std::string where = "row " + std::to_string(row);
    if (cells.size() != 5) throw ManifestError(where + ": expected 5 columns");
    ManifestEntry e;
    e.path = cells[0];
    e.label = cells[1];
    if (e.path.empty() || e.label.empty()) throw ManifestError(where + ": empty path or label");
    if (!cells[2].empty()) e.device = cells[2];
    if (!cells[3].empty()) {
      try {
        std::size_t used = 0;
        e.fold = std::stoi(cells[3], &used);
        if (used != cells[3].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ManifestError(where + ": bad fold '" + cells[3] + "'");
      }
    }
    try {
      e.split = parse_split(cells[4]);
    } catch (const ManifestError& err) {
      throw ManifestError(where + ": " + err.what());
    }
    if (!seen.insert(e.path).second) throw ManifestError(where + ": duplicate path " + e.path);
    labels.push_back(e.label);
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw ManifestError("no entries");
  m.categories = CategorySet(std::move(labels));
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path());
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  out << "path,label,device,fold,split\n";
  for (const auto& e : entries) {
    out << e.path << ',' << e.label << ',' << e.device.value_or("") << ',';
    if (e.fold) out << *e.fold;
    out << ',' << to_string(e.split) << '\n';
  }
  return out.str();
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << format_manifest(entries);
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<ManifestEntry> import_dcase_meta(const std::string& tsv_text, Split split) {
  std::vector<ManifestEntry> out;
  std::istringstream in(tsv_text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::string col;
    std::istringstream ls(line);
    while (std::getline(ls, col, '\t')) cols.push_back(col);
    if (cols.size() < 2) throw ManifestError("meta line without label: " + line);
    if (cols[0] == "filename") continue;  // header row
    ManifestEntry e;
    e.path = cols[0];
    e.label = cols[1];
    e.split = split;
    std::string stem = std::filesystem::path(e.path).stem().string();
    if (stem.size() > 2 && stem[stem.size() - 2] == '-') {
      char d = stem.back();
      if (d == 'a' || d == 'b' || d == 'c') e.device = std::string(1, char(std::toupper(d)));
    }
    out.push_back(std::move(e));
  }
  return out;
}

void SynthSpec::validate() const {
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (clips_per_class < 1) throw ConfigError("clips_per_class must be >= 1");
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (clip_seconds * sample_rate < 1290 + 127 * 256) {
    throw ConfigError("clip too short for one 128-frame patch");
  }
  for (const auto& [cls, mult] : imbalance) {
    if (cls < 0 || cls >= n_classes) throw ConfigError("imbalance names an unknown class");
    if (!(mult > 0.0)) throw ConfigError("imbalance multipliers must be positive");
  }
}

int SynthSpec::clip_count(int cls) const {
  auto it = imbalance.find(cls);
  double mult = it == imbalance.end() ? 1.0 : it->second;
  return std::max(1, int(std::lround(clips_per_class * mult)));
}

SynthSpec synth_spec_from_json(const std::string& json_text) {
  SynthSpec spec;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("synth spec must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_classes") spec.n_classes = value.get<int>();
      else if (key == "clips_per_class") spec.clips_per_class = value.get<int>();
      else if (key == "clip_seconds") spec.clip_seconds = value.get<double>();
      else if (key == "sample_rate") spec.sample_rate = value.get<int>();
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else if (key == "imbalance") {
        for (const auto& [cls, mult] : value.items()) spec.imbalance[std::stoi(cls)] = mult.get<double>();
      } else {
        throw ConfigError("unknown synth spec key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad synth spec value: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string synth_label(int cls) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%02d", cls);
  return buf;
}

std::vector<double> synth_clip(const SynthSpec& spec, int cls, int index) {
  std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, std::uint64_t(cls)), std::uint64_t(index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double fs = spec.sample_rate;
  const auto n = std::size_t(std::llround(spec.clip_seconds * fs));
  const double pos = double(cls) / double(spec.n_classes - 1);
  const double two_pi = 2.0 * std::numbers::pi;

  // Tone comb: fundamental between 50 and 140 Hz, six harmonics with 1/h roll-off.
  std::vector<double> comb(n, 0.0);
  const double f0 = 50.0 * std::pow(2.8, pos) * (1.0 + 0.02 * (unit(rng) - 0.5));
  for (int h = 1; h <= 6; ++h) {
    const double phase = two_pi * unit(rng);
    const double amp = 1.0 / h;
    const double w = two_pi * f0 * h / fs;
    for (std::size_t i = 0; i < n; ++i) comb[i] += amp * std::cos(w * double(i) + phase);
  }

  // Band noise: a third-octave band whose center moves from 250 Hz to 0.35 fs.
  std::vector<double> band(n, 0.0);
  const double fc = 250.0 * std::pow(0.35 * fs / 250.0, pos) * (1.0 + 0.05 * (unit(rng) - 0.5));
  const double lo = fc * std::pow(2.0, -1.0 / 6.0);
  const double hi = fc * std::pow(2.0, 1.0 / 6.0);
  for (int k = 0; k < 48; ++k) {
    const double f = lo + (hi - lo) * unit(rng);
    const double phase = two_pi * unit(rng);
    const double w = two_pi * f / fs;
    for (std::size_t i = 0; i < n; ++i) band[i] += std::cos(w * double(i) + phase);
  }

  auto rms = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / double(v.size()));
  };
  const double comb_rms = rms(comb), band_rms = rms(band);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = comb[i] / comb_rms + band[i] / band_rms;

  // White noise 10 dB below the tonal+band mixture.
  const double noise_std = rms(out) / std::sqrt(10.0);
  for (double& x : out) x += noise_std * gauss(rng);

  double peak = 0.0;
  for (double x : out) peak = std::max(peak, std::abs(x));
  const double gain = (0.3 + 0.5 * unit(rng)) / peak;
  for (double& x : out) x *= gain;
  return out;
}

std::filesystem::path synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "audio", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "audio").string() + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  for (int cls = 0; cls < spec.n_classes; ++cls) {
    const int count = spec.clip_count(cls);
    std::vector<int> order(count);
    for (int i = 0; i < count; ++i) order[i] = i;
    std::mt19937_64 rng(mix_seed(spec.seed ^ 0x5EED5EEDULL, std::uint64_t(cls)));
    std::shuffle(order.begin(), order.end(), rng);
    const int n_test = int(std::lround(0.2 * count));
    std::vector<bool> is_test(count, false);
    for (int i = 0; i < n_test; ++i) is_test[order[i]] = true;

    for (int i = 0; i < count; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "audio/%s_%03d.wav", synth_label(cls).c_str(), i);
      write_wav(out_dir / name, synth_clip(spec, cls, i), spec.sample_rate);
      ManifestEntry e;
      e.path = name;
      e.label = synth_label(cls);
      e.split = is_test[i] ? Split::kTest : Split::kTrain;
      entries.push_back(std::move(e));
    }
  }
  auto manifest_path = out_dir / "manifest.csv";
  write_manifest(manifest_path, entries);
  return manifest_path;
}

}  // namespace asckit::audio
