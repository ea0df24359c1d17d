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

#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "asckit/audio_io.hpp"
#include "asckit/error.hpp"
#include "asckit/fusion.hpp"
#include "asckit/models.hpp"
#include "asckit/patchlab.hpp"
#include "asckit/pipeline.hpp"
#include "asckit/spectra.hpp"

namespace py = pybind11;
using namespace asckit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const spectra::Matrix& m) {
  Array out({m.rows(), m.cols()});
  auto v = out.mutable_unchecked<2>();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v(r, c) = m(r, c);
  return out;
}

spectra::FrameParams frame_params(int window_len, int hop, int n_fft) {
  spectra::FrameParams p;
  p.window_len = window_len;
  p.hop = hop;
  p.n_fft = n_fft;
  p.validate();
  return p;
}

audio::AudioClip make_clip(const Array& samples, int sample_rate) {
  if (samples.ndim() != 1) throw ConfigError("samples must be one-dimensional");
  audio::AudioClip clip;
  clip.samples.assign(samples.data(), samples.data() + samples.size());
  clip.sample_rate = sample_rate;
  return clip;
}

patchlab::Patch make_patch(const Array& data) {
  if (data.ndim() != 2 || data.shape(0) != patchlab::kPatchSize || data.shape(1) != patchlab::kPatchSize) {
    throw ShapeError("patches must be 128x128");
  }
  patchlab::Patch p;
  p.data.assign(data.data(), data.data() + data.size());
  return p;
}

Array patch_array(const patchlab::Patch& p) {
  Array out({patchlab::kPatchSize, patchlab::kPatchSize});
  std::copy(p.data.begin(), p.data.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of asckit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<KindError>(m, "KindError", base.ptr());
  py::register_exception<DecodeError>(m, "DecodeError", base.ptr());
  py::register_exception<TooShort>(m, "TooShort", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<CheckpointError>(m, "CheckpointError", base.ptr());
  py::register_exception<AlignError>(m, "AlignError", base.ptr());

  m.def("hz_to_mel", &spectra::hz_to_mel);
  m.def("erb", &spectra::erb);
  m.def(
      "cqt_q", [](int bins_per_octave) { return spectra::CqtParams{10.0, bins_per_octave}.q(); },
      py::arg("bins_per_octave") = 24);
  m.def("hamming", &spectra::hamming, py::arg("length"));
  m.def(
      "dct_matrix", [](int n_coeffs, int n_in) { return to_numpy(spectra::dct_matrix(n_coeffs, n_in)); },
      py::arg("n_coeffs"), py::arg("n_in"));

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        auto clip = audio::read_wav(path);
        Array samples(py::ssize_t(clip.samples.size()));
        std::copy(clip.samples.begin(), clip.samples.end(), samples.mutable_data());
        return py::make_tuple(samples, clip.sample_rate);
      },
      py::arg("path"), "Returns (samples, sample_rate) of the first channel.");
  m.def(
      "write_wav",
      [](const std::filesystem::path& path, const Array& samples, int sample_rate) {
        audio::write_wav(path, make_clip(samples, sample_rate).samples, sample_rate);
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate"));
  m.def(
      "synth",
      [](const std::filesystem::path& out, int n_classes, int clips_per_class, double clip_seconds,
         int sample_rate, std::uint64_t seed) {
        audio::SynthSpec spec;
        spec.n_classes = n_classes;
        spec.clips_per_class = clips_per_class;
        spec.clip_seconds = clip_seconds;
        spec.sample_rate = sample_rate;
        spec.seed = seed;
        spec.validate();
        return audio::synth_dataset(spec, out);
      },
      py::arg("out"), py::arg("n_classes") = 4, py::arg("clips_per_class") = 30, py::arg("clip_seconds") = 2.2,
      py::arg("sample_rate") = 16000, py::arg("seed") = 7, "Writes a synthetic corpus; returns the manifest path.");
  m.def("checksum", &pipeline::tree_checksum, py::arg("directory"));

  m.def(
      "extract",
      [](const Array& samples, int sample_rate, const std::string& kind, int window_len, int hop, int n_fft) {
        auto spec = spectra::extract(make_clip(samples, sample_rate), spectra::parse_kind(kind),
                                     frame_params(window_len, hop, n_fft));
        return to_numpy(spec.data);
      },
      py::arg("samples"), py::arg("sample_rate"), py::arg("kind"), py::arg("window_len") = 1290,
      py::arg("hop") = 256, py::arg("n_fft") = 2048, "128 x T spectrogram of the given kind.");
  m.def(
      "load_spectrogram",
      [](const std::filesystem::path& path) {
        auto spec = spectra::load_spectrogram(path);
        return py::make_tuple(spectra::to_string(spec.kind), to_numpy(spec.data));
      },
      py::arg("path"));

  m.def(
      "split_patches",
      [](const Array& spec, int label, int n_classes) {
        if (spec.ndim() != 2) throw ShapeError("spectrogram must be two-dimensional");
        spectra::Spectrogram s;
        s.data.resize(spec.shape(0), spec.shape(1));
        auto v = spec.unchecked<2>();
        for (py::ssize_t r = 0; r < spec.shape(0); ++r)
          for (py::ssize_t c = 0; c < spec.shape(1); ++c) s.data(r, c) = v(r, c);
        py::list out;
        for (const auto& p : patchlab::split_patches(s, label, n_classes)) out.append(patch_array(p));
        return out;
      },
      py::arg("spectrogram"), py::arg("label") = 0, py::arg("n_classes") = 2);
  m.def(
      "mix_pair",
      [](const Array& x1, const Array& x2, const std::vector<double>& y1, const std::vector<double>& y2,
         double gamma) {
        auto a = make_patch(x1), b = make_patch(x2);
        a.label = y1;
        b.label = y2;
        auto [m1, m2] = patchlab::mix_pair(a, b, gamma);
        return py::make_tuple(patch_array(m1), m1.label, patch_array(m2), m2.label);
      },
      py::arg("x1"), py::arg("x2"), py::arg("y1"), py::arg("y2"), py::arg("gamma"));

  m.def(
      "fuse",
      [](const std::vector<std::vector<double>>& rows, const std::string& strategy) {
        return fusion::fuse(rows, fusion::parse_strategy(strategy));
      },
      py::arg("rows"), py::arg("strategy") = "prod");
  m.def(
      "load_probs",
      [](const std::filesystem::path& path) {
        py::list out;
        for (const auto& r : fusion::load_probs(path)) {
          out.append(py::make_tuple(r.file_id, fusion::combination_name(r.kinds), r.probs));
        }
        return out;
      },
      py::arg("path"), "Rows of (file_id, kind, probabilities).");

  py::class_<models::Model>(m, "Model")
      .def_static(
          "build",
          [](const std::string& arch, int n_classes, std::uint64_t seed) {
            models::ModelConfig cfg;
            cfg.architecture = models::parse_architecture(arch);
            cfg.n_classes = n_classes;
            cfg.train.seed = seed;
            cfg.stats.mean.assign(128, 0.0);
            cfg.stats.std.assign(128, 1.0);
            return models::make_model(cfg);
          },
          py::arg("architecture"), py::arg("n_classes"), py::arg("seed") = 0)
      .def_static("load", &models::load_checkpoint, py::arg("path"))
      .def("save", [](const models::Model& self, const std::filesystem::path& p) { models::save_checkpoint(self, p); })
      .def_property_readonly("kind", [](const models::Model& self) { return spectra::to_string(self.config.kind); })
      .def_property_readonly("architecture",
                             [](const models::Model& self) { return models::to_string(self.config.architecture); })
      .def_property_readonly("n_classes", [](const models::Model& self) { return self.config.n_classes; })
      .def_property_readonly("parameter_count",
                             [](const models::Model& self) { return self.net.parameter_count(); })
      .def(
          "trace",
          [](const models::Model& self) {
            py::list out;
            for (const auto& t : self.net.trace()) out.append(py::make_tuple(t.block, t.shape));
            return out;
          })
      .def(
          "predict",
          [](models::Model& self, const std::vector<Array>& patches, bool normalize) {
            std::vector<patchlab::Patch> ps;
            for (const auto& a : patches) {
              ps.push_back(make_patch(a));
              if (normalize) models::normalize(ps.back(), self.config.stats);
            }
            return models::predict_patches(self.net, ps);
          },
          py::arg("patches"), py::arg("normalize") = true, "Eval-mode posteriors, one row per 128x128 patch.");
}
