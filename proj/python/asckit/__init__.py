# Copyright 2026 The asckit Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Acoustic scene classification toolkit: spectrogram front-ends, CNN/C-RNN
models and late fusion of per-spectrogram posteriors."""

from ._core import (
    AlignError,
    CheckpointError,
    ConfigError,
    DecodeError,
    Error,
    KindError,
    Model,
    ShapeError,
    TooShort,
    checksum,
    cqt_q,
    dct_matrix,
    erb,
    extract,
    fuse,
    hamming,
    hz_to_mel,
    load_probs,
    load_spectrogram,
    mix_pair,
    read_wav,
    split_patches,
    synth,
    write_wav,
)

KINDS = ("stft", "logmel", "mfcc", "cqt", "gam")

__version__ = "0.1.0"
