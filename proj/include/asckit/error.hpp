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

#include <stdexcept>
#include <string>

namespace asckit {

/// Root of every error raised by the library. Each subclass names the
/// failing contract so callers (and the CLI) can map it to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ASCKIT_DEFINE_ERROR(Name)         \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// audio-io
ASCKIT_DEFINE_ERROR(DecodeError);
ASCKIT_DEFINE_ERROR(UnsupportedFormat);
ASCKIT_DEFINE_ERROR(ManifestError);
ASCKIT_DEFINE_ERROR(IoError);

// spectra
ASCKIT_DEFINE_ERROR(TooShort);
ASCKIT_DEFINE_ERROR(ConfigError);
ASCKIT_DEFINE_ERROR(KindError);
ASCKIT_DEFINE_ERROR(FormatError);

// patchlab
ASCKIT_DEFINE_ERROR(BalanceError);
ASCKIT_DEFINE_ERROR(BatchError);

// tensor engine / models
ASCKIT_DEFINE_ERROR(ShapeError);
ASCKIT_DEFINE_ERROR(LossError);
ASCKIT_DEFINE_ERROR(TrainError);
ASCKIT_DEFINE_ERROR(CheckpointError);

// fusion-eval
ASCKIT_DEFINE_ERROR(EmptyError);
ASCKIT_DEFINE_ERROR(AlignError);

#undef ASCKIT_DEFINE_ERROR

}  // namespace asckit
