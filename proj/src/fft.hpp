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
#include <vector>

namespace asckit::spectra::detail {

/// In-place iterative radix-2 FFT. `data.size()` must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data);

bool is_power_of_two(std::size_t n);

}  // namespace asckit::spectra::detail
