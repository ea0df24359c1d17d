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

#include <cstddef>
#include <functional>

namespace asckit {

/// Worker count from ASCKIT_THREADS (default 1, clamped to >= 1).
int thread_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Exceptions from
/// workers are rethrown on the caller for the lowest failing index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int threads = thread_count());

}  // namespace asckit
