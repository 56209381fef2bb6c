// Copyright 2026 The WarpAdapt Authors
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

namespace warpadapt {

/// Worker cap. Defaults to the WARPADAPT_THREADS environment variable, or 1
/// when unset or invalid.
std::size_t max_threads();
void set_max_threads(std::size_t n);

/// Runs fn(i) for i in [0, n). Callers must write disjoint outputs per index;
/// any cross-index reduction happens afterwards in index order, which keeps
/// results independent of the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace warpadapt
