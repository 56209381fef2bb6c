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

#include <filesystem>

#include "warpadapt/label_map.hpp"
#include "warpadapt/tensor.hpp"

namespace warpadapt {

/// 8-bit RGB PNG from a [3,H,W] tensor in [0, 1] (values are clamped and
/// rounded).
void write_rgb_png(const std::filesystem::path& path, const Tensor& image);
/// Returns [3,H,W] with values k/255. Gray and palette files are expanded.
Tensor read_rgb_png(const std::filesystem::path& path);

/// 8-bit single-channel PNG; pixel value = class id.
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_label_png(const std::filesystem::path& path);

/// Rounds every value to the nearest multiple of 1/255 after clamping to
/// [0, 1].
void quantize_8bit(Tensor& image);

}  // namespace warpadapt
