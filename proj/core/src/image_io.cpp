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

#include "warpadapt/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace warpadapt {
namespace {

// png_image (the simplified libpng API) handles the format juggling; we only
// pick the in-memory layout.
std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, std::size_t& height,
                                   std::size_t& width) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + img.message);
  }
  height = img.height;
  width = img.width;
  return buffer;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& buffer) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + img.message);
  }
}

std::uint8_t to_byte(double x) {
  if (!std::isfinite(x)) throw NumericalError("non-finite pixel value");
  return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
}

}  // namespace

void quantize_8bit(Tensor& image) {
  for (double& x : image.data()) x = to_byte(x) / 255.0;
}

void write_rgb_png(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("write_rgb_png: expected [3,H,W], got " + shape_to_string(image.shape()));
  }
  const std::size_t H = image.dim(1);
  const std::size_t W = image.dim(2);
  std::vector<std::uint8_t> buffer(3 * H * W);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) buffer[(y * W + x) * 3 + c] = to_byte(image[(c * H + y) * W + x]);
    }
  }
  write_png(path, PNG_FORMAT_RGB, H, W, buffer);
}

Tensor read_rgb_png(const std::filesystem::path& path) {
  std::size_t H = 0;
  std::size_t W = 0;
  const auto buffer = read_png(path, PNG_FORMAT_RGB, H, W);
  Tensor image({3, H, W});
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) image[(c * H + y) * W + x] = buffer[(y * W + x) * 3 + c] / 255.0;
    }
  }
  return image;
}

void write_label_png(const std::filesystem::path& path, const LabelMap& labels) {
  if (labels.size() == 0) throw std::invalid_argument("write_label_png: empty label map");
  write_png(path, PNG_FORMAT_GRAY, labels.height, labels.width, labels.labels);
}

LabelMap read_label_png(const std::filesystem::path& path) {
  LabelMap out;
  out.labels = read_png(path, PNG_FORMAT_GRAY, out.height, out.width);
  return out;
}

}  // namespace warpadapt
