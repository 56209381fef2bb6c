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

#include "warpadapt/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "warpadapt/ops.hpp"

namespace warpadapt {
namespace {

constexpr int kMonotonicSamples = 1024;
constexpr int kMaxNewtonIterations = 50;
constexpr double kResidualTolerance = 1e-9;

std::uint64_t mix64(std::uint64_t h, std::uint64_t v) {
  // splitmix64 finalizer over a running state.
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("warp sidecar truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw std::runtime_error("warp sidecar truncated");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace

// ---------------------------------------------------------------------------
// DistortionParams

DistortionParams::DistortionParams(double f, std::array<double, 4> k, Point2 center, double working_radius)
    : f_(f), k_(k), center_(center), working_radius_(working_radius) {
  if (!(f_ > 0.0) || !std::isfinite(f_)) {
    throw std::invalid_argument("distortion: f must be a positive finite number, got " + std::to_string(f_));
  }
  if (!(working_radius_ > 0.0) || !std::isfinite(working_radius_)) {
    throw std::invalid_argument("distortion: working radius must be positive");
  }
  for (double c : k_) {
    if (!std::isfinite(c)) throw std::invalid_argument("distortion: k coefficients must be finite");
  }
  if (!std::isfinite(center_.x) || !std::isfinite(center_.y)) {
    throw std::invalid_argument("distortion: center must be finite");
  }
  double prev = 0.0;
  for (int i = 1; i <= kMonotonicSamples; ++i) {
    const double r = working_radius_ * static_cast<double>(i) / kMonotonicSamples;
    const double rd = f_ * distorted_angle(std::atan(r));
    if (!(rd > prev)) {
      throw std::invalid_argument("distortion: radial profile is not strictly increasing at r=" +
                                  std::to_string(r));
    }
    prev = rd;
  }
  max_radius_ = prev;
}

double DistortionParams::distorted_angle(double theta) const {
  const double t2 = theta * theta;
  return theta * (1.0 + t2 * (k_[0] + t2 * (k_[1] + t2 * (k_[2] + t2 * k_[3]))));
}

double DistortionParams::distorted_angle_slope(double theta) const {
  const double t2 = theta * theta;
  return 1.0 + t2 * (3.0 * k_[0] + t2 * (5.0 * k_[1] + t2 * (7.0 * k_[2] + t2 * 9.0 * k_[3])));
}

std::uint64_t DistortionParams::hash() const {
  std::uint64_t h = 0x57415250ULL;
  h = mix64(h, std::bit_cast<std::uint64_t>(f_));
  for (double c : k_) h = mix64(h, std::bit_cast<std::uint64_t>(c));
  h = mix64(h, std::bit_cast<std::uint64_t>(center_.x));
  h = mix64(h, std::bit_cast<std::uint64_t>(center_.y));
  h = mix64(h, std::bit_cast<std::uint64_t>(working_radius_));
  return h;
}

Point2 distort_point(Point2 p, const DistortionParams& params) {
  const double r = std::hypot(p.x, p.y);
  const Point2 c = params.center();
  if (r == 0.0) return c;
  const double factor = params.f() * params.distorted_angle(std::atan(r)) / r;
  return {factor * p.x + c.x, factor * p.y + c.y};
}

Point2 undistort_point(Point2 p, const DistortionParams& params) {
  const double dx = p.x - params.center().x;
  const double dy = p.y - params.center().y;
  const double rd = std::hypot(dx, dy);
  if (rd == 0.0) return {0.0, 0.0};
  if (rd > params.max_distorted_radius()) {
    throw DomainError("undistort: radius " + std::to_string(rd) + " exceeds reachable radius " +
                      std::to_string(params.max_distorted_radius()));
  }
  const double f = params.f();
  auto residual = [&](double r) { return f * params.distorted_angle(std::atan(r)) - rd; };

  double lo = 0.0;
  double hi = params.working_radius();
  // Exact for the pure equidistant model (k == 0), a good start otherwise.
  const double guess = rd / f;
  double r = guess < 1.5 ? std::clamp(std::tan(guess), lo, hi) : 0.5 * (lo + hi);
  bool converged = false;
  for (int it = 0; it < kMaxNewtonIterations; ++it) {
    const double g = residual(r);
    if (std::abs(g) <= 1e-14 * std::max(1.0, rd)) {
      converged = true;
      break;
    }
    if (g > 0.0) {
      hi = r;
    } else {
      lo = r;
    }
    const double theta = std::atan(r);
    const double slope = f * params.distorted_angle_slope(theta) / (1.0 + r * r);
    double next = r - g / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == r) {
      converged = true;
      break;
    }
    r = next;
  }
  if (!converged && std::abs(residual(r)) > kResidualTolerance) {
    throw DomainError("undistort: Newton iteration did not converge for radius " + std::to_string(rd));
  }
  const double s = r / rd;
  return {dx * s, dy * s};
}

// ---------------------------------------------------------------------------
// Frames and fields

ImageFrame::ImageFrame(std::size_t h, std::size_t w) : height(h), width(w) {
  if (h == 0 || w == 0) throw std::invalid_argument("image frame: sizes must be positive");
}

double ImageFrame::scale() const {
  const double longer = static_cast<double>(std::max(height, width));
  return longer > 1.0 ? 0.5 * (longer - 1.0) : 1.0;
}

Point2 ImageFrame::to_normalized(double u, double v) const {
  const double s = scale();
  return {(u - 0.5 * (static_cast<double>(width) - 1.0)) / s, (v - 0.5 * (static_cast<double>(height) - 1.0)) / s};
}

Point2 ImageFrame::to_pixel(Point2 p) const {
  const double s = scale();
  return {p.x * s + 0.5 * (static_cast<double>(width) - 1.0), p.y * s + 0.5 * (static_cast<double>(height) - 1.0)};
}

WarpField::WarpField(std::size_t height, std::size_t width, std::size_t src_height, std::size_t src_width)
    : height_(height),
      width_(width),
      src_height_(src_height),
      src_width_(src_width),
      u_(height * width, 0.0),
      v_(height * width, 0.0),
      valid_(height * width, 0) {
  if (height == 0 || width == 0) throw std::invalid_argument("warp field: sizes must be positive");
}

WarpField WarpField::identity(std::size_t height, std::size_t width) {
  WarpField field(height, width, height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      field.set(y * width + x, static_cast<double>(x), static_cast<double>(y), true);
    }
  }
  return field;
}

void WarpField::set(std::size_t i, double u, double v, bool valid) {
  u_[i] = u;
  v_[i] = v;
  valid_[i] = valid ? 1 : 0;
}

double WarpField::valid_fraction() const {
  if (valid_.empty()) return 0.0;
  std::size_t n = 0;
  for (auto b : valid_) n += b;
  return static_cast<double>(n) / static_cast<double>(valid_.size());
}

void WarpField::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write("WARP", 4);
  put_u16(os, 1);
  put_u32(os, static_cast<std::uint32_t>(height_));
  put_u32(os, static_cast<std::uint32_t>(width_));
  for (std::size_t i = 0; i < u_.size(); ++i) {
    put_f32(os, static_cast<float>(u_[i]));
    put_f32(os, static_cast<float>(v_[i]));
    os.put(static_cast<char>(valid_[i]));
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

WarpField WarpField::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "WARP", 4) != 0) {
    throw std::runtime_error(path.string() + ": not a warp sidecar (bad magic)");
  }
  const std::uint16_t version = get_u16(is);
  if (version != 1) throw std::runtime_error(path.string() + ": unsupported warp version " + std::to_string(version));
  const std::uint32_t h = get_u32(is);
  const std::uint32_t w = get_u32(is);
  WarpField field(h, w, 0, 0);
  for (std::size_t i = 0; i < field.u_.size(); ++i) {
    const float u = std::bit_cast<float>(get_u32(is));
    const float v = std::bit_cast<float>(get_u32(is));
    const int valid = is.get();
    if (valid == std::char_traits<char>::eof()) throw std::runtime_error("warp sidecar truncated");
    field.set(i, u, v, valid != 0);
  }
  return field;
}

namespace {

bool inside(const Point2& px, std::size_t height, std::size_t width) {
  return px.x >= 0.0 && px.y >= 0.0 && px.x <= static_cast<double>(width) - 1.0 &&
         px.y <= static_cast<double>(height) - 1.0;
}

}  // namespace

WarpField build_warp_field(std::size_t out_height, std::size_t out_width, std::size_t in_height,
                           std::size_t in_width, const DistortionParams& params, const WarpConvention& convention) {
  const ImageFrame out_frame(out_height, out_width);
  const ImageFrame in_frame(in_height, in_width);
  WarpField field(out_height, out_width, in_height, in_width);
  for (std::size_t y = 0; y < out_height; ++y) {
    for (std::size_t x = 0; x < out_width; ++x) {
      const std::size_t i = y * out_width + x;
      const Point2 n = out_frame.to_normalized(static_cast<double>(x), static_cast<double>(y));
      try {
        const Point2 src = undistort_point({n.x * convention.focal_scale, n.y * convention.focal_scale}, params);
        const Point2 px = in_frame.to_pixel(src);
        field.set(i, px.x, px.y, inside(px, in_height, in_width));
      } catch (const DomainError&) {
        field.set(i, 0.0, 0.0, false);
      }
    }
  }
  return field;
}

WarpField build_unwarp_field(std::size_t out_height, std::size_t out_width, std::size_t in_height,
                             std::size_t in_width, const DistortionParams& params, const WarpConvention& convention) {
  const ImageFrame out_frame(out_height, out_width);
  const ImageFrame in_frame(in_height, in_width);
  WarpField field(out_height, out_width, in_height, in_width);
  for (std::size_t y = 0; y < out_height; ++y) {
    for (std::size_t x = 0; x < out_width; ++x) {
      const Point2 n = out_frame.to_normalized(static_cast<double>(x), static_cast<double>(y));
      const Point2 d = distort_point(n, params);
      const Point2 px = in_frame.to_pixel({d.x / convention.focal_scale, d.y / convention.focal_scale});
      field.set(y * out_width + x, px.x, px.y, inside(px, in_height, in_width));
    }
  }
  return field;
}

Tensor remap_image(const Tensor& image, const WarpField& field) {
  if (image.rank() != 3) throw std::invalid_argument("remap_image: expected [C,H,W], got " + shape_to_string(image.shape()));
  const std::size_t C = image.dim(0);
  const std::size_t H = image.dim(1);
  const std::size_t W = image.dim(2);
  if (field.src_height() != 0 && (field.src_height() != H || field.src_width() != W)) {
    throw std::invalid_argument("remap_image: field built for " + std::to_string(field.src_height()) + "x" +
                                std::to_string(field.src_width()) + " source, image is " + std::to_string(H) + "x" +
                                std::to_string(W));
  }
  const std::size_t P = field.height() * field.width();
  Tensor out({C, field.height(), field.width()}, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = image.ptr() + c * H * W;
    double* dst = out.ptr() + c * P;
    for (std::size_t i = 0; i < P; ++i) {
      if (field.valid(i)) dst[i] = bilinear_value(plane, H, W, field.u(i), field.v(i));
    }
  }
  return out;
}

LabelMap remap_labels(const LabelMap& labels, const WarpField& field, std::uint8_t void_id) {
  if (labels.size() != labels.height * labels.width || labels.size() == 0) {
    throw std::invalid_argument("remap_labels: malformed label map");
  }
  if (field.src_height() != 0 && (field.src_height() != labels.height || field.src_width() != labels.width)) {
    throw std::invalid_argument("remap_labels: field built for a different source size");
  }
  LabelMap out(field.height(), field.width(), void_id);
  const long H = static_cast<long>(labels.height);
  const long W = static_cast<long>(labels.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!field.valid(i)) continue;
    const long x = std::lround(field.u(i));
    const long y = std::lround(field.v(i));
    if (x < 0 || y < 0 || x >= W || y >= H) continue;
    out.labels[i] = labels.labels[static_cast<std::size_t>(y * W + x)];
  }
  return out;
}

}  // namespace warpadapt
