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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "warpadapt/label_map.hpp"
#include "warpadapt/tensor.hpp"

namespace warpadapt {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Raised by undistort_point when a fisheye point has no rectilinear preimage.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Equidistant-polynomial fisheye model:
///   theta   = atan(r),  r = |(x, y)|
///   theta_d = theta * (1 + k1 theta^2 + k2 theta^4 + k3 theta^6 + k4 theta^8)
///   (x', y') = f * theta_d / r * (x, y) + center
///
/// Construction checks that r -> f * theta_d(atan r) is strictly increasing
/// on [0, working_radius].
class DistortionParams {
 public:
  static constexpr double kDefaultWorkingRadius = 4.0;

  explicit DistortionParams(double f, std::array<double, 4> k = {}, Point2 center = {},
                            double working_radius = kDefaultWorkingRadius);

  double f() const { return f_; }
  const std::array<double, 4>& k() const { return k_; }
  Point2 center() const { return center_; }
  double working_radius() const { return working_radius_; }

  /// theta_d as a function of theta.
  double distorted_angle(double theta) const;
  /// d theta_d / d theta.
  double distorted_angle_slope(double theta) const;
  /// Largest distorted radius reachable inside the working radius.
  double max_distorted_radius() const { return max_radius_; }

  /// Stable 64-bit digest of all parameters (used in manifests).
  std::uint64_t hash() const;

 private:
  double f_;
  std::array<double, 4> k_;
  Point2 center_;
  double working_radius_;
  double max_radius_ = 0.0;
};

Point2 distort_point(Point2 p, const DistortionParams& params);

/// Inverse of distort_point by safeguarded Newton iteration on the radius.
/// Throws DomainError when the point lies beyond the reachable radius or the
/// iteration fails to reach a residual of 1e-9.
Point2 undistort_point(Point2 p, const DistortionParams& params);

/// Pixel <-> normalized coordinates: the image center maps to (0, 0) and the
/// longer axis spans [-1, 1].
struct ImageFrame {
  std::size_t height = 0;
  std::size_t width = 0;

  ImageFrame(std::size_t h, std::size_t w);
  double scale() const;
  Point2 to_normalized(double u, double v) const;
  Point2 to_pixel(Point2 p) const;
};

/// How normalized image coordinates relate to the units of f. One normalized
/// unit (half the longer image axis) equals `focal_scale` distortion units,
/// so f == focal_scale keeps the central magnification at 1.
struct WarpConvention {
  double focal_scale = 150.0;
};

/// For every output pixel, the source pixel (u = column, v = row) to sample
/// and whether such a source exists.
class WarpField {
 public:
  WarpField() = default;
  WarpField(std::size_t height, std::size_t width, std::size_t src_height, std::size_t src_width);

  static WarpField identity(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  /// Source extent the field was built for; 0 when unknown (e.g. loaded
  /// from a sidecar).
  std::size_t src_height() const { return src_height_; }
  std::size_t src_width() const { return src_width_; }

  double u(std::size_t i) const { return u_[i]; }
  double v(std::size_t i) const { return v_[i]; }
  bool valid(std::size_t i) const { return valid_[i] != 0; }
  void set(std::size_t i, double u, double v, bool valid);

  double valid_fraction() const;

  /// Binary sidecar: "WARP", u16 version, u32 H, u32 W, then per pixel
  /// (f32 u, f32 v, u8 valid), little-endian.
  void save(const std::filesystem::path& path) const;
  static WarpField load(const std::filesystem::path& path);

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t src_height_ = 0;
  std::size_t src_width_ = 0;
  std::vector<double> u_;
  std::vector<double> v_;
  std::vector<std::uint8_t> valid_;
};

/// Fisheye image of size out_size sampled from a rectilinear image of size
/// in_size: each output pixel is mapped back through undistort_point.
WarpField build_warp_field(std::size_t out_height, std::size_t out_width, std::size_t in_height,
                           std::size_t in_width, const DistortionParams& params,
                           const WarpConvention& convention = {});

/// The reverse resampling: a rectilinear image of size out_size sampled from
/// a fisheye image of size in_size through distort_point.
WarpField build_unwarp_field(std::size_t out_height, std::size_t out_width, std::size_t in_height,
                             std::size_t in_width, const DistortionParams& params,
                             const WarpConvention& convention = {});

/// Bilinear resampling of [C,H,W]; invalid pixels become 0.
Tensor remap_image(const Tensor& image, const WarpField& field);

/// Nearest-neighbor resampling; invalid pixels become void_id.
LabelMap remap_labels(const LabelMap& labels, const WarpField& field, std::uint8_t void_id = kVoidLabel);

}  // namespace warpadapt
