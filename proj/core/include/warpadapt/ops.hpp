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

#include "warpadapt/autograd.hpp"
#include "warpadapt/tensor.hpp"

// Differentiable primitives. Every op validates shapes, computes its output
// eagerly and, when the tape records and some input requires a gradient,
// registers an analytic backward rule.
//
// Pixel coordinates follow the image convention: u is the horizontal
// (column) coordinate, v the vertical (row) coordinate.

namespace warpadapt {

struct ConvGeometry {
  int stride = 1;
  int dilation = 1;
  int padding = 0;
};

/// Output extent of a convolution along one axis; throws if it is < 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               const ConvGeometry& g);

/// out[b,o,p] = sum_{c,i} w[o,c,i] * x[b,c,p*stride + i*dilation - pad] + bias[o]
/// with zero padding. `bias` may be undefined.
Variable conv2d(Tape& tape, const Variable& input, const Variable& weight,
                const Variable& bias, const ConvGeometry& geometry);

/// Deformable convolution. `offsets` is [B, 2*k*k, H', W']; channel 2t holds
/// the horizontal displacement of tap t (row-major tap index) and 2t+1 the
/// vertical one. Displacements are added after the dilated tap position and
/// sampled bilinearly with zero padding.
Variable deform_conv2d(Tape& tape, const Variable& input,
                       const Variable& offsets, const Variable& weight,
                       const Variable& bias, const ConvGeometry& geometry);

/// Zero-padded bilinear interpolation of one plane at (u, v).
double bilinear_value(const double* plane, std::size_t height,
                      std::size_t width, double u, double v);

/// Samples every channel of `map` [C,H,W] at the scalar coordinates `u`, `v`
/// (shape {1}). Gradients flow to the map and to both coordinates.
Variable bilinear_sample(Tape& tape, const Variable& map, const Variable& u,
                         const Variable& v);

struct BNState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BNState fresh(std::size_t channels);
};

/// Training mode normalizes with batch statistics and updates `state`
/// (unbiased variance for the running estimate); eval mode uses the running
/// statistics.
Variable batchnorm2d(Tape& tape, const Variable& input, const Variable& gamma,
                     const Variable& beta, BNState& state, bool training);

Variable relu(Tape& tape, const Variable& input);

/// 2x bilinear upsampling of [B,C,H,W] with half-pixel centers and edge
/// clamping.
Variable upsample_bilinear2x(Tape& tape, const Variable& input);

/// Softmax over dim 1 (dim 0 for rank-1 tensors).
Variable softmax(Tape& tape, const Variable& input);

Variable add(Tape& tape, const Variable& a, const Variable& b);
Variable mul(Tape& tape, const Variable& a, const Variable& b);
Variable scale(Tape& tape, const Variable& a, double factor);
Variable reshape(Tape& tape, const Variable& a, Shape shape);
Variable sum(Tape& tape, const Variable& a);

/// Concatenates two [B,*,H,W] tensors along the channel axis.
Variable concat_channels(Tape& tape, const Variable& a, const Variable& b);

}  // namespace warpadapt
