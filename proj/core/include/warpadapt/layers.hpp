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

#include <string>
#include <variant>
#include <vector>

#include "warpadapt/autograd.hpp"
#include "warpadapt/ops.hpp"
#include "warpadapt/random.hpp"

namespace warpadapt {

/// Role of a stored tensor. Every model tensor has exactly one.
enum class ParamKind { kFrozenBase, kOffset, kBnAffine, kBnRunning };

enum class Side { kEncoder, kDecoder };

const char* to_string(ParamKind kind);
const char* to_string(Side side);

/// A named view of one model tensor. `var` is defined for everything an
/// optimizer could update; BN running statistics only have `tensor`.
struct ParamRef {
  std::string name;
  ParamKind kind;
  Side side;
  Variable var;
  Tensor* tensor = nullptr;
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, ConvGeometry geometry);

  /// He-normal weights, zero bias.
  void init(Rng& rng);

  Variable forward(Tape& tape, const Variable& input) const;

  std::size_t in_channels() const { return weight.shape()[1]; }
  std::size_t out_channels() const { return weight.shape()[0]; }
  std::size_t kernel() const { return weight.shape()[2]; }
  std::size_t parameter_count() const { return weight.value().numel() + bias.value().numel(); }

  Variable weight;
  Variable bias;
  ConvGeometry geometry;
};

/// A convolution whose taps are displaced by offsets predicted from its own
/// input. The base weights are copied from a trained Conv2d and frozen; only
/// the offset predictor is meant to be trained.
class DeformableConv2d {
 public:
  /// Wraps `base`: its parameters are copied verbatim and the offset
  /// predictor (same kernel, stride, dilation and padding, 2*k*k outputs)
  /// starts at zero.
  explicit DeformableConv2d(const Conv2d& base);

  Variable forward(Tape& tape, const Variable& input) const;
  /// Offsets the predictor produces for `input`, [B, 2*k*k, H', W'].
  Variable predict_offsets(Tape& tape, const Variable& input) const;

  void set_offsets_enabled(bool enabled) { offsets_enabled_ = enabled; }
  bool offsets_enabled() const { return offsets_enabled_; }

  /// A frozen layer never computes or applies gradients for its base
  /// weight and bias.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  const Conv2d& base() const { return base_; }
  Conv2d& base() { return base_; }
  const Conv2d& offset_predictor() const { return predictor_; }
  Conv2d& offset_predictor() { return predictor_; }

 private:
  Conv2d base_;
  Conv2d predictor_;
  bool offsets_enabled_ = true;
  bool frozen_ = true;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);

  /// Batch statistics when `training`, running statistics otherwise.
  Variable forward(Tape& tape, const Variable& input, bool training);

  Variable gamma;
  Variable beta;
  BNState state;
};

/// Either a standard or a deformable convolution.
class ConvSlot {
 public:
  ConvSlot() = default;
  explicit ConvSlot(Conv2d conv) : impl_(std::move(conv)) {}

  Variable forward(Tape& tape, const Variable& input) const;

  bool deformable() const { return std::holds_alternative<DeformableConv2d>(impl_); }
  /// Wraps the standard conv; no-op when already deformable.
  void make_deformable();
  DeformableConv2d* as_deformable() { return std::get_if<DeformableConv2d>(&impl_); }
  const DeformableConv2d* as_deformable() const { return std::get_if<DeformableConv2d>(&impl_); }
  /// The base convolution (the wrapped one for deformable layers).
  const Conv2d& base() const;
  Conv2d& base();

 private:
  std::variant<Conv2d, DeformableConv2d> impl_;
};

/// conv -> batchnorm -> relu
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, ConvGeometry geometry);

  void init(Rng& rng);
  Variable forward(Tape& tape, const Variable& input, bool bn_training);

  ConvSlot conv;
  BatchNorm2d bn;
};

}  // namespace warpadapt
