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

#include "warpadapt/layers.hpp"

#include <cmath>

namespace warpadapt {

const char* to_string(ParamKind kind) {
  switch (kind) {
    case ParamKind::kFrozenBase: return "frozen-base";
    case ParamKind::kOffset: return "offset";
    case ParamKind::kBnAffine: return "bn-affine";
    case ParamKind::kBnRunning: return "bn-running";
  }
  return "?";
}

const char* to_string(Side side) { return side == Side::kEncoder ? "encoder" : "decoder"; }

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, ConvGeometry g)
    : weight(Tensor({out_channels, in_channels, kernel, kernel}, 0.0), true),
      bias(Tensor({out_channels}, 0.0), true),
      geometry(g) {
  if (kernel % 2 == 0) throw std::invalid_argument("Conv2d: kernel size must be odd");
}

void Conv2d::init(Rng& rng) {
  const double fan_in = static_cast<double>(in_channels() * kernel() * kernel());
  const double stddev = std::sqrt(2.0 / fan_in);
  for (double& w : weight.value().data()) w = stddev * rng.normal();
  bias.value().fill(0.0);
}

Variable Conv2d::forward(Tape& tape, const Variable& input) const {
  return conv2d(tape, input, weight, bias, geometry);
}

DeformableConv2d::DeformableConv2d(const Conv2d& base) {
  base_.weight = base.weight.detached_copy();
  base_.bias = base.bias.detached_copy();
  base_.geometry = base.geometry;
  const std::size_t k = base.kernel();
  predictor_ = Conv2d(base.in_channels(), 2 * k * k, k, base.geometry);
  set_frozen(true);
}

void DeformableConv2d::set_frozen(bool frozen) {
  frozen_ = frozen;
  base_.weight.set_requires_grad(!frozen);
  base_.bias.set_requires_grad(!frozen);
}

Variable DeformableConv2d::predict_offsets(Tape& tape, const Variable& input) const {
  return predictor_.forward(tape, input);
}

Variable DeformableConv2d::forward(Tape& tape, const Variable& input) const {
  if (!offsets_enabled_) return base_.forward(tape, input);
  const Variable offsets = predict_offsets(tape, input);
  return deform_conv2d(tape, input, offsets, base_.weight, base_.bias, base_.geometry);
}

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma(Tensor({channels}, 1.0), true), beta(Tensor({channels}, 0.0), true), state(BNState::fresh(channels)) {}

Variable BatchNorm2d::forward(Tape& tape, const Variable& input, bool training) {
  return batchnorm2d(tape, input, gamma, beta, state, training);
}

Variable ConvSlot::forward(Tape& tape, const Variable& input) const {
  return std::visit([&](const auto& conv) { return conv.forward(tape, input); }, impl_);
}

void ConvSlot::make_deformable() {
  if (deformable()) return;
  impl_ = DeformableConv2d(std::get<Conv2d>(impl_));
}

const Conv2d& ConvSlot::base() const {
  if (const auto* d = as_deformable()) return d->base();
  return std::get<Conv2d>(impl_);
}

Conv2d& ConvSlot::base() {
  if (auto* d = as_deformable()) return d->base();
  return std::get<Conv2d>(impl_);
}

ConvBlock::ConvBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, ConvGeometry geometry)
    : conv(Conv2d(in_channels, out_channels, kernel, geometry)), bn(out_channels) {}

void ConvBlock::init(Rng& rng) { conv.base().init(rng); }

Variable ConvBlock::forward(Tape& tape, const Variable& input, bool bn_training) {
  const Variable y = conv.forward(tape, input);
  return relu(tape, bn.forward(tape, y, bn_training));
}

}  // namespace warpadapt
