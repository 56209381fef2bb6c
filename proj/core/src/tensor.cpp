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

#include "warpadapt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "warpadapt/autograd.hpp"

namespace warpadapt {

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {
void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw std::invalid_argument("tensor shape " + shape_to_string(shape) + " has a zero extent");
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw std::invalid_argument("tensor payload of " + std::to_string(data_.size()) +
                                " values does not match shape " + shape_to_string(shape_));
  }
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw std::invalid_argument("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: shape " + shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Variable / Tape

Variable::Variable(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor& Variable::grad() const {
  if (node_->grad.empty()) node_->grad = Tensor(node_->value.shape(), 0.0);
  return node_->grad;
}

Variable Variable::detached_copy() const {
  return Variable(node_->value, node_->requires_grad);
}

bool Tape::should_record(std::initializer_list<const Variable*> inputs) const {
  if (!recording()) return false;
  if (consumed_) throw std::logic_error("tape already replayed; record on a fresh tape");
  for (const Variable* v : inputs) {
    if (v != nullptr && v->requires_grad()) return true;
  }
  return false;
}

void Tape::record(std::function<void()> backward_rule) { rules_.push_back(std::move(backward_rule)); }

void Tape::backward(const Variable& loss) {
  if (consumed_) throw std::logic_error("backward() called twice on the same tape");
  if (loss.value().numel() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  consumed_ = true;
  if (!loss.requires_grad()) return;
  loss.grad()[0] += 1.0;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  rules_.clear();
}

}  // namespace warpadapt
