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

#include <functional>
#include <memory>
#include <vector>

#include "warpadapt/tensor.hpp"

namespace warpadapt {

/// A tensor with an optional gradient slot. Copies share the same storage,
/// so a parameter held by a layer and the handle recorded on a tape refer
/// to one node.
class Variable {
 public:
  Variable() = default;
  explicit Variable(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  explicit operator bool() const { return defined(); }

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  // Handle semantics: gradient state is mutable through const handles, the
  // same way a const shared_ptr still reaches a mutable pointee.
  void set_requires_grad(bool flag) const { node_->requires_grad = flag; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Gradient buffer, zero-allocated on first access.
  Tensor& grad() const;
  void clear_grad() const { node_->grad = Tensor(); }

  bool same_node(const Variable& other) const { return node_ == other.node_; }

  /// Deep copy: fresh node, same value, no gradient.
  Variable detached_copy() const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> node_;
};

/// Ordered record of primitive applications. Backward rules run once, in
/// reverse recording order; a second call to backward() is an error.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }

  /// True when the op should register a backward rule for these inputs.
  bool should_record(std::initializer_list<const Variable*> inputs) const;

  void record(std::function<void()> backward_rule);

  /// Seeds d(loss)/d(loss) = 1 and replays the tape. `loss` must hold one
  /// element.
  void backward(const Variable& loss);

  std::size_t size() const { return rules_.size(); }
  bool consumed() const { return consumed_; }

 private:
  Mode mode_;
  bool consumed_ = false;
  std::vector<std::function<void()>> rules_;
};

}  // namespace warpadapt
