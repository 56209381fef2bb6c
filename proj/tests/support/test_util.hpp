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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "warpadapt/autograd.hpp"
#include "warpadapt/ops.hpp"
#include "warpadapt/random.hpp"
#include "warpadapt/tensor.hpp"

namespace warpadapt::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& x : t.data()) x = rng.uniform(lo, hi);
  return t;
}

/// sum(out * r) for a fixed random r, so every output element carries a
/// distinct weight in the loss.
inline Variable weighted_sum(Tape& tape, const Variable& out, const Tensor& r) {
  return sum(tape, mul(tape, out, Variable(r)));
}

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

/// Worst relative error between the taped gradient of `param` and central
/// differences with step h, over at most `max_entries` evenly spread
/// entries. `loss` rebuilds the graph on the given tape from the current
/// parameter values.
inline double gradient_error(const std::function<Variable(Tape&)>& loss, Variable param, double h = 1e-5,
                             std::size_t max_entries = 24) {
  param.clear_grad();
  {
    Tape tape;
    Variable l = loss(tape);
    tape.backward(l);
  }
  const Tensor analytic = param.has_grad() ? param.grad() : Tensor(param.shape(), 0.0);
  param.clear_grad();

  auto eval = [&] {
    Tape tape(Tape::Mode::kInference);
    return loss(tape).value()[0];
  };
  const std::size_t n = param.value().numel();
  const std::size_t stride = std::max<std::size_t>(1, n / max_entries);
  double worst = 0.0;
  for (std::size_t i = 0; i < n; i += stride) {
    double& x = param.value()[i];
    const double x0 = x;
    x = x0 + h;
    const double up = eval();
    x = x0 - h;
    const double down = eval();
    x = x0;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

/// Distance of a coordinate to the nearest integer.
inline double lattice_distance(double x) { return std::abs(x - std::round(x)); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("warpadapt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace warpadapt::testing
