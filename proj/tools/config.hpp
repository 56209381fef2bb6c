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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "warpadapt/data.hpp"
#include "warpadapt/engine.hpp"
#include "warpadapt/geometry.hpp"
#include "warpadapt/model.hpp"

namespace warpadapt::cli {

/// Flat `section.key = value` configuration. Every key has a default; keys
/// outside the registry are rejected.
class Config {
 public:
  Config();

  /// Reads `section.key = value` lines; `#` starts a comment.
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  double number(const std::string& key) const;
  std::uint64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::uint64_t> integer_list(const std::string& key) const;

  /// Every key with its resolved value, in registry order.
  std::string resolved() const;
  void write_resolved(const std::filesystem::path& path) const;

  static std::vector<std::pair<std::string, std::string>> documented_keys();

  DatasetSpec dataset() const;
  DistortionParams distortion() const;
  WarpConvention convention() const;
  ModelConfig model() const;
  TrainConfig train() const;
  AdaptationConfig adaptation() const;
  std::uint64_t seed() const { return integer("seed"); }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace warpadapt::cli
