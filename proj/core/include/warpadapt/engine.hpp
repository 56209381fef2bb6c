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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "warpadapt/autograd.hpp"
#include "warpadapt/data.hpp"
#include "warpadapt/model.hpp"

namespace warpadapt {

/// lr0 * (1 - step/total)^power. Requires total > 0 and 0 <= step <= total.
double poly_lr(double lr0, long long step, long long total, double power);

/// Mean over non-void pixels of w[y] * -log softmax(logits)[y]; the
/// normalizer is the number of non-void pixels. Throws when every pixel is
/// void.
Variable weighted_cross_entropy(Tape& tape, const Variable& logits, std::span<const LabelMap> labels,
                                std::span<const double> class_weights, std::uint8_t void_id = kVoidLabel);

/// Inverse pixel frequency relative to a uniform split, (1/C) / freq_c,
/// clipped to [lo, hi]; classes that never occur get `hi`.
std::vector<double> inverse_frequency_weights(std::span<const double> frequencies, double lo = 0.2, double hi = 5.0);

/// Adam over groups of variables that share a base learning rate.
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void add_group(std::vector<Variable> params, double lr);
  /// One update with every group's rate multiplied by `lr_factor`. Missing
  /// gradients count as zero. Gradients are cleared afterwards.
  void step(double lr_factor = 1.0);

  std::size_t steps() const { return t_; }

 private:
  struct Slot {
    Variable var;
    Tensor m;
    Tensor v;
  };
  struct Group {
    double lr;
    std::vector<Slot> slots;
  };
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Group> groups_;
};

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 8;
  double lr_encoder = 0.003;
  double lr_decoder = 0.03;
  double poly_power = 0.9;
  /// Flips only; scale and rotation are off.
  AugmentConfig augment{true, 1.0, 1.0, 0.0};
  bool class_weighting = true;
  std::uint64_t seed = 17;
  /// Evaluate on the validation split after every epoch.
  bool track_val = true;
};

struct AdaptationConfig {
  AdaptMode mode = AdaptMode::kDcnBn;
  Placement placement = Placement::kBoth;
  std::size_t epochs = 15;
  std::size_t batch_size = 8;
  double lr_encoder = 0.001;
  double lr_decoder = 0.01;
  double poly_power = 0.9;
  /// Few-shot subset of the training split; empty means the full split.
  std::optional<std::size_t> subset_n;
  /// With a subset, keep the optimizer step count of a full-split run by
  /// cycling through the subset.
  bool match_full_steps = true;
  AugmentConfig augment{true, 1.0, 1.0, 0.0};
  bool class_weighting = true;
  std::uint64_t seed = 17;
  bool track_val = true;

  /// Throws std::invalid_argument on a bad mode/placement or rate.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_miou;
  double lr_factor = 0.0;  // poly factor at the epoch's last step
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::optional<double> test_miou;
  double wall_seconds = 0.0;
  std::vector<std::pair<std::string, std::string>> config;

  /// epoch,train_loss,val_miou,lr_factor
  void write_csv(const std::filesystem::path& path) const;
  /// Everything except wall time, which is not reproducible.
  void write_json(const std::filesystem::path& path) const;
};

/// Called after every epoch; return false to stop early.
using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  SegModel model;
  TrainReport report;
};

/// Trains every parameter of a freshly initialized model on rectilinear
/// data. Throws NumericalError when the loss stops being finite.
TrainResult train_baseline(const SplitSamples& data, const TrainConfig& config, const ModelConfig& model_config = {},
                           const EpochCallback& on_epoch = {});

/// Parameter names a run of `mode`/`placement` may change relative to the
/// baseline: offset predictors (DCN modes) and BN affine + running
/// statistics (BN modes) on the covered side(s).
bool adaptation_may_change(const std::string& name, Side side, AdaptMode mode, Placement placement);

/// Names of tensors that changed although the mode forbids it.
std::vector<std::string> freeze_violations(const ModelCheckpoint& baseline, SegModel& adapted, AdaptMode mode,
                                           Placement placement);

/// Adapts a rectilinear baseline to fisheye data. The returned model has
/// passed the freeze check; a violation throws std::logic_error.
TrainResult adapt(const ModelCheckpoint& baseline, const SplitSamples& fisheye, const AdaptationConfig& config,
                  const EpochCallback& on_epoch = {});

struct AblationRow {
  AdaptMode mode = AdaptMode::kNone;
  Placement placement = Placement::kNone;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double miou = 0.0;
};

struct AblationSuiteConfig {
  AdaptationConfig base{};
  std::vector<std::uint64_t> seeds{17};
  /// Mode x placement cells of the component table.
  std::vector<std::pair<AdaptMode, Placement>> cells;
  /// Few-shot sizes for the curve (run with DCN_BN on BOTH); 0 = full split.
  std::vector<std::size_t> fewshot_sizes{1, 50, 100, 0};
  /// Called after each run.
  std::function<void(const AblationRow&)> on_row;

  /// All nine {BN_ONLY, DCN_ONLY, DCN_BN} x {ENCODER, DECODER, BOTH} cells.
  static std::vector<std::pair<AdaptMode, Placement>> all_cells();
};

struct AblationTable {
  std::vector<AblationRow> baseline;  // un-adapted, one row per seed
  std::vector<AblationRow> table;
  std::vector<AblationRow> fewshot;

  /// mode,placement,n,seed,miou
  static void write_csv(const std::filesystem::path& path, std::span<const AblationRow> rows);
};

/// Runs the component table and the few-shot curve, scoring on the fisheye
/// test split. `baselines` pairs each seed with its baseline checkpoint.
AblationTable run_ablation_suite(std::span<const std::pair<std::uint64_t, ModelCheckpoint>> baselines,
                                 const SplitSamples& fisheye, const AblationSuiteConfig& config);

}  // namespace warpadapt
