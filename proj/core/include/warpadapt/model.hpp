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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "warpadapt/label_map.hpp"
#include "warpadapt/layers.hpp"

namespace warpadapt {

/// Which half of the network receives deformable conversions / BN tuning.
enum class Placement : std::uint8_t { kNone = 0, kEncoder = 1, kDecoder = 2, kBoth = 3 };

enum class AdaptMode : std::uint8_t { kNone = 0, kBnOnly = 1, kDcnOnly = 2, kDcnBn = 3 };

/// Tokens: NONE, ENCODER, DECODER, BOTH (case-sensitive).
Placement parse_placement(std::string_view token);
/// Tokens: NONE, BN_ONLY, DCN_ONLY, DCN_BN.
AdaptMode parse_mode(std::string_view token);
const char* to_string(Placement placement);
const char* to_string(AdaptMode mode);

bool placement_covers(Placement placement, Side side);
bool mode_trains_offsets(AdaptMode mode);
bool mode_trains_bn(AdaptMode mode);

struct ModelConfig {
  std::size_t in_channels = 3;
  std::size_t n_classes = 5;
  std::array<std::size_t, 3> widths{16, 32, 64};
  std::size_t context_width = 32;
  std::size_t decoder_width = 32;

  std::string describe() const;
  static ModelConfig parse(const std::string& descriptor);
};

struct CheckpointFlags {
  bool frozen = false;
  bool offsets_enabled = false;
  Placement placement = Placement::kNone;
  AdaptMode mode = AdaptMode::kNone;
};

/// Named-tensor container. File layout (little-endian):
///   "WADP", u16 version,
///   u32 length + architecture descriptor text,
///   u32 tensor count, then per tensor: u32 length + name, u8 dtype (1=f64),
///     u32 rank, rank x u32 extents, f64 payload,
///   u8 frozen, u8 offsets_enabled, u8 placement, u8 mode.
struct ModelCheckpoint {
  static constexpr std::uint16_t kVersion = 1;

  std::string architecture;
  std::vector<std::pair<std::string, Tensor>> tensors;
  CheckpointFlags flags;

  const Tensor* find(std::string_view name) const;
  void save(const std::filesystem::path& path) const;
  static ModelCheckpoint load(const std::filesystem::path& path);
};

enum class DiffKind { kChanged, kAdded, kRemoved };

struct TensorDiff {
  std::string name;
  DiffKind kind;
};

/// Tensors whose bits differ between two checkpoints, in `after` order
/// followed by removals.
std::vector<TensorDiff> diff_checkpoints(const ModelCheckpoint& before, const ModelCheckpoint& after);

enum class ForwardMode { kTrain, kEval };

/// Toy encoder-decoder segmentation network:
///   enc1 (stride 1) -> enc2 (stride 2, skip) -> enc3 (stride 2)
///   -> context: two parallel 3x3 blocks, dilation 1 and 2, concatenated
///   -> upsample x2, concat skip -> dec1 -> 1x1 head -> upsample x2.
/// Input extents must be divisible by 4; logits come out at input size.
class SegModel {
 public:
  explicit SegModel(ModelConfig config = {}, std::uint64_t init_seed = 0);
  SegModel(SegModel&&) = default;
  SegModel& operator=(SegModel&&) = default;
  SegModel(const SegModel&) = delete;
  SegModel& operator=(const SegModel&) = delete;

  /// Deep copy through the checkpoint representation.
  SegModel clone();

  const ModelConfig& config() const { return config_; }

  /// In kTrain mode each BN layer uses batch statistics iff its
  /// `bn_batch_stats` flag is set; kEval always uses running statistics.
  Variable forward(Tape& tape, const Variable& image, ForwardMode mode);

  /// Eval-mode logits without recording.
  Tensor predict_logits(const Tensor& images);
  /// Per-image argmax maps.
  std::vector<LabelMap> predict(const Tensor& images);

  struct ConvLayerRef {
    std::string name;
    Side side;
    ConvSlot* slot;
    BatchNorm2d* bn;  // null for the head
  };
  std::vector<ConvLayerRef> layers();

  /// Every stored tensor with its role, in a fixed order.
  std::vector<ParamRef> parameters();
  std::size_t parameter_count();

  /// Wraps every standard conv on the covered side(s) as a deformable conv
  /// with a zero-initialized offset predictor and frozen base.
  void convert_to_deformable(Placement placement);
  Placement placement() const { return placement_; }

  void set_offsets_enabled(bool enabled);
  bool offsets_enabled() const { return offsets_enabled_; }

  AdaptMode adapt_mode() const { return mode_; }
  void set_adapt_mode(AdaptMode mode) { mode_ = mode; }

  /// Selects which BN layers normalize with batch statistics in kTrain mode.
  void set_bn_batch_stats(Placement placement);

  /// Sets requires_grad on every parameter: true exactly for `trainable`
  /// kinds on the covered side(s).
  void set_trainable(std::initializer_list<ParamKind> kinds, Placement placement);

  ModelCheckpoint to_checkpoint();
  /// Rebuilds a model. When `expected` is given, a checkpoint recorded with
  /// a different placement is rejected.
  static SegModel from_checkpoint(const ModelCheckpoint& checkpoint,
                                  std::optional<Placement> expected = std::nullopt);

 private:
  ModelConfig config_;
  ConvBlock enc1_, enc2_, enc3_, ctx1_, ctx2_, dec1_;
  ConvSlot head_;
  std::vector<bool> bn_batch_stats_;
  Placement placement_ = Placement::kNone;
  AdaptMode mode_ = AdaptMode::kNone;
  bool offsets_enabled_ = false;
};

void save_checkpoint(SegModel& model, const std::filesystem::path& path);
SegModel load_checkpoint(const std::filesystem::path& path, std::optional<Placement> expected = std::nullopt);

}  // namespace warpadapt
