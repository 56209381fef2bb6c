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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "warpadapt/geometry.hpp"
#include "warpadapt/label_map.hpp"
#include "warpadapt/random.hpp"
#include "warpadapt/tensor.hpp"

namespace warpadapt {

/// Semantic classes of the synthetic scenes.
enum SceneClass : std::uint8_t { kBackground = 0, kRoadBand = 1, kDisc = 2, kRectangle = 3, kPole = 4 };
inline constexpr std::size_t kSceneClassCount = 5;

const char* class_name(std::size_t id);

enum class Variant { kRect, kFisheye };
const char* to_string(Variant variant);
/// "rect" or "fisheye".
Variant parse_variant(std::string_view token);

/// An RGB image in [0, 1] with its class map. Void pixels (kVoidLabel) mark
/// regions without a rectilinear source or outside an augmented crop.
struct SegmentationSample {
  std::uint64_t scene_id = 0;
  Variant variant = Variant::kRect;
  Tensor image;  // [3, H, W]
  LabelMap labels;

  std::size_t height() const { return labels.height; }
  std::size_t width() const { return labels.width; }
  std::vector<bool> void_mask() const;
  double void_fraction() const;
};

/// Parameters of the procedural scene generator. Sizes below are in pixels
/// for a 32-row image and scale linearly with `height`.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t height = 32;
  std::size_t width = 64;

  std::array<std::size_t, 2> discs{1, 3};  // inclusive count range
  std::array<std::size_t, 2> rectangles{1, 3};
  std::array<std::size_t, 2> poles{1, 3};

  /// Per-instance color spread around the class mean color.
  double color_jitter = 0.25;
  /// Relative amplitude of the class textures.
  double texture_amplitude = 0.35;
  /// Standard deviation of additive pixel noise.
  double noise = 0.03;
};

/// Deterministic in (spec, index); pixel values are multiples of 1/255 so a
/// PNG round trip is lossless.
SegmentationSample generate_scene(const SceneSpec& spec, std::uint64_t index);

/// Resamples a rectilinear sample through `field`: bilinear image (quantized
/// to 8 bits), nearest labels, invalid pixels black / void.
SegmentationSample derive_fisheye(const SegmentationSample& sample, const WarpField& field);
SegmentationSample derive_fisheye(const SegmentationSample& sample, const DistortionParams& params,
                                  const WarpConvention& convention = {});
std::vector<SegmentationSample> derive_fisheye(const std::vector<SegmentationSample>& samples,
                                               const DistortionParams& params,
                                               const WarpConvention& convention = {});

/// Training-time augmentation: random horizontal flip, isotropic scale and
/// rotation about the image center. Labels are resampled nearest-neighbor
/// and uncovered pixels become void.
struct AugmentConfig {
  bool flip = true;
  double scale_min = 0.75;
  double scale_max = 1.25;
  double max_rotation_deg = 10.0;

  bool geometric() const { return scale_min != 1.0 || scale_max != 1.0 || max_rotation_deg != 0.0; }
};

SegmentationSample augment(const SegmentationSample& sample, const AugmentConfig& config, Rng& rng);

/// Per-class share of non-void pixels.
std::vector<double> class_frequencies(std::span<const SegmentationSample> samples, std::size_t n_classes);

/// Images stacked into [B,3,H,W] plus their label maps.
struct Batch {
  Tensor images;
  std::vector<LabelMap> labels;
};

Batch make_batch(std::span<const SegmentationSample> samples, std::span<const std::size_t> indices);
Batch make_batch(std::span<const SegmentationSample> samples);

enum class Split { kTrain, kVal, kTest };
const char* to_string(Split split);
Split parse_split(std::string_view token);

struct DatasetSpec {
  SceneSpec scene;
  std::size_t n_train = 200;
  std::size_t n_val = 100;
  std::size_t n_test = 200;
};

/// Rectilinear samples; scene ids run train, then val, then test.
struct SplitSamples {
  std::vector<SegmentationSample> train;
  std::vector<SegmentationSample> val;
  std::vector<SegmentationSample> test;

  std::vector<SegmentationSample>& operator[](Split split);
  const std::vector<SegmentationSample>& operator[](Split split) const;
};

SplitSamples generate_dataset(const DatasetSpec& spec);
SplitSamples derive_fisheye(const SplitSamples& rect, const DistortionParams& params,
                            const WarpConvention& convention = {});

struct ManifestEntry {
  std::uint64_t scene_id = 0;
  Split split = Split::kTrain;
  Variant variant = Variant::kRect;
  std::string image;  // relative to the manifest directory unless absolute
  std::string label;
  std::uint64_t params_hash = 0;  // 0 for rectilinear entries

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Line-oriented text, tab-separated:
///   scene_id  split  variant  image  label  params_hash(hex)
/// Blank lines and lines starting with '#' are ignored.
class Manifest {
 public:
  std::vector<ManifestEntry> entries;
  /// Directory relative paths are resolved against.
  std::filesystem::path root;

  /// Parses and checks the rect/fisheye pairing.
  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Throws unless every scene id has exactly one rect and one fisheye entry
  /// with matching splits (a manifest without fisheye entries is accepted).
  void validate_pairing() const;

  std::vector<const ManifestEntry*> select(Split split, Variant variant) const;
  std::size_t count(Split split, Variant variant) const { return select(split, variant).size(); }

  std::filesystem::path resolve(const std::string& relative) const;
};

/// First n entries of a seeded uniform permutation of [0, pool). Prefixes
/// for growing n under one seed are nested. Throws unless 1 <= n <= pool.
std::vector<std::size_t> fewshot_indices(std::size_t pool, long long n, std::uint64_t seed);

/// Keeps n training scenes (both variants) drawn uniformly without
/// replacement; val and test entries are kept. The draw is a seeded
/// permutation prefix, so subsets for growing n are nested.
Manifest sample_fewshot_subset(const Manifest& manifest, long long n, std::uint64_t seed);

/// Reads the PNG pairs of one split/variant in manifest order.
std::vector<SegmentationSample> load_samples(const Manifest& manifest, Split split, Variant variant);

/// Writes images/, labels/ and manifest.tsv under `dir`; returns the
/// manifest.
Manifest write_dataset(const std::filesystem::path& dir, const SplitSamples& rect, const SplitSamples& fisheye,
                       std::uint64_t params_hash);

}  // namespace warpadapt
