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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "warpadapt/data.hpp"
#include "warpadapt/geometry.hpp"
#include "warpadapt/label_map.hpp"
#include "warpadapt/model.hpp"

namespace warpadapt {

/// Rows are groundtruth, columns predictions. Pixels whose groundtruth is
/// void are skipped. A prediction outside [0, n_classes) on a scored pixel
/// is a miss: it adds a false negative for the true class and no false
/// positive.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes);

  void add(const LabelMap& pred, const LabelMap& gt, std::uint8_t void_id = kVoidLabel);
  void merge(const ConfusionMatrix& other);

  std::size_t n_classes() const { return n_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * n_ + pred]; }
  /// Scored pixels, including misses.
  std::uint64_t total() const { return total_; }

  std::uint64_t true_positives(std::size_t c) const;
  std::uint64_t false_positives(std::size_t c) const;
  std::uint64_t false_negatives(std::size_t c) const;

  /// TP / (TP + FP + FN); empty for a class absent from both maps.
  std::vector<std::optional<double>> class_iou() const;
  /// Mean over classes with a defined IoU. Throws when nothing was scored.
  double miou() const;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> misses_;  // per groundtruth class
  std::uint64_t total_ = 0;
};

struct MiouResult {
  double miou = 0.0;
  std::vector<std::optional<double>> class_iou;
};

MiouResult miou(const LabelMap& pred, const LabelMap& gt, std::size_t n_classes, std::uint8_t void_id = kVoidLabel);
/// One confusion matrix accumulated over the whole set.
MiouResult miou(std::span<const LabelMap> preds, std::span<const LabelMap> gts, std::size_t n_classes,
                std::uint8_t void_id = kVoidLabel);

/// Eval-mode predictions, `batch_size` images at a time.
std::vector<LabelMap> predict_all(SegModel& model, std::span<const SegmentationSample> samples,
                                  std::size_t batch_size = 16);

/// Confusion matrix of `model` over a labelled set.
ConfusionMatrix evaluate(SegModel& model, std::span<const SegmentationSample> samples, std::size_t batch_size = 16);

/// Upper bound on what adaptation can reach: the model predicts on the
/// rectilinear images, then predictions and groundtruth are warped with the
/// same field and compared.
ConfusionMatrix upper_bound_confusion(SegModel& model, std::span<const SegmentationSample> rect_samples,
                                      const WarpField& field);
/// Same from precomputed rectilinear predictions.
ConfusionMatrix upper_bound_confusion(std::span<const LabelMap> rect_predictions, std::span<const LabelMap> rect_labels,
                                      const WarpField& field, std::size_t n_classes);
double upper_bound(SegModel& model, std::span<const SegmentationSample> rect_samples, const WarpField& field);
double upper_bound(SegModel& model, std::span<const SegmentationSample> rect_samples, const DistortionParams& params,
                   const WarpConvention& convention = {});

/// class_id,class_name,iou,tp,fp,fn  (iou empty for absent classes)
void write_class_report_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);
/// {"miou": ..., "pixels": ..., "classes": [{"id", "name", "iou"}...]} plus
/// any extra string fields.
void write_summary_json(const std::filesystem::path& path, const ConfusionMatrix& cm,
                        const std::vector<std::pair<std::string, std::string>>& extra = {});

}  // namespace warpadapt
