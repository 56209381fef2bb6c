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

#include "warpadapt/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "json.hpp"

namespace warpadapt {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes)
    : n_(n_classes), counts_(n_classes * n_classes, 0), misses_(n_classes, 0) {
  if (n_classes == 0) throw std::invalid_argument("ConfusionMatrix: n_classes must be positive");
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt, std::uint8_t void_id) {
  if (pred.height != gt.height || pred.width != gt.width || pred.size() != gt.size()) {
    throw std::invalid_argument("miou: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                                " vs groundtruth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint8_t g = gt.labels[i];
    if (g == void_id) continue;
    if (g >= n_) throw std::invalid_argument("miou: groundtruth label " + std::to_string(g) + " out of range");
    const std::uint8_t p = pred.labels[i];
    if (p < n_) {
      ++counts_[g * n_ + p];
    } else {
      ++misses_[g];
    }
    ++total_;
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.n_ != n_) throw std::invalid_argument("ConfusionMatrix::merge: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  for (std::size_t i = 0; i < n_; ++i) misses_[i] += other.misses_[i];
  total_ += other.total_;
}

std::uint64_t ConfusionMatrix::true_positives(std::size_t c) const { return at(c, c); }

std::uint64_t ConfusionMatrix::false_positives(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t g = 0; g < n_; ++g) {
    if (g != c) s += at(g, c);
  }
  return s;
}

std::uint64_t ConfusionMatrix::false_negatives(std::size_t c) const {
  std::uint64_t s = misses_[c];
  for (std::size_t p = 0; p < n_; ++p) {
    if (p != c) s += at(c, p);
  }
  return s;
}

std::vector<std::optional<double>> ConfusionMatrix::class_iou() const {
  std::vector<std::optional<double>> out(n_);
  for (std::size_t c = 0; c < n_; ++c) {
    const std::uint64_t tp = true_positives(c);
    const std::uint64_t denom = tp + false_positives(c) + false_negatives(c);
    if (denom > 0) out[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double ConfusionMatrix::miou() const {
  if (total_ == 0) throw std::invalid_argument("miou: no evaluable (non-void) pixels");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& iou : class_iou()) {
    if (iou) {
      sum += *iou;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

MiouResult miou(const LabelMap& pred, const LabelMap& gt, std::size_t n_classes, std::uint8_t void_id) {
  ConfusionMatrix cm(n_classes);
  cm.add(pred, gt, void_id);
  return {cm.miou(), cm.class_iou()};
}

MiouResult miou(std::span<const LabelMap> preds, std::span<const LabelMap> gts, std::size_t n_classes,
                std::uint8_t void_id) {
  if (preds.size() != gts.size()) throw std::invalid_argument("miou: prediction and groundtruth counts differ");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(preds[i], gts[i], void_id);
  return {cm.miou(), cm.class_iou()};
}

std::vector<LabelMap> predict_all(SegModel& model, std::span<const SegmentationSample> samples, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict_all: batch size must be positive");
  std::vector<LabelMap> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t end = std::min(samples.size(), start + batch_size);
    auto preds = model.predict(make_batch(samples.subspan(start, end - start)).images);
    for (auto& p : preds) out.push_back(std::move(p));
  }
  return out;
}

ConfusionMatrix evaluate(SegModel& model, std::span<const SegmentationSample> samples, std::size_t batch_size) {
  ConfusionMatrix cm(model.config().n_classes);
  const auto preds = predict_all(model, samples, batch_size);
  for (std::size_t i = 0; i < samples.size(); ++i) cm.add(preds[i], samples[i].labels);
  return cm;
}

ConfusionMatrix upper_bound_confusion(SegModel& model, std::span<const SegmentationSample> rect_samples,
                                      const WarpField& field) {
  const auto preds = predict_all(model, rect_samples);
  std::vector<LabelMap> gts;
  gts.reserve(rect_samples.size());
  for (const auto& s : rect_samples) gts.push_back(s.labels);
  return upper_bound_confusion(preds, gts, field, model.config().n_classes);
}

ConfusionMatrix upper_bound_confusion(std::span<const LabelMap> rect_predictions, std::span<const LabelMap> rect_labels,
                                      const WarpField& field, std::size_t n_classes) {
  if (rect_predictions.size() != rect_labels.size()) {
    throw std::invalid_argument("upper_bound: prediction and groundtruth counts differ");
  }
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < rect_labels.size(); ++i) {
    cm.add(remap_labels(rect_predictions[i], field, kVoidLabel), remap_labels(rect_labels[i], field, kVoidLabel));
  }
  return cm;
}

double upper_bound(SegModel& model, std::span<const SegmentationSample> rect_samples, const WarpField& field) {
  return upper_bound_confusion(model, rect_samples, field).miou();
}

double upper_bound(SegModel& model, std::span<const SegmentationSample> rect_samples, const DistortionParams& params,
                   const WarpConvention& convention) {
  if (rect_samples.empty()) throw std::invalid_argument("upper_bound: empty test set");
  const auto& first = rect_samples.front();
  const WarpField field =
      build_warp_field(first.height(), first.width(), first.height(), first.width(), params, convention);
  return upper_bound(model, rect_samples, field);
}

void write_class_report_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "class_id,class_name,iou,tp,fp,fn\n" << std::setprecision(17);
  const auto iou = cm.class_iou();
  for (std::size_t c = 0; c < cm.n_classes(); ++c) {
    out << c << ',' << class_name(c) << ',';
    if (iou[c]) out << *iou[c];
    out << ',' << cm.true_positives(c) << ',' << cm.false_positives(c) << ',' << cm.false_negatives(c) << '\n';
  }
}

void write_summary_json(const std::filesystem::path& path, const ConfusionMatrix& cm,
                        const std::vector<std::pair<std::string, std::string>>& extra) {
  nlohmann::ordered_json j;
  j["miou"] = cm.miou();
  j["pixels"] = cm.total();
  auto classes = nlohmann::ordered_json::array();
  const auto iou = cm.class_iou();
  for (std::size_t c = 0; c < cm.n_classes(); ++c) {
    nlohmann::ordered_json e;
    e["id"] = c;
    e["name"] = class_name(c);
    e["iou"] = iou[c] ? nlohmann::ordered_json(*iou[c]) : nlohmann::ordered_json(nullptr);
    classes.push_back(e);
  }
  j["classes"] = classes;
  for (const auto& [k, v] : extra) j[k] = v;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace warpadapt
