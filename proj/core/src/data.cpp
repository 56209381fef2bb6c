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

#include "warpadapt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "warpadapt/image_io.hpp"

namespace warpadapt {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr std::array<std::array<double, 3>, kSceneClassCount> kMeanColor{{
    {0.45, 0.55, 0.45},
    {0.35, 0.35, 0.42},
    {0.60, 0.42, 0.38},
    {0.42, 0.45, 0.60},
    {0.62, 0.58, 0.38},
}};

struct Canvas {
  std::size_t H, W;
  std::vector<std::array<double, 3>> rgb;
  LabelMap labels;

  Canvas(std::size_t h, std::size_t w) : H(h), W(w), rgb(h * w), labels(h, w, kBackground) {}

  void paint(std::size_t x, std::size_t y, std::uint8_t cls, const std::array<double, 3>& color, double tex,
             double amplitude) {
    const std::size_t i = y * W + x;
    for (int c = 0; c < 3; ++c) rgb[i][c] = color[c] * (1.0 + amplitude * tex);
    labels.labels[i] = cls;
  }
};

std::array<double, 3> instance_color(std::uint8_t cls, double jitter, Rng& rng) {
  std::array<double, 3> c = kMeanColor[cls];
  for (double& v : c) v = std::clamp(v + rng.uniform(-jitter, jitter), 0.05, 0.95);
  return c;
}

std::size_t draw_count(const std::array<std::size_t, 2>& range, Rng& rng) {
  if (range[0] > range[1]) throw std::invalid_argument("scene spec: object count range is reversed");
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(range[0]), static_cast<std::int64_t>(range[1])));
}

double sign(double x) { return x >= 0.0 ? 1.0 : -1.0; }

bool in_bounds(double u, double v, std::size_t h, std::size_t w) {
  return u >= 0.0 && v >= 0.0 && u <= static_cast<double>(w - 1) && v <= static_cast<double>(h - 1);
}

std::string scene_file(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06llu.png", static_cast<unsigned long long>(id));
  return buf;
}

}  // namespace

const char* class_name(std::size_t id) {
  static constexpr const char* kNames[] = {"background", "road", "disc", "rectangle", "pole"};
  return id < kSceneClassCount ? kNames[id] : "void";
}

const char* to_string(Variant variant) { return variant == Variant::kRect ? "rect" : "fisheye"; }

Variant parse_variant(std::string_view token) {
  if (token == "rect") return Variant::kRect;
  if (token == "fisheye") return Variant::kFisheye;
  throw std::invalid_argument("unknown variant '" + std::string(token) + "' (expected rect or fisheye)");
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view token) {
  if (token == "train") return Split::kTrain;
  if (token == "val") return Split::kVal;
  if (token == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(token) + "'");
}

std::vector<bool> SegmentationSample::void_mask() const {
  std::vector<bool> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels.labels[i] == kVoidLabel;
  return mask;
}

double SegmentationSample::void_fraction() const {
  if (labels.size() == 0) return 0.0;
  const auto n = std::count(labels.labels.begin(), labels.labels.end(), kVoidLabel);
  return static_cast<double>(n) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Scene generation

SegmentationSample generate_scene(const SceneSpec& spec, std::uint64_t index) {
  if (spec.height < 4 || spec.width < 4) throw std::invalid_argument("scene spec: image must be at least 4x4");
  const std::size_t H = spec.height;
  const std::size_t W = spec.width;
  const double s = static_cast<double>(H) / 32.0;
  const double amp = spec.texture_amplitude;
  Rng rng = Rng::stream(spec.seed, "scene", index);
  Canvas canvas(H, W);

  // Background: a slow oblique wave.
  {
    const auto color = instance_color(kBackground, spec.color_jitter, rng);
    const double angle = rng.uniform(0.0, kTwoPi);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double period = 16.0 * s;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double t = (x * std::cos(angle) + y * std::sin(angle)) / period;
        canvas.paint(x, y, kBackground, color, 0.5 * std::sin(kTwoPi * t + phase), amp);
      }
    }
  }

  // Road band: a slanted horizontal strip with horizontal stripes.
  {
    const auto color = instance_color(kRoadBand, spec.color_jitter, rng);
    const double top = H * rng.uniform(0.55, 0.70);
    const double thick = H * rng.uniform(0.15, 0.25);
    const double slope = rng.uniform(-0.1, 0.1);
    const double phase = rng.uniform(0.0, kTwoPi);
    const double period = 3.0 * s;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double y0 = top + slope * (x - 0.5 * W);
        if (y >= y0 && y < y0 + thick) {
          canvas.paint(x, y, kRoadBand, color, std::sin(kTwoPi * (y - y0) / period + phase), amp);
        }
      }
    }
  }

  // Objects, painted in a shuffled order so occlusions vary.
  std::vector<std::uint8_t> objects;
  objects.insert(objects.end(), draw_count(spec.discs, rng), kDisc);
  objects.insert(objects.end(), draw_count(spec.rectangles, rng), kRectangle);
  objects.insert(objects.end(), draw_count(spec.poles, rng), kPole);
  for (std::size_t i = objects.size(); i > 1; --i) {
    std::swap(objects[i - 1], objects[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
  }

  for (std::uint8_t cls : objects) {
    const auto color = instance_color(cls, spec.color_jitter, rng);
    if (cls == kDisc) {
      // Concentric rings.
      const double cx = rng.uniform(0.0, W);
      const double cy = rng.uniform(0.1 * H, 0.9 * H);
      const double radius = s * rng.uniform(2.5, 6.0);
      const double period = 4.0 * s;
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const double r = std::hypot(x - cx, y - cy);
          if (r <= radius) canvas.paint(x, y, kDisc, color, std::cos(kTwoPi * r / period), amp);
        }
      }
    } else if (cls == kRectangle) {
      // Checkerboard.
      const double w = s * rng.uniform(4.0, 12.0);
      const double h = s * rng.uniform(3.0, 9.0);
      const double x0 = rng.uniform(-0.5 * w, W - 0.5 * w);
      const double y0 = rng.uniform(0.0, H - h);
      const double period = 6.0 * s;
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          if (x >= x0 && x < x0 + w && y >= y0 && y < y0 + h) {
            const double t = sign(std::sin(kTwoPi * (x - x0) / period)) * sign(std::sin(kTwoPi * (y - y0) / period));
            canvas.paint(x, y, kRectangle, color, t, amp);
          }
        }
      }
    } else {
      // Thin upright pole, brighter toward the top.
      const double w = s * rng.uniform(1.5, 3.0);
      const double x0 = rng.uniform(0.0, W - w);
      const double bottom = rng.uniform(0.5 * H, static_cast<double>(H));
      const double h = s * rng.uniform(10.0, 22.0);
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          if (x >= x0 && x < x0 + w && y < bottom && y >= bottom - h) {
            canvas.paint(x, y, kPole, color, 1.0 - 2.0 * (y - (bottom - h)) / h, 0.5 * amp);
          }
        }
      }
    }
  }

  SegmentationSample out;
  out.scene_id = index;
  out.variant = Variant::kRect;
  out.image = Tensor({3, H, W});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < H * W; ++i) out.image[c * H * W + i] = canvas.rgb[i][c] + spec.noise * rng.normal();
  }
  quantize_8bit(out.image);
  out.labels = std::move(canvas.labels);
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

SegmentationSample derive_fisheye(const SegmentationSample& sample, const WarpField& field) {
  SegmentationSample out;
  out.scene_id = sample.scene_id;
  out.variant = Variant::kFisheye;
  out.image = remap_image(sample.image, field);
  quantize_8bit(out.image);
  out.labels = remap_labels(sample.labels, field, kVoidLabel);
  return out;
}

SegmentationSample derive_fisheye(const SegmentationSample& sample, const DistortionParams& params,
                                  const WarpConvention& convention) {
  const WarpField field = build_warp_field(sample.height(), sample.width(), sample.height(), sample.width(), params, convention);
  return derive_fisheye(sample, field);
}

std::vector<SegmentationSample> derive_fisheye(const std::vector<SegmentationSample>& samples,
                                               const DistortionParams& params, const WarpConvention& convention) {
  std::vector<SegmentationSample> out;
  out.reserve(samples.size());
  WarpField field;
  for (const auto& s : samples) {
    if (field.height() != s.height() || field.width() != s.width()) {
      field = build_warp_field(s.height(), s.width(), s.height(), s.width(), params, convention);
    }
    out.push_back(derive_fisheye(s, field));
  }
  return out;
}

SegmentationSample augment(const SegmentationSample& sample, const AugmentConfig& config, Rng& rng) {
  if (config.scale_min <= 0.0 || config.scale_max < config.scale_min) {
    throw std::invalid_argument("augment: scale range must satisfy 0 < min <= max");
  }
  // Draw all parameters unconditionally so the stream does not depend on
  // which augmentations are enabled.
  const bool flip = config.flip && rng.uniform() < 0.5;
  const double scale = rng.uniform(config.scale_min, config.scale_max);
  const double angle = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg) * std::numbers::pi / 180.0;

  SegmentationSample out;
  out.scene_id = sample.scene_id;
  out.variant = sample.variant;
  const std::size_t H = sample.height();
  const std::size_t W = sample.width();
  if (!config.geometric()) {
    out.image = sample.image;
    out.labels = sample.labels;
    if (flip) {
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
          double* row = out.image.ptr() + (c * H + y) * W;
          std::reverse(row, row + W);
        }
      }
      for (std::size_t y = 0; y < H; ++y) {
        std::reverse(out.labels.labels.begin() + y * W, out.labels.labels.begin() + (y + 1) * W);
      }
    }
    return out;
  }

  // Inverse similarity: output pixel -> source pixel.
  const double cx = 0.5 * (W - 1.0);
  const double cy = 0.5 * (H - 1.0);
  const double ca = std::cos(angle) / scale;
  const double sa = std::sin(angle) / scale;
  WarpField field(H, W, H, W);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      if (flip) dx = -dx;
      const double u = cx + ca * dx + sa * dy;
      const double v = cy - sa * dx + ca * dy;
      field.set(y * W + x, u, v, in_bounds(u, v, H, W));
    }
  }
  out.image = remap_image(sample.image, field);
  out.labels = remap_labels(sample.labels, field, kVoidLabel);
  return out;
}

std::vector<double> class_frequencies(std::span<const SegmentationSample> samples, std::size_t n_classes) {
  std::vector<double> counts(n_classes, 0.0);
  double total = 0.0;
  for (const auto& s : samples) {
    for (auto l : s.labels.labels) {
      if (l == kVoidLabel) continue;
      if (l >= n_classes) throw std::invalid_argument("class_frequencies: label " + std::to_string(l) + " out of range");
      counts[l] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (double& c : counts) c /= total;
  }
  return counts;
}

Batch make_batch(std::span<const SegmentationSample> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const auto& first = samples[indices[0]];
  const std::size_t H = first.height();
  const std::size_t W = first.width();
  const std::size_t plane = 3 * H * W;
  Batch batch;
  batch.images = Tensor({indices.size(), 3, H, W});
  batch.labels.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& s = samples[indices[b]];
    if (s.height() != H || s.width() != W) throw std::invalid_argument("make_batch: mixed image sizes");
    std::copy(s.image.ptr(), s.image.ptr() + plane, batch.images.ptr() + b * plane);
    batch.labels.push_back(s.labels);
  }
  return batch;
}

Batch make_batch(std::span<const SegmentationSample> samples) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(samples, idx);
}

// ---------------------------------------------------------------------------
// Datasets and manifests

std::vector<SegmentationSample>& SplitSamples::operator[](Split split) {
  return split == Split::kTrain ? train : split == Split::kVal ? val : test;
}

const std::vector<SegmentationSample>& SplitSamples::operator[](Split split) const {
  return split == Split::kTrain ? train : split == Split::kVal ? val : test;
}

SplitSamples generate_dataset(const DatasetSpec& spec) {
  SplitSamples out;
  std::uint64_t id = 0;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const std::size_t n = split == Split::kTrain ? spec.n_train : split == Split::kVal ? spec.n_val : spec.n_test;
    auto& dst = out[split];
    dst.reserve(n);
    for (std::size_t i = 0; i < n; ++i) dst.push_back(generate_scene(spec.scene, id++));
  }
  return out;
}

SplitSamples derive_fisheye(const SplitSamples& rect, const DistortionParams& params, const WarpConvention& convention) {
  SplitSamples out;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) out[split] = derive_fisheye(rect[split], params, convention);
  return out;
}

std::filesystem::path Manifest::resolve(const std::string& relative) const {
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p : root / p;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 6) {
      throw std::runtime_error(where + ": expected 6 tab-separated fields, got " + std::to_string(fields.size()));
    }
    try {
      ManifestEntry e;
      e.scene_id = std::stoull(fields[0]);
      e.split = parse_split(fields[1]);
      e.variant = parse_variant(fields[2]);
      e.image = fields[3];
      e.label = fields[4];
      e.params_hash = std::stoull(fields[5], nullptr, 16);
      m.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error(where + ": " + ex.what());
    }
  }
  m.validate_pairing();
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "# scene_id\tsplit\tvariant\timage\tlabel\tparams_hash\n";
  for (const auto& e : entries) {
    char hash[17];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(e.params_hash));
    out << e.scene_id << '\t' << to_string(e.split) << '\t' << to_string(e.variant) << '\t' << e.image << '\t'
        << e.label << '\t' << hash << '\n';
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

void Manifest::validate_pairing() const {
  struct Seen {
    const ManifestEntry* rect = nullptr;
    const ManifestEntry* fisheye = nullptr;
  };
  std::map<std::uint64_t, Seen> scenes;
  bool any_fisheye = false;
  for (const auto& e : entries) {
    auto& seen = scenes[e.scene_id];
    auto& slot = e.variant == Variant::kRect ? seen.rect : seen.fisheye;
    if (slot) {
      throw std::runtime_error("manifest: scene " + std::to_string(e.scene_id) + " has two " + to_string(e.variant) + " entries");
    }
    slot = &e;
    any_fisheye |= e.variant == Variant::kFisheye;
  }
  if (!any_fisheye) return;
  for (const auto& [id, seen] : scenes) {
    if (!seen.rect || !seen.fisheye) {
      throw std::runtime_error("manifest: scene " + std::to_string(id) + " lacks its " +
                               (seen.rect ? "fisheye" : "rect") + " counterpart");
    }
    if (seen.rect->split != seen.fisheye->split) {
      throw std::runtime_error("manifest: scene " + std::to_string(id) + " is assigned to two splits");
    }
  }
}

std::vector<const ManifestEntry*> Manifest::select(Split split, Variant variant) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == split && e.variant == variant) out.push_back(&e);
  }
  return out;
}

std::vector<std::size_t> fewshot_indices(std::size_t pool, long long n, std::uint64_t seed) {
  if (n <= 0 || static_cast<std::size_t>(n) > pool) {
    throw std::invalid_argument("few-shot subset size " + std::to_string(n) + " outside [1, " + std::to_string(pool) + "]");
  }
  std::vector<std::size_t> idx(pool);
  for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
  // Forward Fisher-Yates: slot i is final after step i, so every prefix is
  // itself a uniform draw without replacement.
  Rng rng = Rng::stream(seed, "subset");
  for (std::size_t i = 0; i + 1 < pool; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(pool - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(n));
  return idx;
}

Manifest sample_fewshot_subset(const Manifest& manifest, long long n, std::uint64_t seed) {
  std::vector<std::uint64_t> pool;
  for (const auto& e : manifest.entries) {
    if (e.split == Split::kTrain && std::find(pool.begin(), pool.end(), e.scene_id) == pool.end()) pool.push_back(e.scene_id);
  }
  std::vector<std::uint64_t> ids;
  for (std::size_t i : fewshot_indices(pool.size(), n, seed)) ids.push_back(pool[i]);

  Manifest out;
  out.root = manifest.root;
  for (std::uint64_t id : ids) {
    for (const auto& e : manifest.entries) {
      if (e.split == Split::kTrain && e.scene_id == id) out.entries.push_back(e);
    }
  }
  for (const auto& e : manifest.entries) {
    if (e.split != Split::kTrain) out.entries.push_back(e);
  }
  return out;
}

std::vector<SegmentationSample> load_samples(const Manifest& manifest, Split split, Variant variant) {
  std::vector<SegmentationSample> out;
  for (const ManifestEntry* e : manifest.select(split, variant)) {
    SegmentationSample s;
    s.scene_id = e->scene_id;
    s.variant = e->variant;
    s.image = read_rgb_png(manifest.resolve(e->image));
    s.labels = read_label_png(manifest.resolve(e->label));
    if (s.image.dim(1) != s.labels.height || s.image.dim(2) != s.labels.width) {
      throw std::runtime_error("scene " + std::to_string(e->scene_id) + ": image and label sizes differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

Manifest write_dataset(const std::filesystem::path& dir, const SplitSamples& rect, const SplitSamples& fisheye,
                       std::uint64_t params_hash) {
  namespace fs = std::filesystem;
  for (const char* sub : {"images/rect", "images/fisheye", "labels/rect", "labels/fisheye"}) fs::create_directories(dir / sub);
  Manifest m;
  m.root = dir;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    if (rect[split].size() != fisheye[split].size()) throw std::invalid_argument("write_dataset: rect/fisheye split sizes differ");
    for (std::size_t i = 0; i < rect[split].size(); ++i) {
      for (Variant variant : {Variant::kRect, Variant::kFisheye}) {
        const auto& s = variant == Variant::kRect ? rect[split][i] : fisheye[split][i];
        const std::string name = scene_file(s.scene_id);
        const std::string image = std::string("images/") + to_string(variant) + "/" + name;
        const std::string label = std::string("labels/") + to_string(variant) + "/" + name;
        write_rgb_png(dir / image, s.image);
        write_label_png(dir / label, s.labels);
        m.entries.push_back({s.scene_id, split, variant, image, label, variant == Variant::kRect ? 0 : params_hash});
      }
    }
  }
  m.validate_pairing();
  m.save(dir / "manifest.tsv");
  return m;
}

}  // namespace warpadapt
