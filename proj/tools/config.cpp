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

#include "config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "warpadapt/random.hpp"

namespace warpadapt::cli {
namespace {

struct KeySpec {
  std::string key;
  std::string fallback;
  std::string doc;
};

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::vector<KeySpec>& registry() {
  static const std::vector<KeySpec> keys = [] {
    const SceneSpec scene;
    const DatasetSpec ds;
    const ModelConfig mc;
    const TrainConfig tc;
    const AdaptationConfig ac;
    const AblationSuiteConfig sc;
    const WarpConvention conv;
    std::string widths = fmt(mc.widths[0]) + "," + fmt(mc.widths[1]) + "," + fmt(mc.widths[2]);
    std::string seeds;
    for (auto s : sc.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
    std::string sizes;
    for (auto s : sc.fewshot_sizes) sizes += (sizes.empty() ? "" : ",") + std::to_string(s);
    return std::vector<KeySpec>{
        {"seed", std::to_string(tc.seed), "master seed; data, init, augment and subset streams derive from it"},
        {"data.height", fmt(scene.height), "image rows (multiple of 4)"},
        {"data.width", fmt(scene.width), "image columns (multiple of 4)"},
        {"data.n_train", fmt(ds.n_train), "training scenes"},
        {"data.n_val", fmt(ds.n_val), "validation scenes"},
        {"data.n_test", fmt(ds.n_test), "test scenes"},
        {"data.color_jitter", fmt(scene.color_jitter), "per-instance color spread"},
        {"data.texture_amplitude", fmt(scene.texture_amplitude), "class texture amplitude"},
        {"data.noise", fmt(scene.noise), "additive pixel noise stddev"},
        {"distortion.f", "125", "fisheye focal parameter (lower is stronger)"},
        {"distortion.k1", "0", "polynomial coefficient k1"},
        {"distortion.k2", "0", "polynomial coefficient k2"},
        {"distortion.k3", "0", "polynomial coefficient k3"},
        {"distortion.k4", "0", "polynomial coefficient k4"},
        {"distortion.cx", "0", "distortion center x"},
        {"distortion.cy", "0", "distortion center y"},
        {"distortion.focal_scale", fmt(conv.focal_scale), "normalized-to-lens coordinate scale"},
        {"model.widths", widths, "encoder stage widths, comma separated"},
        {"model.context_width", fmt(mc.context_width), "context block width"},
        {"model.decoder_width", fmt(mc.decoder_width), "decoder width"},
        {"train.epochs", fmt(tc.epochs), "baseline epochs"},
        {"train.batch_size", fmt(tc.batch_size), "baseline batch size"},
        {"train.lr_encoder", fmt(tc.lr_encoder), "encoder learning rate"},
        {"train.lr_decoder", fmt(tc.lr_decoder), "decoder learning rate"},
        {"train.poly_power", fmt(tc.poly_power), "polynomial decay power"},
        {"train.flip", fmt(tc.augment.flip), "random horizontal flips"},
        {"train.scale_min", fmt(tc.augment.scale_min), "smallest augmentation scale"},
        {"train.scale_max", fmt(tc.augment.scale_max), "largest augmentation scale"},
        {"train.max_rotation_deg", fmt(tc.augment.max_rotation_deg), "largest augmentation rotation"},
        {"train.class_weighting", fmt(tc.class_weighting), "inverse-frequency class weights"},
        {"adapt.mode", to_string(ac.mode), "BN_ONLY, DCN_ONLY or DCN_BN"},
        {"adapt.placement", to_string(ac.placement), "ENCODER, DECODER or BOTH"},
        {"adapt.epochs", fmt(ac.epochs), "adaptation epochs"},
        {"adapt.batch_size", fmt(ac.batch_size), "adaptation batch size"},
        {"adapt.lr_encoder", fmt(ac.lr_encoder), "encoder-side learning rate"},
        {"adapt.lr_decoder", fmt(ac.lr_decoder), "decoder-side learning rate"},
        {"adapt.poly_power", fmt(ac.poly_power), "polynomial decay power"},
        {"adapt.n", "0", "few-shot training subset size, 0 for the full split"},
        {"adapt.match_full_steps", fmt(ac.match_full_steps), "cycle a subset to the full-split step count"},
        {"adapt.class_weighting", fmt(ac.class_weighting), "inverse-frequency class weights"},
        {"sweep.seeds", seeds, "seeds of the ablation sweep"},
        {"sweep.fewshot", sizes, "few-shot sizes, 0 for the full split"},
        {"output.dir", "", "default output directory when --out is not given"},
    };
  }();
  return keys;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : registry())
    if (k.key == key) return &k;
  return nullptr;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size())
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

}  // namespace

Config::Config() {
  for (const auto& k : registry()) values_[k.key] = k.fallback;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  Config cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
  return it->second;
}

double Config::number(const std::string& key) const {
  const auto& text = get(key);
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size())
    throw std::invalid_argument(key + ": expected a number, got '" + text + "'");
  return v;
}

std::uint64_t Config::integer(const std::string& key) const { return parse_u64(key, get(key)); }

bool Config::flag(const std::string& key) const {
  const auto& text = get(key);
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::uint64_t> Config::integer_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_commas(get(key))) out.push_back(parse_u64(key, item));
  return out;
}

std::string Config::resolved() const {
  std::string out;
  for (const auto& k : registry()) out += k.key + " = " + values_.at(k.key) + "\n";
  return out;
}

void Config::write_resolved(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << resolved();
}

std::vector<std::pair<std::string, std::string>> Config::documented_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : registry()) out.emplace_back(k.key, k.doc);
  return out;
}

DatasetSpec Config::dataset() const {
  DatasetSpec ds;
  ds.scene.seed = hash_combine(seed(), 0x64617461);  // "data"
  ds.scene.height = integer("data.height");
  ds.scene.width = integer("data.width");
  ds.scene.color_jitter = number("data.color_jitter");
  ds.scene.texture_amplitude = number("data.texture_amplitude");
  ds.scene.noise = number("data.noise");
  ds.n_train = integer("data.n_train");
  ds.n_val = integer("data.n_val");
  ds.n_test = integer("data.n_test");
  return ds;
}

DistortionParams Config::distortion() const {
  return DistortionParams(number("distortion.f"),
                          {number("distortion.k1"), number("distortion.k2"), number("distortion.k3"),
                           number("distortion.k4")},
                          Point2{number("distortion.cx"), number("distortion.cy")});
}

WarpConvention Config::convention() const { return WarpConvention{number("distortion.focal_scale")}; }

ModelConfig Config::model() const {
  ModelConfig mc;
  const auto widths = integer_list("model.widths");
  if (widths.size() != 3) throw std::invalid_argument("model.widths: expected three widths");
  for (std::size_t i = 0; i < 3; ++i) mc.widths[i] = widths[i];
  mc.context_width = integer("model.context_width");
  mc.decoder_width = integer("model.decoder_width");
  return mc;
}

TrainConfig Config::train() const {
  TrainConfig tc;
  tc.epochs = integer("train.epochs");
  tc.batch_size = integer("train.batch_size");
  tc.lr_encoder = number("train.lr_encoder");
  tc.lr_decoder = number("train.lr_decoder");
  tc.poly_power = number("train.poly_power");
  tc.augment.flip = flag("train.flip");
  tc.augment.scale_min = number("train.scale_min");
  tc.augment.scale_max = number("train.scale_max");
  tc.augment.max_rotation_deg = number("train.max_rotation_deg");
  tc.class_weighting = flag("train.class_weighting");
  tc.seed = seed();
  return tc;
}

AdaptationConfig Config::adaptation() const {
  AdaptationConfig ac;
  ac.mode = parse_mode(get("adapt.mode"));
  ac.placement = parse_placement(get("adapt.placement"));
  ac.epochs = integer("adapt.epochs");
  ac.batch_size = integer("adapt.batch_size");
  ac.lr_encoder = number("adapt.lr_encoder");
  ac.lr_decoder = number("adapt.lr_decoder");
  ac.poly_power = number("adapt.poly_power");
  if (const auto n = integer("adapt.n"); n > 0) ac.subset_n = n;
  ac.match_full_steps = flag("adapt.match_full_steps");
  ac.class_weighting = flag("adapt.class_weighting");
  ac.seed = seed();
  return ac;
}

}  // namespace warpadapt::cli
