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

#include "warpadapt/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace warpadapt {
namespace {

constexpr std::uint8_t kDtypeF64 = 1;

void put_bytes(std::ostream& os, const void* p, std::size_t n) { os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(os, b, sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::string& what) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw std::runtime_error("checkpoint truncated reading " + what);
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  put_bytes(os, s.data(), s.size());
}

std::string get_string(std::istream& is, const std::string& what) {
  const auto n = get_le<std::uint32_t>(is, what);
  if (n > (1u << 24)) throw std::runtime_error("checkpoint: implausible string length for " + what);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw std::runtime_error("checkpoint truncated reading " + what);
  return s;
}

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(std::stoul(item)));
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tokens

Placement parse_placement(std::string_view token) {
  if (token == "NONE") return Placement::kNone;
  if (token == "ENCODER") return Placement::kEncoder;
  if (token == "DECODER") return Placement::kDecoder;
  if (token == "BOTH") return Placement::kBoth;
  throw std::invalid_argument("unknown placement '" + std::string(token) + "' (expected ENCODER, DECODER or BOTH)");
}

AdaptMode parse_mode(std::string_view token) {
  if (token == "NONE") return AdaptMode::kNone;
  if (token == "BN_ONLY") return AdaptMode::kBnOnly;
  if (token == "DCN_ONLY") return AdaptMode::kDcnOnly;
  if (token == "DCN_BN") return AdaptMode::kDcnBn;
  throw std::invalid_argument("unknown adaptation mode '" + std::string(token) +
                              "' (expected BN_ONLY, DCN_ONLY or DCN_BN)");
}

const char* to_string(Placement placement) {
  switch (placement) {
    case Placement::kNone: return "NONE";
    case Placement::kEncoder: return "ENCODER";
    case Placement::kDecoder: return "DECODER";
    case Placement::kBoth: return "BOTH";
  }
  return "?";
}

const char* to_string(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::kNone: return "NONE";
    case AdaptMode::kBnOnly: return "BN_ONLY";
    case AdaptMode::kDcnOnly: return "DCN_ONLY";
    case AdaptMode::kDcnBn: return "DCN_BN";
  }
  return "?";
}

bool placement_covers(Placement placement, Side side) {
  switch (placement) {
    case Placement::kNone: return false;
    case Placement::kEncoder: return side == Side::kEncoder;
    case Placement::kDecoder: return side == Side::kDecoder;
    case Placement::kBoth: return true;
  }
  return false;
}

bool mode_trains_offsets(AdaptMode mode) { return mode == AdaptMode::kDcnOnly || mode == AdaptMode::kDcnBn; }
bool mode_trains_bn(AdaptMode mode) { return mode == AdaptMode::kBnOnly || mode == AdaptMode::kDcnBn; }

// ---------------------------------------------------------------------------
// ModelConfig

std::string ModelConfig::describe() const {
  std::ostringstream os;
  os << "arch=toy-encoder-decoder\n"
     << "in_channels=" << in_channels << "\n"
     << "n_classes=" << n_classes << "\n"
     << "widths=" << widths[0] << "," << widths[1] << "," << widths[2] << "\n"
     << "context_width=" << context_width << "\n"
     << "decoder_width=" << decoder_width << "\n"
     << "offset_kernel=same\n";
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& descriptor) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(descriptor);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("architecture descriptor: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (kv["arch"] != "toy-encoder-decoder") {
    throw std::runtime_error("architecture descriptor: unsupported arch '" + kv["arch"] + "'");
  }
  try {
    ModelConfig c;
    c.in_channels = std::stoul(kv.at("in_channels"));
    c.n_classes = std::stoul(kv.at("n_classes"));
    const auto w = parse_list(kv.at("widths"));
    if (w.size() != 3) throw std::runtime_error("widths must list 3 values");
    std::copy(w.begin(), w.end(), c.widths.begin());
    c.context_width = std::stoul(kv.at("context_width"));
    c.decoder_width = std::stoul(kv.at("decoder_width"));
    return c;
  } catch (const std::out_of_range&) {
    throw std::runtime_error("architecture descriptor: missing field");
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("architecture descriptor: malformed number");
  }
}

// ---------------------------------------------------------------------------
// Checkpoint container

const Tensor* ModelCheckpoint::find(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void ModelCheckpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os.write("WADP", 4);
  put_le<std::uint16_t>(os, kVersion);
  put_string(os, architecture);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_string(os, name);
    put_le<std::uint8_t>(os, kDtypeF64);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double x : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(x));
  }
  put_le<std::uint8_t>(os, flags.frozen ? 1 : 0);
  put_le<std::uint8_t>(os, flags.offsets_enabled ? 1 : 0);
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(flags.placement));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(flags.mode));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

ModelCheckpoint ModelCheckpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "WADP", 4) != 0) {
    throw std::runtime_error(path.string() + ": not a checkpoint (bad magic)");
  }
  const auto version = get_le<std::uint16_t>(is, "version");
  if (version != kVersion) {
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  ModelCheckpoint ck;
  ck.architecture = get_string(is, "architecture");
  const auto count = get_le<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_string(is, "tensor name");
    if (get_le<std::uint8_t>(is, "dtype") != kDtypeF64) throw std::runtime_error("checkpoint: unsupported dtype for " + name);
    const auto rank = get_le<std::uint32_t>(is, "rank");
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(is, "extent");
    const std::size_t n = shape_numel(shape);
    if (n == 0 || n > (1u << 28)) throw std::runtime_error("checkpoint: bad extent for " + name);
    std::vector<double> values(n);
    for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is, name));
    ck.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  ck.flags.frozen = get_le<std::uint8_t>(is, "flags") != 0;
  ck.flags.offsets_enabled = get_le<std::uint8_t>(is, "flags") != 0;
  const auto placement = get_le<std::uint8_t>(is, "flags");
  const auto mode = get_le<std::uint8_t>(is, "flags");
  if (placement > 3 || mode > 3) throw std::runtime_error("checkpoint: invalid placement/mode flag");
  ck.flags.placement = static_cast<Placement>(placement);
  ck.flags.mode = static_cast<AdaptMode>(mode);
  return ck;
}

std::vector<TensorDiff> diff_checkpoints(const ModelCheckpoint& before, const ModelCheckpoint& after) {
  std::vector<TensorDiff> out;
  for (const auto& [name, t] : after.tensors) {
    const Tensor* old = before.find(name);
    if (old == nullptr) {
      out.push_back({name, DiffKind::kAdded});
    } else if (!old->bitwise_equal(t)) {
      out.push_back({name, DiffKind::kChanged});
    }
  }
  for (const auto& [name, t] : before.tensors) {
    if (after.find(name) == nullptr) out.push_back({name, DiffKind::kRemoved});
  }
  return out;
}

// ---------------------------------------------------------------------------
// SegModel

SegModel::SegModel(ModelConfig config, std::uint64_t init_seed) : config_(config) {
  const auto [w1, w2, w3] = config_.widths;
  const std::size_t cw = config_.context_width;
  enc1_ = ConvBlock(config_.in_channels, w1, 3, {1, 1, 1});
  enc2_ = ConvBlock(w1, w2, 3, {2, 1, 1});
  enc3_ = ConvBlock(w2, w3, 3, {2, 1, 1});
  ctx1_ = ConvBlock(w3, cw, 3, {1, 1, 1});
  ctx2_ = ConvBlock(w3, cw, 3, {1, 2, 2});
  dec1_ = ConvBlock(2 * cw + w2, config_.decoder_width, 3, {1, 1, 1});
  head_ = ConvSlot(Conv2d(config_.decoder_width, config_.n_classes, 1, {1, 1, 0}));
  Rng rng = Rng::stream(init_seed, "init");
  for (ConvBlock* b : {&enc1_, &enc2_, &enc3_, &ctx1_, &ctx2_, &dec1_}) b->init(rng);
  head_.base().init(rng);
  bn_batch_stats_.assign(6, true);
}

std::vector<SegModel::ConvLayerRef> SegModel::layers() {
  return {
      {"enc1", Side::kEncoder, &enc1_.conv, &enc1_.bn}, {"enc2", Side::kEncoder, &enc2_.conv, &enc2_.bn},
      {"enc3", Side::kEncoder, &enc3_.conv, &enc3_.bn}, {"ctx1", Side::kEncoder, &ctx1_.conv, &ctx1_.bn},
      {"ctx2", Side::kEncoder, &ctx2_.conv, &ctx2_.bn}, {"dec1", Side::kDecoder, &dec1_.conv, &dec1_.bn},
      {"head", Side::kDecoder, &head_, nullptr},
  };
}

Variable SegModel::forward(Tape& tape, const Variable& image, ForwardMode mode) {
  if (image.value().rank() != 4 || image.shape()[1] != config_.in_channels) {
    throw std::invalid_argument("SegModel::forward: expected [B," + std::to_string(config_.in_channels) +
                                ",H,W], got " + shape_to_string(image.shape()));
  }
  if (image.shape()[2] % 4 != 0 || image.shape()[3] % 4 != 0) {
    throw std::invalid_argument("SegModel::forward: H and W must be divisible by 4, got " +
                                shape_to_string(image.shape()));
  }
  const bool train = mode == ForwardMode::kTrain;
  const Variable x1 = enc1_.forward(tape, image, train && bn_batch_stats_[0]);
  const Variable x2 = enc2_.forward(tape, x1, train && bn_batch_stats_[1]);
  const Variable x3 = enc3_.forward(tape, x2, train && bn_batch_stats_[2]);
  const Variable c1 = ctx1_.forward(tape, x3, train && bn_batch_stats_[3]);
  const Variable c2 = ctx2_.forward(tape, x3, train && bn_batch_stats_[4]);
  const Variable ctx = concat_channels(tape, c1, c2);
  const Variable up = upsample_bilinear2x(tape, ctx);
  const Variable d = dec1_.forward(tape, concat_channels(tape, up, x2), train && bn_batch_stats_[5]);
  return upsample_bilinear2x(tape, head_.forward(tape, d));
}

Tensor SegModel::predict_logits(const Tensor& images) {
  Tape tape(Tape::Mode::kInference);
  return forward(tape, Variable(images), ForwardMode::kEval).value();
}

std::vector<LabelMap> SegModel::predict(const Tensor& images) {
  const Tensor logits = predict_logits(images);
  const std::size_t B = logits.dim(0);
  const std::size_t C = logits.dim(1);
  const std::size_t H = logits.dim(2);
  const std::size_t W = logits.dim(3);
  std::vector<LabelMap> out;
  out.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    LabelMap m(H, W);
    for (std::size_t i = 0; i < H * W; ++i) {
      std::size_t best = 0;
      double best_v = logits[(b * C) * H * W + i];
      for (std::size_t c = 1; c < C; ++c) {
        const double v = logits[(b * C + c) * H * W + i];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      m.labels[i] = static_cast<std::uint8_t>(best);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<ParamRef> SegModel::parameters() {
  std::vector<ParamRef> out;
  for (auto& layer : layers()) {
    Conv2d& base = layer.slot->base();
    out.push_back({layer.name + ".conv.weight", ParamKind::kFrozenBase, layer.side, base.weight, &base.weight.value()});
    out.push_back({layer.name + ".conv.bias", ParamKind::kFrozenBase, layer.side, base.bias, &base.bias.value()});
    if (auto* d = layer.slot->as_deformable()) {
      Conv2d& p = d->offset_predictor();
      out.push_back({layer.name + ".conv.offset.weight", ParamKind::kOffset, layer.side, p.weight, &p.weight.value()});
      out.push_back({layer.name + ".conv.offset.bias", ParamKind::kOffset, layer.side, p.bias, &p.bias.value()});
    }
    if (layer.bn != nullptr) {
      BatchNorm2d& bn = *layer.bn;
      out.push_back({layer.name + ".bn.gamma", ParamKind::kBnAffine, layer.side, bn.gamma, &bn.gamma.value()});
      out.push_back({layer.name + ".bn.beta", ParamKind::kBnAffine, layer.side, bn.beta, &bn.beta.value()});
      out.push_back({layer.name + ".bn.running_mean", ParamKind::kBnRunning, layer.side, Variable(), &bn.state.running_mean});
      out.push_back({layer.name + ".bn.running_var", ParamKind::kBnRunning, layer.side, Variable(), &bn.state.running_var});
    }
  }
  return out;
}

std::size_t SegModel::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->numel();
  return n;
}

void SegModel::convert_to_deformable(Placement placement) {
  if (placement == Placement::kNone) return;
  if (placement_ != Placement::kNone && placement_ != placement) {
    throw std::logic_error(std::string("model already converted with placement ") + to_string(placement_));
  }
  for (auto& layer : layers()) {
    if (placement_covers(placement, layer.side)) layer.slot->make_deformable();
  }
  placement_ = placement;
  offsets_enabled_ = true;
}

void SegModel::set_offsets_enabled(bool enabled) {
  for (auto& layer : layers()) {
    if (auto* d = layer.slot->as_deformable()) d->set_offsets_enabled(enabled);
  }
  offsets_enabled_ = enabled;
}

void SegModel::set_bn_batch_stats(Placement placement) {
  auto refs = layers();
  for (std::size_t i = 0; i < bn_batch_stats_.size(); ++i) {
    bn_batch_stats_[i] = placement_covers(placement, refs[i].side);
  }
}

void SegModel::set_trainable(std::initializer_list<ParamKind> kinds, Placement placement) {
  for (auto& p : parameters()) {
    if (!p.var.defined()) continue;
    const bool on = placement_covers(placement, p.side) &&
                    std::find(kinds.begin(), kinds.end(), p.kind) != kinds.end();
    p.var.set_requires_grad(on);
    p.var.clear_grad();
  }
  // Deformable layers stay frozen unless their base is trainable.
  for (auto& layer : layers()) {
    if (auto* d = layer.slot->as_deformable()) {
      const bool base_on = d->base().weight.requires_grad();
      d->set_frozen(!base_on);
    }
  }
}

ModelCheckpoint SegModel::to_checkpoint() {
  ModelCheckpoint ck;
  ck.architecture = config_.describe();
  for (auto& p : parameters()) ck.tensors.emplace_back(p.name, *p.tensor);
  bool frozen = false;
  for (auto& layer : layers()) {
    if (const auto* d = layer.slot->as_deformable()) frozen = frozen || d->frozen();
  }
  ck.flags.frozen = frozen;
  ck.flags.offsets_enabled = offsets_enabled_;
  ck.flags.placement = placement_;
  ck.flags.mode = mode_;
  return ck;
}

SegModel SegModel::from_checkpoint(const ModelCheckpoint& ck, std::optional<Placement> expected) {
  if (expected && *expected != ck.flags.placement) {
    throw std::runtime_error(std::string("checkpoint placement ") + to_string(ck.flags.placement) +
                             " does not match expected " + to_string(*expected));
  }
  SegModel model(ModelConfig::parse(ck.architecture));
  model.convert_to_deformable(ck.flags.placement);
  auto params = model.parameters();
  if (params.size() != ck.tensors.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(ck.tensors.size()) + " tensors, model expects " +
                             std::to_string(params.size()));
  }
  for (auto& p : params) {
    const Tensor* t = ck.find(p.name);
    if (t == nullptr) throw std::runtime_error("checkpoint is missing tensor " + p.name);
    if (t->shape() != p.tensor->shape()) {
      throw std::runtime_error("checkpoint tensor " + p.name + " has shape " + shape_to_string(t->shape()) +
                               ", expected " + shape_to_string(p.tensor->shape()));
    }
    *p.tensor = *t;
  }
  model.set_offsets_enabled(ck.flags.offsets_enabled);
  for (auto& layer : model.layers()) {
    if (auto* d = layer.slot->as_deformable()) d->set_frozen(ck.flags.frozen);
  }
  model.mode_ = ck.flags.mode;
  return model;
}

SegModel SegModel::clone() { return from_checkpoint(to_checkpoint()); }

void save_checkpoint(SegModel& model, const std::filesystem::path& path) { model.to_checkpoint().save(path); }

SegModel load_checkpoint(const std::filesystem::path& path, std::optional<Placement> expected) {
  return SegModel::from_checkpoint(ModelCheckpoint::load(path), expected);
}

}  // namespace warpadapt
