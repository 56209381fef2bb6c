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

#include "warpadapt/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "warpadapt/metrics.hpp"
#include "warpadapt/ops.hpp"

namespace warpadapt {
namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

std::string fmt_augment(const AugmentConfig& a) {
  std::ostringstream os;
  os << "flip=" << (a.flip ? 1 : 0) << ";scale=" << fmt(a.scale_min) << ".." << fmt(a.scale_max)
     << ";rotation=" << fmt(a.max_rotation_deg);
  return os.str();
}

// Shared loop for baseline training and adaptation.
struct LoopSettings {
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double poly_power = 0.9;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  bool track_val = true;
  // Steps per epoch; 0 means one exact pass over the pool per epoch.
  std::size_t cycled_steps = 0;
};

class BatchSampler {
 public:
  BatchSampler(std::vector<std::size_t> pool, std::uint64_t seed) : pool_(std::move(pool)), seed_(seed) {}

  // Exact pass: the epoch's permutation of the pool.
  std::vector<std::size_t> epoch_order(std::size_t epoch) const {
    std::vector<std::size_t> order = pool_;
    shuffle(order, Rng::stream(seed_, "shuffle", epoch));
    return order;
  }

  // Cycled draw: successive permutations of the pool, consumed in order.
  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    while (out.size() < count) {
      if (cursor_ == cycle_.size()) {
        cycle_ = pool_;
        shuffle(cycle_, Rng::stream(seed_, "cycle", cycles_++));
        cursor_ = 0;
      }
      out.push_back(cycle_[cursor_++]);
    }
    return out;
  }

 private:
  static void shuffle(std::vector<std::size_t>& v, Rng rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
    }
  }

  std::vector<std::size_t> pool_;
  std::uint64_t seed_;
  std::vector<std::size_t> cycle_;
  std::size_t cursor_ = 0;
  std::uint64_t cycles_ = 0;
};

bool any_scored(std::span<const LabelMap> labels) {
  for (const auto& l : labels) {
    for (auto v : l.labels) {
      if (v != kVoidLabel) return true;
    }
  }
  return false;
}

TrainReport run_loop(SegModel& model, Adam& adam, std::span<const SegmentationSample> train,
                     std::span<const std::size_t> pool, std::span<const SegmentationSample> val,
                     std::span<const double> weights, const LoopSettings& s, const EpochCallback& on_epoch) {
  if (s.epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (s.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (pool.empty()) throw std::invalid_argument("empty training set");

  const std::size_t batch = std::min(s.batch_size, pool.size());
  const std::size_t steps_per_epoch =
      s.cycled_steps > 0 ? s.cycled_steps : (pool.size() + batch - 1) / batch;
  const long long total_steps = static_cast<long long>(s.epochs * steps_per_epoch);

  BatchSampler sampler({pool.begin(), pool.end()}, s.seed);
  TrainReport report;
  long long step = 0;
  std::uint64_t drawn = 0;
  std::vector<SegmentationSample> items;

  for (std::size_t epoch = 0; epoch < s.epochs; ++epoch) {
    const std::vector<std::size_t> order = s.cycled_steps > 0 ? std::vector<std::size_t>{} : sampler.epoch_order(epoch);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    double factor = 0.0;
    for (std::size_t k = 0; k < steps_per_epoch; ++k, ++step) {
      std::vector<std::size_t> idx;
      if (s.cycled_steps > 0) {
        idx = sampler.next(batch);
      } else {
        const std::size_t begin = k * batch;
        idx.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                   order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + batch)));
      }
      items.clear();
      for (std::size_t i : idx) {
        Rng rng = Rng::stream(s.seed, "augment", drawn++);
        items.push_back(augment(train[i], s.augment, rng));
      }
      Batch b = make_batch(items);
      factor = poly_lr(1.0, step, total_steps, s.poly_power);
      if (!any_scored(b.labels)) continue;

      Tape tape;
      const Variable x(std::move(b.images));
      const Variable logits = model.forward(tape, x, ForwardMode::kTrain);
      Variable loss = weighted_cross_entropy(tape, logits, b.labels, weights);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step) + ": loss is " + fmt(value));
      }
      tape.backward(loss);
      adam.step(factor);
      loss_sum += value;
      ++loss_count;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    rec.lr_factor = factor;
    if (s.track_val && !val.empty()) rec.val_miou = evaluate(model, val).miou();
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return report;
}

std::vector<double> loss_weights(std::span<const SegmentationSample> train, std::span<const std::size_t> pool,
                                 std::size_t n_classes, bool enabled) {
  if (!enabled) return std::vector<double>(n_classes, 1.0);
  std::vector<SegmentationSample> subset;
  subset.reserve(pool.size());
  for (std::size_t i : pool) subset.push_back(train[i]);
  return inverse_frequency_weights(class_frequencies(subset, n_classes));
}

void add_side_groups(Adam& adam, SegModel& model, double lr_encoder, double lr_decoder) {
  std::vector<Variable> enc;
  std::vector<Variable> dec;
  for (auto& p : model.parameters()) {
    if (!p.var.defined() || !p.var.requires_grad()) continue;
    (p.side == Side::kEncoder ? enc : dec).push_back(p.var);
  }
  if (!enc.empty()) adam.add_group(std::move(enc), lr_encoder);
  if (!dec.empty()) adam.add_group(std::move(dec), lr_decoder);
}

}  // namespace

// ---------------------------------------------------------------------------

double poly_lr(double lr0, long long step, long long total, double power) {
  if (total <= 0) throw std::invalid_argument("poly_lr: total steps must be positive");
  if (step < 0 || step > total) {
    throw std::invalid_argument("poly_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  }
  return lr0 * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total), power);
}

Variable weighted_cross_entropy(Tape& tape, const Variable& logits, std::span<const LabelMap> labels,
                                std::span<const double> class_weights, std::uint8_t void_id) {
  const Tensor& z = logits.value();
  if (z.rank() != 4) throw std::invalid_argument("weighted_cross_entropy: logits must be [B,C,H,W]");
  const std::size_t B = z.dim(0);
  const std::size_t C = z.dim(1);
  const std::size_t HW = z.dim(2) * z.dim(3);
  if (labels.size() != B) throw std::invalid_argument("weighted_cross_entropy: batch size mismatch");
  if (class_weights.size() != C) {
    throw std::invalid_argument("weighted_cross_entropy: " + std::to_string(class_weights.size()) +
                                " class weights for " + std::to_string(C) + " classes");
  }
  for (const auto& l : labels) {
    if (l.height != z.dim(2) || l.width != z.dim(3)) {
      throw std::invalid_argument("weighted_cross_entropy: label map size does not match logits");
    }
  }

  // Per-pixel softmax probabilities are kept for the backward rule.
  std::vector<double> probs(B * C * HW);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* zb = z.ptr() + b * C * HW;
    for (std::size_t i = 0; i < HW; ++i) {
      double m = zb[i];
      for (std::size_t c = 1; c < C; ++c) m = std::max(m, zb[c * HW + i]);
      double se = 0.0;
      for (std::size_t c = 0; c < C; ++c) se += std::exp(zb[c * HW + i] - m);
      for (std::size_t c = 0; c < C; ++c) probs[(b * C + c) * HW + i] = std::exp(zb[c * HW + i] - m) / se;
      const std::uint8_t y = labels[b].labels[i];
      if (y == void_id) continue;
      if (y >= C) throw std::invalid_argument("weighted_cross_entropy: label " + std::to_string(y) + " out of range");
      total += class_weights[y] * (m + std::log(se) - zb[y * HW + i]);
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("weighted_cross_entropy: every pixel is void");
  Variable out(Tensor({1}, total / static_cast<double>(count)));
  if (!std::isfinite(out.value()[0])) throw NumericalError("weighted_cross_entropy: non-finite loss");

  if (tape.should_record({&logits})) {
    out.set_requires_grad(true);
    std::vector<std::uint8_t> y;
    y.reserve(B * HW);
    for (const auto& l : labels) y.insert(y.end(), l.labels.begin(), l.labels.end());
    std::vector<double> w(class_weights.begin(), class_weights.end());
    tape.record([logits, out, probs = std::move(probs), y = std::move(y), w = std::move(w), B, C, HW, count, void_id] {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / static_cast<double>(count);
      Tensor& gz = logits.grad();
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < HW; ++i) {
          const std::uint8_t t = y[b * HW + i];
          if (t == void_id) continue;
          const double s = g * w[t];
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t k = (b * C + c) * HW + i;
            gz[k] += s * (probs[k] - (c == t ? 1.0 : 0.0));
          }
        }
      }
    });
  }
  return out;
}

std::vector<double> inverse_frequency_weights(std::span<const double> frequencies, double lo, double hi) {
  if (frequencies.empty()) throw std::invalid_argument("inverse_frequency_weights: no classes");
  const double uniform = 1.0 / static_cast<double>(frequencies.size());
  std::vector<double> w;
  w.reserve(frequencies.size());
  for (double f : frequencies) w.push_back(f > 0.0 ? std::clamp(uniform / f, lo, hi) : hi);
  return w;
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::add_group(std::vector<Variable> params, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  Group g{lr, {}};
  for (auto& p : params) {
    Tensor zeros(p.shape(), 0.0);
    g.slots.push_back({p, zeros, zeros});
  }
  groups_.push_back(std::move(g));
}

void Adam::step(double lr_factor) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& group : groups_) {
    const double lr = group.lr * lr_factor;
    for (auto& slot : group.slots) {
      if (!slot.var.has_grad()) {
        // Zero gradient: moments decay, no fresh signal.
        for (std::size_t i = 0; i < slot.m.numel(); ++i) {
          slot.m[i] *= beta1_;
          slot.v[i] *= beta2_;
        }
      } else {
        const Tensor& g = slot.var.grad();
        for (std::size_t i = 0; i < slot.m.numel(); ++i) {
          slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g[i];
          slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g[i] * g[i];
        }
      }
      Tensor& p = slot.var.value();
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double mhat = slot.m[i] / c1;
        const double vhat = slot.v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
      if (!p.all_finite()) throw NumericalError("Adam: parameter update produced non-finite values");
      slot.var.clear_grad();
    }
  }
}

void AdaptationConfig::validate() const {
  if (mode == AdaptMode::kNone) throw std::invalid_argument("adaptation mode must be BN_ONLY, DCN_ONLY or DCN_BN");
  if (placement == Placement::kNone) throw std::invalid_argument("placement must be ENCODER, DECODER or BOTH");
  if (!(lr_encoder > 0.0) || !(lr_decoder > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (subset_n && *subset_n == 0) throw std::invalid_argument("few-shot subset size must be positive");
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,val_miou,lr_factor\n" << std::setprecision(17);
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',';
    if (e.val_miou) out << *e.val_miou;
    out << ',' << e.lr_factor << '\n';
  }
}

void TrainReport::write_json(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  auto ep = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    nlohmann::ordered_json r;
    r["epoch"] = e.epoch;
    r["train_loss"] = e.train_loss;
    r["val_miou"] = e.val_miou ? nlohmann::ordered_json(*e.val_miou) : nlohmann::ordered_json(nullptr);
    r["lr_factor"] = e.lr_factor;
    ep.push_back(r);
  }
  j["epochs"] = ep;
  j["final_train_loss"] = epochs.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(epochs.back().train_loss);
  j["test_miou"] = test_miou ? nlohmann::ordered_json(*test_miou) : nlohmann::ordered_json(nullptr);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

TrainResult train_baseline(const SplitSamples& data, const TrainConfig& config, const ModelConfig& model_config,
                           const EpochCallback& on_epoch) {
  if (data.train.empty()) throw std::invalid_argument("train_baseline: empty training split");
  for (const auto& s : data.train) {
    if (s.variant != Variant::kRect) throw std::invalid_argument("train_baseline: expects rectilinear samples");
  }
  if (!(config.lr_encoder > 0.0) || !(config.lr_decoder > 0.0)) throw std::invalid_argument("learning rates must be positive");
  const auto t0 = std::chrono::steady_clock::now();

  SegModel model(model_config, config.seed);
  model.set_trainable({ParamKind::kFrozenBase, ParamKind::kBnAffine}, Placement::kBoth);
  model.set_bn_batch_stats(Placement::kBoth);

  std::vector<std::size_t> pool(data.train.size());
  std::iota(pool.begin(), pool.end(), 0);
  const auto weights = loss_weights(data.train, pool, model_config.n_classes, config.class_weighting);

  Adam adam;
  add_side_groups(adam, model, config.lr_encoder, config.lr_decoder);

  LoopSettings s;
  s.epochs = config.epochs;
  s.batch_size = config.batch_size;
  s.poly_power = config.poly_power;
  s.augment = config.augment;
  s.seed = config.seed;
  s.track_val = config.track_val;
  TrainReport report = run_loop(model, adam, data.train, pool, data.val, weights, s, on_epoch);
  if (!data.test.empty()) report.test_miou = evaluate(model, data.test).miou();

  report.config = {
      {"kind", "baseline"},
      {"epochs", std::to_string(config.epochs)},
      {"batch_size", std::to_string(config.batch_size)},
      {"lr_encoder", fmt(config.lr_encoder)},
      {"lr_decoder", fmt(config.lr_decoder)},
      {"poly_power", fmt(config.poly_power)},
      {"augment", fmt_augment(config.augment)},
      {"class_weighting", config.class_weighting ? "1" : "0"},
      {"seed", std::to_string(config.seed)},
      {"train_size", std::to_string(data.train.size())},
  };
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

bool adaptation_may_change(const std::string& name, Side side, AdaptMode mode, Placement placement) {
  if (!placement_covers(placement, side)) return false;
  if (name.find(".conv.offset.") != std::string::npos) return mode_trains_offsets(mode);
  if (name.find(".bn.") != std::string::npos) return mode_trains_bn(mode);
  return false;
}

std::vector<std::string> freeze_violations(const ModelCheckpoint& baseline, SegModel& adapted, AdaptMode mode,
                                           Placement placement) {
  std::map<std::string, Side> side_of;
  for (const auto& p : adapted.parameters()) side_of[p.name] = p.side;
  std::vector<std::string> out;
  for (const auto& d : diff_checkpoints(baseline, adapted.to_checkpoint())) {
    const auto it = side_of.find(d.name);
    if (d.kind == DiffKind::kRemoved || it == side_of.end() || !adaptation_may_change(d.name, it->second, mode, placement)) {
      out.push_back(d.name);
    }
  }
  return out;
}

TrainResult adapt(const ModelCheckpoint& baseline, const SplitSamples& fisheye, const AdaptationConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (baseline.flags.placement != Placement::kNone || baseline.flags.mode != AdaptMode::kNone) {
    throw std::invalid_argument("adapt: expects an un-adapted baseline checkpoint");
  }
  if (fisheye.train.empty()) throw std::invalid_argument("adapt: empty training split");
  if (config.subset_n && *config.subset_n > fisheye.train.size()) {
    throw std::invalid_argument("adapt: subset of " + std::to_string(*config.subset_n) + " exceeds the " +
                                std::to_string(fisheye.train.size()) + " training samples");
  }
  const auto t0 = std::chrono::steady_clock::now();

  SegModel model = SegModel::from_checkpoint(baseline);
  const bool offsets = mode_trains_offsets(config.mode);
  const bool bn = mode_trains_bn(config.mode);
  if (offsets) model.convert_to_deformable(config.placement);
  if (offsets && bn) {
    model.set_trainable({ParamKind::kOffset, ParamKind::kBnAffine}, config.placement);
  } else if (offsets) {
    model.set_trainable({ParamKind::kOffset}, config.placement);
  } else {
    model.set_trainable({ParamKind::kBnAffine}, config.placement);
  }
  model.set_bn_batch_stats(bn ? config.placement : Placement::kNone);
  model.set_adapt_mode(config.mode);

  std::vector<std::size_t> pool;
  if (config.subset_n) {
    pool = fewshot_indices(fisheye.train.size(), static_cast<long long>(*config.subset_n), config.seed);
  } else {
    pool.resize(fisheye.train.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  const std::size_t n_classes = model.config().n_classes;
  const auto weights = loss_weights(fisheye.train, pool, n_classes, config.class_weighting);

  Adam adam;
  add_side_groups(adam, model, config.lr_encoder, config.lr_decoder);

  LoopSettings s;
  s.epochs = config.epochs;
  s.batch_size = config.batch_size;
  s.poly_power = config.poly_power;
  s.augment = config.augment;
  s.seed = config.seed;
  s.track_val = config.track_val;
  if (pool.size() < fisheye.train.size() && config.match_full_steps) {
    s.cycled_steps = (fisheye.train.size() + config.batch_size - 1) / config.batch_size;
  }
  TrainReport report = run_loop(model, adam, fisheye.train, pool, fisheye.val, weights, s, on_epoch);

  const auto violations = freeze_violations(baseline, model, config.mode, config.placement);
  if (!violations.empty()) {
    throw std::logic_error("adapt: freeze contract violated by " + std::to_string(violations.size()) +
                           " tensor(s), first: " + violations.front());
  }
  if (!fisheye.test.empty()) report.test_miou = evaluate(model, fisheye.test).miou();

  report.config = {
      {"kind", "adapt"},
      {"mode", to_string(config.mode)},
      {"placement", to_string(config.placement)},
      {"epochs", std::to_string(config.epochs)},
      {"batch_size", std::to_string(config.batch_size)},
      {"lr_encoder", fmt(config.lr_encoder)},
      {"lr_decoder", fmt(config.lr_decoder)},
      {"poly_power", fmt(config.poly_power)},
      {"subset_n", config.subset_n ? std::to_string(*config.subset_n) : "full"},
      {"match_full_steps", config.match_full_steps ? "1" : "0"},
      {"augment", fmt_augment(config.augment)},
      {"class_weighting", config.class_weighting ? "1" : "0"},
      {"seed", std::to_string(config.seed)},
      {"train_size", std::to_string(pool.size())},
  };
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(model), std::move(report)};
}

// ---------------------------------------------------------------------------

std::vector<std::pair<AdaptMode, Placement>> AblationSuiteConfig::all_cells() {
  std::vector<std::pair<AdaptMode, Placement>> out;
  for (AdaptMode m : {AdaptMode::kBnOnly, AdaptMode::kDcnOnly, AdaptMode::kDcnBn}) {
    for (Placement p : {Placement::kEncoder, Placement::kDecoder, Placement::kBoth}) out.emplace_back(m, p);
  }
  return out;
}

void AblationTable::write_csv(const std::filesystem::path& path, std::span<const AblationRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "mode,placement,n,seed,miou\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << to_string(r.mode) << ',' << to_string(r.placement) << ',' << r.n << ',' << r.seed << ',' << r.miou << '\n';
  }
}

AblationTable run_ablation_suite(std::span<const std::pair<std::uint64_t, ModelCheckpoint>> baselines,
                                 const SplitSamples& fisheye, const AblationSuiteConfig& config) {
  if (fisheye.test.empty()) throw std::invalid_argument("run_ablation_suite: empty fisheye test split");
  const std::size_t full = fisheye.train.size();
  AblationTable table;
  auto emit = [&](std::vector<AblationRow>& dst, AblationRow row) {
    dst.push_back(row);
    if (config.on_row) config.on_row(row);
  };

  for (const auto& [seed, ck] : baselines) {
    {
      SegModel base = SegModel::from_checkpoint(ck);
      emit(table.baseline, {AdaptMode::kNone, Placement::kNone, 0, seed, evaluate(base, fisheye.test).miou()});
    }
    std::optional<double> full_dcn_bn_both;
    for (const auto& [mode, placement] : config.cells) {
      AdaptationConfig cfg = config.base;
      cfg.mode = mode;
      cfg.placement = placement;
      cfg.seed = seed;
      cfg.subset_n.reset();
      cfg.track_val = false;
      const double m = *adapt(ck, fisheye, cfg).report.test_miou;
      if (mode == AdaptMode::kDcnBn && placement == Placement::kBoth) full_dcn_bn_both = m;
      emit(table.table, {mode, placement, full, seed, m});
    }
    for (std::size_t n : config.fewshot_sizes) {
      const std::size_t count = (n == 0 || n >= full) ? full : n;
      if (count == full && full_dcn_bn_both) {
        emit(table.fewshot, {AdaptMode::kDcnBn, Placement::kBoth, full, seed, *full_dcn_bn_both});
        continue;
      }
      AdaptationConfig cfg = config.base;
      cfg.mode = AdaptMode::kDcnBn;
      cfg.placement = Placement::kBoth;
      cfg.seed = seed;
      cfg.track_val = false;
      if (count < full) {
        cfg.subset_n = count;
      } else {
        cfg.subset_n.reset();
      }
      const double m = *adapt(ck, fisheye, cfg).report.test_miou;
      if (count == full) full_dcn_bn_both = m;
      emit(table.fewshot, {AdaptMode::kDcnBn, Placement::kBoth, count, seed, m});
    }
  }
  return table;
}

}  // namespace warpadapt
