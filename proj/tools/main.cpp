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

// warpadapt: dataset generation, training, adaptation and evaluation.
//
// Exit codes: 0 success, 1 invalid input or any other failure, 2 numerical
// divergence during training.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "warpadapt/data.hpp"
#include "warpadapt/engine.hpp"
#include "warpadapt/geometry.hpp"
#include "warpadapt/image_io.hpp"
#include "warpadapt/metrics.hpp"
#include "warpadapt/model.hpp"
#include "warpadapt/tensor.hpp"

namespace fs = std::filesystem;
using namespace warpadapt;
using warpadapt::cli::Config;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Config file of 'section.key = value' lines")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Master seed; overrides the config 'seed' key");
  cmd->add_option("--set", o.overrides, "Extra 'section.key=value' override, repeatable");
}

Config resolve_config(const CommonOptions& o) {
  Config cfg = o.config_path.empty() ? Config{} : Config::load(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  return cfg;
}

fs::path output_dir(const CommonOptions& o, const Config& cfg) {
  fs::path dir = o.out.empty() ? fs::path(cfg.get("output.dir")) : fs::path(o.out);
  if (dir.empty()) throw std::invalid_argument("no output directory: pass --out or set output.dir");
  fs::create_directories(dir);
  return dir;
}

void print_epoch(const char* what, const EpochRecord& r) {
  std::printf("%s epoch %zu  loss %.5f", what, r.epoch, r.train_loss);
  if (r.val_miou) std::printf("  val mIoU %.4f", *r.val_miou);
  std::printf("\n");
  std::fflush(stdout);
}

SplitSamples samples_from_manifest(const fs::path& manifest_path, Variant variant) {
  const Manifest m = Manifest::load(manifest_path);
  SplitSamples s;
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) s[split] = load_samples(m, split, variant);
  return s;
}

SplitSamples fisheye_data(const Config& cfg, const std::string& manifest) {
  if (!manifest.empty()) return samples_from_manifest(manifest, Variant::kFisheye);
  return derive_fisheye(generate_dataset(cfg.dataset()), cfg.distortion(), cfg.convention());
}

void append_config(TrainReport& report, const Config& cfg) {
  for (const auto& [key, doc] : Config::documented_keys()) report.config.emplace_back("config." + key, cfg.get(key));
}

std::string keys_footer() {
  std::string s = "Config keys:\n";
  for (const auto& [key, doc] : Config::documented_keys()) s += "  " + key + "  " + doc + "\n";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisheye adaptation of a segmentation model through deformable convolutions"};
  app.require_subcommand(1);
  app.footer(keys_footer());

  // gen-data
  CommonOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate rectilinear scenes and their fisheye counterparts");
  add_config_options(gen_cmd, gen);
  gen_cmd->add_option("--out", gen.out, "Output directory (images/, labels/, manifest.tsv)");

  // warp
  std::string warp_in, warp_labels, warp_out;
  double warp_f = 125.0, warp_fs = WarpConvention{}.focal_scale;
  std::array<double, 4> warp_k{};
  double warp_cx = 0.0, warp_cy = 0.0;
  auto* warp_cmd = app.add_subcommand("warp", "Warp one rectilinear PNG (and optional label PNG) to fisheye");
  warp_cmd->add_option("--in", warp_in, "Rectilinear RGB PNG")->required()->check(CLI::ExistingFile);
  warp_cmd->add_option("--labels", warp_labels, "Label PNG of the same size")->check(CLI::ExistingFile);
  warp_cmd->add_option("--out", warp_out, "Output directory")->required();
  warp_cmd->add_option("--f", warp_f, "Focal parameter; lower is stronger distortion")->capture_default_str();
  warp_cmd->add_option("--k1", warp_k[0], "Polynomial coefficient k1")->capture_default_str();
  warp_cmd->add_option("--k2", warp_k[1], "Polynomial coefficient k2")->capture_default_str();
  warp_cmd->add_option("--k3", warp_k[2], "Polynomial coefficient k3")->capture_default_str();
  warp_cmd->add_option("--k4", warp_k[3], "Polynomial coefficient k4")->capture_default_str();
  warp_cmd->add_option("--cx", warp_cx, "Distortion center x")->capture_default_str();
  warp_cmd->add_option("--cy", warp_cy, "Distortion center y")->capture_default_str();
  warp_cmd->add_option("--focal-scale", warp_fs, "Normalized-to-lens coordinate scale")->capture_default_str();

  // train
  CommonOptions train;
  std::string train_manifest;
  auto* train_cmd = app.add_subcommand("train", "Train the rectilinear baseline");
  add_config_options(train_cmd, train);
  train_cmd->add_option("--out", train.out, "Output directory");
  train_cmd->add_option("--manifest", train_manifest, "Train on the rect entries of this manifest")
      ->check(CLI::ExistingFile);

  // adapt
  CommonOptions adapt_o;
  std::string adapt_baseline, adapt_manifest, adapt_mode, adapt_placement;
  std::optional<std::uint64_t> adapt_n;
  auto* adapt_cmd = app.add_subcommand("adapt", "Adapt a baseline checkpoint to fisheye data");
  add_config_options(adapt_cmd, adapt_o);
  adapt_cmd->add_option("--baseline", adapt_baseline, "Baseline checkpoint")->required()->check(CLI::ExistingFile);
  adapt_cmd->add_option("--mode", adapt_mode, "BN_ONLY, DCN_ONLY or DCN_BN; overrides adapt.mode");
  adapt_cmd->add_option("--placement", adapt_placement, "ENCODER, DECODER or BOTH; overrides adapt.placement");
  adapt_cmd->add_option("--n", adapt_n, "Few-shot subset size, 0 for the full split; overrides adapt.n");
  adapt_cmd->add_option("--out", adapt_o.out, "Output directory");
  adapt_cmd->add_option("--manifest", adapt_manifest, "Adapt on the fisheye entries of this manifest")
      ->check(CLI::ExistingFile);

  // eval
  std::string eval_model, eval_manifest, eval_variant = "fisheye", eval_split = "test", eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on one split of a manifest");
  eval_cmd->add_option("--model", eval_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", eval_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--variant", eval_variant, "rect or fisheye")->capture_default_str();
  eval_cmd->add_option("--split", eval_split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Directory for class_iou.csv and summary.json");

  // sweep
  CommonOptions sweep;
  std::vector<std::string> sweep_baselines;
  std::string sweep_manifest;
  auto* sweep_cmd = app.add_subcommand("sweep", "Component table and few-shot curve over all seeds");
  add_config_options(sweep_cmd, sweep);
  sweep_cmd->add_option("--baseline", sweep_baselines,
                        "Baseline checkpoint; one per sweep seed, or one shared by all")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out", sweep.out, "Output directory");
  sweep_cmd->add_option("--manifest", sweep_manifest, "Use the fisheye entries of this manifest")
      ->check(CLI::ExistingFile);

  // bound
  std::string bound_baseline, bound_manifest, bound_split = "test";
  double bound_f = 125.0, bound_fs = WarpConvention{}.focal_scale;
  std::array<double, 4> bound_k{};
  auto* bound_cmd = app.add_subcommand("bound", "Upper bound for adaptation from rectilinear predictions");
  bound_cmd->add_option("--baseline", bound_baseline, "Baseline checkpoint")->required()->check(CLI::ExistingFile);
  bound_cmd->add_option("--manifest", bound_manifest, "Manifest with rect entries")->required()->check(
      CLI::ExistingFile);
  bound_cmd->add_option("--f", bound_f, "Focal parameter")->capture_default_str();
  bound_cmd->add_option("--k1", bound_k[0], "Polynomial coefficient k1")->capture_default_str();
  bound_cmd->add_option("--k2", bound_k[1], "Polynomial coefficient k2")->capture_default_str();
  bound_cmd->add_option("--k3", bound_k[2], "Polynomial coefficient k3")->capture_default_str();
  bound_cmd->add_option("--k4", bound_k[3], "Polynomial coefficient k4")->capture_default_str();
  bound_cmd->add_option("--focal-scale", bound_fs, "Normalized-to-lens coordinate scale")->capture_default_str();
  bound_cmd->add_option("--split", bound_split, "train, val or test")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen_cmd) {
      const Config cfg = resolve_config(gen);
      const fs::path dir = output_dir(gen, cfg);
      const DistortionParams params = cfg.distortion();
      const SplitSamples rect = generate_dataset(cfg.dataset());
      const SplitSamples fish = derive_fisheye(rect, params, cfg.convention());
      write_dataset(dir, rect, fish, params.hash());
      const auto h = cfg.dataset().scene.height, w = cfg.dataset().scene.width;
      build_warp_field(h, w, h, w, params, cfg.convention()).save(dir / "warp.field");
      cfg.write_resolved(dir / "config.resolved");
      std::printf("wrote %zu scenes to %s\n", rect.train.size() + rect.val.size() + rect.test.size(),
                  dir.string().c_str());
    } else if (*warp_cmd) {
      const DistortionParams params(warp_f, warp_k, Point2{warp_cx, warp_cy});
      const WarpConvention conv{warp_fs};
      const Tensor image = read_rgb_png(warp_in);
      const std::size_t h = image.shape()[1], w = image.shape()[2];
      const WarpField field = build_warp_field(h, w, h, w, params, conv);
      const fs::path dir(warp_out);
      fs::create_directories(dir);
      Tensor warped = remap_image(image, field);
      quantize_8bit(warped);
      write_rgb_png(dir / "fisheye.png", warped);
      if (!warp_labels.empty()) {
        const LabelMap labels = read_label_png(warp_labels);
        if (labels.height != h || labels.width != w)
          throw std::invalid_argument("label PNG size differs from the image");
        write_label_png(dir / "fisheye_labels.png", remap_labels(labels, field));
      }
      field.save(dir / "warp.field");
      std::printf("valid fraction %.6f\n", field.valid_fraction());
    } else if (*train_cmd) {
      const Config cfg = resolve_config(train);
      const fs::path dir = output_dir(train, cfg);
      cfg.write_resolved(dir / "config.resolved");
      const SplitSamples rect =
          train_manifest.empty() ? generate_dataset(cfg.dataset()) : samples_from_manifest(train_manifest, Variant::kRect);
      auto result = train_baseline(rect, cfg.train(), cfg.model(),
                                   [](const EpochRecord& r) { print_epoch("train", r); });
      append_config(result.report, cfg);
      save_checkpoint(result.model, dir / "model.wadp");
      result.report.write_csv(dir / "train_log.csv");
      result.report.write_json(dir / "report.json");
      if (result.report.test_miou) std::printf("rect test mIoU %.4f\n", *result.report.test_miou);
    } else if (*adapt_cmd) {
      CommonOptions o = adapt_o;
      if (!adapt_mode.empty()) o.overrides.push_back("adapt.mode=" + adapt_mode);
      if (!adapt_placement.empty()) o.overrides.push_back("adapt.placement=" + adapt_placement);
      if (adapt_n) o.overrides.push_back("adapt.n=" + std::to_string(*adapt_n));
      const Config cfg = resolve_config(o);
      const fs::path dir = output_dir(o, cfg);
      cfg.write_resolved(dir / "config.resolved");
      const AdaptationConfig ac = cfg.adaptation();
      ac.validate();
      const ModelCheckpoint baseline = ModelCheckpoint::load(adapt_baseline);
      const SplitSamples fish = fisheye_data(cfg, adapt_manifest);
      auto result = adapt(baseline, fish, ac, [](const EpochRecord& r) { print_epoch("adapt", r); });
      append_config(result.report, cfg);
      save_checkpoint(result.model, dir / "adapted.wadp");
      result.report.write_csv(dir / "adapt_log.csv");
      result.report.write_json(dir / "report.json");
      if (result.report.test_miou) std::printf("fisheye test mIoU %.4f\n", *result.report.test_miou);
    } else if (*eval_cmd) {
      SegModel model = load_checkpoint(eval_model);
      const Manifest m = Manifest::load(eval_manifest);
      const auto samples = load_samples(m, parse_split(eval_split), parse_variant(eval_variant));
      if (samples.empty()) throw std::invalid_argument("manifest has no " + eval_variant + " " + eval_split + " entries");
      const ConfusionMatrix cm = evaluate(model, samples);
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        write_class_report_csv(fs::path(eval_out) / "class_iou.csv", cm);
        write_summary_json(fs::path(eval_out) / "summary.json", cm,
                           {{"variant", eval_variant}, {"split", eval_split}});
      }
      std::printf("mIoU %.6f\n", cm.miou());
    } else if (*sweep_cmd) {
      const Config cfg = resolve_config(sweep);
      const fs::path dir = output_dir(sweep, cfg);
      cfg.write_resolved(dir / "config.resolved");
      AblationSuiteConfig sc;
      sc.base = cfg.adaptation();
      sc.base.subset_n.reset();
      sc.base.track_val = false;
      sc.seeds = cfg.integer_list("sweep.seeds");
      sc.cells = AblationSuiteConfig::all_cells();
      sc.fewshot_sizes.clear();
      for (auto n : cfg.integer_list("sweep.fewshot")) sc.fewshot_sizes.push_back(n);
      if (sweep_baselines.size() != 1 && sweep_baselines.size() != sc.seeds.size())
        throw std::invalid_argument("expected one --baseline or one per sweep seed");
      std::vector<std::pair<std::uint64_t, ModelCheckpoint>> baselines;
      for (std::size_t i = 0; i < sc.seeds.size(); ++i)
        baselines.emplace_back(sc.seeds[i],
                               ModelCheckpoint::load(sweep_baselines[sweep_baselines.size() == 1 ? 0 : i]));
      sc.on_row = [](const AblationRow& r) {
        std::printf("%s %s n=%zu seed=%llu mIoU %.4f\n", to_string(r.mode), to_string(r.placement), r.n,
                    static_cast<unsigned long long>(r.seed), r.miou);
        std::fflush(stdout);
      };
      const SplitSamples fish = fisheye_data(cfg, sweep_manifest);
      const AblationTable table = run_ablation_suite(baselines, fish, sc);
      AblationTable::write_csv(dir / "baseline.csv", table.baseline);
      AblationTable::write_csv(dir / "ablation.csv", table.table);
      AblationTable::write_csv(dir / "fewshot.csv", table.fewshot);
    } else if (*bound_cmd) {
      SegModel model = load_checkpoint(bound_baseline);
      const Manifest m = Manifest::load(bound_manifest);
      const auto rect = load_samples(m, parse_split(bound_split), Variant::kRect);
      if (rect.empty()) throw std::invalid_argument("manifest has no rect " + bound_split + " entries");
      const double bound = upper_bound(model, rect, DistortionParams(bound_f, bound_k), WarpConvention{bound_fs});
      std::printf("bound mIoU %.6f\n", bound);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
