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

#include <benchmark/benchmark.h>

#include <vector>

#include "warpadapt/data.hpp"
#include "warpadapt/geometry.hpp"
#include "warpadapt/layers.hpp"
#include "warpadapt/metrics.hpp"
#include "warpadapt/model.hpp"
#include "warpadapt/ops.hpp"
#include "warpadapt/random.hpp"

namespace {

using namespace warpadapt;

Tensor noise(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& x : t.data()) x = rng.uniform(-1.0, 1.0);
  return t;
}

// range(0): channels, spatial extent 32x64
void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Variable x(noise({8, c, 32, 64}, 1));
  const Variable w(noise({c, c, 3, 3}, 2));
  const Variable b(noise({c}, 3));
  for (auto _ : state) {
    Tape tape(Tape::Mode::kInference);
    benchmark::DoNotOptimize(conv2d(tape, x, w, b, {1, 1, 1}).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_DeformableForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Conv2d base(c, c, 3, {1, 1, 1});
  base.weight.value() = noise(base.weight.shape(), 4);
  DeformableConv2d d(base);
  d.offset_predictor().weight.value() = noise(d.offset_predictor().weight.shape(), 5);
  const Variable x(noise({8, c, 32, 64}, 6));
  for (auto _ : state) {
    Tape tape(Tape::Mode::kInference);
    benchmark::DoNotOptimize(d.forward(tape, x).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_DeformableForward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_DeformableBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Conv2d base(c, c, 3, {1, 1, 1});
  base.weight.value() = noise(base.weight.shape(), 7);
  DeformableConv2d d(base);
  d.offset_predictor().weight.value() = noise(d.offset_predictor().weight.shape(), 8);
  d.offset_predictor().weight.set_requires_grad(true);
  d.offset_predictor().bias.set_requires_grad(true);
  const Variable x(noise({8, c, 32, 64}, 9));
  for (auto _ : state) {
    Tape tape;
    Variable loss = sum(tape, d.forward(tape, x));
    tape.backward(loss);
    d.offset_predictor().weight.clear_grad();
    d.offset_predictor().bias.clear_grad();
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_DeformableBackward)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ModelPredict(benchmark::State& state) {
  SegModel model({}, 11);
  if (state.range(0)) model.convert_to_deformable(Placement::kBoth);
  const Tensor x = noise({8, 3, 32, 64}, 12);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ModelPredict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// range(0): image rows, width is twice that
void BM_BuildWarpField(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const DistortionParams p(125.0);
  for (auto _ : state) benchmark::DoNotOptimize(build_warp_field(h, 2 * h, h, 2 * h, p).valid_fraction());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * h * h));
}
BENCHMARK(BM_BuildWarpField)->Arg(32)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_RemapImage(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  const WarpField field = build_warp_field(h, 2 * h, h, 2 * h, DistortionParams(125.0));
  const Tensor image = noise({3, h, 2 * h}, 13);
  for (auto _ : state) benchmark::DoNotOptimize(remap_image(image, field).data().data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * h * h));
}
BENCHMARK(BM_RemapImage)->Arg(32)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_GenerateScene(benchmark::State& state) {
  SceneSpec spec;
  spec.height = static_cast<std::size_t>(state.range(0));
  spec.width = 2 * spec.height;
  std::uint64_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_scene(spec, i++).labels.labels.data());
}
BENCHMARK(BM_GenerateScene)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_ConfusionMatrix(benchmark::State& state) {
  Rng rng(14);
  LabelMap pred(128, 256), gt(128, 256);
  for (auto& l : pred.labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 4));
  for (auto& l : gt.labels) l = rng.uniform() < 0.1 ? kVoidLabel : static_cast<std::uint8_t>(rng.uniform_int(0, 4));
  for (auto _ : state) {
    ConfusionMatrix cm(5);
    cm.add(pred, gt);
    benchmark::DoNotOptimize(cm.total());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pred.size()));
}
BENCHMARK(BM_ConfusionMatrix);

}  // namespace

BENCHMARK_MAIN();
