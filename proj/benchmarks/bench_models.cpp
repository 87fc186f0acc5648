#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "cris/backbones.hpp"
#include "cris/data.hpp"
#include "cris/refinement.hpp"
#include "cris/runtime.hpp"
#include "cris/training.hpp"

namespace {

using namespace cris;

void BM_BackboneForward(benchmark::State& state) {
  configure_threading(1);
  const auto kind = static_cast<BackboneKind>(state.range(0));
  auto backbone = build_backbone({kind, 16, 3, 0});
  backbone->eval();
  torch::NoGradGuard ng;
  const auto x = torch::rand({4, 3, 64, 64});
  for (auto _ : state) {
    benchmark::DoNotOptimize(backbone->forward(x));
  }
}
BENCHMARK(BM_BackboneForward)->Arg(0)->Arg(1)->Arg(2);

void BM_RefinementForward(benchmark::State& state) {
  configure_threading(1);
  auto head = build_refinement({});
  head->eval();
  torch::NoGradGuard ng;
  const auto p = torch::rand({4, 1, 64, 64});
  for (auto _ : state) {
    benchmark::DoNotOptimize(head->forward(p));
  }
}
BENCHMARK(BM_RefinementForward);

void BM_TrainStep(benchmark::State& state) {
  configure_threading(1);
  torch::manual_seed(0);
  ModelSpec spec;
  spec.backbone = {BackboneKind::kUNet, 16, 3, 0};
  auto model = compose(build_backbone(spec.backbone),
                       build_refinement(spec.refinement));
  TrainConfig cfg;
  auto opt = make_optimizers(model, cfg);
  const auto data = synth_shapes(4, {64, 64}, 1);
  const auto weights =
      state.range(0) == 0 ? EpochLossWeights{1, 0} : EpochLossWeights{0, 1};
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(model, data.samples, weights, opt));
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1);

void BM_SynthShapes(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(synth_shapes(4, {64, 64}, 7));
  }
}
BENCHMARK(BM_SynthShapes);

}  // namespace
