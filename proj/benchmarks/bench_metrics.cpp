#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "cris/metrics.hpp"
#include "cris/types.hpp"

namespace {

using namespace cris;

std::pair<std::vector<ProbMap>, std::vector<MaskTensor>> fixtures(
    int n, std::int64_t side) {
  torch::manual_seed(1);
  std::vector<ProbMap> probs;
  std::vector<MaskTensor> gts;
  for (int i = 0; i < n; ++i) {
    probs.push_back(ProbMap::unchecked(torch::rand({1, side, side})));
    gts.push_back(MaskTensor::unchecked(
        (torch::rand({1, side, side}) < 0.4).to(torch::kFloat32)));
  }
  return {probs, gts};
}

void BM_Confusion256(benchmark::State& state) {
  auto [probs, gts] = fixtures(2, 256);
  const auto pred = binarize(probs[0], 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(confusion(pred, gts[0]));
  }
}
BENCHMARK(BM_Confusion256);

void BM_Dice256(benchmark::State& state) {
  auto [probs, gts] = fixtures(2, 256);
  const auto pred = binarize(probs[0], 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dice(pred, gts[0]));
  }
}
BENCHMARK(BM_Dice256);

void BM_MseMetric256(benchmark::State& state) {
  auto [probs, gts] = fixtures(2, 256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mse_metric(probs[0], gts[0]));
  }
}
BENCHMARK(BM_MseMetric256);

void BM_PrCurve(benchmark::State& state) {
  auto [probs, gts] = fixtures(static_cast<int>(state.range(0)), 128);
  const auto grid = default_threshold_grid();
  for (auto _ : state) {
    benchmark::DoNotOptimize(pr_curve(probs, gts, grid));
  }
}
BENCHMARK(BM_PrCurve)->Arg(4)->Arg(16);

void BM_BestThreshold(benchmark::State& state) {
  auto [probs, gts] = fixtures(8, 128);
  const auto grid = default_threshold_grid();
  for (auto _ : state) {
    benchmark::DoNotOptimize(best_threshold(probs, gts, grid));
  }
}
BENCHMARK(BM_BestThreshold);

}  // namespace

BENCHMARK_MAIN();
