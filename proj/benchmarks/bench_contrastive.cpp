#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "pixfuse/contrastive.hpp"
#include "pixfuse/scenedata.hpp"

namespace {

void BM_InfoNce(benchmark::State& state) {
  const auto n = state.range(0);
  torch::manual_seed(0);
  auto a = torch::randn({n, 64});
  auto p = torch::randn({n, 64});
  for (auto _ : state) benchmark::DoNotOptimize(pixfuse::info_nce(a, p, 0.1));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_InfoNce)->Arg(64)->Arg(512)->Arg(2048);

void BM_Slic(benchmark::State& state) {
  const auto size = static_cast<int>(state.range(0));
  auto scene = pixfuse::generate_synthetic(1, 1, size, 0.0)[0];
  for (auto _ : state) benchmark::DoNotOptimize(pixfuse::segment_superpixels(scene, 64, 0.05));
}
BENCHMARK(BM_Slic)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Pooling(benchmark::State& state) {
  auto scene = pixfuse::generate_synthetic(2, 1, 64, 0.0)[0];
  auto sp = pixfuse::segment_superpixels(scene, 64, 0.05);
  auto mask = torch::ones({64, 64}, torch::kBool);
  auto features = torch::randn({64, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(pixfuse::pool_over_superpixels(features, sp, mask));
}
BENCHMARK(BM_Pooling)->Unit(benchmark::kMicrosecond);

}  // namespace
