#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "pixfuse/cluster.hpp"
#include "pixfuse/pseudolabel.hpp"

namespace {

void BM_KMeans(benchmark::State& state) {
  const auto n = state.range(0);
  torch::manual_seed(0);
  auto x = torch::randn({n, 5});
  for (auto _ : state) benchmark::DoNotOptimize(pixfuse::kmeans(x, 8, 1));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_KMeans)->Arg(4096)->Arg(16384)->Unit(benchmark::kMillisecond);

void BM_PseudoLabelScene(benchmark::State& state) {
  auto scene = pixfuse::generate_synthetic(3, 1, 64, 0.0)[0];
  pixfuse::PseudoLabelConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(pixfuse::pseudo_label_scene(scene, cfg));
}
BENCHMARK(BM_PseudoLabelScene)->Unit(benchmark::kMillisecond);

}  // namespace
