#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "pixfuse/fusionnet.hpp"

namespace {

void BM_Forward(benchmark::State& state) {
  pixfuse::NetworkConfig cfg;
  cfg.fusion_mode = static_cast<pixfuse::FusionMode>(state.range(0));
  auto net = pixfuse::build_network(cfg, 0);
  net->eval();
  torch::NoGradGuard ng;
  auto x = torch::randn({4, 7, 64, 64});
  for (auto _ : state) benchmark::DoNotOptimize(net->forward(x));
  state.SetLabel(pixfuse::to_string(cfg.fusion_mode));
}
BENCHMARK(BM_Forward)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  pixfuse::NetworkConfig cfg;
  auto net = pixfuse::build_network(cfg, 0);
  auto x = torch::randn({4, 7, 64, 64});
  for (auto _ : state) {
    auto out = net->forward(x);
    (out.dense.mean() + out.global_joint.mean()).backward();
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace
