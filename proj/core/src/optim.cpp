#include "pixfuse/optim.hpp"

#include "pixfuse/errors.hpp"

namespace pixfuse {

void ScheduledOptimizer::set_factor(double factor) {
  auto& groups = impl->param_groups();
  for (std::size_t i = 0; i < groups.size(); ++i) groups[i].options().set_lr(base_lr[i] * factor);
}

ScheduledOptimizer make_optimizer(std::vector<ParamGroup> groups, const TrainConfig& config) {
  if (groups.empty()) throw ConfigError("optimizer needs at least one parameter group");
  ScheduledOptimizer out;
  std::vector<torch::optim::OptimizerParamGroup> torch_groups;
  for (auto& g : groups) {
    out.base_lr.push_back(g.lr);
    if (config.optimizer == OptimizerKind::kAdam) {
      auto opts = std::make_unique<torch::optim::AdamOptions>(g.lr);
      opts->betas({config.momentum, 0.999}).weight_decay(config.weight_decay);
      torch_groups.emplace_back(std::move(g.params), std::move(opts));
    } else {
      auto opts = std::make_unique<torch::optim::SGDOptions>(g.lr);
      opts->momentum(config.momentum).weight_decay(config.weight_decay);
      torch_groups.emplace_back(std::move(g.params), std::move(opts));
    }
  }
  if (config.optimizer == OptimizerKind::kAdam) {
    out.impl = std::make_unique<torch::optim::Adam>(std::move(torch_groups),
                                                    torch::optim::AdamOptions(out.base_lr.front()));
  } else {
    out.impl = std::make_unique<torch::optim::SGD>(std::move(torch_groups),
                                                   torch::optim::SGDOptions(out.base_lr.front()));
  }
  return out;
}

}  // namespace pixfuse
