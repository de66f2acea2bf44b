#pragma once

#include <torch/optim.h>

#include <memory>
#include <vector>

#include "pixfuse/config.hpp"

namespace pixfuse {

struct ParamGroup {
  std::vector<torch::Tensor> params;
  double lr = 0.0;
};

// A libtorch optimizer that remembers each group's base learning rate so a
// schedule can rescale them.
struct ScheduledOptimizer {
  std::unique_ptr<torch::optim::Optimizer> impl;
  std::vector<double> base_lr;

  void set_factor(double factor);
  void zero_grad() { impl->zero_grad(); }
  void step() { impl->step(); }
};

// Adam (beta1 = momentum) or SGD with momentum, per TrainConfig.
ScheduledOptimizer make_optimizer(std::vector<ParamGroup> groups, const TrainConfig& config);

}  // namespace pixfuse
