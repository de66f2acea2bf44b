#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pixfuse/determinism.hpp"
#include "pixfuse/errors.hpp"
#include "pixfuse/training.hpp"

namespace pixfuse {

GradCheckReport grad_check(const std::vector<torch::Tensor>& params, const std::function<torch::Tensor()>& loss_fn,
                           int samples, double eps, double tol, std::uint64_t seed, double floor) {
  for (const auto& p : params) {
    if (p.scalar_type() != torch::kFloat64) throw ConfigError("gradient check needs float64 parameters");
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  loss_fn().backward();

  // Only scalars the loss actually reaches are candidates.
  std::vector<std::pair<std::size_t, int64_t>> candidates;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].grad().defined()) continue;
    for (int64_t j = 0; j < params[i].numel(); ++j) candidates.emplace_back(i, j);
  }
  if (candidates.empty()) throw ConfigError("loss does not depend on any of the given parameters");
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(samples)));

  GradCheckReport report;
  torch::NoGradGuard no_grad;
  for (const auto& [i, j] : candidates) {
    auto& p = params[i];
    auto* value = p.data_ptr<double>() + j;
    const double analytic = p.grad().contiguous().data_ptr<double>()[j];
    const double original = *value;
    *value = original + eps;
    const double up = loss_fn().item<double>();
    *value = original - eps;
    const double down = loss_fn().item<double>();
    *value = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double abs_err = std::abs(analytic - numeric);
    const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    report.max_rel_error = std::max(report.max_rel_error, rel_err);
    ++report.samples;
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

GradCheckReport grad_check_composite(FusionMode mode, std::uint64_t seed, double eps, int samples, double tol) {
  const auto scenes = generate_synthetic(seed, 2, 16, 0.0);
  NetworkConfig nc;
  nc.fusion_mode = mode;
  nc.width_mult = 0.125;
  nc.proj_dim = 16;
  LossConfig loss;
  loss.superpixels_per_tile = 16;
  AugmentConfig augment;
  augment.max_shift = 4;

  auto net = build_network(nc, derive_seed(seed, 1));
  net->to(torch::kFloat64);
  net->train();
  const auto norm = InputNorm::fit(scenes, nc.modality);
  auto prepared = prepare_scenes(scenes, norm, nc.modality, loss);
  for (auto& p : prepared) p.input = p.input.to(torch::kFloat64);
  std::mt19937_64 rng(derive_seed(seed, 2));
  const std::vector<std::size_t> idx{0, 1};
  const auto batch = sample_contrastive_batch(prepared, idx, augment, loss, rng);
  return grad_check(
      net->parameters(), [&] { return contrastive_loss(net, batch, loss).total; }, samples, eps, tol,
      derive_seed(seed, 3));
}

}  // namespace pixfuse
