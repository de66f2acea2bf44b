#include <torch/torch.h>

#include <algorithm>
#include <iostream>
#include <numeric>

#include "pixfuse/determinism.hpp"
#include "pixfuse/errors.hpp"
#include "pixfuse/optim.hpp"
#include "pixfuse/training.hpp"

namespace pixfuse {

namespace {

std::optional<EvalReport> report_if_labelled(std::span<const torch::Tensor> pred, std::span<const Scene> scenes,
                                             const ClassScheme& scheme) {
  std::vector<torch::Tensor> gt;
  for (const auto& s : scenes) {
    if (!s.gt) return std::nullopt;
    gt.push_back(*s.gt);
  }
  return evaluate(pred, gt, scheme);
}

}  // namespace

SelfTrainResult selftrain(FusionNet net, const InputNorm& norm, std::span<const Scene> scenes, const RunConfig& config,
                          const ClassScheme& scheme, bool log) {
  config.validate();
  if (scenes.empty()) throw PipelineError("self-training needs at least one scene");
  const auto num_classes = static_cast<int>(scheme.size());
  if (num_classes < kNumLandCover) throw ConfigError("pseudo labels need the six land-cover classes");

  SelfTrainResult result;
  result.net = net;

  // Step 1: sparse pseudo labels, linear head on frozen features.
  std::vector<torch::Tensor> sparse;
  std::vector<std::size_t> with_labels;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    auto pcfg = config.pseudolabel;
    pcfg.cluster.seed = derive_seed(config.seed, 1000 + i);
    auto full = pseudo_label_scene(scenes[i], pcfg);
    std::mt19937_64 rng(derive_seed(config.seed, 2000 + i));
    auto labels = sparsify(full, pcfg.cap, rng);
    if (labels.labeled_count() == 0) {
      std::cerr << "[selftrain] scene " << scenes[i].id << " has no pseudo labels; left out of step 1\n";
    } else {
      with_labels.push_back(i);
    }
    sparse.push_back(labels.labels);
    result.pseudo_labels.push_back(std::move(labels));
  }
  if (with_labels.empty()) throw PipelineError("no scene produced any pseudo label");

  auto features = extract_features(net, norm, scenes, 8, /*decoder_readout=*/true);
  std::vector<torch::Tensor> step1_features, step1_labels;
  for (auto i : with_labels) {
    step1_features.push_back(features[i]);
    step1_labels.push_back(sparse[i]);
  }
  result.head = train_linear_head(step1_features, step1_labels, num_classes, config.train.selftrain1,
                                  derive_seed(config.seed, 3000), &result.step1_loss);
  for (const auto& f : features) result.step1_labels.push_back(predict_labels(result.head, f));
  features.clear();
  result.step1_report = report_if_labelled(result.step1_labels, scenes, scheme);

  // Step 2: fine-tune everything on the dense step-1 predictions.
  const auto& tc = config.train.selftrain2;
  const double encoder_lr = tc.encoder_lr > 0.0 ? tc.encoder_lr : tc.lr;
  auto rest = net->non_encoder_parameters();
  for (const auto& p : result.head->parameters()) rest.push_back(p);
  auto optimizer = make_optimizer({{net->encoder_parameters(), encoder_lr}, {rest, tc.lr}}, tc);

  std::vector<torch::Tensor> inputs;
  for (const auto& s : scenes) inputs.push_back(make_input(s, norm, net->config().modality));
  const auto dtype = net->parameters().front().dtype();

  net->train();
  std::mt19937_64 rng(derive_seed(config.seed, 4000));
  std::vector<std::size_t> order(scenes.size());
  const auto batch = static_cast<std::size_t>(tc.batch_size);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    optimizer.set_factor(tc.lr_factor(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto end = std::min(order.size(), start + batch);
      // BatchNorm needs more than one value per channel.
      if (end - start < 2 && start > 0) break;
      std::vector<torch::Tensor> bx, by;
      for (auto i = start; i < end; ++i) {
        bx.push_back(inputs[order[i]]);
        by.push_back(result.step1_labels[order[i]].to(torch::kInt64));
      }
      auto logits = result.head->forward(net->forward_dense(torch::stack(bx).to(dtype)).to(torch::kFloat32));
      auto loss = torch::nn::functional::cross_entropy(
          logits, torch::stack(by), torch::nn::functional::CrossEntropyFuncOptions().ignore_index(kUnlabeled));
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      sum += loss.item<double>();
      ++steps;
    }
    result.step2_loss.push_back(sum / std::max(steps, 1));
    if (log) {
      std::cerr << "[selftrain] step 2 epoch " << epoch + 1 << "/" << tc.epochs << " loss " << sum / std::max(steps, 1)
                << "\n";
    }
  }

  for (const auto& f : extract_features(net, norm, scenes, 8, true)) result.step2_labels.push_back(predict_labels(result.head, f));
  result.step2_report = report_if_labelled(result.step2_labels, scenes, scheme);
  return result;
}

}  // namespace pixfuse
