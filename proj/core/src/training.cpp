#include "pixfuse/training.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "pixfuse/checkpoint.hpp"
#include "pixfuse/determinism.hpp"
#include "pixfuse/errors.hpp"
#include "pixfuse/optim.hpp"

namespace pixfuse {

std::vector<PreparedScene> prepare_scenes(std::span<const Scene> scenes, const InputNorm& norm, Modality modality,
                                          const LossConfig& loss) {
  std::vector<PreparedScene> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) {
    PreparedScene p;
    p.input = make_input(s, norm, modality);
    p.superpixels = segment_superpixels(s, loss.superpixels_per_tile, loss.slic_compactness);
    p.segment_sizes = p.superpixels.sizes();
    out.push_back(std::move(p));
  }
  return out;
}

ContrastiveBatch make_contrastive_batch(std::span<const PreparedScene> scenes, std::span<const std::size_t> indices,
                                        std::span<const ViewTransform> transforms, const LossConfig& loss) {
  if (indices.size() != transforms.size()) throw ShapeError("one transform per batch element is required");
  ContrastiveBatch batch;
  std::vector<torch::Tensor> v1, v2;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& s = scenes[indices[b]];
    const auto& t = transforms[b];
    const auto h = s.input.size(1);
    const auto w = s.input.size(2);
    v1.push_back(s.input);
    v2.push_back(t.apply_to_input(s.input));
    auto segments = t.replay_on_labels(s.superpixels.segments, -1);
    batch.plans.push_back(plan_pooling(segments, t.valid_mask(h, w), s.segment_sizes, loss.segment_overlap_min_frac));
    batch.transforms.push_back(t);
  }
  batch.view1 = torch::stack(v1);
  batch.view2 = torch::stack(v2);
  return batch;
}

ContrastiveBatch sample_contrastive_batch(std::span<const PreparedScene> scenes, std::span<const std::size_t> indices,
                                          const AugmentConfig& augment, const LossConfig& loss, std::mt19937_64& rng) {
  std::vector<ViewTransform> transforms;
  for (std::size_t b = 0; b < indices.size(); ++b) transforms.push_back(ViewTransform::sample(rng, augment));
  return make_contrastive_batch(scenes, indices, transforms, loss);
}

LossTerms contrastive_loss(FusionNet& net, const ContrastiveBatch& batch, const LossConfig& loss) {
  const auto mode = net->config().fusion_mode;
  const bool dense = mode != FusionMode::kMCL;
  auto out1 = net->forward(batch.view1.to(net->parameters().front().dtype()), dense, true);
  auto out2 = net->forward(batch.view2.to(net->parameters().front().dtype()), dense, true);

  DensePairs pairs;
  if (dense) {
    const auto& f1 = mode == FusionMode::kPixLF ? out1.dense_sar : out1.dense;
    const auto& f2 = mode == FusionMode::kPixLF ? out2.dense_opt : out2.dense;
    for (std::size_t b = 0; b < batch.plans.size(); ++b) {
      const auto& plan = batch.plans[b];
      if (plan.rows() == 0) continue;
      const auto i = static_cast<int64_t>(b);
      pairs.first.push_back(pool_features(batch.transforms[b].replay_on_features(f1[i]), plan));
      pairs.second.push_back(pool_features(f2[i], plan));
    }
    if (pairs.empty() && loss.weights.pixel != 0.0) {
      throw DegenerateBatchError("no superpixel survives the overlap in any image of the batch");
    }
  }

  GlobalPairs global;
  if (mode == FusionMode::kPixEF) {
    global.branch1 = out1.global;
    global.branch2 = out2.global;
  } else {
    global.branch1 = out1.global_sar;
    global.branch2 = out2.global_opt;
  }
  if (mode == FusionMode::kPixIF || mode == FusionMode::kMCL) {
    global.joint1 = out1.global_joint;
    global.joint2 = out2.global_joint;
  }
  return composite_loss(mode, loss, pairs, global);
}

void append_metrics_row(const std::filesystem::path& csv, int epoch, Phase phase, double loss,
                        std::optional<double> aa, std::optional<double> miou) {
  const bool fresh = !std::filesystem::exists(csv);
  std::ofstream out(csv, std::ios::app);
  if (!out) throw PipelineError("cannot write " + csv.string());
  if (fresh) out << "epoch,phase,loss,aa,miou\n";
  char buf[160];
  auto fmt = [&](std::optional<double> v) {
    if (!v) return std::string();
    std::snprintf(buf, sizeof buf, "%.8g", *v);
    return std::string(buf);
  };
  out << epoch << ',' << to_string(phase) << ',' << fmt(loss) << ',' << fmt(aa) << ',' << fmt(miou) << '\n';
}

namespace {

void dump_batch(const std::filesystem::path& dir, const ContrastiveBatch& batch, int epoch, int step) {
  std::filesystem::create_directories(dir);
  write_raw(dir / "view1.bin", batch.view1.to(torch::kFloat32));
  write_raw(dir / "view2.bin", batch.view2.to(torch::kFloat32));
  std::ofstream info(dir / "batch.txt");
  info << "epoch " << epoch << " step " << step << "\n";
  info << "shape " << batch.view1.size(0) << ' ' << batch.view1.size(1) << ' ' << batch.view1.size(2) << ' '
       << batch.view1.size(3) << "\n";
  for (std::size_t b = 0; b < batch.transforms.size(); ++b) {
    const auto& t = batch.transforms[b];
    info << "transform " << b << ' ' << to_string(t.mode) << " dx " << t.shift.dx << " dy " << t.shift.dy
         << " flip_h " << t.shift.flip_h << " flip_v " << t.shift.flip_v << " pooled_rows " << batch.plans[b].rows()
         << "\n";
  }
}

}  // namespace

PretrainResult pretrain(std::span<const Scene> scenes, const RunConfig& config, const PretrainOptions& options) {
  config.validate();
  const auto& tc = config.train.pretrain;
  if (scenes.size() < 2) throw ConfigError("pretraining needs at least two scenes");

  PretrainResult result;
  result.norm = InputNorm::fit(scenes, config.network.modality);
  const auto prepared = prepare_scenes(scenes, result.norm, config.network.modality, config.loss);
  result.net = build_network(config.network, derive_seed(config.seed, 1));
  result.net->train();

  auto optimizer = make_optimizer({{result.net->parameters(), tc.lr}}, tc);
  std::mt19937_64 rng(derive_seed(config.seed, 2));
  const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(tc.batch_size), scenes.size());

  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    std::filesystem::remove(options.out_dir / "metrics.csv");
  }

  std::vector<std::size_t> order(scenes.size());
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    optimizer.set_factor(tc.lr_factor(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += batch_size) {
      const auto end = std::min(order.size(), start + batch_size);
      if (end - start < 2) break;
      std::span<const std::size_t> idx(order.data() + start, end - start);
      auto batch = sample_contrastive_batch(prepared, idx, config.augment, config.loss, rng);
      LossTerms terms;
      try {
        terms = contrastive_loss(result.net, batch, config.loss);
      } catch (const DegenerateBatchError& e) {
        ++result.skipped_batches;
        if (options.log) std::cerr << "[pretrain] skipping batch: " << e.what() << "\n";
        continue;
      }
      const double value = terms.total.item<double>();
      if (!std::isfinite(value)) {
        const auto dir = (options.out_dir.empty() ? std::filesystem::path(".") : options.out_dir) / "nan_dump";
        dump_batch(dir, batch, epoch, steps);
        throw NumericalError("pretraining loss diverged at epoch " + std::to_string(epoch) + "; batch dumped to " +
                             dir.string());
      }
      optimizer.zero_grad();
      terms.total.backward();
      optimizer.step();
      sum += value;
      ++steps;
    }
    const double mean = steps > 0 ? sum / steps : std::nan("");
    result.epoch_loss.push_back(mean);
    if (options.log) std::cerr << "[pretrain] epoch " << epoch + 1 << "/" << tc.epochs << " loss " << mean << "\n";
    if (!options.out_dir.empty()) {
      append_metrics_row(options.out_dir / "metrics.csv", epoch + 1, Phase::kPretrain, mean, std::nullopt,
                         std::nullopt);
      if (tc.checkpoint_interval > 0 && (epoch + 1) % tc.checkpoint_interval == 0 && epoch + 1 < tc.epochs) {
        save_checkpoint(options.out_dir / ("ckpt_epoch" + std::to_string(epoch + 1)), result.net, result.norm,
                        config.seed, epoch + 1);
      }
    }
  }
  if (!options.out_dir.empty()) {
    save_checkpoint(options.out_dir / "ckpt", result.net, result.norm, config.seed, tc.epochs);
  }
  return result;
}

LinearHeadImpl::LinearHeadImpl(int64_t feature_dim, int64_t num_classes) {
  linear = register_module("linear", torch::nn::Linear(feature_dim, num_classes));
  mean = register_buffer("mean", torch::zeros({feature_dim}));
  stddev = register_buffer("stddev", torch::ones({feature_dim}));
}

torch::Tensor LinearHeadImpl::forward(const torch::Tensor& features) {
  if (features.dim() == 2) return linear((features - mean) / stddev);
  if (features.dim() == 4) {
    auto x = features.permute({0, 2, 3, 1});
    return linear((x - mean) / stddev).permute({0, 3, 1, 2});
  }
  throw ShapeError("linear head expects [N, D] or [B, D, H, W] features");
}

std::vector<torch::Tensor> extract_features(FusionNet& net, const InputNorm& norm, std::span<const Scene> scenes,
                                            int batch_size, bool decoder_readout) {
  const bool was_training = net->is_training();
  net->eval();
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  const auto dtype = net->parameters().front().dtype();
  for (std::size_t start = 0; start < scenes.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(scenes.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<torch::Tensor> inputs;
    for (auto i = start; i < end; ++i) inputs.push_back(make_input(scenes[i], norm, net->config().modality));
    auto x = torch::stack(inputs).to(dtype);
    auto f = decoder_readout ? net->forward_dense(x) : net->forward_probe(x);
    for (int64_t b = 0; b < f.size(0); ++b) out.push_back(f[b].to(torch::kFloat32).contiguous());
  }
  net->train(was_training);
  return out;
}

LinearHead train_linear_head(std::span<const torch::Tensor> features, std::span<const torch::Tensor> labels,
                             int num_classes, const TrainConfig& config, std::uint64_t seed,
                             std::vector<double>* epoch_loss) {
  if (features.size() != labels.size()) throw ShapeError("one label map per feature map is required");
  if (features.empty()) throw PipelineError("no scenes to train the linear head on");
  const int64_t d = features.front().size(0);

  std::vector<torch::Tensor> xs, ys;
  for (std::size_t i = 0; i < features.size(); ++i) {
    auto y = labels[i].to(torch::kInt64).reshape({-1});
    auto keep = (y != kUnlabeled).nonzero().squeeze(1);
    if (keep.numel() == 0) continue;
    xs.push_back(features[i].reshape({d, -1}).t().index_select(0, keep).to(torch::kFloat32));
    ys.push_back(y.index_select(0, keep));
  }
  if (xs.empty()) throw PipelineError("no labelled pixels to train the linear head on");
  for (const auto& y : ys) {
    if (y.max().item<int64_t>() >= num_classes) throw ShapeError("label id exceeds the class count");
  }

  torch::manual_seed(derive_seed(seed, 4));
  LinearHead head(d, num_classes);
  {
    auto all = torch::cat(xs, 0).to(torch::kFloat64);
    head->mean.copy_(all.mean(0));
    head->stddev.copy_(all.std(0, /*unbiased=*/false).clamp_min(1e-6));
  }

  auto optimizer = make_optimizer({{head->parameters(), config.lr}}, config);
  std::mt19937_64 rng(derive_seed(seed, 3));
  std::vector<std::size_t> order(xs.size());
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    optimizer.set_factor(config.lr_factor(epoch));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto end = std::min(order.size(), start + batch);
      std::vector<torch::Tensor> bx, by;
      for (auto i = start; i < end; ++i) {
        bx.push_back(xs[order[i]]);
        by.push_back(ys[order[i]]);
      }
      auto loss = torch::nn::functional::cross_entropy(head->forward(torch::cat(bx)), torch::cat(by));
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      sum += loss.item<double>();
      ++steps;
    }
    if (epoch_loss) epoch_loss->push_back(sum / steps);
  }
  return head;
}

torch::Tensor predict_labels(LinearHead& head, const torch::Tensor& features) {
  torch::NoGradGuard no_grad;
  auto logits = head->forward(features.unsqueeze(0).to(torch::kFloat32));
  return logits.argmax(1)[0].to(torch::kUInt8);
}

ProbeResult linear_probe(FusionNet& net, const InputNorm& norm, std::span<const Scene> train,
                         std::span<const Scene> held_out, const TrainConfig& config, const ClassScheme& scheme,
                         std::uint64_t seed) {
  std::vector<torch::Tensor> train_labels;
  for (const auto& s : train) {
    if (!s.gt) throw ConfigError("linear probe needs ground truth on scene " + s.id);
    train_labels.push_back(*s.gt);
  }
  for (const auto& s : held_out) {
    if (!s.gt) throw ConfigError("linear probe needs ground truth on scene " + s.id);
  }
  const auto num_classes = static_cast<int>(scheme.size());

  ProbeResult result;
  result.trained_classes.assign(scheme.size(), false);
  for (const auto& y : train_labels) {
    auto counts = torch::bincount(y.reshape({-1}).to(torch::kInt64), {}, 256);
    for (int c = 0; c < num_classes; ++c) {
      if (counts[c].item<int64_t>() > 0) result.trained_classes[c] = true;
    }
  }
  for (int c = 0; c < num_classes; ++c) {
    if (!result.trained_classes[c]) {
      std::cerr << "[probe] warning: class '" << scheme.names[c]
                << "' has no training pixels and is left out of AA and mIoU\n";
    }
  }

  const auto train_features = extract_features(net, norm, train);
  result.head = train_linear_head(train_features, train_labels, num_classes, config, seed, &result.epoch_loss);

  auto report_on = [&](std::span<const torch::Tensor> features, std::span<const Scene> scenes) {
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < scenes.size(); ++i) cm.accumulate(predict_labels(result.head, features[i]), *scenes[i].gt);
    return summarize(cm, result.trained_classes);
  };
  result.train_report = report_on(train_features, train);
  const auto held_features = extract_features(net, norm, held_out);
  result.held_out_report = report_on(held_features, held_out);
  return result;
}

}  // namespace pixfuse
