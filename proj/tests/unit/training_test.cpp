#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>

#include "pixfuse/config.hpp"
#include "pixfuse/errors.hpp"
#include "pixfuse/optim.hpp"
#include "pixfuse/training.hpp"

namespace fs = std::filesystem;

namespace pixfuse {
namespace {

RunConfig tiny_config(FusionMode mode) {
  auto c = RunConfig::desk();
  c.seed = 21;
  c.data.tile_size = 32;
  c.augment.max_shift = 4;
  c.network.fusion_mode = mode;
  c.network.width_mult = 0.125;
  c.network.proj_dim = 16;
  c.loss.superpixels_per_tile = 16;
  c.train.pretrain.epochs = 1;
  c.train.pretrain.batch_size = 2;
  return c;
}

TEST(ContrastiveLoss, ZeroShiftGivesUnitPositiveCosine) {
  auto scenes = generate_synthetic(2, 2, 32, 0.0);
  for (auto mode : {FusionMode::kPixEF, FusionMode::kPixIF}) {
    auto cfg = tiny_config(mode);
    auto norm = InputNorm::fit(scenes, Modality::kS1S2);
    auto prepared = prepare_scenes(scenes, norm, Modality::kS1S2, cfg.loss);
    std::vector<std::size_t> idx{0, 1};
    std::vector<ViewTransform> ts(2, ViewTransform::from_shift({}));
    auto batch = make_contrastive_batch(prepared, idx, ts, cfg.loss);
    auto net = build_network(cfg.network, 3);
    torch::NoGradGuard ng;
    auto a = net->forward_dense(batch.view1);
    auto b = net->forward_dense(batch.view2);
    auto f1 = ts[0].replay_on_features(a[0]).to(torch::kFloat64).reshape({a.size(1), -1}).t().contiguous();
    auto f2 = b[0].to(torch::kFloat64).reshape({b.size(1), -1}).t().contiguous();
    const auto d = f1.size(1);
    for (int64_t p = 0; p < f1.size(0); ++p) {
      std::span<const double> x(f1.data_ptr<double>() + p * d, d), y(f2.data_ptr<double>() + p * d, d);
      ASSERT_EQ(cosine(x, y), 1.0) << to_string(mode) << " pixel " << p;
    }
  }
}

TEST(ContrastiveLoss, FiniteForEveryMode) {
  auto scenes = generate_synthetic(4, 3, 32, 0.2);
  for (auto mode : {FusionMode::kPixEF, FusionMode::kPixIF, FusionMode::kPixLF, FusionMode::kMCL}) {
    auto cfg = tiny_config(mode);
    auto norm = InputNorm::fit(scenes, Modality::kS1S2);
    auto prepared = prepare_scenes(scenes, norm, Modality::kS1S2, cfg.loss);
    std::mt19937_64 rng(1);
    std::vector<std::size_t> idx{0, 1, 2};
    auto batch = sample_contrastive_batch(prepared, idx, cfg.augment, cfg.loss, rng);
    auto net = build_network(cfg.network, 3);
    auto terms = contrastive_loss(net, batch, cfg.loss);
    EXPECT_TRUE(std::isfinite(terms.total.item<double>())) << to_string(mode);
    EXPECT_GT(terms.total.item<double>(), 0.0);
    EXPECT_EQ(terms.pixel.defined(), mode != FusionMode::kMCL);
    terms.total.backward();
  }
}

TEST(Pretrain, SmokeWritesCheckpoint) {
  auto dir = fs::temp_directory_path() / "pixfuse_pretrain_smoke";
  fs::remove_all(dir);
  auto scenes = generate_synthetic(1, 4, 64, 0.0);
  auto cfg = tiny_config(FusionMode::kPixIF);
  cfg.network.width_mult = 0.25;
  auto r = pretrain(scenes, cfg, {dir, false});
  ASSERT_EQ(r.epoch_loss.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.epoch_loss[0]));
  EXPECT_TRUE(fs::exists(dir / "ckpt" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "metrics.csv"));
}

TEST(Pretrain, SameSeedSameCurve) {
  auto scenes = generate_synthetic(1, 4, 32, 0.0);
  auto cfg = tiny_config(FusionMode::kPixLF);
  cfg.train.pretrain.epochs = 2;
  auto a = pretrain(scenes, cfg, {{}, false});
  auto b = pretrain(scenes, cfg, {{}, false});
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  auto pa = a.net->parameters(), pb = b.net->parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
}

TEST(Pretrain, NeedsTwoScenes) {
  auto scenes = generate_synthetic(1, 1, 32, 0.0);
  EXPECT_THROW(pretrain(scenes, tiny_config(FusionMode::kPixEF), {{}, false}), ConfigError);
}

TEST(Optimizer, GroupRatesAndSchedule) {
  auto a = torch::zeros({2}, torch::requires_grad());
  auto b = torch::zeros({2}, torch::requires_grad());
  TrainConfig t;
  t.optimizer = OptimizerKind::kSgd;
  t.momentum = 0.0;
  auto opt = make_optimizer({{{a}, 0.1}, {{b}, 0.01}}, t);
  (a.sum() + b.sum()).backward();
  opt.step();
  EXPECT_NEAR(a[0].item<double>(), -0.1, 1e-7);
  EXPECT_NEAR(b[0].item<double>(), -0.01, 1e-7);
  opt.set_factor(0.5);
  opt.step();
  EXPECT_NEAR(a[0].item<double>(), -0.15, 1e-7);
  EXPECT_NEAR(b[0].item<double>(), -0.015, 1e-7);
}

TEST(LinearHeadTest, SeparableFeatures) {
  // class c lives at +3 on feature c, -3 elsewhere
  std::vector<torch::Tensor> feats, labels;
  torch::manual_seed(2);
  for (int s = 0; s < 2; ++s) {
    auto y = torch::randint(0, 3, {8, 8});
    auto f = torch::one_hot(y, 3).permute({2, 0, 1}).to(torch::kFloat32) * 6 - 3;
    feats.push_back(f + 0.1 * torch::randn({3, 8, 8}));
    auto lab = y.to(torch::kUInt8);
    lab[0][0] = kUnlabeled;
    labels.push_back(lab);
  }
  TrainConfig t = RunConfig::desk().train.linear;
  t.epochs = 60;  // one step per epoch here: batches are whole scenes
  std::vector<double> losses;
  auto head = train_linear_head(feats, labels, 3, t, 0, &losses);
  EXPECT_EQ(losses.size(), 60u);
  EXPECT_LT(losses.back(), losses.front());
  for (int s = 0; s < 2; ++s) {
    auto pred = predict_labels(head, feats[s]);
    auto gt = labels[s];
    auto m = gt != kUnlabeled;
    EXPECT_TRUE(torch::equal(pred.masked_select(m), gt.masked_select(m)));
  }
}

TEST(LinearHeadTest, NoLabels) {
  std::vector<torch::Tensor> feats{torch::randn({3, 8, 8})};
  std::vector<torch::Tensor> labels{torch::full({8, 8}, kUnlabeled, torch::kUInt8)};
  EXPECT_THROW(train_linear_head(feats, labels, 3, RunConfig::desk().train.linear, 0), PipelineError);
}

TEST(Features, FrozenAndModeRestored) {
  auto scenes = generate_synthetic(3, 2, 32, 0.0);
  auto cfg = tiny_config(FusionMode::kMCL);
  auto net = build_network(cfg.network, 1);
  auto norm = InputNorm::fit(scenes, Modality::kS1S2);
  net->train();
  auto probe = extract_features(net, norm, scenes);
  auto dense = extract_features(net, norm, scenes, 8, true);
  EXPECT_TRUE(net->is_training());
  ASSERT_EQ(probe.size(), 2u);
  EXPECT_EQ(probe[0].size(0), net->probe_dim());
  EXPECT_EQ(dense[0].size(0), cfg.network.feature_dim());
  EXPECT_FALSE(probe[0].requires_grad());
}

TEST(Probe, AbsentClassIsLeftOut) {
  auto scenes = generate_synthetic(5, 4, 32, 0.0);
  // drop water from the training labels
  std::vector<Scene> train(scenes.begin(), scenes.begin() + 2);
  for (auto& s : train) {
    s.gt = s.gt->clone();
    s.gt->masked_fill_(*s.gt == static_cast<int>(LandCover::kWater), kUnlabeled);
  }
  std::vector<Scene> held(scenes.begin() + 2, scenes.end());
  auto cfg = tiny_config(FusionMode::kPixEF);
  auto net = build_network(cfg.network, 1);
  auto t = cfg.train.linear;
  t.epochs = 2;
  auto r = linear_probe(net, InputNorm::fit(scenes, Modality::kS1S2), train, held, t, ClassScheme::six_class(), 4);
  EXPECT_FALSE(r.trained_classes[static_cast<int>(LandCover::kWater)]);
  EXPECT_FALSE(r.held_out_report.present[static_cast<int>(LandCover::kWater)]);
  EXPECT_TRUE(std::isfinite(r.held_out_report.miou));
}

TEST(MetricsCsv, HeaderOnce) {
  auto csv = fs::temp_directory_path() / "pixfuse_metrics_rows.csv";
  fs::remove(csv);
  append_metrics_row(csv, 1, Phase::kLinear, 0.5, std::nullopt, std::nullopt);
  append_metrics_row(csv, 2, Phase::kLinear, 0.25, 0.75, 0.6);
  std::ifstream in(csv);
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  EXPECT_EQ(l1, "epoch,phase,loss,aa,miou");
  EXPECT_EQ(l2, "1,linear,0.5,,");
  EXPECT_EQ(l3, "2,linear,0.25,0.75,0.6");
}

TEST(GradCheck, QuadraticMatches) {
  auto w = torch::randn({5}, torch::kFloat64).requires_grad_();
  auto r = grad_check({w}, [&] { return (w * w * w).sum() + w.prod(); }, 5, 1e-6, 1e-6, 0);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.samples, 5);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, CatchesWrongGradient) {
  auto w = torch::randn({4}, torch::kFloat64).requires_grad_();
  // a custom op with a deliberately wrong backward: detach half the graph
  auto r = grad_check({w}, [&] { return (w * w.detach()).sum(); }, 4, 1e-6, 1e-4, 0);
  EXPECT_FALSE(r.passed);
}

TEST(GradCheck, CompositePixIF) {
  auto r = grad_check_composite(FusionMode::kPixIF, 1, 1e-6, 40);
  EXPECT_EQ(r.samples, 40);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(SelfTrain, SmokeShapes) {
  auto scenes = generate_synthetic(6, 3, 32, 0.0);
  auto cfg = tiny_config(FusionMode::kPixIF);
  cfg.train.selftrain1.epochs = 2;
  cfg.train.selftrain2.epochs = 1;
  auto norm = InputNorm::fit(scenes, Modality::kS1S2);
  auto r = selftrain(build_network(cfg.network, 2), norm, scenes, cfg, ClassScheme::six_class());
  ASSERT_EQ(r.step1_labels.size(), 3u);
  ASSERT_EQ(r.step2_labels.size(), 3u);
  EXPECT_EQ(r.step2_labels[0].sizes(), (std::vector<int64_t>{32, 32}));
  EXPECT_EQ(r.step2_labels[0].scalar_type(), torch::kUInt8);
  EXPECT_EQ(r.step1_loss.size(), 2u);
  EXPECT_EQ(r.step2_loss.size(), 1u);
  ASSERT_TRUE(r.step2_report.has_value());
  for (const auto& p : r.pseudo_labels) {
    for (int c = 0; c < kNumLandCover; ++c) {
      const auto n = p.class_count(static_cast<LandCover>(c));
      EXPECT_TRUE(n == 0 || n == cfg.pseudolabel.cap);
    }
  }
}

}  // namespace
}  // namespace pixfuse
