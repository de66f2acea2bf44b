#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pixfuse/config.hpp"
#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace {

TEST(Presets, FullScaleValues) {
  auto p = RunConfig::full();
  EXPECT_EQ(p.train.pretrain.optimizer, OptimizerKind::kAdam);
  EXPECT_DOUBLE_EQ(p.train.pretrain.lr, 0.0003);
  EXPECT_DOUBLE_EQ(p.train.pretrain.weight_decay, 0.0004);
  EXPECT_DOUBLE_EQ(p.train.pretrain.momentum, 0.9);
  EXPECT_EQ(p.train.pretrain.batch_size, 1000);
  EXPECT_EQ(p.train.pretrain.epochs, 700);
  EXPECT_EQ(p.train.pretrain.schedule, ScheduleKind::kStep);

  EXPECT_EQ(p.train.linear.optimizer, OptimizerKind::kSgd);
  EXPECT_DOUBLE_EQ(p.train.linear.lr, 0.05);
  EXPECT_EQ(p.train.linear.batch_size, 8);
  EXPECT_EQ(p.train.linear.epochs, 50);

  EXPECT_EQ(p.train.selftrain2.optimizer, OptimizerKind::kAdam);
  EXPECT_DOUBLE_EQ(p.train.selftrain2.encoder_lr, 1e-4);
  EXPECT_DOUBLE_EQ(p.train.selftrain2.lr, 3e-4);
  EXPECT_EQ(p.train.selftrain2.batch_size, 50);
  EXPECT_EQ(p.train.selftrain2.epochs, 100);
  EXPECT_EQ(p.network.feature_dim(), 256);
  EXPECT_EQ(p.pseudolabel.cap, 10);
  EXPECT_NO_THROW(p.validate());
}

TEST(Presets, DeskIsValidAndSmaller) {
  auto d = RunConfig::desk();
  EXPECT_NO_THROW(d.validate());
  EXPECT_LT(d.train.pretrain.batch_size, RunConfig::full().train.pretrain.batch_size);
  EXPECT_DOUBLE_EQ(d.network.width_mult, 0.25);
  EXPECT_DOUBLE_EQ(d.loss.tau, 0.1);
  EXPECT_THROW(RunConfig::preset("laptop"), ConfigError);
}

TEST(Schedule, StepFactors) {
  TrainConfig t;
  t.schedule = ScheduleKind::kStep;
  t.epochs = 100;
  EXPECT_DOUBLE_EQ(t.lr_factor(0), 1.0);
  EXPECT_DOUBLE_EQ(t.lr_factor(59), 1.0);
  EXPECT_DOUBLE_EQ(t.lr_factor(60), 0.5);
  EXPECT_DOUBLE_EQ(t.lr_factor(85), 0.25);
  t.schedule = ScheduleKind::kConstant;
  EXPECT_DOUBLE_EQ(t.lr_factor(99), 1.0);
}

TEST(JsonConfig, OverlayKeepsPresetValues) {
  auto c = parse_config_json(R"({"seed": 5, "network": {"fusion_mode": "pixlf"},
                                 "train": {"pretrain": {"epochs": 3}}})");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.network.fusion_mode, FusionMode::kPixLF);
  EXPECT_EQ(c.train.pretrain.epochs, 3);
  EXPECT_EQ(c.train.pretrain.batch_size, RunConfig::desk().train.pretrain.batch_size);
  EXPECT_EQ(c.train.pretrain.phase, Phase::kPretrain);
}

TEST(JsonConfig, PresetKey) {
  auto c = parse_config_json(R"({"preset": "full", "train": {"pretrain": {"epochs": 2}}})");
  EXPECT_EQ(c.train.pretrain.batch_size, 1000);
  EXPECT_EQ(c.train.pretrain.epochs, 2);
}

TEST(JsonConfig, Rejections) {
  EXPECT_THROW(parse_config_json(R"({"netwrk": {}})"), ConfigError);
  EXPECT_THROW(parse_config_json(R"({"network": {"width": 1}})"), ConfigError);
  EXPECT_THROW(parse_config_json(R"({"train": {"linear": {"epochs": 2.5}}})"), ConfigError);
  EXPECT_THROW(parse_config_json(R"({"loss": {"tau": "low"}})"), ConfigError);
  EXPECT_THROW(parse_config_json(R"({"loss": {"tau": 0}})"), ConfigError);
  EXPECT_THROW(parse_config_json(R"({"network": {"fusion_mode": "late"}})"), ConfigError);
  EXPECT_THROW(parse_config_json("{ broken"), ConfigError);
  EXPECT_THROW(parse_config_json(R"({"cluster": {"k_s2": 2}})"), ConfigError);
}

TEST(JsonConfig, RoundTrip) {
  auto c = RunConfig::full();
  c.seed = 77;
  c.loss.negatives_scope = NegativesScope::kImage;
  c.augment.mode = AugmentMode::kAffine;
  auto text = config_to_json(c);
  auto back = parse_config_json(text);
  EXPECT_EQ(config_to_json(back), text);
}

TEST(TomlConfig, Subset) {
  auto c = parse_config_toml(R"(
# desk run with tweaks
seed = 3
[network]
fusion_mode = "pixef"   # early fusion
width_mult = 0.5
[train.pretrain]
epochs = 4
milestones = [0.5, 0.75]
[augment]
enable_flips = false
)");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.network.fusion_mode, FusionMode::kPixEF);
  EXPECT_DOUBLE_EQ(c.network.width_mult, 0.5);
  EXPECT_EQ(c.train.pretrain.epochs, 4);
  EXPECT_EQ(c.train.pretrain.milestones, (std::vector<double>{0.5, 0.75}));
  EXPECT_FALSE(c.augment.enable_flips);
}

TEST(TomlConfig, Errors) {
  EXPECT_THROW(parse_config_toml("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config_toml("[network]\nwidth_mult = abc\n"), ConfigError);
  EXPECT_THROW(parse_config_toml("[nowhere]\nx = 1\n"), ConfigError);
}

TEST(LoadConfig, DispatchesOnExtension) {
  auto dir = std::filesystem::temp_directory_path() / "pixfuse_cfg";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "a.toml") << "seed = 11\n";
  std::ofstream(dir / "a.json") << "{\"seed\": 12}";
  EXPECT_EQ(load_config(dir / "a.toml").seed, 11u);
  EXPECT_EQ(load_config(dir / "a.json").seed, 12u);
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

}  // namespace
}  // namespace pixfuse
