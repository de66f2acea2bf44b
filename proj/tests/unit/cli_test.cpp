#include <gtest/gtest.h>
#include <torch/torch.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "pixfuse/cli.hpp"
#include "pixfuse/scenedata.hpp"

namespace fs = std::filesystem;

namespace pixfuse {
namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("pixfuse_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(std::vector<std::string> args) { return cli::run(args); }

TEST(Cli, SynthCreatesScenes) {
  auto d = scratch("synth");
  ASSERT_EQ(run({"synth", "--seed", "7", "--n", "16", "--size", "64", "--out", d.string()}), cli::kExitOk);
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(d)) dirs += e.is_directory() && fs::exists(e.path() / "manifest.json");
  EXPECT_EQ(dirs, 16);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({"synth", "--bogus", "1", "--out", "x"}), cli::kExitUsage);
  EXPECT_EQ(run({}), cli::kExitUsage);
  EXPECT_EQ(run({"teleport"}), cli::kExitUsage);
  EXPECT_EQ(run({"synth", "--size", "60", "--out", scratch("bad").string()}), cli::kExitUsage);
  EXPECT_EQ(run({"pretrain", "--fusion", "pixqf", "--out", scratch("badfusion").string()}), cli::kExitUsage);
}

TEST(Cli, HelpListsFlags) {
  testing::internal::CaptureStdout();
  EXPECT_EQ(run({"pretrain", "--help"}), cli::kExitOk);
  const auto text = testing::internal::GetCapturedStdout();
  for (const auto& flag : {"--config", "--seed", "--workers", "--data", "--fusion", "--modality", "--epochs",
                           "--batch-size", "--width-mult", "--out"}) {
    EXPECT_NE(text.find(flag), std::string::npos) << flag;
  }
}

TEST(Cli, RuntimeFailureExitCode) {
  auto d = scratch("fail");
  // a scene directory without readable arrays fails at load time
  fs::create_directories(d / "data" / "s0");
  std::ofstream(d / "data" / "s0" / "manifest.json") << "{}";
  EXPECT_EQ(run({"pseudolabel", "--data", (d / "data").string(), "--out", (d / "o").string()}), cli::kExitFailure);
}

TEST(Cli, PretrainThenProbe) {
  auto d = scratch("pipeline");
  std::ofstream(d / "c.toml") << R"(seed = 4
[data]
tile_size = 32
synthetic_count = 4
[augment]
max_shift = 4
[network]
width_mult = 0.125
proj_dim = 16
[loss]
superpixels_per_tile = 16
[train.pretrain]
epochs = 1
batch_size = 2
[train.linear]
epochs = 1
[eval]
held_out_scenes = 2
)";
  const auto cfg = (d / "c.toml").string();
  const auto run_dir = d / "run";
  ASSERT_EQ(run({"pretrain", "--config", cfg, "--fusion", "pixif", "--out", run_dir.string()}), cli::kExitOk);
  EXPECT_TRUE(fs::exists(run_dir / "config.json"));
  EXPECT_TRUE(fs::exists(run_dir / "metrics.csv"));
  ASSERT_EQ(run({"probe", "--config", cfg, "--checkpoint", (run_dir / "ckpt").string(), "--labels", "2"}),
            cli::kExitOk);
  EXPECT_TRUE(fs::exists(run_dir / "probe" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(run_dir / "probe" / "report.json"));
}

TEST(Cli, ExportMapPaletteOnly) {
  auto d = scratch("export");
  ASSERT_EQ(run({"synth", "--seed", "1", "--n", "1", "--size", "32", "--out", (d / "data").string()}), cli::kExitOk);
  auto scene_dir = fs::directory_iterator(d / "data")->path();
  auto scene = load_scene(scene_dir);
  auto labels = scene.gt->clone();
  labels[0][0] = kUnlabeled;
  write_raw(d / "pred.bin", labels);
  const auto ppm = d / "s0.ppm";
  ASSERT_EQ(run({"export-map", "--scene", scene_dir.string(), "--labels", (d / "pred.bin").string(), "--out",
                 ppm.string()}),
            cli::kExitOk);
  EXPECT_TRUE(fs::exists(d / "s0.legend.txt"));

  std::ifstream in(ppm, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  in.get();
  ASSERT_EQ(magic, "P6");
  ASSERT_EQ(w, 32);
  ASSERT_EQ(h, 32);
  std::vector<unsigned char> px(static_cast<std::size_t>(w * h * 3));
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  ASSERT_TRUE(in);
  std::set<std::array<std::uint8_t, 3>> allowed{{0, 0, 0}};
  for (const auto& c : ClassScheme::six_class().palette) allowed.insert(c);
  for (std::size_t i = 0; i < px.size(); i += 3) {
    ASSERT_TRUE(allowed.count({px[i], px[i + 1], px[i + 2]})) << "pixel " << i / 3;
  }
  EXPECT_EQ((std::array<std::uint8_t, 3>{px[0], px[1], px[2]}), (std::array<std::uint8_t, 3>{0, 0, 0}));
}

TEST(Cli, EvalReport) {
  auto d = scratch("eval");
  ASSERT_EQ(run({"synth", "--seed", "2", "--n", "2", "--size", "16", "--out", (d / "data").string()}), cli::kExitOk);
  fs::create_directories(d / "pred");
  for (const auto& s : load_scene_collection(d / "data")) write_raw(d / "pred" / (s.id + ".bin"), *s.gt);
  testing::internal::CaptureStdout();
  EXPECT_EQ(run({"eval", "--pred", (d / "pred").string(), "--data", (d / "data").string(), "--out",
                 (d / "r.json").string()}),
            cli::kExitOk);
  EXPECT_EQ(testing::internal::GetCapturedStdout(), "AA 1 mIoU 1\n");
  EXPECT_TRUE(fs::exists(d / "r.json"));
}

}  // namespace
}  // namespace pixfuse
