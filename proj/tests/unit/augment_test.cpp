#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <map>
#include <numbers>

#include "pixfuse/augment.hpp"
#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace {

TEST(SampleShift, DegenerateRange) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_shift(rng, 0, false), ShiftSpec{});
}

TEST(SampleShift, SeedReproducible) {
  std::mt19937_64 a(77), b(77);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_shift(a, 16, true), sample_shift(b, 16, true));
}

TEST(SampleShift, UniformOverCells) {
  std::mt19937_64 rng(123);
  const int draws = 10000;
  std::map<std::pair<int, int>, int> counts;
  for (int i = 0; i < draws; ++i) {
    auto s = sample_shift(rng, 4, true);
    ASSERT_LE(std::abs(s.dx), 4);
    ASSERT_LE(std::abs(s.dy), 4);
    ++counts[{s.dx, s.dy}];
  }
  EXPECT_EQ(counts.size(), 81u);
  const double p = 1.0 / 81.0;
  const double sd = std::sqrt(draws * p * (1 - p));
  for (const auto& [cell, n] : counts) EXPECT_LT(std::abs(n - draws * p), 4 * sd);
}

TEST(ApplyShift, Identity) {
  auto x = torch::randn({3, 8, 8});
  EXPECT_TRUE(torch::equal(apply_shift(x, {}), x));
}

TEST(ApplyShift, HandExample) {
  auto x = torch::tensor({{{1.0f, 2.0f}, {3.0f, 4.0f}}});
  auto y = apply_shift(x, {1, 0, false, false});
  EXPECT_TRUE(torch::equal(y, torch::tensor({{{0.0f, 1.0f}, {0.0f, 3.0f}}})));
  auto z = apply_shift(x, {0, -1, false, false}, -1.0);
  EXPECT_TRUE(torch::equal(z, torch::tensor({{{3.0f, 4.0f}, {-1.0f, -1.0f}}})));
}

TEST(ApplyShift, FlipComesFirst) {
  auto x = torch::tensor({{1.0f, 2.0f, 3.0f}, {4.0f, 5.0f, 6.0f}});
  auto y = apply_shift(x, {1, 0, true, false});
  EXPECT_TRUE(torch::equal(y, torch::tensor({{0.0f, 3.0f, 2.0f}, {0.0f, 6.0f, 5.0f}})));
}

TEST(ApplyShift, OutOfRange) {
  auto x = torch::zeros({1, 8, 8});
  EXPECT_THROW(apply_shift(x, {8, 0, false, false}), ConfigError);
  EXPECT_THROW(apply_shift(x, {0, -9, false, false}), ConfigError);
  EXPECT_THROW(apply_shift(torch::zeros({4}), {}), ShapeError);
}

TEST(ApplyShift, InverseRestoresOverlap) {
  torch::manual_seed(0);
  auto x = torch::randn({2, 16, 16});
  for (int dy = -8; dy <= 8; ++dy) {
    for (int dx = -8; dx <= 8; ++dx) {
      for (int f = 0; f < 4; ++f) {
        ShiftSpec s{dx, dy, (f & 1) != 0, (f & 2) != 0};
        auto back = apply_shift(apply_shift(x, s), {-dx, -dy, false, false});
        if (s.flip_h) back = back.flip({-1});
        if (s.flip_v) back = back.flip({-2});
        auto mask = overlap_mask({-dx, -dy, false, false}, 16, 16);
        if (s.flip_h) mask = mask.flip({-1});
        if (s.flip_v) mask = mask.flip({-2});
        ASSERT_TRUE(torch::equal(back.masked_select(mask), x.masked_select(mask)));
      }
    }
  }
}

TEST(OverlapMask, CountFormula) {
  EXPECT_TRUE(overlap_mask({}, 8, 8).all().item<bool>());
  EXPECT_EQ(overlap_mask({2, 1, false, false}, 8, 8).sum().item<int64_t>(), 42);
  for (int dy = -8; dy <= 8; ++dy) {
    for (int dx = -8; dx <= 8; ++dx) {
      auto m = overlap_mask({dx, dy, dx % 2 != 0, dy % 2 != 0}, 16, 16);
      ASSERT_EQ(m.sum().item<int64_t>(), (16 - std::abs(dy)) * (16 - std::abs(dx)));
    }
  }
}

TEST(ApplyShift, GradientFlows) {
  auto x = torch::randn({1, 4, 4}, torch::requires_grad());
  apply_shift(x, {1, 1, true, false}).sum().backward();
  EXPECT_EQ(x.grad().sum().item<float>(), 9.0f);
}

torch::Tensor smooth_image(int64_t n) {
  auto ys = torch::arange(n, torch::kFloat64).view({-1, 1});
  auto xs = torch::arange(n, torch::kFloat64).view({1, -1});
  return (torch::sin(0.05 * xs + 0.3) * torch::cos(0.04 * ys) + 0.01 * xs).unsqueeze(0);
}

TEST(Affine, IdentityUnchanged) {
  auto x = torch::randn({3, 16, 16}, torch::kFloat64);
  auto t = AffineTransform::from_params({});
  EXPECT_TRUE(torch::allclose(apply_affine(x, t), x, 0.0, 1e-12));
  EXPECT_TRUE(affine_valid_mask(t, 16, 16).all().item<bool>());
}

TEST(Affine, RotationRoundTrip) {
  auto x = smooth_image(64);
  AffineParams p;
  p.rotation = 0.1;
  auto fwd = AffineTransform::from_params(p);
  p.rotation = -0.1;
  auto back = AffineTransform::from_params(p);
  auto y = apply_affine(apply_affine(x, fwd), back);
  auto inner = [](const torch::Tensor& t) { return t.narrow(-2, 16, 32).narrow(-1, 16, 32); };
  EXPECT_LT((inner(y) - inner(x)).abs().max().item<double>(), 1e-3);
}

TEST(Affine, IntegerTranslationMatchesShift) {
  auto x = torch::randn({2, 16, 16}, torch::kFloat64);
  AffineParams p;
  p.tx = 3;
  p.ty = -2;
  auto t = AffineTransform::from_params(p);
  auto a = apply_affine(x, t);
  auto s = apply_shift(x, {3, -2, false, false});
  auto m = affine_valid_mask(t, 16, 16);
  EXPECT_TRUE(torch::equal(m, overlap_mask({3, -2, false, false}, 16, 16)));
  EXPECT_TRUE(torch::allclose(a.masked_select(m), s.masked_select(m), 0.0, 1e-12));
}

TEST(Affine, InverseComposesToIdentity) {
  AffineParams p{0.2, 1.05, 0.1, 2.5, -1.0};
  auto t = AffineTransform::from_params(p);
  auto inv = t.inverse();
  const double px = 3.0, py = -7.0;
  const double qx = t.matrix[0] * px + t.matrix[1] * py + t.translation[0];
  const double qy = t.matrix[2] * px + t.matrix[3] * py + t.translation[1];
  EXPECT_NEAR(inv.matrix[0] * qx + inv.matrix[1] * qy + inv.translation[0], px, 1e-12);
  EXPECT_NEAR(inv.matrix[2] * qx + inv.matrix[3] * qy + inv.translation[1], py, 1e-12);
}

TEST(Affine, Singular) {
  AffineParams p;
  p.scale = 0.0;
  auto t = AffineTransform::from_params(p);
  EXPECT_THROW(apply_affine(torch::zeros({1, 8, 8}), t), ConfigError);
  EXPECT_THROW(t.inverse(), ConfigError);
}

TEST(Photometric, ZeroIsIdentity) {
  auto x = torch::rand({5, 16, 16});
  EXPECT_TRUE(torch::equal(apply_photometric(x, {}), x));
}

TEST(Photometric, BlurKeepsConstantsAndNoiseIsSeeded) {
  auto c = torch::full({2, 16, 16}, 0.4f);
  EXPECT_TRUE(torch::allclose(apply_photometric(c, {1.2, 0.0, 0}), c, 0.0, 1e-6));
  PhotometricParams n{0.0, 0.05, 9};
  auto a = apply_photometric(c, n);
  EXPECT_TRUE(torch::equal(a, apply_photometric(c, n)));
  EXPECT_FALSE(torch::equal(a, c));
  EXPECT_NEAR((a - c).std().item<double>(), 0.05, 0.01);
  EXPECT_THROW(apply_photometric(c, {-1.0, 0.0, 0}), ConfigError);
}

TEST(ViewTransformTest, ReplayMatchesInputTransform) {
  std::mt19937_64 rng(5);
  AugmentConfig cfg;
  cfg.max_shift = 4;
  auto x = torch::randn({4, 16, 16});
  for (auto mode : {AugmentMode::kShift, AugmentMode::kAffine}) {
    cfg.mode = mode;
    auto t = ViewTransform::sample(rng, cfg);
    EXPECT_TRUE(torch::equal(t.apply_to_input(x), t.replay_on_features(x)));
  }
  cfg.mode = AugmentMode::kPhotometric;
  auto t = ViewTransform::sample(rng, cfg);
  EXPECT_TRUE(torch::equal(t.replay_on_features(x), x));
  EXPECT_TRUE(t.valid_mask(16, 16).all().item<bool>());
}

TEST(ViewTransformTest, LabelReplayKeepsIds) {
  auto labels = torch::arange(64, torch::kInt64).view({8, 8});
  auto t = ViewTransform::from_shift({2, -1, true, false});
  auto r = t.replay_on_labels(labels);
  EXPECT_EQ(r.scalar_type(), torch::kInt64);
  auto valid = t.valid_mask(8, 8);
  EXPECT_TRUE(torch::all(r.masked_select(~valid) == -1).item<bool>());
  EXPECT_TRUE(torch::equal(r.masked_select(valid),
                           apply_shift(labels.to(torch::kFloat64), t.shift).to(torch::kInt64).masked_select(valid)));

  AugmentConfig cfg;
  cfg.mode = AugmentMode::kAffine;
  std::mt19937_64 rng(3);
  auto a = ViewTransform::sample(rng, cfg).replay_on_labels(labels);
  auto in_range = (a >= 0) & (a < 64);
  EXPECT_TRUE(torch::all(in_range | (a == -1)).item<bool>());
}

TEST(AugmentModeTest, Parse) {
  for (auto m : {AugmentMode::kShift, AugmentMode::kAffine, AugmentMode::kPhotometric}) {
    EXPECT_EQ(parse_augment_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_augment_mode("elastic"), ConfigError);
}

}  // namespace
}  // namespace pixfuse
