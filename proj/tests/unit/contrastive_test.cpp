#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "pixfuse/contrastive.hpp"
#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace {

std::vector<std::vector<double>> rows_of(const torch::Tensor& m) {
  auto d = m.to(torch::kFloat64).contiguous();
  std::vector<std::vector<double>> out(d.size(0), std::vector<double>(d.size(1)));
  for (int64_t i = 0; i < d.size(0); ++i)
    for (int64_t j = 0; j < d.size(1); ++j) out[i][j] = d[i][j].item<double>();
  return out;
}

TEST(PairScore, IdenticalVectors) {
  std::vector<double> f{0.3, -1.2, 2.0};
  EXPECT_NEAR(pair_score(f, f, 1.0), 2.718282, 1e-6);
  EXPECT_NEAR(pair_score(f, f, 0.1), 22026.47, 0.01);
}

TEST(PairScore, Orthogonal) {
  std::vector<double> a{1.0, 0.0};
  std::vector<double> b{0.0, 3.0};
  EXPECT_DOUBLE_EQ(pair_score(a, b, 1.0), 1.0);
}

TEST(PairScore, ScaleInvariant) {
  std::vector<double> a{0.5, 2.0, -1.0};
  std::vector<double> b{1.5, -0.2, 0.7};
  std::vector<double> a2{1.5, 6.0, -3.0};
  std::vector<double> b2{0.15, -0.02, 0.07};
  EXPECT_NEAR(pair_score(a, b, 0.5), pair_score(a2, b2, 0.5), 1e-12);
}

TEST(PairScore, ZeroVectorThrows) {
  std::vector<double> a{0.0, 0.0};
  std::vector<double> b{1.0, 0.0};
  EXPECT_THROW(pair_score(a, b, 1.0), NumericalError);
}

TEST(Cosine, BitwiseEqualIsExactlyOne) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(17);
    for (auto& x : v) x = n(rng);
    EXPECT_EQ(cosine(v, v), 1.0);
  }
}

TEST(InfoNce, TwoByTwoCase) {
  auto a = torch::tensor({{1.0, 0.0}, {0.0, 1.0}}, torch::kFloat64);
  auto loss = info_nce(a, a.clone(), 1.0).item<double>();
  EXPECT_NEAR(loss, 0.313262, 1e-6);
  EXPECT_NEAR(loss, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
}

TEST(InfoNce, IdenticalCandidatesGiveLogN) {
  for (int n : {2, 5, 16}) {
    auto a = torch::ones({n, 4}, torch::kFloat64);
    EXPECT_NEAR(info_nce(a, a, 0.1).item<double>(), std::log(n), 1e-12);
  }
}

TEST(InfoNce, MatchesNaiveOracle) {
  torch::manual_seed(11);
  for (int t = 0; t < 200; ++t) {
    const int n = 2 + t % 15;
    const int d = 1 + t % 8;
    const double tau = t % 3 == 0 ? 0.07 : (t % 3 == 1 ? 0.1 : 1.0);
    auto a = torch::randn({n, d}, torch::kFloat64);
    auto p = torch::randn({n, d}, torch::kFloat64);
    EXPECT_NEAR(info_nce(a, p, tau).item<double>(), oracle::info_nce(rows_of(a), rows_of(p), tau), 1e-6);
  }
}

TEST(InfoNce, PositiveForFiniteTau) {
  torch::manual_seed(5);
  auto a = torch::randn({8, 4}, torch::kFloat64);
  EXPECT_GT(info_nce(a, a, 0.05).item<double>(), 0.0);
}

TEST(InfoNce, NoOverflowInFloat32) {
  auto a = torch::eye(4, torch::kFloat32) * 1000;
  auto loss = info_nce(a, a, 0.001).item<float>();
  EXPECT_TRUE(std::isfinite(loss));
}

TEST(InfoNce, NeedsTwoPairs) {
  auto a = torch::ones({1, 3});
  EXPECT_THROW(info_nce(a, a, 0.1), DegenerateBatchError);
}

TEST(Slic, OnePixelPerSegment) {
  auto img = torch::rand({3, 4, 4});
  auto sp = segment_superpixels(img, 16, 0.05);
  EXPECT_EQ(sp.count, 16);
  std::set<int64_t> ids;
  for (int64_t i = 0; i < 16; ++i) ids.insert(sp.segments.view(-1)[i].item<int64_t>());
  EXPECT_EQ(ids.size(), 16u);
}

TEST(Slic, ConstantTileIsGridLike) {
  auto img = torch::full({5, 64, 64}, 0.2);
  auto sp = segment_superpixels(img, 64, 0.05);
  const double expected = 64.0 * 64.0 / 64.0;
  for (auto s : sp.sizes()) {
    EXPECT_GE(s, 0.5 * expected);
    EXPECT_LE(s, 1.5 * expected);
  }
}

TEST(Slic, PartitionAndConnectivity) {
  torch::manual_seed(2);
  auto img = torch::rand({5, 32, 32});
  auto sp = segment_superpixels(img, 16, 0.05);
  auto seg = sp.segments;
  EXPECT_EQ(seg.min().item<int64_t>(), 0);
  EXPECT_EQ(seg.max().item<int64_t>(), sp.count - 1);
  int64_t total = 0;
  for (auto s : sp.sizes()) {
    EXPECT_GT(s, 0);
    total += s;
  }
  EXPECT_EQ(total, 32 * 32);
  // each segment is one 4-connected component
  auto members = sp.members();
  for (const auto& m : members) {
    std::set<int64_t> in(m.begin(), m.end());
    std::set<int64_t> seen{m.front()};
    std::vector<int64_t> stack{m.front()};
    while (!stack.empty()) {
      auto p = stack.back();
      stack.pop_back();
      const int64_t y = p / 32, x = p % 32;
      for (auto q : {y > 0 ? p - 32 : -1, y < 31 ? p + 32 : -1, x > 0 ? p - 1 : -1, x < 31 ? p + 1 : -1}) {
        if (q < 0) continue;
        if (in.count(q) && !seen.count(q)) {
          seen.insert(q);
          stack.push_back(q);
        }
      }
    }
    EXPECT_EQ(seen.size(), m.size());
  }
}

TEST(Slic, Deterministic) {
  torch::manual_seed(4);
  auto img = torch::rand({5, 32, 32});
  auto a = segment_superpixels(img, 16, 0.05);
  auto b = segment_superpixels(img, 16, 0.05);
  EXPECT_TRUE(torch::equal(a.segments, b.segments));
}

TEST(Slic, TooManySegments) {
  auto img = torch::rand({3, 4, 4});
  EXPECT_THROW(segment_superpixels(img, 17, 0.05), ConfigError);
}

TEST(Pooling, ConstantFeatures) {
  auto fm = torch::ones({3, 8, 8}, torch::kFloat64) * torch::tensor({1.0, 2.0, 2.0}, torch::kFloat64).view({3, 1, 1});
  auto sp = segment_superpixels(torch::rand({3, 8, 8}), 4, 0.05);
  auto rows = pool_over_superpixels(fm, sp, torch::ones({8, 8}, torch::kBool));
  for (int64_t i = 0; i < rows.size(0); ++i) {
    EXPECT_NEAR(rows[i][0].item<double>(), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(rows[i][1].item<double>(), 2.0 / 3.0, 1e-12);
  }
}

TEST(Pooling, SinglePixelSegmentsAreIdentity) {
  auto fm = torch::randn({4, 4, 4}, torch::kFloat64);
  auto sp = segment_superpixels(torch::rand({3, 4, 4}), 16, 0.05);
  auto rows = pool_over_superpixels(fm, sp, torch::ones({4, 4}, torch::kBool));
  ASSERT_EQ(rows.size(0), 16);
  auto flat = fm.reshape({4, 16}).t();
  for (int64_t p = 0; p < 16; ++p) {
    const auto s = sp.segments.view(-1)[p].item<int64_t>();
    auto expect = flat[p] / flat[p].norm();
    EXPECT_TRUE(torch::allclose(rows[s], expect, 1e-12, 1e-12));
  }
}

TEST(Pooling, MatchesAccumulationOracle) {
  torch::manual_seed(9);
  for (int t = 0; t < 20; ++t) {
    const int64_t h = 16, w = 16, d = 5;
    auto fm = torch::randn({d, h, w}, torch::kFloat64);
    auto sp = segment_superpixels(torch::rand({3, h, w}), 12, 0.05);
    auto mask = torch::rand({h, w}) > 0.3;
    const auto sizes = sp.sizes();
    auto plan = plan_pooling(sp.segments, mask, sizes, 0.5);
    auto rows = pool_features(fm, plan);

    std::vector<std::vector<double>> feats(h * w, std::vector<double>(d));
    std::vector<int64_t> seg(h * w);
    std::vector<bool> m(h * w);
    for (int64_t p = 0; p < h * w; ++p) {
      for (int64_t k = 0; k < d; ++k) feats[p][k] = fm[k][p / w][p % w].item<double>();
      seg[p] = sp.segments.view(-1)[p].item<int64_t>();
      m[p] = mask.view(-1)[p].item<bool>();
    }
    auto expect = oracle::pool(feats, seg, m, sizes, 0.5);
    ASSERT_EQ(static_cast<std::size_t>(rows.size(0)), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i)
      for (int64_t k = 0; k < d; ++k) EXPECT_NEAR(rows[i][k].item<double>(), expect[i][k], 1e-6);
  }
}

TEST(Pooling, CommutesWithChannelMaps) {
  torch::manual_seed(12);
  auto fm = torch::randn({4, 8, 8}, torch::kFloat64);
  auto a = torch::randn({3, 4}, torch::kFloat64);
  auto sp = segment_superpixels(torch::rand({3, 8, 8}), 4, 0.05);
  auto plan = plan_pooling(sp.segments, torch::ones({8, 8}, torch::kBool), sp.sizes(), 0.5);
  // unnormalized means: pooled rows scaled back by their norms
  auto sums = torch::zeros({plan.rows(), 4}, torch::kFloat64)
                  .index_add(0, plan.row_index, fm.reshape({4, -1}).index_select(1, plan.pixel_index).t());
  auto mean = sums / plan.counts.to(torch::kFloat64).unsqueeze(1);
  auto mapped = torch::einsum("ck,khw->chw", {a, fm});
  auto pooled_mapped = pool_features(mapped, plan);
  auto expect = torch::matmul(mean, a.t());
  expect = expect / expect.norm(2, 1, true);
  EXPECT_TRUE(torch::allclose(pooled_mapped, expect, 1e-10, 1e-10));
}

TEST(Pooling, NothingSurvivesMask) {
  auto sp = segment_superpixels(torch::rand({3, 8, 8}), 4, 0.05);
  EXPECT_THROW(pool_over_superpixels(torch::rand({2, 8, 8}), sp, torch::zeros({8, 8}, torch::kBool)),
               DegenerateBatchError);
}

TEST(Pooling, HalfOverlapRule) {
  // two segments: left half and right half
  auto seg = torch::zeros({4, 4}, torch::kInt64);
  seg.narrow(1, 2, 2).fill_(1);
  auto mask = torch::zeros({4, 4}, torch::kBool);
  mask.narrow(1, 0, 3).fill_(true);  // all of segment 0, half of segment 1
  std::vector<int64_t> sizes{8, 8};
  EXPECT_EQ(plan_pooling(seg, mask, sizes, 0.5).rows(), 2);
  EXPECT_EQ(plan_pooling(seg, mask, sizes, 0.6).rows(), 1);
}

DensePairs random_pairs(int images, int rows, int d) {
  DensePairs p;
  for (int i = 0; i < images; ++i) {
    p.first.push_back(torch::randn({rows, d}, torch::kFloat64));
    p.second.push_back(torch::randn({rows, d}, torch::kFloat64));
  }
  return p;
}

GlobalPairs random_global(int b, int d) {
  GlobalPairs g;
  g.branch1 = torch::randn({b, d}, torch::kFloat64);
  g.branch2 = torch::randn({b, d}, torch::kFloat64);
  g.joint1 = torch::randn({b, d}, torch::kFloat64);
  g.joint2 = torch::randn({b, d}, torch::kFloat64);
  return g;
}

TEST(CompositeLoss, WeightsSelectTerms) {
  torch::manual_seed(21);
  auto dense = random_pairs(3, 5, 8);
  auto global = random_global(3, 8);
  LossConfig cfg;
  cfg.weights = {1.0, 0.0, 0.0};
  auto terms = composite_loss(FusionMode::kPixEF, cfg, dense, global);
  EXPECT_DOUBLE_EQ(terms.total.item<double>(), terms.pixel.item<double>());
  auto all = torch::cat(dense.first), all2 = torch::cat(dense.second);
  EXPECT_NEAR(terms.pixel.item<double>(), info_nce(all, all2, cfg.tau).item<double>(), 1e-12);
}

TEST(CompositeLoss, PixIfWithoutJointEqualsTwoTerms) {
  torch::manual_seed(22);
  auto dense = random_pairs(2, 6, 8);
  auto global = random_global(2, 8);
  LossConfig cfg;
  cfg.weights.joint = 0.0;
  auto terms = composite_loss(FusionMode::kPixIF, cfg, dense, global);
  const double two = info_nce(torch::cat(dense.first), torch::cat(dense.second), cfg.tau).item<double>() +
                     info_nce(global.branch1, global.branch2, cfg.tau).item<double>();
  EXPECT_NEAR(terms.total.item<double>(), two, 1e-12);
}

TEST(CompositeLoss, PixIfSumsThreeTerms) {
  torch::manual_seed(23);
  auto dense = random_pairs(2, 6, 8);
  auto global = random_global(2, 8);
  LossConfig cfg;
  auto terms = composite_loss(FusionMode::kPixIF, cfg, dense, global);
  EXPECT_NEAR(terms.total.item<double>(),
              terms.pixel.item<double>() + terms.global.item<double>() + terms.joint.item<double>(), 1e-12);
}

TEST(CompositeLoss, MclIgnoresDense) {
  torch::manual_seed(24);
  auto global = random_global(4, 8);
  LossConfig cfg;
  auto terms = composite_loss(FusionMode::kMCL, cfg, DensePairs{}, global);
  EXPECT_FALSE(terms.pixel.defined());
  EXPECT_NEAR(terms.total.item<double>(), terms.global.item<double>() + terms.joint.item<double>(), 1e-12);
}

TEST(CompositeLoss, ImageScopeAveragesPerImage) {
  torch::manual_seed(25);
  auto dense = random_pairs(3, 4, 8);
  LossConfig cfg;
  cfg.negatives_scope = NegativesScope::kImage;
  cfg.weights = {1.0, 0.0, 0.0};
  auto terms = composite_loss(FusionMode::kPixEF, cfg, dense, random_global(3, 8));
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) expect += info_nce(dense.first[i], dense.second[i], cfg.tau).item<double>();
  EXPECT_NEAR(terms.total.item<double>(), expect / 3.0, 1e-12);
}

TEST(CompositeLoss, IdenticalBranchesMatchOracle) {
  // Degenerate batch: both branches produce the same pooled rows.
  torch::manual_seed(26);
  DensePairs dense;
  auto rows = torch::randn({6, 4}, torch::kFloat64);
  dense.first.push_back(rows);
  dense.second.push_back(rows.clone());
  LossConfig cfg;
  cfg.weights = {1.0, 0.0, 0.0};
  auto terms = composite_loss(FusionMode::kPixEF, cfg, dense, GlobalPairs{});
  EXPECT_NEAR(terms.pixel.item<double>(), oracle::info_nce(rows_of(rows), rows_of(rows), cfg.tau), 1e-9);
}

TEST(CompositeLoss, MissingTermThrows) {
  LossConfig cfg;
  EXPECT_THROW(composite_loss(FusionMode::kPixIF, cfg, DensePairs{}, random_global(2, 4)), ConfigError);
  auto g = random_global(2, 4);
  g.joint1 = torch::Tensor();
  EXPECT_THROW(composite_loss(FusionMode::kPixIF, cfg, random_pairs(1, 3, 4), g), ConfigError);
}

TEST(LossConfigTest, Validation) {
  LossConfig cfg;
  cfg.tau = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.tau = 0.1;
  cfg.superpixels_per_tile = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace pixfuse
