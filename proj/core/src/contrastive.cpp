#include "pixfuse/contrastive.hpp"

#include <torch/torch.h>

#include <cmath>
#include <limits>

#include "pixfuse/errors.hpp"

namespace pixfuse {

NegativesScope parse_negatives_scope(const std::string& name) {
  if (name == "batch") return NegativesScope::kBatch;
  if (name == "image") return NegativesScope::kImage;
  throw ConfigError("unknown negatives_scope '" + name + "' (expected batch or image)");
}

std::string to_string(NegativesScope scope) { return scope == NegativesScope::kImage ? "image" : "batch"; }

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
  if (superpixels_per_tile < 2) throw ConfigError("superpixels_per_tile must be at least 2");
  if (!(segment_overlap_min_frac > 0.0 && segment_overlap_min_frac <= 1.0)) {
    throw ConfigError("segment_overlap_min_frac must lie in (0, 1]");
  }
  if (!(slic_compactness >= 0.0)) throw ConfigError("slic_compactness must be non-negative");
  for (double wt : {weights.pixel, weights.global, weights.joint}) {
    if (!(wt >= 0.0) || !std::isfinite(wt)) throw ConfigError("loss weights must be finite and non-negative");
  }
}

PoolingPlan plan_pooling(const torch::Tensor& segments, const torch::Tensor& mask,
                         std::span<const int64_t> full_sizes, double min_frac) {
  if (segments.sizes() != mask.sizes() || segments.dim() != 2) {
    throw ShapeError("segment map and overlap mask must both be [H, W]");
  }
  auto seg = segments.to(torch::kInt64).contiguous().view(-1);
  auto m = mask.to(torch::kBool).contiguous().view(-1);
  const auto* ids = seg.data_ptr<int64_t>();
  const auto* in = m.data_ptr<bool>();
  const auto k = static_cast<int64_t>(full_sizes.size());

  std::vector<int64_t> inside(static_cast<std::size_t>(k), 0);
  for (int64_t p = 0; p < seg.numel(); ++p) {
    if (!in[p] || ids[p] < 0) continue;
    if (ids[p] >= k) throw ShapeError("segment id out of range");
    ++inside[ids[p]];
  }

  PoolingPlan plan;
  std::vector<int64_t> row_of(static_cast<std::size_t>(k), -1);
  std::vector<float> counts;
  for (int64_t s = 0; s < k; ++s) {
    if (inside[s] == 0) continue;
    if (static_cast<double>(inside[s]) < min_frac * static_cast<double>(full_sizes[s])) continue;
    row_of[s] = plan.rows();
    plan.segment_ids.push_back(s);
    counts.push_back(static_cast<float>(inside[s]));
  }

  std::vector<int64_t> pixels;
  std::vector<int64_t> rows;
  for (int64_t p = 0; p < seg.numel(); ++p) {
    if (!in[p] || ids[p] < 0 || row_of[ids[p]] < 0) continue;
    pixels.push_back(p);
    rows.push_back(row_of[ids[p]]);
  }
  plan.pixel_index = torch::tensor(pixels, torch::kInt64);
  plan.row_index = torch::tensor(rows, torch::kInt64);
  plan.counts = torch::tensor(counts, torch::kFloat32);
  return plan;
}

torch::Tensor pool_features(const torch::Tensor& fm, const PoolingPlan& plan) {
  if (fm.dim() != 3) throw ShapeError("feature map must be [D, H, W]");
  const int64_t d = fm.size(0);
  auto flat = fm.reshape({d, -1}).index_select(1, plan.pixel_index).t();
  auto sums = torch::zeros({plan.rows(), d}, fm.options()).index_add(0, plan.row_index, flat);
  auto mean = sums / plan.counts.to(fm.dtype()).unsqueeze(1);
  auto norm = mean.pow(2).sum(1, true).sqrt().clamp_min(1e-12);
  return mean / norm;
}

torch::Tensor pool_over_superpixels(const torch::Tensor& fm, const SuperpixelMap& sp, const torch::Tensor& mask,
                                    double min_frac) {
  if (fm.dim() != 3 || fm.size(1) != sp.segments.size(0) || fm.size(2) != sp.segments.size(1)) {
    throw ShapeError("feature map and superpixel map disagree in shape");
  }
  const auto sizes = sp.sizes();
  auto plan = plan_pooling(sp.segments, mask, sizes, min_frac);
  if (plan.rows() == 0) throw DegenerateBatchError("no superpixel survives the overlap mask");
  return pool_features(fm, plan);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine of vectors with different lengths");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw NumericalError("cosine of a zero vector");
  return ab / std::sqrt(aa * bb);
}

double pair_score(std::span<const double> f1, std::span<const double> f2, double tau) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  return std::exp(cosine(f1, f2) / tau);
}

torch::Tensor info_nce(const torch::Tensor& anchors, const torch::Tensor& positives, double tau) {
  if (anchors.dim() != 2 || anchors.sizes() != positives.sizes()) {
    throw ShapeError("info_nce expects two [N, d] matrices of equal shape");
  }
  if (anchors.size(0) < 2) throw DegenerateBatchError("info_nce needs at least two pairs");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  auto unit = [](const torch::Tensor& x) { return x / x.pow(2).sum(1, true).sqrt().clamp_min(1e-12); };
  auto logits = torch::matmul(unit(anchors), unit(positives).t()) / tau;
  auto row_max = std::get<0>(logits.max(1, true)).detach();
  auto shifted = logits - row_max;
  auto log_denominator = shifted.exp().sum(1).log();
  return (log_denominator - shifted.diagonal()).mean();
}

namespace {

torch::Tensor dense_term(const DensePairs& dense, const LossConfig& config) {
  if (dense.first.size() != dense.second.size()) throw ShapeError("dense pair lists differ in length");
  if (config.negatives_scope == NegativesScope::kBatch) {
    return info_nce(torch::cat(dense.first, 0), torch::cat(dense.second, 0), config.tau);
  }
  torch::Tensor sum;
  int used = 0;
  for (std::size_t i = 0; i < dense.first.size(); ++i) {
    if (dense.first[i].size(0) < 2) continue;
    auto term = info_nce(dense.first[i], dense.second[i], config.tau);
    sum = sum.defined() ? sum + term : term;
    ++used;
  }
  if (used == 0) throw DegenerateBatchError("no image holds two pooled superpixels");
  return sum / used;
}

}  // namespace

LossTerms composite_loss(FusionMode mode, const LossConfig& config, const DensePairs& dense,
                         const GlobalPairs& global) {
  const bool wants_pixel = mode != FusionMode::kMCL;
  const bool wants_joint = mode == FusionMode::kPixIF || mode == FusionMode::kMCL;

  LossTerms terms;
  if (wants_pixel) {
    if (dense.empty()) {
      if (config.weights.pixel != 0.0) throw ConfigError("pixel-level term requires dense pairs for " + to_string(mode));
    } else {
      terms.pixel = dense_term(dense, config);
    }
  }
  if (!global.branch1.defined() || !global.branch2.defined()) {
    if (config.weights.global != 0.0) throw ConfigError("image-level term requires embeddings for " + to_string(mode));
  } else {
    terms.global = info_nce(global.branch1, global.branch2, config.tau);
  }
  if (wants_joint) {
    if (!global.joint1.defined() || !global.joint2.defined()) {
      if (config.weights.joint != 0.0) throw ConfigError("joint term requires joint embeddings for " + to_string(mode));
    } else {
      terms.joint = info_nce(global.joint1, global.joint2, config.tau);
    }
  }

  torch::Tensor total;
  auto add = [&](const torch::Tensor& term, double weight) {
    if (!term.defined() || weight == 0.0) return;
    auto scaled = weight == 1.0 ? term : term * weight;
    total = total.defined() ? total + scaled : scaled;
  };
  add(terms.pixel, config.weights.pixel);
  add(terms.global, config.weights.global);
  add(terms.joint, config.weights.joint);
  if (!total.defined()) throw ConfigError("every loss term has weight zero");
  terms.total = total;
  return terms;
}

}  // namespace pixfuse
