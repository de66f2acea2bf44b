#pragma once

#include <torch/types.h>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pixfuse/fusionnet.hpp"
#include "pixfuse/scenedata.hpp"

namespace pixfuse {

enum class NegativesScope { kBatch, kImage };

NegativesScope parse_negatives_scope(const std::string& name);
std::string to_string(NegativesScope scope);

struct LossWeights {
  double pixel = 1.0;   // superpixel-level term
  double global = 1.0;  // image-level term between the two branches/encoders
  double joint = 1.0;   // PixIF/MCL: image-level term on the joint embedding
};

struct LossConfig {
  double tau = 0.1;
  int superpixels_per_tile = 64;
  double segment_overlap_min_frac = 0.5;
  double slic_compactness = 0.05;
  NegativesScope negatives_scope = NegativesScope::kBatch;
  LossWeights weights;

  void validate() const;
};

// Segment ids int64 [H, W] in [0, count), each segment 4-connected.
struct SuperpixelMap {
  torch::Tensor segments;
  int64_t count = 0;

  std::vector<int64_t> sizes() const;
  std::vector<std::vector<int64_t>> members() const;  // flat pixel indices, ascending
};

// SLIC: local k-means in (band values, position) space seeded on a regular
// grid of about K cells, followed by connectivity enforcement. `image` is
// [C, H, W]; compactness weighs spatial distance (in grid steps) against
// band distance.
SuperpixelMap segment_superpixels(const torch::Tensor& image, int k, double compactness, int iterations = 10);
SuperpixelMap segment_superpixels(const Scene& scene, int k, double compactness);

// Which pixels feed which pooled row. Built once per aligned scene and
// shared by both branches so their rows correspond.
struct PoolingPlan {
  torch::Tensor pixel_index;  // int64 [M] flat pixel ids
  torch::Tensor row_index;    // int64 [M] pooled row of each pixel
  torch::Tensor counts;       // float [K'] pixels per row
  std::vector<int64_t> segment_ids;

  int64_t rows() const { return static_cast<int64_t>(segment_ids.size()); }
};

// `segments` are ids in the aligned frame (-1 where shifted out), `mask` is
// the overlap, `full_sizes` the segment sizes before alignment. A segment is
// kept when at least min_frac of its pixels lie in the mask.
PoolingPlan plan_pooling(const torch::Tensor& segments, const torch::Tensor& mask,
                         std::span<const int64_t> full_sizes, double min_frac);

// Mean feature of every planned row over its in-mask pixels, L2-normalized.
// fm is [D, H, W]; result [K', D].
torch::Tensor pool_features(const torch::Tensor& fm, const PoolingPlan& plan);

// Convenience: plan + pool on one map; throws DegenerateBatchError when no
// segment survives the mask.
torch::Tensor pool_over_superpixels(const torch::Tensor& fm, const SuperpixelMap& sp, const torch::Tensor& mask,
                                    double min_frac = 0.5);

// dot(a, b) / sqrt(dot(a, a) * dot(b, b)); exactly 1 for bitwise-equal inputs.
double cosine(std::span<const double> a, std::span<const double> b);
// exp(cos(f1, f2) / tau); NumericalError on a zero vector.
double pair_score(std::span<const double> f1, std::span<const double> f2, double tau);

// Mean over anchors of -log(score(a_i, p_i) / sum_j score(a_i, p_j)), with
// the row max of cos/tau subtracted before exponentiation.
torch::Tensor info_nce(const torch::Tensor& anchors, const torch::Tensor& positives, double tau);

// Per-image pooled rows of the two aligned branches.
struct DensePairs {
  std::vector<torch::Tensor> first;
  std::vector<torch::Tensor> second;

  bool empty() const { return first.empty(); }
};

// Image-level embeddings [B, proj_dim]; anchors from view/branch one.
struct GlobalPairs {
  torch::Tensor branch1, branch2;
  torch::Tensor joint1, joint2;
};

struct LossTerms {
  torch::Tensor pixel;
  torch::Tensor global;
  torch::Tensor joint;
  torch::Tensor total;
};

// Weighted sum of the terms the fusion mode defines:
//   PixEF, PixLF : pixel + global
//   PixIF        : pixel + global + joint
//   MCL          : global + joint
LossTerms composite_loss(FusionMode mode, const LossConfig& config, const DensePairs& dense,
                         const GlobalPairs& global);

}  // namespace pixfuse
