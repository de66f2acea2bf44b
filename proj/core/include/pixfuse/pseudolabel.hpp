#pragma once

#include <torch/types.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "pixfuse/cluster.hpp"
#include "pixfuse/scenedata.hpp"
#include "pixfuse/spectral.hpp"

namespace pixfuse {

// Labelling rules in evaluation order; the first predicate that holds wins.
enum class Rule : std::uint8_t {
  kNone = 0,
  kWater = 1,
  kForest = 2,
  kGrassland = 3,
  kUrban = 4,
  kBareLand = 5,
  kSparseVegetation = 6,
};
inline constexpr int kNumRules = 7;

std::string rule_name(Rule rule);
LandCover rule_class(Rule rule);

// Mean index over each marker cluster, used as the confidence threshold.
struct Thresholds {
  double ndvi = 0.0;  // over h_ndvi
  double ndwi = 0.0;  // over h_ndwi
  double bi = 0.0;    // over h_bi
  double bs = 0.0;    // over h_bs
};

struct SparseLabelMap {
  torch::Tensor labels;      // uint8 [H, W]: LandCover ids or kUnlabeled
  torch::Tensor provenance;  // uint8 [H, W]: the Rule that fired, kNone elsewhere
  Thresholds thresholds;
  MarkerClusters markers;
  std::array<int64_t, kNumRules> rule_counts{};

  int64_t labeled_count() const;
  int64_t class_count(LandCover c) const;
};

struct PseudoLabelConfig {
  int cap = 10;
  // When set, the sparse-vegetation rule needs the pixel's optical cluster
  // to equal both m_bi and m_ndvi; otherwise either one suffices.
  bool strict_sparse_rule = false;
  ClusterConfig cluster;
};

Thresholds marker_thresholds(const MarkerClusters& markers, const ClusterStats& stats_s2,
                             const ClusterStats& stats_s1);

// Rule chain over every pixel:
//   water  : s2 == h_ndwi && s1 == l_bs && ndwi > V_ndwi
//   forest : s2 == h_ndvi && s1 == h_bs && ndvi > V_ndvi
//   grass  : s2 == h_ndvi && s1 == l_bs && ndvi > V_ndvi
//   urban  : s1 == h_bs && bs > V_bs
//   bare   : s2 == h_bi && s1 == l_bs && bi > V_bi
//   sparse : s2 in {m_bi, m_ndvi} && ndvi < V_ndvi
SparseLabelMap collect_samples(const Scene& scene, const IndexMaps& indices, const ClusterAssignment& assign_s2,
                               const ClusterAssignment& assign_s1, const MarkerClusters& markers,
                               const ClusterStats& stats_s2, const ClusterStats& stats_s1,
                               bool strict_sparse_rule = false);

// Keeps exactly `cap` uniformly drawn pixels of every class with at least
// `cap` labels and drops classes with fewer.
SparseLabelMap sparsify(const SparseLabelMap& labels, int cap, std::mt19937_64& rng);

// indices -> k-means on both modalities -> markers -> rules (no sparsify).
SparseLabelMap pseudo_label_scene(const Scene& scene, const PseudoLabelConfig& config);

// pseudo.bin (uint8 [H, W]) and pseudo_meta.json in a scene directory.
void save_pseudo_labels(const SparseLabelMap& labels, const std::filesystem::path& scene_dir);
torch::Tensor load_pseudo_labels(const std::filesystem::path& scene_dir, int64_t height, int64_t width);

}  // namespace pixfuse
