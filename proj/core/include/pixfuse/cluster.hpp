#pragma once

#include <torch/types.h>

#include <cstdint>
#include <vector>

#include "pixfuse/scenedata.hpp"
#include "pixfuse/spectral.hpp"

namespace pixfuse {

struct ClusterAssignment {
  torch::Tensor labels;     // int64, [N] or [H, W]; ids in [0, k)
  torch::Tensor centroids;  // float64 [k, D]
  double inertia = 0.0;     // sum of squared distances to assigned centroids
  // Inertia after every assignment step, the last entry being `inertia`.
  std::vector<double> inertia_history;
  int iterations = 0;

  int64_t k() const { return centroids.size(0); }
};

// Lloyd's algorithm with k-means++ seeding on pixels [N, D]. Stops once no
// centroid moves by tol or more, or after max_iters updates. A cluster that
// empties is re-seeded at the point farthest from its current centroid.
// Single-threaded and deterministic given seed.
ClusterAssignment kmeans(const torch::Tensor& pixels, int k, std::uint64_t seed, int max_iters = 100,
                         double tol = 1e-4);

struct ClusterConfig {
  int k_s2 = 8;
  int k_s1 = 4;
  int max_iters = 100;
  double tol = 1e-4;
  std::uint64_t seed = 0;
};

// Per-scene feature matrices [H*W, D], standardized per channel.
torch::Tensor optical_cluster_features(const Scene& scene);
torch::Tensor sar_cluster_features(const Scene& scene);

// k-means over a scene's optical (k_s2) or SAR (k_s1) pixels; labels [H, W].
ClusterAssignment cluster_optical(const Scene& scene, const ClusterConfig& config);
ClusterAssignment cluster_sar(const Scene& scene, const ClusterConfig& config);

struct ClusterStats {
  std::vector<double> mean_ndvi;
  std::vector<double> mean_ndwi;
  std::vector<double> mean_bi;
  std::vector<double> mean_bs;
  std::vector<int64_t> pixel_count;

  std::size_t k() const { return pixel_count.size(); }
};

// Arithmetic mean of each index over each cluster's pixels (0 for an empty
// cluster, which then carries pixel_count 0).
ClusterStats cluster_stats(const ClusterAssignment& assign, const IndexMaps& indices);

// Marker clusters used by the pseudo-labelling rules.
struct MarkerClusters {
  int h_ndvi = 0;  // optical cluster with the largest mean NDVI
  int h_ndwi = 0;
  int h_bi = 0;
  int m_ndvi = 0;  // optical cluster at ascending NDVI rank floor(k/2)
  int m_bi = 0;
  int h_bs = 0;    // SAR cluster with the largest mean backscatter
  int l_bs = 0;    // SAR cluster with the smallest mean backscatter

  bool operator==(const MarkerClusters&) const = default;
};

// Only non-empty clusters take part; ties go to the lower cluster id. Needs
// at least 3 non-empty optical and 2 non-empty SAR clusters.
MarkerClusters select_markers(const ClusterStats& stats_s2, const ClusterStats& stats_s1);

}  // namespace pixfuse
