#include "pixfuse/cluster.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace {

double squared_distance(const double* a, const double* b, int64_t d) {
  double s = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

// Returns inertia; fills labels and per-point squared distance.
double assign_points(const std::vector<double>& points, const std::vector<double>& centroids, int64_t n,
                     int64_t d, int k, std::vector<int64_t>& labels, std::vector<double>& dist) {
  double inertia = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* p = points.data() + i * d;
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double dd = squared_distance(p, centroids.data() + c * d, d);
      if (dd < best_d) {
        best_d = dd;
        best = c;
      }
    }
    labels[i] = best;
    dist[i] = best_d;
    inertia += best_d;
  }
  return inertia;
}

std::vector<double> seed_plus_plus(const std::vector<double>& points, int64_t n, int64_t d, int k,
                                   std::mt19937_64& rng) {
  std::vector<double> centroids(static_cast<std::size_t>(k * d));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto first = std::uniform_int_distribution<int64_t>(0, n - 1)(rng);
  std::copy_n(points.begin() + first * d, d, centroids.begin());
  std::vector<double> nearest(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) nearest[i] = squared_distance(points.data() + i * d, centroids.data(), d);
  for (int c = 1; c < k; ++c) {
    const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    int64_t chosen = n - 1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double running = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        running += nearest[i];
        if (running > target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = std::uniform_int_distribution<int64_t>(0, n - 1)(rng);
    }
    std::copy_n(points.begin() + chosen * d, d, centroids.begin() + c * d);
    for (int64_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(points.data() + i * d, centroids.data() + c * d, d));
    }
  }
  return centroids;
}

torch::Tensor standardize_columns(torch::Tensor features) {
  auto mean = features.mean(0, true);
  auto std = features.std(0, /*unbiased=*/false, true);
  std = torch::where(std > 0, std, torch::ones_like(std));
  return ((features - mean) / std).contiguous();
}

}  // namespace

ClusterAssignment kmeans(const torch::Tensor& pixels, int k, std::uint64_t seed, int max_iters, double tol) {
  if (pixels.dim() != 2 || pixels.size(1) < 1) throw ShapeError("kmeans expects pixels [N, D] with D >= 1");
  const int64_t n = pixels.size(0);
  const int64_t d = pixels.size(1);
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (n < k) throw ConfigError("kmeans: fewer points (" + std::to_string(n) + ") than clusters (" +
                               std::to_string(k) + ")");
  if (max_iters < 1) throw ConfigError("kmeans: max_iters must be >= 1");

  auto src = pixels.to(torch::kFloat64).contiguous();
  std::vector<double> points(src.data_ptr<double>(), src.data_ptr<double>() + n * d);

  std::mt19937_64 rng(seed);
  auto centroids = seed_plus_plus(points, n, d, k, rng);
  std::vector<int64_t> labels(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));

  ClusterAssignment result;
  for (int it = 0; it < max_iters; ++it) {
    result.inertia_history.push_back(assign_points(points, centroids, n, d, k, labels, dist));
    result.iterations = it + 1;

    std::vector<double> sums(static_cast<std::size_t>(k * d), 0.0);
    std::vector<int64_t> counts(static_cast<std::size_t>(k), 0);
    for (int64_t i = 0; i < n; ++i) {
      ++counts[labels[i]];
      for (int64_t j = 0; j < d; ++j) sums[labels[i] * d + j] += points[i * d + j];
    }
    std::vector<double> updated(centroids.size());
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster: move it onto the farthest point, which then leaves
        // its old cluster at the next assignment.
        const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
        std::copy_n(points.begin() + far * d, d, updated.begin() + c * d);
        dist[far] = 0.0;
        continue;
      }
      for (int64_t j = 0; j < d; ++j) {
        updated[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
      }
    }
    double movement = 0.0;
    for (int c = 0; c < k; ++c) {
      movement = std::max(movement, std::sqrt(squared_distance(updated.data() + c * d, centroids.data() + c * d, d)));
    }
    centroids = std::move(updated);
    if (movement < tol) break;
  }
  result.inertia = assign_points(points, centroids, n, d, k, labels, dist);
  result.inertia_history.push_back(result.inertia);

  result.labels = torch::from_blob(labels.data(), {n}, torch::kInt64).clone();
  result.centroids = torch::from_blob(centroids.data(), {k, d}, torch::kFloat64).clone();
  return result;
}

torch::Tensor optical_cluster_features(const Scene& scene) {
  const auto c = scene.optical.size(0);
  return standardize_columns(scene.optical.reshape({c, -1}).t().to(torch::kFloat64));
}

torch::Tensor sar_cluster_features(const Scene& scene) {
  return standardize_columns(scene.sar.reshape({2, -1}).t().to(torch::kFloat64));
}

ClusterAssignment cluster_optical(const Scene& scene, const ClusterConfig& config) {
  auto result = kmeans(optical_cluster_features(scene), config.k_s2, config.seed, config.max_iters, config.tol);
  result.labels = result.labels.view({scene.height(), scene.width()});
  return result;
}

ClusterAssignment cluster_sar(const Scene& scene, const ClusterConfig& config) {
  auto result = kmeans(sar_cluster_features(scene), config.k_s1, config.seed, config.max_iters, config.tol);
  result.labels = result.labels.view({scene.height(), scene.width()});
  return result;
}

ClusterStats cluster_stats(const ClusterAssignment& assign, const IndexMaps& indices) {
  const auto labels = assign.labels.reshape({-1}).to(torch::kInt64).contiguous();
  const int64_t n = labels.numel();
  if (indices.ndvi.numel() != n || indices.ndwi.numel() != n || indices.bi.numel() != n ||
      indices.bs.numel() != n) {
    throw ShapeError("cluster_stats: assignment and index maps disagree in size");
  }
  const auto k = static_cast<std::size_t>(assign.k());
  ClusterStats stats;
  stats.mean_ndvi.assign(k, 0.0);
  stats.mean_ndwi.assign(k, 0.0);
  stats.mean_bi.assign(k, 0.0);
  stats.mean_bs.assign(k, 0.0);
  stats.pixel_count.assign(k, 0);

  auto as_double = [](const torch::Tensor& t) { return t.reshape({-1}).to(torch::kFloat64).contiguous(); };
  const auto ndvi = as_double(indices.ndvi);
  const auto ndwi = as_double(indices.ndwi);
  const auto bi = as_double(indices.bi);
  const auto bs = as_double(indices.bs);
  const auto* lp = labels.data_ptr<int64_t>();
  for (int64_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(lp[i]);
    if (c >= k) throw ConfigError("cluster_stats: label outside [0, k)");
    stats.mean_ndvi[c] += ndvi.data_ptr<double>()[i];
    stats.mean_ndwi[c] += ndwi.data_ptr<double>()[i];
    stats.mean_bi[c] += bi.data_ptr<double>()[i];
    stats.mean_bs[c] += bs.data_ptr<double>()[i];
    ++stats.pixel_count[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (stats.pixel_count[c] == 0) continue;
    const auto count = static_cast<double>(stats.pixel_count[c]);
    stats.mean_ndvi[c] /= count;
    stats.mean_ndwi[c] /= count;
    stats.mean_bi[c] /= count;
    stats.mean_bs[c] /= count;
  }
  return stats;
}

namespace {

std::vector<int> nonempty(const ClusterStats& stats) {
  std::vector<int> ids;
  for (std::size_t c = 0; c < stats.k(); ++c) {
    if (stats.pixel_count[c] > 0) ids.push_back(static_cast<int>(c));
  }
  return ids;
}

int argmax(const std::vector<int>& ids, const std::vector<double>& values) {
  int best = ids.front();
  for (int id : ids) {
    if (values[id] > values[best]) best = id;
  }
  return best;
}

int argmin(const std::vector<int>& ids, const std::vector<double>& values) {
  int best = ids.front();
  for (int id : ids) {
    if (values[id] < values[best]) best = id;
  }
  return best;
}

int ascending_rank(std::vector<int> ids, const std::vector<double>& values, std::size_t rank) {
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return values[a] < values[b]; });
  return ids[rank];
}

}  // namespace

MarkerClusters select_markers(const ClusterStats& stats_s2, const ClusterStats& stats_s1) {
  const auto s2 = nonempty(stats_s2);
  const auto s1 = nonempty(stats_s1);
  if (s2.size() < 3) throw ConfigError("select_markers: need at least 3 non-empty optical clusters");
  if (s1.size() < 2) throw ConfigError("select_markers: need at least 2 non-empty SAR clusters");

  MarkerClusters m;
  m.h_ndvi = argmax(s2, stats_s2.mean_ndvi);
  m.h_ndwi = argmax(s2, stats_s2.mean_ndwi);
  m.h_bi = argmax(s2, stats_s2.mean_bi);
  m.m_ndvi = ascending_rank(s2, stats_s2.mean_ndvi, s2.size() / 2);
  m.m_bi = ascending_rank(s2, stats_s2.mean_bi, s2.size() / 2);
  m.h_bs = argmax(s1, stats_s1.mean_bs);
  m.l_bs = argmin(s1, stats_s1.mean_bs);
  if (m.l_bs == m.h_bs) {
    // All SAR means tie; keep the two markers distinct.
    m.l_bs = s1[0] == m.h_bs ? s1[1] : s1[0];
  }
  return m;
}

}  // namespace pixfuse
