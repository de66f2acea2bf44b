#include "pixfuse/pseudolabel.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <fstream>
#include <vector>

#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace fs = std::filesystem;

std::string rule_name(Rule rule) {
  switch (rule) {
    case Rule::kNone:
      return "none";
    case Rule::kWater:
      return "water";
    case Rule::kForest:
      return "forest";
    case Rule::kGrassland:
      return "grassland";
    case Rule::kUrban:
      return "urban";
    case Rule::kBareLand:
      return "bare_land";
    case Rule::kSparseVegetation:
      return "sparse_vegetation";
  }
  return "none";
}

LandCover rule_class(Rule rule) {
  switch (rule) {
    case Rule::kWater:
      return LandCover::kWater;
    case Rule::kForest:
      return LandCover::kForest;
    case Rule::kGrassland:
      return LandCover::kGrassland;
    case Rule::kUrban:
      return LandCover::kUrban;
    case Rule::kBareLand:
      return LandCover::kBareLand;
    case Rule::kSparseVegetation:
      return LandCover::kSparseVegetation;
    case Rule::kNone:
      break;
  }
  throw ConfigError("rule_class: kNone has no class");
}

int64_t SparseLabelMap::labeled_count() const { return (labels != kUnlabeled).sum().item<int64_t>(); }

int64_t SparseLabelMap::class_count(LandCover c) const {
  return (labels == static_cast<int64_t>(c)).sum().item<int64_t>();
}

Thresholds marker_thresholds(const MarkerClusters& m, const ClusterStats& s2, const ClusterStats& s1) {
  auto at = [](const std::vector<double>& v, int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= v.size()) throw ConfigError("marker cluster id out of range");
    return v[static_cast<std::size_t>(id)];
  };
  return {at(s2.mean_ndvi, m.h_ndvi), at(s2.mean_ndwi, m.h_ndwi), at(s2.mean_bi, m.h_bi), at(s1.mean_bs, m.h_bs)};
}

SparseLabelMap collect_samples(const Scene& scene, const IndexMaps& indices, const ClusterAssignment& assign_s2,
                               const ClusterAssignment& assign_s1, const MarkerClusters& markers,
                               const ClusterStats& stats_s2, const ClusterStats& stats_s1,
                               bool strict_sparse_rule) {
  const int64_t h = scene.height();
  const int64_t w = scene.width();
  const int64_t n = h * w;
  for (const auto* t : {&assign_s2.labels, &assign_s1.labels, &indices.ndvi, &indices.ndwi, &indices.bi, &indices.bs}) {
    if (t->numel() != n) throw ConfigError("collect_samples: inputs disagree with the scene size");
  }
  if (stats_s2.k() != static_cast<std::size_t>(assign_s2.k()) ||
      stats_s1.k() != static_cast<std::size_t>(assign_s1.k())) {
    throw ConfigError("collect_samples: cluster stats disagree with assignments");
  }

  SparseLabelMap out;
  out.markers = markers;
  out.thresholds = marker_thresholds(markers, stats_s2, stats_s1);
  const auto& v = out.thresholds;

  auto flat_i64 = [](const torch::Tensor& t) { return t.reshape({-1}).to(torch::kInt64).contiguous(); };
  auto flat_f64 = [](const torch::Tensor& t) { return t.reshape({-1}).to(torch::kFloat64).contiguous(); };
  const auto s2 = flat_i64(assign_s2.labels);
  const auto s1 = flat_i64(assign_s1.labels);
  const auto ndvi = flat_f64(indices.ndvi);
  const auto ndwi = flat_f64(indices.ndwi);
  const auto bi = flat_f64(indices.bi);
  const auto bs = flat_f64(indices.bs);
  const auto* s2p = s2.data_ptr<int64_t>();
  const auto* s1p = s1.data_ptr<int64_t>();
  const auto* ndvip = ndvi.data_ptr<double>();
  const auto* ndwip = ndwi.data_ptr<double>();
  const auto* bip = bi.data_ptr<double>();
  const auto* bsp = bs.data_ptr<double>();

  out.labels = torch::full({h, w}, static_cast<int64_t>(kUnlabeled), torch::kUInt8);
  out.provenance = torch::zeros({h, w}, torch::kUInt8);
  auto* lp = out.labels.data_ptr<std::uint8_t>();
  auto* pp = out.provenance.data_ptr<std::uint8_t>();

  for (int64_t p = 0; p < n; ++p) {
    const int64_t c2 = s2p[p];
    const int64_t c1 = s1p[p];
    const bool in_medium = strict_sparse_rule ? (c2 == markers.m_bi && c2 == markers.m_ndvi)
                                              : (c2 == markers.m_bi || c2 == markers.m_ndvi);
    Rule rule = Rule::kNone;
    if (c2 == markers.h_ndwi && c1 == markers.l_bs && ndwip[p] > v.ndwi) {
      rule = Rule::kWater;
    } else if (c2 == markers.h_ndvi && c1 == markers.h_bs && ndvip[p] > v.ndvi) {
      rule = Rule::kForest;
    } else if (c2 == markers.h_ndvi && c1 == markers.l_bs && ndvip[p] > v.ndvi) {
      rule = Rule::kGrassland;
    } else if (c1 == markers.h_bs && bsp[p] > v.bs) {
      rule = Rule::kUrban;
    } else if (c2 == markers.h_bi && c1 == markers.l_bs && bip[p] > v.bi) {
      rule = Rule::kBareLand;
    } else if (in_medium && ndvip[p] < v.ndvi) {
      rule = Rule::kSparseVegetation;
    }
    ++out.rule_counts[static_cast<std::size_t>(rule)];
    pp[p] = static_cast<std::uint8_t>(rule);
    if (rule != Rule::kNone) lp[p] = static_cast<std::uint8_t>(rule_class(rule));
  }
  return out;
}

SparseLabelMap sparsify(const SparseLabelMap& in, int cap, std::mt19937_64& rng) {
  if (cap < 1) throw ConfigError("sparsify: cap must be >= 1");
  SparseLabelMap out = in;
  out.labels = torch::full_like(in.labels, static_cast<int64_t>(kUnlabeled));
  out.provenance = torch::zeros_like(in.provenance);
  out.rule_counts = {};

  const auto labels = in.labels.contiguous();
  const auto prov = in.provenance.contiguous();
  const auto* lp = labels.data_ptr<std::uint8_t>();
  const auto* pp = prov.data_ptr<std::uint8_t>();
  auto* olp = out.labels.data_ptr<std::uint8_t>();
  auto* opp = out.provenance.data_ptr<std::uint8_t>();
  const int64_t n = labels.numel();

  for (int c = 0; c < kNumLandCover; ++c) {
    std::vector<int64_t> members;
    for (int64_t p = 0; p < n; ++p) {
      if (lp[p] == c) members.push_back(p);
    }
    if (members.size() < static_cast<std::size_t>(cap)) continue;
    // Partial Fisher-Yates: the first `cap` slots become a uniform sample.
    for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
      std::swap(members[i], members[pick(rng)]);
    }
    for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
      const auto p = members[i];
      olp[p] = lp[p];
      opp[p] = pp[p];
      ++out.rule_counts[pp[p]];
    }
  }
  out.rule_counts[0] = n - out.labeled_count();
  return out;
}

SparseLabelMap pseudo_label_scene(const Scene& scene, const PseudoLabelConfig& config) {
  const auto indices = compute_indices(scene);
  const auto s2 = cluster_optical(scene, config.cluster);
  const auto s1 = cluster_sar(scene, config.cluster);
  const auto stats_s2 = cluster_stats(s2, indices);
  const auto stats_s1 = cluster_stats(s1, indices);
  const auto markers = select_markers(stats_s2, stats_s1);
  return collect_samples(scene, indices, s2, s1, markers, stats_s2, stats_s1, config.strict_sparse_rule);
}

void save_pseudo_labels(const SparseLabelMap& labels, const fs::path& scene_dir) {
  write_raw(scene_dir / "pseudo.bin", labels.labels.to(torch::kUInt8));
  nlohmann::json counts;
  for (int r = 0; r < kNumRules; ++r) counts[rule_name(static_cast<Rule>(r))] = labels.rule_counts[r];
  const auto& m = labels.markers;
  nlohmann::json meta{{"rule_counts", counts},
                      {"thresholds",
                       {{"ndvi", labels.thresholds.ndvi},
                        {"ndwi", labels.thresholds.ndwi},
                        {"bi", labels.thresholds.bi},
                        {"bs", labels.thresholds.bs}}},
                      {"markers",
                       {{"h_ndvi", m.h_ndvi},
                        {"h_ndwi", m.h_ndwi},
                        {"h_bi", m.h_bi},
                        {"m_ndvi", m.m_ndvi},
                        {"m_bi", m.m_bi},
                        {"h_bs", m.h_bs},
                        {"l_bs", m.l_bs}}}};
  std::ofstream out(scene_dir / "pseudo_meta.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write pseudo_meta.json in " + scene_dir.string());
  out << meta.dump(2) << '\n';
}

torch::Tensor load_pseudo_labels(const fs::path& scene_dir, int64_t height, int64_t width) {
  return read_raw(scene_dir / "pseudo.bin", torch::kUInt8, {height, width});
}

}  // namespace pixfuse
