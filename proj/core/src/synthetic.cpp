#include <torch/torch.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "pixfuse/determinism.hpp"
#include "pixfuse/errors.hpp"
#include "pixfuse/scenedata.hpp"

namespace pixfuse {
namespace {

constexpr int kBands = 5;  // blue, green, red, nir, swir

// Mean surface reflectance per class, band order blue, green, red, nir, swir.
// Chosen so that NDVI peaks on forest/grassland, NDWI on water and BI on
// bare land.
constexpr std::array<std::array<float, kBands>, kNumLandCover> kOpticalMean{{
    {0.030F, 0.060F, 0.035F, 0.380F, 0.160F},  // forest
    {0.045F, 0.090F, 0.060F, 0.340F, 0.220F},  // grassland
    {0.070F, 0.090F, 0.050F, 0.025F, 0.010F},  // water
    {0.160F, 0.170F, 0.190F, 0.220F, 0.360F},  // urban
    {0.090F, 0.140F, 0.210F, 0.250F, 0.360F},  // bare land
    {0.060F, 0.090F, 0.110F, 0.230F, 0.260F},  // sparse vegetation
}};

// Mean backscatter in dB, (VV, VH).
constexpr std::array<std::array<float, 2>, kNumLandCover> kSarMean{{
    {-7.0F, -12.5F},   // forest
    {-12.5F, -19.5F},  // grassland
    {-19.0F, -25.0F},  // water
    {-1.0F, -6.5F},    // urban
    {-13.5F, -21.0F},  // bare land
    {-10.0F, -16.5F},  // sparse vegetation
}};

// Sparse vegetation is a per-pixel mixture of green cover and dry soil with
// the cover fraction uniform over a wide range, so its spectra form a long
// continuum between the two.
constexpr std::array<float, kBands> kSparseVegetation{0.040F, 0.085F, 0.050F, 0.360F, 0.200F};
constexpr std::array<float, kBands> kSparseSoil{0.100F, 0.130F, 0.170F, 0.210F, 0.300F};
constexpr float kCoverMin = 0.10F;
constexpr float kCoverMax = 0.60F;

constexpr std::array<float, kBands> kCloudReflectance{0.62F, 0.64F, 0.66F, 0.60F, 0.48F};

constexpr float kOpticalPixelNoise = 0.003F;  // additive reflectance, per pixel and band
constexpr float kOpticalRegionGain = 0.005F;  // multiplicative, per region
constexpr float kOpticalFieldAmplitude = 0.01F;
constexpr float kSarPixelNoiseDb = 2.0F;      // speckle stand-in, per pixel and channel
constexpr float kSarRegionOffsetDb = 0.8F;
constexpr int kMinSites = 8;
constexpr int kMaxSites = 12;

constexpr std::uint64_t kCloudStream = 0xC10D;

struct Site {
  float y;
  float x;
  int cls;
  float gain;
  float sar_offset;
};

Scene make_scene(std::uint64_t seed, int index, int size, double cloud_fraction) {
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<float> unit(0.0F, 1.0F);
  std::normal_distribution<float> normal(0.0F, 1.0F);

  const int n_sites = std::uniform_int_distribution<int>(kMinSites, kMaxSites)(rng);
  std::array<int, kNumLandCover> perm{};
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = kNumLandCover; i > 1; --i) {
    std::swap(perm[i - 1], perm[std::uniform_int_distribution<int>(0, i - 1)(rng)]);
  }
  std::vector<Site> sites;
  for (int s = 0; s < n_sites; ++s) {
    Site site{};
    site.y = unit(rng) * static_cast<float>(size);
    site.x = unit(rng) * static_cast<float>(size);
    site.cls = s < kNumLandCover ? perm[s] : std::uniform_int_distribution<int>(0, kNumLandCover - 1)(rng);
    site.gain = kOpticalRegionGain * normal(rng);
    site.sar_offset = kSarRegionOffsetDb * normal(rng);
    sites.push_back(site);
  }

  // Smooth illumination field: two random plane waves.
  std::array<float, 6> wave{};
  for (auto& v : wave) v = unit(rng);

  auto gt = torch::empty({size, size}, torch::kUInt8);
  auto region = std::vector<int>(static_cast<std::size_t>(size) * size);
  auto* gt_p = gt.data_ptr<std::uint8_t>();
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      int best = 0;
      float best_d = std::numeric_limits<float>::max();
      for (int s = 0; s < n_sites; ++s) {
        const float dy = sites[s].y - (static_cast<float>(i) + 0.5F);
        const float dx = sites[s].x - (static_cast<float>(j) + 0.5F);
        const float d = dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best = s;
        }
      }
      region[static_cast<std::size_t>(i) * size + j] = best;
      gt_p[i * size + j] = static_cast<std::uint8_t>(sites[best].cls);
    }
  }

  auto optical = torch::empty({kBands, size, size}, torch::kFloat32);
  auto sar = torch::empty({2, size, size}, torch::kFloat32);
  auto* opt_p = optical.data_ptr<float>();
  auto* sar_p = sar.data_ptr<float>();
  const auto plane = static_cast<std::size_t>(size) * size;
  const float two_pi = 6.28318530718F;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const auto p = static_cast<std::size_t>(i) * size + j;
      const Site& site = sites[region[p]];
      const float u = static_cast<float>(i) / static_cast<float>(size);
      const float v = static_cast<float>(j) / static_cast<float>(size);
      const float field =
          kOpticalFieldAmplitude * (std::sin(two_pi * (wave[0] * u + wave[1] * v + wave[2])) +
                                    std::sin(two_pi * (wave[3] * u - wave[4] * v + wave[5]))) * 0.5F;
      float cover = 0.0F;
      const bool sparse = site.cls == static_cast<int>(LandCover::kSparseVegetation);
      if (sparse) cover = kCoverMin + (kCoverMax - kCoverMin) * unit(rng);
      for (int b = 0; b < kBands; ++b) {
        const float mean = sparse ? cover * kSparseVegetation[b] + (1.0F - cover) * kSparseSoil[b]
                                  : kOpticalMean[site.cls][b];
        const float value = mean * (1.0F + site.gain + field) + kOpticalPixelNoise * normal(rng);
        opt_p[b * plane + p] = std::clamp(value, 0.0F, 1.0F);
      }
      for (int c = 0; c < 2; ++c) {
        sar_p[c * plane + p] = kSarMean[site.cls][c] + site.sar_offset + kSarPixelNoiseDb * normal(rng);
      }
    }
  }

  // Clouds draw from their own stream so the rest of the scene is identical
  // to the cloud-free generation.
  std::mt19937_64 cloud_rng(derive_seed(seed ^ kCloudStream, static_cast<std::uint64_t>(index)));
  if (std::uniform_real_distribution<double>(0.0, 1.0)(cloud_rng) < cloud_fraction) {
    std::uniform_real_distribution<float> cu(0.0F, 1.0F);
    const float cy = cu(cloud_rng) * static_cast<float>(size);
    const float cx = cu(cloud_rng) * static_cast<float>(size);
    const float ry = (0.2F + 0.15F * cu(cloud_rng)) * static_cast<float>(size);
    const float rx = (0.2F + 0.15F * cu(cloud_rng)) * static_cast<float>(size);
    std::normal_distribution<float> cn(0.0F, 0.02F);
    for (int i = 0; i < size; ++i) {
      for (int j = 0; j < size; ++j) {
        const float dy = (static_cast<float>(i) + 0.5F - cy) / ry;
        const float dx = (static_cast<float>(j) + 0.5F - cx) / rx;
        if (dy * dy + dx * dx > 1.0F) continue;
        const auto p = static_cast<std::size_t>(i) * size + j;
        for (int b = 0; b < kBands; ++b) {
          opt_p[b * plane + p] = std::clamp(kCloudReflectance[b] + cn(cloud_rng), 0.0F, 1.0F);
        }
      }
    }
  }

  Scene scene;
  scene.id = "synth_" + std::to_string(seed) + "_" + std::to_string(index);
  scene.sar = sar;
  scene.optical = optical;
  scene.band_map = BandMap{};
  std::array<int64_t, kNumLandCover> counts{};
  for (int64_t p = 0; p < size * size; ++p) ++counts[gt_p[p]];
  scene.image_label = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  scene.gt = gt;
  return scene;
}

}  // namespace

std::vector<Scene> generate_synthetic(std::uint64_t seed, int n_scenes, int size, double cloud_fraction) {
  if (size < 16 || size % 8 != 0) throw ConfigError("synthetic tile size must be >= 16 and divisible by 8");
  if (n_scenes < 0) throw ConfigError("n_scenes must be non-negative");
  if (!(cloud_fraction >= 0.0 && cloud_fraction <= 1.0)) throw ConfigError("cloud_fraction must be in [0, 1]");
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) scenes.push_back(make_scene(seed, i, size, cloud_fraction));
  return scenes;
}

}  // namespace pixfuse
