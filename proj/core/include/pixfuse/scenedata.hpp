#pragma once

#include <torch/types.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pixfuse {

inline constexpr std::uint8_t kUnlabeled = 255;

// Channel indices of the optical bands the spectral indices need.
struct BandMap {
  int blue = 0;
  int green = 1;
  int red = 2;
  int nir = 3;
  int swir = 4;

  // Throws ConfigError unless all indices are distinct and < channels.
  void validate(int64_t channels) const;
};

struct ClassScheme {
  std::string name;
  std::vector<std::string> names;
  std::vector<std::array<std::uint8_t, 3>> palette;

  std::size_t size() const { return names.size(); }

  // Forest, Grassland, Water, Urban, Bare land, Sparse vegetation.
  static ClassScheme six_class();
  // The eight DFC2020 classes.
  static ClassScheme dfc2020();
  static ClassScheme by_name(const std::string& name);
};

// Class ids of the six-class scheme; the pseudo-labelling rules emit these.
enum class LandCover : std::uint8_t {
  kForest = 0,
  kGrassland = 1,
  kWater = 2,
  kUrban = 3,
  kBareLand = 4,
  kSparseVegetation = 5,
};
inline constexpr int kNumLandCover = 6;

// One co-registered SAR/optical tile pair.
//   sar:     float32 [2, H, W], backscatter in dB (VV, VH)
//   optical: float32 [C, H, W], surface reflectance in [0, 1]
//   gt:      uint8 [H, W], class ids or kUnlabeled
struct Scene {
  std::string id;
  torch::Tensor sar;
  torch::Tensor optical;
  BandMap band_map;
  std::optional<torch::Tensor> gt;
  std::optional<int> image_label;
  std::string class_scheme = "six_class";

  int64_t height() const { return sar.size(1); }
  int64_t width() const { return sar.size(2); }

  // Checks every structural invariant; throws ShapeError/ConfigError.
  void validate() const;
};

// Field-by-field, byte-level equality.
bool scenes_identical(const Scene& a, const Scene& b);

void save_scene(const Scene& scene, const std::filesystem::path& dir);
Scene load_scene(const std::filesystem::path& dir);

// Loads every immediate subdirectory holding a manifest.json, sorted by name.
std::vector<Scene> load_scene_collection(const std::filesystem::path& root);
// Writes scenes to root/<id>/.
void save_scene_collection(std::span<const Scene> scenes, const std::filesystem::path& root);

// Synthetic stand-in for a co-registered Sentinel-1/-2 corpus. Each scene
// is a Voronoi partition of the six-class scheme with class-conditional
// optical and SAR signatures; with probability cloud_fraction an opaque
// cloud covers part of the optical image only.
std::vector<Scene> generate_synthetic(std::uint64_t seed, int n_scenes, int size,
                                      double cloud_fraction);

// Random disjoint, exhaustive partition with group sizes proportional to
// `fractions` (largest-remainder rounding).
std::vector<std::vector<Scene>> split_dataset(std::span<const Scene> scenes, std::uint64_t seed,
                                              std::span<const double> fractions);

// Raw little-endian array IO shared by the scene, pseudo-label and
// checkpoint formats.
void write_raw(const std::filesystem::path& path, const torch::Tensor& tensor);
torch::Tensor read_raw(const std::filesystem::path& path, torch::ScalarType dtype,
                       std::vector<int64_t> shape);

// Label map (uint8 [H, W]) to binary PPM using the palette; unlabeled
// pixels are black.
void write_label_ppm(const std::filesystem::path& path, const torch::Tensor& labels,
                     const ClassScheme& scheme);
// One legend line per class: "<id> <name> <r> <g> <b>".
void write_legend(const std::filesystem::path& path, const ClassScheme& scheme);
// Float map to 8-bit binary PGM, linearly mapping [lo, hi] to [0, 255].
void write_pgm(const std::filesystem::path& path, const torch::Tensor& map, double lo, double hi);

}  // namespace pixfuse
