#include "pixfuse/scenedata.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

std::string dtype_tag(torch::ScalarType type) {
  switch (type) {
    case torch::kFloat32:
      return "f32";
    case torch::kUInt8:
      return "u8";
    default:
      throw ConfigError("unsupported array dtype for raw IO");
  }
}

torch::ScalarType dtype_from_tag(const std::string& tag) {
  if (tag == "f32") return torch::kFloat32;
  if (tag == "u8") return torch::kUInt8;
  throw FormatError("unknown dtype tag '" + tag + "'");
}

std::vector<int64_t> shape_of(const torch::Tensor& t) {
  return {t.sizes().begin(), t.sizes().end()};
}

json array_entry(const std::string& name, const torch::Tensor& t) {
  return json{{"name", name}, {"dtype", dtype_tag(t.scalar_type())}, {"shape", shape_of(t)}};
}

void swap_bytes_if_needed(char* data, std::size_t count, std::size_t width) {
  if constexpr (std::endian::native == std::endian::little) {
    return;
  }
  for (std::size_t i = 0; i < count; ++i) std::reverse(data + i * width, data + (i + 1) * width);
}

}  // namespace

void BandMap::validate(int64_t channels) const {
  const std::array<int, 5> idx{blue, green, red, nir, swir};
  std::set<int> unique(idx.begin(), idx.end());
  if (unique.size() != idx.size()) throw ConfigError("band_map indices must be distinct");
  for (int i : idx) {
    if (i < 0 || i >= channels) {
      throw ConfigError("band_map index " + std::to_string(i) + " outside optical channel range " +
                        std::to_string(channels));
    }
  }
}

ClassScheme ClassScheme::six_class() {
  return {"six_class",
          {"Forest", "Grassland", "Water", "Urban", "Bare land", "Sparse vegetation"},
          {{{0, 100, 0}},
           {{182, 255, 5}},
           {{28, 13, 255}},
           {{200, 30, 30}},
           {{249, 255, 164}},
           {{198, 176, 68}}}};
}

ClassScheme ClassScheme::dfc2020() {
  return {"dfc2020",
          {"Forest", "Shrubland", "Grassland", "Wetlands", "Croplands", "Urban/built-up", "Barren",
           "Water"},
          {{{0, 153, 0}},
           {{198, 176, 68}},
           {{182, 255, 5}},
           {{39, 255, 135}},
           {{194, 79, 68}},
           {{165, 165, 165}},
           {{249, 255, 164}},
           {{28, 13, 255}}}};
}

ClassScheme ClassScheme::by_name(const std::string& name) {
  if (name == "six_class") return six_class();
  if (name == "dfc2020") return dfc2020();
  throw ConfigError("unknown class scheme '" + name + "'");
}

void Scene::validate() const {
  if (!sar.defined() || sar.dim() != 3 || sar.size(0) != 2 || sar.scalar_type() != torch::kFloat32) {
    throw ShapeError("scene " + id + ": sar must be float32 [2, H, W]");
  }
  if (!optical.defined() || optical.dim() != 3 || optical.scalar_type() != torch::kFloat32) {
    throw ShapeError("scene " + id + ": optical must be float32 [C, H, W]");
  }
  const int64_t h = height();
  const int64_t w = width();
  if (h < 16 || w < 16 || h % 8 != 0 || w % 8 != 0) {
    throw ShapeError("scene " + id + ": H and W must be >= 16 and divisible by 8");
  }
  if (optical.size(1) != h || optical.size(2) != w) {
    throw ShapeError("scene " + id + ": sar and optical spatial sizes differ");
  }
  if (!torch::isfinite(optical).all().item<bool>() || optical.min().item<float>() < 0.0F ||
      optical.max().item<float>() > 1.0F) {
    throw ConfigError("scene " + id + ": optical reflectance must be finite and in [0, 1]");
  }
  band_map.validate(optical.size(0));
  const auto classes = static_cast<int64_t>(ClassScheme::by_name(class_scheme).size());
  if (gt) {
    if (gt->dim() != 2 || gt->size(0) != h || gt->size(1) != w || gt->scalar_type() != torch::kUInt8) {
      throw ShapeError("scene " + id + ": gt must be uint8 [H, W]");
    }
    const auto labels = gt->to(torch::kInt64);
    const bool ok = ((labels < classes) | (labels == kUnlabeled)).all().item<bool>();
    if (!ok) throw ConfigError("scene " + id + ": gt class id out of range");
  }
  if (image_label && (*image_label < 0 || *image_label >= classes)) {
    throw ConfigError("scene " + id + ": image_label out of range");
  }
}

bool scenes_identical(const Scene& a, const Scene& b) {
  auto same = [](const torch::Tensor& x, const torch::Tensor& y) {
    return x.scalar_type() == y.scalar_type() && x.sizes() == y.sizes() &&
           std::memcmp(x.contiguous().data_ptr(), y.contiguous().data_ptr(), x.nbytes()) == 0;
  };
  if (a.id != b.id || a.class_scheme != b.class_scheme || a.image_label != b.image_label) return false;
  const auto& ba = a.band_map;
  const auto& bb = b.band_map;
  if (ba.blue != bb.blue || ba.green != bb.green || ba.red != bb.red || ba.nir != bb.nir ||
      ba.swir != bb.swir) {
    return false;
  }
  if (!same(a.sar, b.sar) || !same(a.optical, b.optical)) return false;
  if (a.gt.has_value() != b.gt.has_value()) return false;
  return !a.gt || same(*a.gt, *b.gt);
}

void write_raw(const fs::path& path, const torch::Tensor& tensor) {
  auto t = tensor.contiguous();
  std::vector<char> bytes(t.nbytes());
  std::memcpy(bytes.data(), t.data_ptr(), bytes.size());
  swap_bytes_if_needed(bytes.data(), static_cast<std::size_t>(t.numel()), t.element_size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

torch::Tensor read_raw(const fs::path& path, torch::ScalarType dtype, std::vector<int64_t> shape) {
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw FormatError("cannot stat " + path.string());
  auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
  if (size != t.nbytes()) {
    throw FormatError(path.string() + ": " + std::to_string(size) + " bytes on disk, shape implies " +
                      std::to_string(t.nbytes()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("short read from " + path.string());
  swap_bytes_if_needed(static_cast<char*>(t.data_ptr()), static_cast<std::size_t>(t.numel()),
                       t.element_size());
  return t;
}

void save_scene(const Scene& scene, const fs::path& dir) {
  scene.validate();
  fs::create_directories(dir);
  const auto scheme = ClassScheme::by_name(scene.class_scheme);

  json arrays = json::array();
  arrays.push_back(array_entry("sar", scene.sar));
  arrays.push_back(array_entry("optical", scene.optical));
  if (scene.gt) arrays.push_back(array_entry("gt", *scene.gt));

  json manifest{{"format_version", kFormatVersion},
                {"id", scene.id},
                {"height", scene.height()},
                {"width", scene.width()},
                {"arrays", arrays},
                {"band_map",
                 {{"blue", scene.band_map.blue},
                  {"green", scene.band_map.green},
                  {"red", scene.band_map.red},
                  {"nir", scene.band_map.nir},
                  {"swir", scene.band_map.swir}}},
                {"class_scheme", {{"name", scheme.name}, {"names", scheme.names}, {"palette", scheme.palette}}}};
  if (scene.image_label) manifest["image_label"] = *scene.image_label;

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';

  write_raw(dir / "sar.bin", scene.sar);
  write_raw(dir / "optical.bin", scene.optical);
  if (scene.gt) write_raw(dir / "gt.bin", *scene.gt);
}

Scene load_scene(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("corrupt manifest in " + dir.string() + ": " + e.what());
  }

  Scene scene;
  try {
    if (manifest.at("format_version").get<int>() != kFormatVersion) {
      throw FormatError("unsupported scene format_version in " + dir.string());
    }
    scene.id = manifest.at("id").get<std::string>();
    const auto h = manifest.at("height").get<int64_t>();
    const auto w = manifest.at("width").get<int64_t>();
    const auto& bm = manifest.at("band_map");
    scene.band_map = {bm.at("blue").get<int>(), bm.at("green").get<int>(), bm.at("red").get<int>(),
                      bm.at("nir").get<int>(), bm.at("swir").get<int>()};
    const auto& cs = manifest.at("class_scheme");
    scene.class_scheme = cs.is_string() ? cs.get<std::string>() : cs.at("name").get<std::string>();
    if (manifest.contains("image_label")) scene.image_label = manifest["image_label"].get<int>();

    for (const auto& entry : manifest.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto dtype = dtype_from_tag(entry.at("dtype").get<std::string>());
      const auto shape = entry.at("shape").get<std::vector<int64_t>>();
      if (shape.size() < 2 || shape[shape.size() - 2] != h || shape.back() != w) {
        throw FormatError(dir.string() + ": array '" + name + "' shape disagrees with height/width");
      }
      auto data = read_raw(dir / (name + ".bin"), dtype, shape);
      if (name == "sar") {
        scene.sar = data;
      } else if (name == "optical") {
        scene.optical = data;
      } else if (name == "gt") {
        scene.gt = data;
      } else {
        throw FormatError(dir.string() + ": unknown array '" + name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw FormatError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  if (!scene.sar.defined() || !scene.optical.defined()) {
    throw FormatError(dir.string() + ": manifest must declare sar and optical arrays");
  }
  try {
    scene.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid scene data: ") + e.what());
  }
  return scene;
}

std::vector<Scene> load_scene_collection(const fs::path& root) {
  if (!fs::is_directory(root)) throw FormatError("scene collection " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<Scene> scenes;
  scenes.reserve(dirs.size());
  for (const auto& d : dirs) scenes.push_back(load_scene(d));
  return scenes;
}

void save_scene_collection(std::span<const Scene> scenes, const fs::path& root) {
  for (const auto& s : scenes) save_scene(s, root / s.id);
}

std::vector<std::vector<Scene>> split_dataset(std::span<const Scene> scenes, std::uint64_t seed,
                                              std::span<const double> fractions) {
  if (fractions.empty()) throw ConfigError("split_dataset: no fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split_dataset: fractions must lie in [0, 1]");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split_dataset: fractions must sum to 1");

  const std::size_t n = scenes.size();
  std::vector<std::size_t> sizes(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < fractions.size(); ++g) {
    const double exact = fractions[g] * static_cast<double>(n);
    sizes[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += sizes[g];
    remainders.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++sizes[remainders[i % remainders.size()].second];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }

  std::vector<std::vector<Scene>> groups(fractions.size());
  std::size_t cursor = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                     order.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[g]));
    std::sort(members.begin(), members.end());
    for (auto idx : members) groups[g].push_back(scenes[idx]);
    cursor += sizes[g];
  }
  return groups;
}

void write_label_ppm(const fs::path& path, const torch::Tensor& labels, const ClassScheme& scheme) {
  if (labels.dim() != 2) throw ShapeError("label map must be [H, W]");
  const auto map = labels.to(torch::kUInt8).contiguous();
  const int64_t h = map.size(0);
  const int64_t w = map.size(1);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  const auto* p = map.data_ptr<std::uint8_t>();
  std::vector<char> row(static_cast<std::size_t>(w) * 3);
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const std::uint8_t id = p[i * w + j];
      std::array<std::uint8_t, 3> rgb{0, 0, 0};
      if (id != kUnlabeled) {
        if (id >= scheme.size()) throw ConfigError("label id outside the class scheme");
        rgb = scheme.palette[id];
      }
      for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(j) * 3 + c] = static_cast<char>(rgb[c]);
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

void write_legend(const fs::path& path, const ClassScheme& scheme) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string());
  for (std::size_t c = 0; c < scheme.size(); ++c) {
    const auto& rgb = scheme.palette[c];
    out << c << ' ' << scheme.names[c] << ' ' << int(rgb[0]) << ' ' << int(rgb[1]) << ' ' << int(rgb[2])
        << '\n';
  }
}

void write_pgm(const fs::path& path, const torch::Tensor& map, double lo, double hi) {
  if (map.dim() != 2) throw ShapeError("pgm export expects [H, W]");
  if (!(hi > lo)) throw ConfigError("pgm export range must satisfy hi > lo");
  const auto m = map.to(torch::kFloat64).contiguous();
  const int64_t h = m.size(0);
  const int64_t w = m.size(1);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  const auto* p = m.data_ptr<double>();
  for (int64_t i = 0; i < h * w; ++i) {
    const double scaled = std::clamp((p[i] - lo) / (hi - lo), 0.0, 1.0) * 255.0;
    out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(scaled))));
  }
}

}  // namespace pixfuse
