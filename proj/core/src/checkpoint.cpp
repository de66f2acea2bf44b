#include "pixfuse/checkpoint.hpp"

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <fstream>
#include <map>

#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

bool skip_buffer(const std::string& name) { return name.ends_with("num_batches_tracked"); }

json config_to_json(const NetworkConfig& c) {
  return {{"fusion_mode", to_string(c.fusion_mode)},
          {"width_mult", c.width_mult},
          {"in_channels_sar", c.in_channels_sar},
          {"in_channels_opt", c.in_channels_opt},
          {"proj_dim", c.proj_dim},
          {"modality", to_string(c.modality)},
          {"feature_dim", c.feature_dim()}};
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig c;
  c.fusion_mode = parse_fusion_mode(j.at("fusion_mode").get<std::string>());
  c.width_mult = j.at("width_mult").get<double>();
  c.in_channels_sar = j.at("in_channels_sar").get<int>();
  c.in_channels_opt = j.at("in_channels_opt").get<int>();
  c.proj_dim = j.at("proj_dim").get<int>();
  c.modality = parse_modality(j.at("modality").get<std::string>());
  return c;
}

}  // namespace

void save_checkpoint(const fs::path& dir, FusionNet& net, const InputNorm& norm, std::uint64_t seed, int epoch) {
  fs::create_directories(dir / "tensors");
  json tensors = json::array();
  auto emit = [&](const std::string& name, const torch::Tensor& t, const char* kind) {
    const auto file = "tensors/" + name + ".bin";
    write_raw(dir / file, t.detach().to(torch::kFloat32).contiguous());
    tensors.push_back({{"name", name}, {"kind", kind}, {"shape", t.sizes().vec()}, {"file", file}});
  };
  torch::NoGradGuard no_grad;
  for (const auto& item : net->named_parameters()) emit(item.key(), item.value(), "parameter");
  for (const auto& item : net->named_buffers()) {
    if (!skip_buffer(item.key())) emit(item.key(), item.value(), "buffer");
  }
  json manifest{{"format_version", kCheckpointVersion},
                {"config", config_to_json(net->config())},
                {"seed", seed},
                {"epoch", epoch},
                {"input_norm", {{"mean", norm.mean}, {"std", norm.stddev}}},
                {"tensors", tensors}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw FormatError("missing checkpoint manifest in " + dir.string());
  Checkpoint ckpt;
  try {
    const auto manifest = json::parse(in);
    if (manifest.at("format_version").get<int>() != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint format_version");
    }
    ckpt.config = config_from_json(manifest.at("config"));
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    ckpt.epoch = manifest.at("epoch").get<int>();
    ckpt.norm.mean = manifest.at("input_norm").at("mean").get<std::vector<float>>();
    ckpt.norm.stddev = manifest.at("input_norm").at("std").get<std::vector<float>>();
    ckpt.net = build_network(ckpt.config, ckpt.seed);

    std::map<std::string, torch::Tensor> targets;
    for (const auto& item : ckpt.net->named_parameters()) targets[item.key()] = item.value();
    for (const auto& item : ckpt.net->named_buffers()) {
      if (!skip_buffer(item.key())) targets[item.key()] = item.value();
    }
    torch::NoGradGuard no_grad;
    std::size_t loaded = 0;
    for (const auto& entry : manifest.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      auto it = targets.find(name);
      if (it == targets.end()) throw FormatError("checkpoint tensor '" + name + "' not in the network");
      const auto shape = entry.at("shape").get<std::vector<int64_t>>();
      if (it->second.sizes().vec() != shape) throw FormatError("checkpoint tensor '" + name + "' has wrong shape");
      auto data = read_raw(dir / entry.at("file").get<std::string>(), torch::kFloat32, shape);
      it->second.copy_(data);
      ++loaded;
    }
    if (loaded != targets.size()) throw FormatError("checkpoint is missing network tensors");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  return ckpt;
}

}  // namespace pixfuse
