#include "pixfuse/fusionnet.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>

#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

FusionMode parse_fusion_mode(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "pixef") return FusionMode::kPixEF;
  if (lower == "pixif") return FusionMode::kPixIF;
  if (lower == "pixlf") return FusionMode::kPixLF;
  if (lower == "mcl" || lower == "mcl-baseline") return FusionMode::kMCL;
  throw ConfigError("unknown fusion mode '" + name + "' (expected pixef, pixif, pixlf or mcl)");
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kPixEF:
      return "pixef";
    case FusionMode::kPixIF:
      return "pixif";
    case FusionMode::kPixLF:
      return "pixlf";
    case FusionMode::kMCL:
      return "mcl";
  }
  return "pixif";
}

Modality parse_modality(const std::string& name) {
  if (name == "s1s2") return Modality::kS1S2;
  if (name == "s1") return Modality::kS1;
  if (name == "s2") return Modality::kS2;
  throw ConfigError("unknown modality '" + name + "' (expected s1s2, s1 or s2)");
}

std::string to_string(Modality modality) {
  switch (modality) {
    case Modality::kS1S2:
      return "s1s2";
    case Modality::kS1:
      return "s1";
    case Modality::kS2:
      return "s2";
  }
  return "s1s2";
}

int64_t NetworkConfig::base_width() const {
  const auto w = static_cast<int64_t>(std::lround(64.0 * width_mult / 2.0)) * 2;
  return std::max<int64_t>(w, 2);
}

int64_t NetworkConfig::feature_dim() const {
  const auto d = static_cast<int64_t>(std::lround(256.0 * width_mult / 2.0)) * 2;
  return std::max<int64_t>(d, 2);
}

int64_t NetworkConfig::input_channels() const {
  switch (modality) {
    case Modality::kS1S2:
      return in_channels_sar + in_channels_opt;
    case Modality::kS1:
      return in_channels_sar;
    case Modality::kS2:
      return in_channels_opt;
  }
  return in_channels_sar + in_channels_opt;
}

void NetworkConfig::validate() const {
  if (!(width_mult > 0.0) || !std::isfinite(width_mult)) throw ConfigError("width_mult must be positive");
  if (in_channels_sar != 2) throw ConfigError("in_channels_sar must be 2 (VV, VH)");
  if (in_channels_opt < 1) throw ConfigError("in_channels_opt must be positive");
  if (proj_dim < 1) throw ConfigError("proj_dim must be positive");
  if (modality != Modality::kS1S2 && fusion_mode != FusionMode::kPixEF) {
    throw ConfigError("single-modality training is only defined for pixef");
  }
}

InputNorm InputNorm::fit(std::span<const Scene> scenes, Modality modality) {
  if (scenes.empty()) throw ConfigError("cannot fit input normalization on zero scenes");
  std::vector<torch::Tensor> parts;
  for (const auto& s : scenes) {
    std::vector<torch::Tensor> channels;
    if (modality != Modality::kS2) channels.push_back(s.sar);
    if (modality != Modality::kS1) channels.push_back(s.optical);
    auto x = torch::cat(channels, 0);
    parts.push_back(x.reshape({x.size(0), -1}).to(torch::kFloat64));
  }
  auto all = torch::cat(parts, 1);
  auto mean = all.mean(1);
  auto std = all.std(1, /*unbiased=*/false);
  std = torch::where(std > 1e-6, std, torch::ones_like(std));
  InputNorm norm;
  for (int64_t c = 0; c < mean.size(0); ++c) {
    norm.mean.push_back(static_cast<float>(mean[c].item<double>()));
    norm.stddev.push_back(static_cast<float>(std[c].item<double>()));
  }
  return norm;
}

torch::Tensor make_input(const Scene& scene, const InputNorm& norm, Modality modality) {
  std::vector<torch::Tensor> channels;
  if (modality != Modality::kS2) channels.push_back(scene.sar);
  if (modality != Modality::kS1) channels.push_back(scene.optical);
  auto x = torch::cat(channels, 0);
  if (static_cast<std::size_t>(x.size(0)) != norm.mean.size()) {
    throw ShapeError("input has " + std::to_string(x.size(0)) + " channels, normalization expects " +
                     std::to_string(norm.mean.size()));
  }
  auto mean = torch::tensor(norm.mean).view({-1, 1, 1});
  auto std = torch::tensor(norm.stddev).view({-1, 1, 1});
  return ((x - mean) / std).contiguous();
}

namespace {

nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

nn::Sequential make_stage(int64_t in, int64_t out, int64_t stride) {
  nn::Sequential stage;
  stage->push_back(BasicBlock(in, out, stride));
  stage->push_back(BasicBlock(out, out, 1));
  return stage;
}

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor global_pool(const torch::Tensor& x) { return x.mean({2, 3}); }

EncoderFeatures concat_features(const EncoderFeatures& a, const EncoderFeatures& b) {
  return {torch::cat({a.stage1, b.stage1}, 1), torch::cat({a.stage2, b.stage2}, 1),
          torch::cat({a.stage3, b.stage3}, 1)};
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(int64_t in, int64_t out, int64_t stride) {
  conv1 = register_module("conv1", conv3x3(in, out, stride));
  bn1 = register_module("bn1", nn::BatchNorm2d(out));
  conv2 = register_module("conv2", conv3x3(out, out));
  bn2 = register_module("bn2", nn::BatchNorm2d(out));
  if (stride != 1 || in != out) {
    downsample = register_module(
        "downsample", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                                     nn::BatchNorm2d(out)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1(conv1(x)));
  out = bn2(conv2(out));
  auto identity = downsample ? downsample->forward(x) : x;
  return torch::relu(out + identity);
}

EncoderImpl::EncoderImpl(int64_t in_channels, int64_t width) : width(width) {
  stem = register_module("stem", nn::Conv2d(nn::Conv2dOptions(in_channels, width, 7).stride(2).padding(3).bias(false)));
  stem_bn = register_module("stem_bn", nn::BatchNorm2d(width));
  layer1 = register_module("layer1", make_stage(width, width, 1));
  layer2 = register_module("layer2", make_stage(width, 2 * width, 2));
  layer3 = register_module("layer3", make_stage(2 * width, 4 * width, 2));
}

EncoderFeatures EncoderImpl::forward(const torch::Tensor& x) {
  auto s0 = torch::relu(stem_bn(stem(x)));
  EncoderFeatures f;
  f.stage1 = layer1->forward(s0);
  f.stage2 = layer2->forward(f.stage1);
  f.stage3 = layer3->forward(f.stage2);
  return f;
}

DecoderBlockImpl::DecoderBlockImpl(int64_t in, int64_t out) {
  conv = register_module("conv", conv3x3(in, out));
  bn = register_module("bn", nn::BatchNorm2d(out));
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& x) { return upsample2x(torch::relu(bn(conv(x)))); }

DecoderImpl::DecoderImpl(int64_t width) {
  block3 = register_module("block3", DecoderBlock(4 * width, 2 * width));
  block2 = register_module("block2", DecoderBlock(4 * width, width));
  block1 = register_module("block1", DecoderBlock(2 * width, width));
}

torch::Tensor DecoderImpl::forward(const EncoderFeatures& f) {
  auto x = block3(f.stage3);
  x = block2(torch::cat({x, f.stage2}, 1));
  return block1(torch::cat({x, f.stage1}, 1));
}

FusionNetImpl::FusionNetImpl(const NetworkConfig& config) : config_(config) {
  config_.validate();
  const int64_t c = config_.base_width();
  const int64_t d = config_.feature_dim();
  const int64_t p = config_.proj_dim;
  const int64_t sar_in = config_.in_channels_sar;
  const int64_t opt_in = config_.in_channels_opt;

  switch (config_.fusion_mode) {
    case FusionMode::kPixEF:
      encoder_ = register_module("encoder", Encoder(config_.input_channels(), c));
      decoder_ = register_module("decoder", Decoder(c));
      projector_ = register_module("projector", nn::Conv2d(nn::Conv2dOptions(c, d, 1)));
      head_ = register_module("head", nn::Linear(4 * c, p));
      break;
    case FusionMode::kPixIF:
    case FusionMode::kMCL:
      sar_encoder_ = register_module("sar_encoder", Encoder(sar_in, c / 2));
      opt_encoder_ = register_module("opt_encoder", Encoder(opt_in, c / 2));
      decoder_ = register_module("decoder", Decoder(c));
      projector_ = register_module("projector", nn::Conv2d(nn::Conv2dOptions(c, d, 1)));
      head_sar_ = register_module("head_sar", nn::Linear(2 * c, p));
      head_opt_ = register_module("head_opt", nn::Linear(2 * c, p));
      head_joint_ = register_module("head_joint", nn::Linear(4 * c, p));
      break;
    case FusionMode::kPixLF:
      sar_encoder_ = register_module("sar_encoder", Encoder(sar_in, c / 2));
      sar_decoder_ = register_module("sar_decoder", Decoder(c / 2));
      sar_projector_ = register_module("sar_projector", nn::Conv2d(nn::Conv2dOptions(c / 2, d / 2, 1)));
      opt_encoder_ = register_module("opt_encoder", Encoder(opt_in, c / 2));
      opt_decoder_ = register_module("opt_decoder", Decoder(c / 2));
      opt_projector_ = register_module("opt_projector", nn::Conv2d(nn::Conv2dOptions(c / 2, d / 2, 1)));
      head_sar_ = register_module("head_sar", nn::Linear(2 * c, p));
      head_opt_ = register_module("head_opt", nn::Linear(2 * c, p));
      break;
  }
}

torch::Tensor FusionNetImpl::split_sar(const torch::Tensor& input) const {
  return input.narrow(1, 0, config_.in_channels_sar);
}

torch::Tensor FusionNetImpl::split_opt(const torch::Tensor& input) const {
  return input.narrow(1, config_.in_channels_sar, config_.in_channels_opt);
}

NetworkOutput FusionNetImpl::forward(const torch::Tensor& input, bool with_dense, bool with_global) {
  if (input.dim() != 4) throw ShapeError("network input must be [B, C, H, W]");
  if (input.size(1) != config_.input_channels()) {
    throw ShapeError("network expects " + std::to_string(config_.input_channels()) + " input channels, got " +
                     std::to_string(input.size(1)));
  }
  if (input.size(2) % 8 != 0 || input.size(3) % 8 != 0 || input.size(2) < 8 || input.size(3) < 8) {
    throw ShapeError("network input height and width must be positive multiples of 8");
  }

  NetworkOutput out;
  switch (config_.fusion_mode) {
    case FusionMode::kPixEF: {
      auto f = encoder_(input);
      if (with_dense) out.dense = projector_(decoder_(f));
      if (with_global) out.global = head_(global_pool(f.stage3));
      break;
    }
    case FusionMode::kPixIF:
    case FusionMode::kMCL: {
      auto fs = sar_encoder_(split_sar(input));
      auto fo = opt_encoder_(split_opt(input));
      if (with_dense) out.dense = projector_(decoder_(concat_features(fs, fo)));
      if (with_global) {
        auto ps = global_pool(fs.stage3);
        auto po = global_pool(fo.stage3);
        out.global_sar = head_sar_(ps);
        out.global_opt = head_opt_(po);
        out.global_joint = head_joint_(torch::cat({ps, po}, 1));
      }
      break;
    }
    case FusionMode::kPixLF: {
      auto fs = sar_encoder_(split_sar(input));
      auto fo = opt_encoder_(split_opt(input));
      if (with_dense) {
        out.dense_sar = sar_projector_(sar_decoder_(fs));
        out.dense_opt = opt_projector_(opt_decoder_(fo));
        out.dense = torch::cat({out.dense_sar, out.dense_opt}, 1);
      }
      if (with_global) {
        out.global_sar = head_sar_(global_pool(fs.stage3));
        out.global_opt = head_opt_(global_pool(fo.stage3));
      }
      break;
    }
  }
  return out;
}

torch::Tensor FusionNetImpl::forward_probe(const torch::Tensor& input) {
  if (config_.fusion_mode != FusionMode::kMCL) return forward_dense(input);
  if (input.dim() != 4 || input.size(1) != config_.input_channels()) throw ShapeError("bad probe input shape");
  auto f = concat_features(sar_encoder_(split_sar(input)), opt_encoder_(split_opt(input)));
  const std::vector<int64_t> size{input.size(2), input.size(3)};
  auto up = [&](const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false));
  };
  return torch::cat({up(f.stage1), up(f.stage2), up(f.stage3)}, 1);
}

int64_t FusionNetImpl::probe_dim() const {
  if (config_.fusion_mode == FusionMode::kMCL) return 7 * config_.base_width();
  return config_.feature_dim();
}

std::vector<torch::Tensor> FusionNetImpl::encoder_parameters() const {
  std::vector<torch::Tensor> params;
  for (const auto& item : named_parameters()) {
    if (item.key().find("encoder.") != std::string::npos) params.push_back(item.value());
  }
  return params;
}

std::vector<torch::Tensor> FusionNetImpl::non_encoder_parameters() const {
  std::vector<torch::Tensor> params;
  for (const auto& item : named_parameters()) {
    if (item.key().find("encoder.") == std::string::npos) params.push_back(item.value());
  }
  return params;
}

FusionNet build_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  torch::manual_seed(seed);
  return FusionNet(config);
}

int64_t count_parameters(const torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace pixfuse
