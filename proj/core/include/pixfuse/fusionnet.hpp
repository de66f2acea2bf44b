#pragma once

#include <torch/nn.h>

#include <cstdint>
#include <string>
#include <vector>

#include "pixfuse/scenedata.hpp"

namespace pixfuse {

enum class FusionMode { kPixEF, kPixIF, kPixLF, kMCL };
// Which sensors feed the network; single-sensor runs use early fusion.
enum class Modality { kS1S2, kS1, kS2 };

FusionMode parse_fusion_mode(const std::string& name);
std::string to_string(FusionMode mode);
Modality parse_modality(const std::string& name);
std::string to_string(Modality modality);

struct NetworkConfig {
  FusionMode fusion_mode = FusionMode::kPixIF;
  double width_mult = 0.25;
  int in_channels_sar = 2;
  int in_channels_opt = 5;
  int proj_dim = 64;
  Modality modality = Modality::kS1S2;

  // Stem/first-stage width, rounded to an even count so the intermediate
  // fusion groups split it exactly in half.
  int64_t base_width() const;
  int64_t feature_dim() const;  // 256 * width_mult, even
  int64_t input_channels() const;
  void validate() const;
};

// Per-input-channel normalization (SAR channels first, then optical).
struct InputNorm {
  std::vector<float> mean;
  std::vector<float> stddev;

  static InputNorm fit(std::span<const Scene> scenes, Modality modality);
};

// Stacks the selected modalities of a scene into [channels, H, W] and
// normalizes them.
torch::Tensor make_input(const Scene& scene, const InputNorm& norm, Modality modality);

struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(int64_t in, int64_t out, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

struct EncoderFeatures {
  torch::Tensor stage1;  // [B, c, H/2, W/2]
  torch::Tensor stage2;  // [B, 2c, H/4, W/4]
  torch::Tensor stage3;  // [B, 4c, H/8, W/8]
};

// ResNet-18 stem and its first three residual stages (no max-pool, so the
// encoder halves the resolution exactly three times).
struct EncoderImpl : torch::nn::Module {
  EncoderImpl(int64_t in_channels, int64_t width);
  EncoderFeatures forward(const torch::Tensor& x);

  int64_t width;
  torch::nn::Conv2d stem{nullptr};
  torch::nn::BatchNorm2d stem_bn{nullptr};
  torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr};
};
TORCH_MODULE(Encoder);

// Conv -> BN -> ReLU -> 2x upsampling.
struct DecoderBlockImpl : torch::nn::Module {
  DecoderBlockImpl(int64_t in, int64_t out);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
};
TORCH_MODULE(DecoderBlock);

// Three decoder blocks with U-Net skip concatenation back to full
// resolution; output has `width` channels.
struct DecoderImpl : torch::nn::Module {
  explicit DecoderImpl(int64_t width);
  torch::Tensor forward(const EncoderFeatures& f);

  DecoderBlock block3{nullptr}, block2{nullptr}, block1{nullptr};
};
TORCH_MODULE(Decoder);

struct NetworkOutput {
  torch::Tensor dense;         // [B, feature_dim, H, W], the fused representation
  torch::Tensor dense_sar;     // PixLF only: SAR branch, [B, feature_dim/2, H, W]
  torch::Tensor dense_opt;     // PixLF only: optical branch
  torch::Tensor global;        // PixEF: E_e
  torch::Tensor global_sar;    // PixIF/PixLF/MCL: SAR encoder embedding
  torch::Tensor global_opt;    // PixIF/PixLF/MCL: optical encoder embedding
  torch::Tensor global_joint;  // PixIF/MCL: both groups through the shared head
};

// All four architectures behind one module:
//   PixEF : one ResUnet on the concatenated input.
//   PixIF : SAR and optical encoder groups of half width, concatenated at
//           the bottleneck and every skip into one shared decoder.
//   PixLF : two independent half-width ResUnets, each with its own
//           projector; the fused map is their concatenation.
//   MCL   : the PixIF layout trained with image-level terms only; its
//           untrained decoder and projector are the readout self-training
//           fine-tunes.
class FusionNetImpl : public torch::nn::Module {
 public:
  explicit FusionNetImpl(const NetworkConfig& config);

  NetworkOutput forward(const torch::Tensor& input, bool with_dense = true, bool with_global = true);
  torch::Tensor forward_dense(const torch::Tensor& input) { return forward(input, true, false).dense; }
  NetworkOutput forward_global(const torch::Tensor& input) { return forward(input, false, true); }
  // Features a linear probe reads: the fused dense map, except for MCL,
  // which was never trained densely and instead exposes its three encoder
  // stages upsampled to full resolution and concatenated.
  torch::Tensor forward_probe(const torch::Tensor& input);
  int64_t probe_dim() const;

  const NetworkConfig& config() const { return config_; }

  // Parameters of every encoder (the "pre-trained encoder" group) and the rest.
  std::vector<torch::Tensor> encoder_parameters() const;
  std::vector<torch::Tensor> non_encoder_parameters() const;

 private:
  torch::Tensor split_sar(const torch::Tensor& input) const;
  torch::Tensor split_opt(const torch::Tensor& input) const;

  NetworkConfig config_;
  Encoder encoder_{nullptr}, sar_encoder_{nullptr}, opt_encoder_{nullptr};
  Decoder decoder_{nullptr}, sar_decoder_{nullptr}, opt_decoder_{nullptr};
  torch::nn::Conv2d projector_{nullptr}, sar_projector_{nullptr}, opt_projector_{nullptr};
  torch::nn::Linear head_{nullptr}, head_sar_{nullptr}, head_opt_{nullptr}, head_joint_{nullptr};
};
TORCH_MODULE(FusionNet);

// Deterministic construction: seeds libtorch's global generator first.
FusionNet build_network(const NetworkConfig& config, std::uint64_t seed);

int64_t count_parameters(const torch::nn::Module& module);

}  // namespace pixfuse
