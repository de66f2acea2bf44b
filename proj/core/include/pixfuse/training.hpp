#pragma once

#include <torch/nn.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pixfuse/augment.hpp"
#include "pixfuse/config.hpp"
#include "pixfuse/contrastive.hpp"
#include "pixfuse/fusionnet.hpp"
#include "pixfuse/metrics.hpp"
#include "pixfuse/pseudolabel.hpp"
#include "pixfuse/scenedata.hpp"

namespace pixfuse {

// A scene ready for contrastive pretraining: normalized input plus its
// cached superpixels (computed once from the raw optical bands).
struct PreparedScene {
  torch::Tensor input;  // [C, H, W]
  SuperpixelMap superpixels;
  std::vector<int64_t> segment_sizes;
};

std::vector<PreparedScene> prepare_scenes(std::span<const Scene> scenes, const InputNorm& norm, Modality modality,
                                          const LossConfig& loss);

struct ContrastiveBatch {
  torch::Tensor view1;  // I1, [B, C, H, W]
  torch::Tensor view2;  // T(I1)
  std::vector<ViewTransform> transforms;
  std::vector<PoolingPlan> plans;  // in the frame of view2
};

ContrastiveBatch make_contrastive_batch(std::span<const PreparedScene> scenes, std::span<const std::size_t> indices,
                                        std::span<const ViewTransform> transforms, const LossConfig& loss);
ContrastiveBatch sample_contrastive_batch(std::span<const PreparedScene> scenes, std::span<const std::size_t> indices,
                                          const AugmentConfig& augment, const LossConfig& loss, std::mt19937_64& rng);

// Both views through the network, T replayed on the first view's dense
// features, superpixel pooling and the mode's composite loss. Images whose
// plan is empty drop out of the pixel term; DegenerateBatchError if none
// remain.
LossTerms contrastive_loss(FusionNet& net, const ContrastiveBatch& batch, const LossConfig& loss);

struct PretrainOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  bool log = true;
};

struct PretrainResult {
  FusionNet net{nullptr};
  InputNorm norm;
  std::vector<double> epoch_loss;
  int skipped_batches = 0;
};

PretrainResult pretrain(std::span<const Scene> scenes, const RunConfig& config, const PretrainOptions& options = {});

// Per-pixel linear classifier on standardized features. The standardization
// statistics are buffers fixed when the head is fitted; only the linear map
// trains.
struct LinearHeadImpl : torch::nn::Module {
  LinearHeadImpl(int64_t feature_dim, int64_t num_classes);
  // [N, D] -> [N, C] or [B, D, H, W] -> [B, C, H, W].
  torch::Tensor forward(const torch::Tensor& features);

  torch::nn::Linear linear{nullptr};
  torch::Tensor mean, stddev;
};
TORCH_MODULE(LinearHead);

// Frozen-backbone features for a set of scenes, [D, H, W] each, computed in
// eval mode without gradients. By default these are the probe features
// (forward_probe); `decoder_readout` takes the decoder/projector output
// instead, which for MCL is the readout used in self-training.
std::vector<torch::Tensor> extract_features(FusionNet& net, const InputNorm& norm, std::span<const Scene> scenes,
                                            int batch_size = 8, bool decoder_readout = false);

// Cross-entropy on pixels whose label is not kUnlabeled; scenes are drawn in
// batches of config.batch_size. Labels are uint8 [H, W].
LinearHead train_linear_head(std::span<const torch::Tensor> features, std::span<const torch::Tensor> labels,
                             int num_classes, const TrainConfig& config, std::uint64_t seed,
                             std::vector<double>* epoch_loss = nullptr);

torch::Tensor predict_labels(LinearHead& head, const torch::Tensor& features);  // uint8 [H, W]

struct ProbeResult {
  LinearHead head{nullptr};
  std::vector<double> epoch_loss;
  EvalReport train_report;
  EvalReport held_out_report;
  std::vector<bool> trained_classes;
};

// AA/mIoU on `held_out`; classes never seen in training are warned about and
// left out of both means.
ProbeResult linear_probe(FusionNet& net, const InputNorm& norm, std::span<const Scene> train,
                         std::span<const Scene> held_out, const TrainConfig& config, const ClassScheme& scheme,
                         std::uint64_t seed);

struct SelfTrainResult {
  FusionNet net{nullptr};
  LinearHead head{nullptr};
  std::vector<SparseLabelMap> pseudo_labels;  // after sparsify
  std::vector<torch::Tensor> step1_labels;    // dense predictions after step 1
  std::vector<torch::Tensor> step2_labels;    // after fine-tuning
  std::optional<EvalReport> step1_report;     // when every scene has gt
  std::optional<EvalReport> step2_report;
  std::vector<double> step1_loss;  // per epoch
  std::vector<double> step2_loss;
};

// Step 1 trains a linear head on sparse pseudo labels over frozen features
// and predicts dense labels; step 2 fine-tunes backbone and head on them.
SelfTrainResult selftrain(FusionNet net, const InputNorm& norm, std::span<const Scene> scenes, const RunConfig& config,
                          const ClassScheme& scheme, bool log = true);

// Appends "epoch,phase,loss,aa,miou" rows, writing the header on creation.
void append_metrics_row(const std::filesystem::path& csv, int epoch, Phase phase, double loss,
                        std::optional<double> aa, std::optional<double> miou);

// Gradient verification by central differences.
struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  int samples = 0;
  bool passed = false;
};

GradCheckReport grad_check(const std::vector<torch::Tensor>& params, const std::function<torch::Tensor()>& loss_fn,
                           int samples, double eps, double tol, std::uint64_t seed, double floor = 1e-6);

// composite loss of `mode` on a 2-scene 16x16 synthetic batch at width 0.125
// in float64.
GradCheckReport grad_check_composite(FusionMode mode, std::uint64_t seed, double eps = 1e-6, int samples = 200,
                                     double tol = 1e-4);

}  // namespace pixfuse
