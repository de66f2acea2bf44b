#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pixfuse/augment.hpp"
#include "pixfuse/cluster.hpp"
#include "pixfuse/contrastive.hpp"
#include "pixfuse/fusionnet.hpp"
#include "pixfuse/pseudolabel.hpp"

namespace pixfuse {

enum class Phase { kPretrain, kLinear, kSelfTrain1, kSelfTrain2 };
enum class OptimizerKind { kAdam, kSgd };
enum class ScheduleKind { kStep, kConstant };

std::string to_string(Phase phase);
std::string to_string(OptimizerKind kind);
std::string to_string(ScheduleKind kind);
OptimizerKind parse_optimizer(const std::string& name);
ScheduleKind parse_schedule(const std::string& name);

struct TrainConfig {
  Phase phase = Phase::kPretrain;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double lr = 3e-4;
  // Learning rate of encoder parameters when the whole network trains;
  // negative means "same as lr".
  double encoder_lr = -1.0;
  double weight_decay = 0.0;
  double momentum = 0.9;  // SGD momentum or Adam beta1
  int batch_size = 16;
  int epochs = 50;
  ScheduleKind schedule = ScheduleKind::kConstant;
  double gamma = 0.5;
  std::vector<double> milestones{0.6, 0.85};  // fractions of `epochs`
  int checkpoint_interval = 0;                // epochs; 0 writes only the final checkpoint

  // Multiplier applied to the base rate at the start of `epoch` (0-based).
  double lr_factor(int epoch) const;
  void validate() const;
};

struct DataConfig {
  std::string path;  // scene collection directory; empty means synthetic
  int synthetic_count = 64;
  int tile_size = 64;
  double cloud_fraction = 0.0;
  std::string class_scheme = "six_class";
};

struct EvalConfig {
  int probe_scenes = 20;     // labelled scenes the linear probe trains on
  int held_out_scenes = 20;  // scenes its metrics are reported on
};

struct TrainPhases {
  TrainConfig pretrain;
  TrainConfig linear;
  TrainConfig selftrain1;
  TrainConfig selftrain2;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 0;
  bool deterministic = false;
  DataConfig data;
  AugmentConfig augment;
  PseudoLabelConfig pseudolabel;  // also holds the cluster section
  NetworkConfig network;
  LossConfig loss;
  TrainPhases train;
  EvalConfig eval;

  void validate() const;

  // Small batches and short runs sized for a CPU workstation.
  static RunConfig desk();
  // The settings reported for the full-size experiments.
  static RunConfig full();
  static RunConfig preset(const std::string& name);
};

// Sections data, augment, cluster, pseudolabel, network, loss, train (with
// subsections pretrain, linear, selftrain1, selftrain2) and eval, plus the
// top-level keys seed, workers, deterministic and preset. Keys left out keep
// the preset's value; unknown keys are a ConfigError.
RunConfig parse_config_json(const std::string& text);
// The same schema written as TOML tables ([section] / [train.pretrain]) with
// strings, numbers, booleans and flat arrays.
RunConfig parse_config_toml(const std::string& text);
// Dispatches on the extension (.toml, otherwise JSON).
RunConfig load_config(const std::filesystem::path& path);

std::string config_to_json(const RunConfig& config);

}  // namespace pixfuse
