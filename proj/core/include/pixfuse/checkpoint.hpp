#pragma once

#include <cstdint>
#include <filesystem>

#include "pixfuse/fusionnet.hpp"

namespace pixfuse {

// On disk: <dir>/manifest.json holding the network config, seed, epoch,
// input normalization and the tensor list, plus <dir>/tensors/<name>.bin,
// one raw little-endian f32 blob per named parameter or normalization
// buffer. Names are the module paths, e.g. "decoder.block3.conv.weight".
struct Checkpoint {
  NetworkConfig config;
  InputNorm norm;
  std::uint64_t seed = 0;
  int epoch = 0;
  FusionNet net{nullptr};
};

void save_checkpoint(const std::filesystem::path& dir, FusionNet& net, const InputNorm& norm,
                     std::uint64_t seed, int epoch);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace pixfuse
