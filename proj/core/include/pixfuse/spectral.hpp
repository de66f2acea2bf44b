#pragma once

#include <torch/types.h>

#include <cstdint>

#include "pixfuse/scenedata.hpp"

namespace pixfuse {

// Per-pixel index images, each float32 [H, W].
struct IndexMaps {
  torch::Tensor ndvi;  // (nir - red) / (nir + red)
  torch::Tensor ndwi;  // (green - nir) / (green + nir)
  torch::Tensor bi;    // ((swir + red) - (nir + blue)) / ((swir + red) + (nir + blue))
  torch::Tensor bs;    // (VV_dB + VH_dB) / 2
  int64_t zero_denominators = 0;  // ratio pixels forced to 0
};

// Normalized difference (a - b) / (a + b); 0 where a + b == 0.
torch::Tensor normalized_difference(const torch::Tensor& a, const torch::Tensor& b,
                                    int64_t* zero_count = nullptr);

IndexMaps compute_indices(const Scene& scene);

}  // namespace pixfuse
