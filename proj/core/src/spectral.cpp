#include "pixfuse/spectral.hpp"

#include <torch/torch.h>

#include <iostream>

namespace pixfuse {

torch::Tensor normalized_difference(const torch::Tensor& a, const torch::Tensor& b, int64_t* zero_count) {
  auto num = a - b;
  auto den = a + b;
  auto zero = den == 0;
  if (zero_count != nullptr) *zero_count += zero.sum().item<int64_t>();
  return torch::where(zero, torch::zeros_like(num), num / torch::where(zero, torch::ones_like(den), den));
}

IndexMaps compute_indices(const Scene& scene) {
  scene.band_map.validate(scene.optical.size(0));
  const auto& bm = scene.band_map;
  const auto& opt = scene.optical;
  auto blue = opt[bm.blue];
  auto green = opt[bm.green];
  auto red = opt[bm.red];
  auto nir = opt[bm.nir];
  auto swir = opt[bm.swir];

  IndexMaps maps;
  int64_t zeros = 0;
  maps.ndvi = normalized_difference(nir, red, &zeros);
  maps.ndwi = normalized_difference(green, nir, &zeros);
  maps.bi = normalized_difference(swir + red, nir + blue, &zeros);
  maps.bs = (scene.sar[0] + scene.sar[1]) / 2.0F;
  maps.zero_denominators = zeros;
  if (zeros > 0) {
    std::cerr << "[spectral] scene " << scene.id << ": " << zeros
              << " index pixels with zero denominator set to 0\n";
  }
  return maps;
}

}  // namespace pixfuse
