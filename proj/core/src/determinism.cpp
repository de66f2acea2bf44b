#include "pixfuse/determinism.hpp"

#include <ATen/Context.h>
#include <ATen/Parallel.h>

#include <cstdlib>
#include <string_view>

namespace pixfuse {

bool deterministic_mode_requested() {
  const char* value = std::getenv("PIXFUSE_DETERMINISTIC");
  return value != nullptr && std::string_view(value) == "1";
}

void configure_runtime(bool deterministic, int workers) {
  if (deterministic) {
    at::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/true);
  } else if (workers > 0) {
    at::set_num_threads(workers);
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace pixfuse
