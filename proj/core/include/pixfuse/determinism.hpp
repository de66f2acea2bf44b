#pragma once

#include <cstdint>

namespace pixfuse {

// True when PIXFUSE_DETERMINISTIC=1 is set in the environment.
bool deterministic_mode_requested();

// Configures libtorch for reproducible runs: single intra-op thread and
// deterministic kernels when `deterministic` is set, otherwise `workers`
// threads (0 keeps the library default).
void configure_runtime(bool deterministic, int workers = 0);

// Mixes a base seed with a stream index (splitmix64) so that independent
// per-scene or per-phase generators never share a sequence.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace pixfuse
