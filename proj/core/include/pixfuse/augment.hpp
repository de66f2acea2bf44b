#pragma once

#include <torch/types.h>

#include <array>
#include <cstdint>
#include <random>
#include <string>

namespace pixfuse {

// Flip-then-shift transform applied to the second view. dx moves content
// towards larger column indices, dy towards larger row indices.
struct ShiftSpec {
  int dx = 0;
  int dy = 0;
  bool flip_h = false;  // mirror columns
  bool flip_v = false;  // mirror rows

  bool is_identity() const { return dx == 0 && dy == 0 && !flip_h && !flip_v; }
  bool operator==(const ShiftSpec&) const = default;
};

ShiftSpec sample_shift(std::mt19937_64& rng, int max_shift, bool enable_flips);

// out[..., i, j] = flipped(x)[..., i - dy, j - dx] where that index exists,
// `fill` otherwise. Works on any [*, H, W] tensor and is differentiable, so
// the same call transforms inputs and replays the transform on features.
torch::Tensor apply_shift(const torch::Tensor& x, const ShiftSpec& spec, double fill = 0.0);

// Boolean [H, W]: true where apply_shift did not introduce fill pixels.
torch::Tensor overlap_mask(const ShiftSpec& spec, int64_t height, int64_t width);

// Rotation / scale / shear / translation about the tile centre.
struct AffineParams {
  double rotation = 0.0;  // radians
  double scale = 1.0;
  double shear = 0.0;     // radians, x-shear
  double tx = 0.0;        // pixels
  double ty = 0.0;
};

// Forward map in pixel coordinates relative to the tile centre:
// p_out = matrix * p_in + translation.
struct AffineTransform {
  std::array<double, 4> matrix{1.0, 0.0, 0.0, 1.0};  // row-major 2x2
  std::array<double, 2> translation{0.0, 0.0};       // (x, y)

  static AffineTransform from_params(const AffineParams& params);
  AffineTransform inverse() const;
  double determinant() const { return matrix[0] * matrix[3] - matrix[1] * matrix[2]; }
};

AffineParams sample_affine(std::mt19937_64& rng, int max_shift);

// Bilinear resampling of x [*, H, W]; pixels mapped from outside the tile
// take `fill`. Throws ConfigError on a singular matrix.
torch::Tensor apply_affine(const torch::Tensor& x, const AffineTransform& transform, double fill = 0.0,
                           bool nearest = false);
// Boolean [H, W]: true where every bilinear tap lies inside the source tile.
torch::Tensor affine_valid_mask(const AffineTransform& transform, int64_t height, int64_t width);

struct PhotometricParams {
  double blur_sigma = 0.0;  // pixels; 0 disables
  double noise_std = 0.0;   // additive Gaussian in normalized units
  std::uint64_t noise_seed = 0;
};

PhotometricParams sample_photometric(std::mt19937_64& rng);

// Separable Gaussian blur (replicate border) then additive noise. Geometry
// is untouched, so features need no replay.
torch::Tensor apply_photometric(const torch::Tensor& x, const PhotometricParams& params);

enum class AugmentMode { kShift, kAffine, kPhotometric };

AugmentMode parse_augment_mode(const std::string& name);
std::string to_string(AugmentMode mode);

struct AugmentConfig {
  int max_shift = 16;
  bool enable_flips = true;
  AugmentMode mode = AugmentMode::kShift;
};

// The transform T that produces the second view of one scene, recorded so
// it can be replayed on the first branch's features.
struct ViewTransform {
  AugmentMode mode = AugmentMode::kShift;
  ShiftSpec shift;
  AffineTransform affine;
  PhotometricParams photometric;

  static ViewTransform sample(std::mt19937_64& rng, const AugmentConfig& config);
  static ViewTransform from_shift(const ShiftSpec& spec);

  // I2 = T(I1).
  torch::Tensor apply_to_input(const torch::Tensor& input, double fill = 0.0) const;
  // v1 -> T(v1): the geometric part only.
  torch::Tensor replay_on_features(const torch::Tensor& features, double fill = 0.0) const;
  // Integer maps (segment ids): nearest-neighbour replay, `fill` outside.
  torch::Tensor replay_on_labels(const torch::Tensor& labels, int64_t fill = -1) const;
  // Where both aligned views hold valid pixels.
  torch::Tensor valid_mask(int64_t height, int64_t width) const;
};

}  // namespace pixfuse
