#include "pixfuse/augment.hpp"

#include <torch/torch.h>

#include <cmath>

#include "pixfuse/errors.hpp"

namespace pixfuse {
namespace F = torch::nn::functional;

ShiftSpec sample_shift(std::mt19937_64& rng, int max_shift, bool enable_flips) {
  ShiftSpec spec;
  if (max_shift > 0) {
    std::uniform_int_distribution<int> offset(-max_shift, max_shift);
    spec.dx = offset(rng);
    spec.dy = offset(rng);
  }
  if (enable_flips) {
    std::bernoulli_distribution coin(0.5);
    spec.flip_h = coin(rng);
    spec.flip_v = coin(rng);
  }
  return spec;
}

torch::Tensor apply_shift(const torch::Tensor& x, const ShiftSpec& spec, double fill) {
  if (x.dim() < 2) throw ShapeError("apply_shift expects a [*, H, W] tensor");
  const int64_t h = x.size(-2);
  const int64_t w = x.size(-1);
  if (std::abs(spec.dx) >= w || std::abs(spec.dy) >= h) {
    throw ConfigError("shift (" + std::to_string(spec.dx) + ", " + std::to_string(spec.dy) +
                      ") out of range for a " + std::to_string(h) + "x" + std::to_string(w) + " tile");
  }
  auto out = x;
  if (spec.flip_h) out = out.flip({-1});
  if (spec.flip_v) out = out.flip({-2});
  if (spec.dx == 0 && spec.dy == 0) return spec.flip_h || spec.flip_v ? out : out.clone();
  // Negative padding crops, so pad-one-side/crop-the-other is a pure shift.
  return torch::constant_pad_nd(out, {spec.dx, -spec.dx, spec.dy, -spec.dy}, fill);
}

torch::Tensor overlap_mask(const ShiftSpec& spec, int64_t height, int64_t width) {
  auto ones = torch::ones({height, width}, torch::kFloat32);
  return apply_shift(ones, spec, 0.0) > 0.5F;
}

AffineTransform AffineTransform::from_params(const AffineParams& p) {
  const double c = std::cos(p.rotation);
  const double s = std::sin(p.rotation);
  const double k = std::tan(p.shear);
  // rotation * shear * scale
  AffineTransform t;
  t.matrix = {p.scale * c, p.scale * (c * k - s), p.scale * s, p.scale * (s * k + c)};
  t.translation = {p.tx, p.ty};
  return t;
}

AffineTransform AffineTransform::inverse() const {
  const double det = determinant();
  if (std::abs(det) < 1e-12) throw ConfigError("singular affine transform");
  AffineTransform inv;
  inv.matrix = {matrix[3] / det, -matrix[1] / det, -matrix[2] / det, matrix[0] / det};
  inv.translation = {-(inv.matrix[0] * translation[0] + inv.matrix[1] * translation[1]),
                     -(inv.matrix[2] * translation[0] + inv.matrix[3] * translation[1])};
  return inv;
}

AffineParams sample_affine(std::mt19937_64& rng, int max_shift) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AffineParams p;
  p.rotation = 0.3 * u(rng);
  p.scale = 1.0 + 0.1 * u(rng);
  p.shear = 0.15 * u(rng);
  p.tx = max_shift * u(rng);
  p.ty = max_shift * u(rng);
  return p;
}

namespace {

// Sampling grid in grid_sample's normalized coordinates (align_corners):
// for every output pixel, the source location under the inverse map.
torch::Tensor sampling_grid(const AffineTransform& transform, int64_t h, int64_t w, torch::ScalarType dtype) {
  const auto inv = transform.inverse();
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto ys = torch::arange(h, opts) - cy;
  auto xs = torch::arange(w, opts) - cx;
  auto grid = torch::meshgrid({ys, xs}, "ij");
  auto oy = grid[0] - transform.translation[1];
  auto ox = grid[1] - transform.translation[0];
  auto sx = inv.matrix[0] * ox + inv.matrix[1] * oy + cx;
  auto sy = inv.matrix[2] * ox + inv.matrix[3] * oy + cy;
  auto nx = w > 1 ? sx * (2.0 / (static_cast<double>(w) - 1.0)) - 1.0 : sx * 0.0;
  auto ny = h > 1 ? sy * (2.0 / (static_cast<double>(h) - 1.0)) - 1.0 : sy * 0.0;
  return torch::stack({nx, ny}, -1).unsqueeze(0).to(dtype);
}

}  // namespace

torch::Tensor apply_affine(const torch::Tensor& x, const AffineTransform& transform, double fill, bool nearest) {
  if (x.dim() < 2) throw ShapeError("apply_affine expects a [*, H, W] tensor");
  if (std::abs(transform.determinant()) < 1e-12) throw ConfigError("singular affine transform");
  const int64_t h = x.size(-2);
  const int64_t w = x.size(-1);
  auto batched = x.reshape({1, -1, h, w});
  auto grid = sampling_grid(transform, h, w, x.scalar_type());
  auto shifted = batched - fill;
  auto options = F::GridSampleFuncOptions().padding_mode(torch::kZeros).align_corners(true);
  if (nearest) {
    options.mode(torch::kNearest);
  } else {
    options.mode(torch::kBilinear);
  }
  auto out = F::grid_sample(shifted, grid, options);
  return (out + fill).reshape(x.sizes());
}

torch::Tensor affine_valid_mask(const AffineTransform& transform, int64_t height, int64_t width) {
  auto grid = sampling_grid(transform, height, width, torch::kFloat64)[0];
  const double tol = 1e-9;
  auto nx = grid.select(-1, 0);
  auto ny = grid.select(-1, 1);
  return (nx >= -1.0 - tol) & (nx <= 1.0 + tol) & (ny >= -1.0 - tol) & (ny <= 1.0 + tol);
}

PhotometricParams sample_photometric(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PhotometricParams p;
  p.blur_sigma = 1.5 * u(rng);
  p.noise_std = 0.1 * u(rng);
  p.noise_seed = rng();
  return p;
}

torch::Tensor apply_photometric(const torch::Tensor& x, const PhotometricParams& params) {
  if (x.dim() < 2) throw ShapeError("apply_photometric expects a [*, H, W] tensor");
  if (params.blur_sigma < 0.0 || params.noise_std < 0.0) throw ConfigError("negative photometric parameter");
  auto out = x;
  const int64_t h = x.size(-2);
  const int64_t w = x.size(-1);
  if (params.blur_sigma > 0.0) {
    const auto radius = static_cast<int64_t>(std::ceil(3.0 * params.blur_sigma));
    auto taps = torch::arange(-radius, radius + 1, torch::TensorOptions().dtype(torch::kFloat64));
    auto kernel = torch::exp(-(taps * taps) / (2.0 * params.blur_sigma * params.blur_sigma));
    kernel = (kernel / kernel.sum()).to(x.scalar_type());
    auto img = out.reshape({-1, 1, h, w});
    img = F::pad(img, F::PadFuncOptions({radius, radius, radius, radius}).mode(torch::kReplicate));
    img = F::conv2d(img, kernel.view({1, 1, 1, -1}));
    img = F::conv2d(img, kernel.view({1, 1, -1, 1}));
    out = img.reshape(x.sizes());
  }
  if (params.noise_std > 0.0) {
    auto gen = at::detail::createCPUGenerator(params.noise_seed);
    out = out + params.noise_std * torch::randn(x.sizes(), gen, x.options());
  }
  return out;
}

AugmentMode parse_augment_mode(const std::string& name) {
  if (name == "shift") return AugmentMode::kShift;
  if (name == "affine") return AugmentMode::kAffine;
  if (name == "photometric") return AugmentMode::kPhotometric;
  throw ConfigError("unknown augment mode '" + name + "' (expected shift, affine or photometric)");
}

std::string to_string(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::kShift:
      return "shift";
    case AugmentMode::kAffine:
      return "affine";
    case AugmentMode::kPhotometric:
      return "photometric";
  }
  return "shift";
}

ViewTransform ViewTransform::sample(std::mt19937_64& rng, const AugmentConfig& config) {
  ViewTransform t;
  t.mode = config.mode;
  switch (config.mode) {
    case AugmentMode::kShift:
      t.shift = sample_shift(rng, config.max_shift, config.enable_flips);
      break;
    case AugmentMode::kAffine:
      t.affine = AffineTransform::from_params(sample_affine(rng, config.max_shift));
      break;
    case AugmentMode::kPhotometric:
      t.photometric = sample_photometric(rng);
      break;
  }
  return t;
}

ViewTransform ViewTransform::from_shift(const ShiftSpec& spec) {
  ViewTransform t;
  t.shift = spec;
  return t;
}

torch::Tensor ViewTransform::apply_to_input(const torch::Tensor& input, double fill) const {
  switch (mode) {
    case AugmentMode::kShift:
      return apply_shift(input, shift, fill);
    case AugmentMode::kAffine:
      return apply_affine(input, affine, fill);
    case AugmentMode::kPhotometric:
      return apply_photometric(input, photometric);
  }
  return input;
}

torch::Tensor ViewTransform::replay_on_features(const torch::Tensor& features, double fill) const {
  switch (mode) {
    case AugmentMode::kShift:
      return apply_shift(features, shift, fill);
    case AugmentMode::kAffine:
      return apply_affine(features, affine, fill);
    case AugmentMode::kPhotometric:
      return features;
  }
  return features;
}

torch::Tensor ViewTransform::replay_on_labels(const torch::Tensor& labels, int64_t fill) const {
  const auto as_float = labels.to(torch::kFloat64);
  switch (mode) {
    case AugmentMode::kShift:
      return apply_shift(as_float, shift, static_cast<double>(fill)).round().to(labels.scalar_type());
    case AugmentMode::kAffine:
      return apply_affine(as_float, affine, static_cast<double>(fill), /*nearest=*/true).round().to(labels.scalar_type());
    case AugmentMode::kPhotometric:
      return labels.clone();
  }
  return labels.clone();
}

torch::Tensor ViewTransform::valid_mask(int64_t height, int64_t width) const {
  switch (mode) {
    case AugmentMode::kShift:
      return overlap_mask(shift, height, width);
    case AugmentMode::kAffine:
      return affine_valid_mask(affine, height, width);
    case AugmentMode::kPhotometric:
      return torch::ones({height, width}, torch::kBool);
  }
  return torch::ones({height, width}, torch::kBool);
}

}  // namespace pixfuse
