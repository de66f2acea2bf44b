#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "pixfuse/contrastive.hpp"
#include "pixfuse/errors.hpp"

namespace pixfuse {

std::vector<int64_t> SuperpixelMap::sizes() const {
  std::vector<int64_t> out(static_cast<std::size_t>(count), 0);
  auto flat = segments.contiguous().view(-1);
  const auto* ids = flat.data_ptr<int64_t>();
  for (int64_t i = 0; i < flat.numel(); ++i) ++out[static_cast<std::size_t>(ids[i])];
  return out;
}

std::vector<std::vector<int64_t>> SuperpixelMap::members() const {
  std::vector<std::vector<int64_t>> out(static_cast<std::size_t>(count));
  auto flat = segments.contiguous().view(-1);
  const auto* ids = flat.data_ptr<int64_t>();
  for (int64_t i = 0; i < flat.numel(); ++i) out[static_cast<std::size_t>(ids[i])].push_back(i);
  return out;
}

namespace {

struct Center {
  std::vector<double> color;
  double y = 0.0;
  double x = 0.0;
};

// Relabels 4-connected components in raster order; components smaller than
// min_size are absorbed by the component met just before them.
int64_t enforce_connectivity(std::vector<int64_t>& labels, int64_t h, int64_t w, int64_t min_size) {
  const int64_t n = h * w;
  std::vector<int64_t> out(static_cast<std::size_t>(n), -1);
  std::vector<int64_t> component;
  int64_t next = 0;
  const int dy[4] = {-1, 0, 1, 0};
  const int dx[4] = {0, -1, 0, 1};
  for (int64_t start = 0; start < n; ++start) {
    if (out[start] >= 0) continue;
    const int64_t sy = start / w;
    const int64_t sx = start % w;
    int64_t adjacent = -1;
    for (int k = 0; k < 4; ++k) {
      const int64_t yy = sy + dy[k];
      const int64_t xx = sx + dx[k];
      if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
      if (out[yy * w + xx] >= 0) {
        adjacent = out[yy * w + xx];
        break;
      }
    }
    component.clear();
    component.push_back(start);
    out[start] = next;
    for (std::size_t head = 0; head < component.size(); ++head) {
      const int64_t p = component[head];
      const int64_t py = p / w;
      const int64_t px = p % w;
      for (int k = 0; k < 4; ++k) {
        const int64_t yy = py + dy[k];
        const int64_t xx = px + dx[k];
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        const int64_t q = yy * w + xx;
        if (out[q] < 0 && labels[q] == labels[start]) {
          out[q] = next;
          component.push_back(q);
        }
      }
    }
    if (static_cast<int64_t>(component.size()) < min_size && adjacent >= 0) {
      for (auto p : component) out[p] = adjacent;
    } else {
      ++next;
    }
  }
  labels.swap(out);
  return next;
}

}  // namespace

SuperpixelMap segment_superpixels(const torch::Tensor& image, int k, double compactness, int iterations) {
  if (image.dim() != 3) throw ShapeError("superpixel input must be [C, H, W]");
  const int64_t channels = image.size(0);
  const int64_t h = image.size(1);
  const int64_t w = image.size(2);
  const int64_t n = h * w;
  if (k < 1 || k > n) {
    throw ConfigError("superpixel count " + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  }
  if (!(compactness >= 0.0)) throw ConfigError("slic compactness must be non-negative");

  auto img = image.to(torch::kFloat64).contiguous();
  const double* px = img.data_ptr<double>();
  auto value = [&](int64_t c, int64_t p) { return px[c * n + p]; };

  const double step = std::sqrt(static_cast<double>(n) / k);
  const int64_t nx = std::clamp<int64_t>(std::llround(w / step), 1, w);
  const int64_t ny = std::clamp<int64_t>(std::llround(h / step), 1, h);
  const double sx = static_cast<double>(w) / nx;
  const double sy = static_cast<double>(h) / ny;

  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(nx * ny));
  for (int64_t j = 0; j < ny; ++j) {
    for (int64_t i = 0; i < nx; ++i) {
      Center c;
      c.y = (j + 0.5) * sy - 0.5;
      c.x = (i + 0.5) * sx - 0.5;
      const auto p = std::clamp<int64_t>(std::llround(c.y), 0, h - 1) * w + std::clamp<int64_t>(std::llround(c.x), 0, w - 1);
      c.color.resize(static_cast<std::size_t>(channels));
      for (int64_t ch = 0; ch < channels; ++ch) c.color[ch] = value(ch, p);
      centers.push_back(std::move(c));
    }
  }

  std::vector<int64_t> labels(static_cast<std::size_t>(n));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const auto j = std::min<int64_t>(static_cast<int64_t>(y / sy), ny - 1);
      const auto i = std::min<int64_t>(static_cast<int64_t>(x / sx), nx - 1);
      labels[y * w + x] = j * nx + i;
    }
  }

  const double spatial = compactness / step;
  const double spatial2 = spatial * spatial;
  const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(step)));
  std::vector<double> best(static_cast<std::size_t>(n));
  for (int it = 0; it < iterations; ++it) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      const auto& c = centers[ci];
      const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(c.y)) - radius);
      const int64_t y1 = std::min<int64_t>(h - 1, static_cast<int64_t>(std::ceil(c.y)) + radius);
      const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(c.x)) - radius);
      const int64_t x1 = std::min<int64_t>(w - 1, static_cast<int64_t>(std::ceil(c.x)) + radius);
      for (int64_t y = y0; y <= y1; ++y) {
        for (int64_t x = x0; x <= x1; ++x) {
          const int64_t p = y * w + x;
          double dc = 0.0;
          for (int64_t ch = 0; ch < channels; ++ch) {
            const double d = value(ch, p) - c.color[ch];
            dc += d * d;
          }
          const double ds = (y - c.y) * (y - c.y) + (x - c.x) * (x - c.x);
          const double dist = dc + spatial2 * ds;
          if (dist < best[p]) {
            best[p] = dist;
            labels[p] = static_cast<int64_t>(ci);
          }
        }
      }
    }

    std::vector<Center> sums(centers.size());
    std::vector<int64_t> counts(centers.size(), 0);
    for (auto& s : sums) s.color.assign(static_cast<std::size_t>(channels), 0.0);
    for (int64_t p = 0; p < n; ++p) {
      auto& s = sums[labels[p]];
      for (int64_t ch = 0; ch < channels; ++ch) s.color[ch] += value(ch, p);
      s.y += static_cast<double>(p / w);
      s.x += static_cast<double>(p % w);
      ++counts[labels[p]];
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (counts[ci] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[ci]);
      for (int64_t ch = 0; ch < channels; ++ch) centers[ci].color[ch] = sums[ci].color[ch] * inv;
      centers[ci].y = sums[ci].y * inv;
      centers[ci].x = sums[ci].x * inv;
    }
  }

  const auto min_size = static_cast<int64_t>(step * step / 4.0);
  SuperpixelMap out;
  out.count = enforce_connectivity(labels, h, w, std::max<int64_t>(min_size, 1));
  out.segments = torch::from_blob(labels.data(), {h, w}, torch::kInt64).clone();
  return out;
}

SuperpixelMap segment_superpixels(const Scene& scene, int k, double compactness) {
  return segment_superpixels(scene.optical, k, compactness);
}

}  // namespace pixfuse
