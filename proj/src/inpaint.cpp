#include <algorithm>
#include <cmath>
#include <vector>

#include "evloop/image.hpp"

EVLOOP_NAMESPACE_BEGIN

namespace {

// Sweep constants. Diffusion step is below the explicit stability bound of
// 0.25 for the 4-neighbour stencil; transport is kept smaller so diffusion
// dominates and the iteration settles.
constexpr double kDiffusionStep = 0.2;
constexpr double kTransportStep = 0.05;
// Edge-stopping scale of the anisotropic diffusion, in intensity units.
constexpr double kEdgeScale = 0.1;

struct Grid {
  std::size_t h, w;
  std::size_t clampy(std::ptrdiff_t y) const {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(h) - 1));
  }
  std::size_t clampx(std::ptrdiff_t x) const {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(w) - 1));
  }
};

// Onion-peel ordering of masked pixels: each layer is the set of still-unknown
// masked pixels 8-adjacent to known ones, in row-major order.
std::vector<std::vector<std::size_t>> march_layers(const BinaryMask& mask) {
  const std::size_t h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> known(h * w);
  for (std::size_t i = 0; i < h * w; ++i) known[i] = mask[i] ? 0 : 1;
  std::vector<std::vector<std::size_t>> layers;
  std::vector<std::uint8_t> queued(h * w, 0);

  auto collect = [&](auto&& candidates) {
    std::vector<std::size_t> next;
    for (std::size_t p : candidates) {
      if (known[p] || queued[p]) continue;
      const std::size_t y = p / w, x = p % w;
      bool touches = false;
      for (int dy = -1; dy <= 1 && !touches; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(y) + dy;
          const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(x) + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(h) ||
              nx >= static_cast<std::ptrdiff_t>(w)) {
            continue;
          }
          if (known[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)]) {
            touches = true;
            break;
          }
        }
      }
      if (touches) {
        queued[p] = 1;
        next.push_back(p);
      }
    }
    std::sort(next.begin(), next.end());
    return next;
  };

  std::vector<std::size_t> all;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (mask[i]) all.push_back(i);
  }
  std::vector<std::size_t> layer = collect(all);
  while (!layer.empty()) {
    for (std::size_t p : layer) known[p] = 1;
    std::vector<std::size_t> cand;
    for (std::size_t p : layer) {
      const std::size_t y = p / w, x = p % w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const std::ptrdiff_t ny = static_cast<std::ptrdiff_t>(y) + dy;
          const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(x) + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(h) ||
              nx >= static_cast<std::ptrdiff_t>(w)) {
            continue;
          }
          cand.push_back(static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx));
        }
      }
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    layers.push_back(std::move(layer));
    layer = collect(cand);
  }
  return layers;
}

// Weighted first-order extrapolation from known pixels within `radius`.
void march_fill(std::vector<double>& img, std::vector<std::uint8_t>& known, const Grid& g,
                const std::vector<std::vector<std::size_t>>& layers, std::size_t radius) {
  const auto r = static_cast<std::ptrdiff_t>(radius);
  auto is_known = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    return y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(g.h) &&
           x < static_cast<std::ptrdiff_t>(g.w) &&
           known[static_cast<std::size_t>(y) * g.w + static_cast<std::size_t>(x)];
  };
  auto val = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    return img[static_cast<std::size_t>(y) * g.w + static_cast<std::size_t>(x)];
  };
  auto derivative = [&](std::ptrdiff_t y, std::ptrdiff_t x, std::ptrdiff_t dy, std::ptrdiff_t dx) {
    const bool fwd = is_known(y + dy, x + dx);
    const bool bwd = is_known(y - dy, x - dx);
    if (fwd && bwd) return 0.5 * (val(y + dy, x + dx) - val(y - dy, x - dx));
    if (fwd) return val(y + dy, x + dx) - val(y, x);
    if (bwd) return val(y, x) - val(y - dy, x - dx);
    return 0.0;
  };

  std::vector<double> estimates;
  for (const auto& layer : layers) {
    estimates.assign(layer.size(), 0.0);
    for (std::size_t k = 0; k < layer.size(); ++k) {
      const auto py = static_cast<std::ptrdiff_t>(layer[k] / g.w);
      const auto px = static_cast<std::ptrdiff_t>(layer[k] % g.w);
      double num = 0.0, den = 0.0;
      for (std::ptrdiff_t qy = py - r; qy <= py + r; ++qy) {
        for (std::ptrdiff_t qx = px - r; qx <= px + r; ++qx) {
          const std::ptrdiff_t dy = py - qy, dx = px - qx;
          const auto d2 = static_cast<double>(dy * dy + dx * dx);
          if (d2 == 0.0 || d2 > static_cast<double>(r * r) || !is_known(qy, qx)) continue;
          const double est = val(qy, qx) + derivative(qy, qx, 0, 1) * static_cast<double>(dx) +
                             derivative(qy, qx, 1, 0) * static_cast<double>(dy);
          const double wgt = 1.0 / d2;
          num += wgt * est;
          den += wgt;
        }
      }
      estimates[k] = den > 0.0 ? num / den : 0.0;
    }
    for (std::size_t k = 0; k < layer.size(); ++k) {
      img[layer[k]] = estimates[k];
      known[layer[k]] = 1;
    }
  }
}

}  // namespace

InpaintResult inpaint_detailed(const Image& image, const BinaryMask& mask, std::size_t radius,
                               const InpaintOptions& options) {
  if (mask.height() != image.height() || mask.width() != image.width()) {
    throw ShapeError("inpainting mask does not match the image");
  }
  if (radius < 1) throw ArgumentError("inpainting radius must be >= 1");
  InpaintResult res;
  res.image = image;
  const std::size_t masked = mask.count();
  if (masked == 0) return res;
  if (masked == mask.size()) {
    throw FullCoverageError("inpainting mask covers the entire image");
  }

  const Grid g{image.height(), image.width()};
  const std::size_t n = g.h * g.w;
  const auto layers = march_layers(mask);

  std::vector<std::size_t> holes;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) holes.push_back(i);
  }
  // Pixels whose Laplacian is needed: holes and their 4-neighbours.
  std::vector<std::uint8_t> need_lap(n, 0);
  for (std::size_t p : holes) {
    const auto y = static_cast<std::ptrdiff_t>(p / g.w), x = static_cast<std::ptrdiff_t>(p % g.w);
    need_lap[p] = 1;
    need_lap[g.clampy(y - 1) * g.w + static_cast<std::size_t>(x)] = 1;
    need_lap[g.clampy(y + 1) * g.w + static_cast<std::size_t>(x)] = 1;
    need_lap[static_cast<std::size_t>(y) * g.w + g.clampx(x - 1)] = 1;
    need_lap[static_cast<std::size_t>(y) * g.w + g.clampx(x + 1)] = 1;
  }
  std::vector<std::size_t> lap_pixels;
  for (std::size_t i = 0; i < n; ++i) {
    if (need_lap[i]) lap_pixels.push_back(i);
  }

  Tensor& out = res.image.mutable_tensor();
  std::vector<double> img(n), lap(n, 0.0), update(holes.size());
  std::vector<std::uint8_t> known(n);
  std::size_t max_sweeps_used = 0;
  double worst_final = 0.0;

  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    Real* plane = out.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      img[i] = plane[i];
      known[i] = mask[i] ? 0 : 1;
    }
    march_fill(img, known, g, layers, radius);

    auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
      return img[g.clampy(y) * g.w + g.clampx(x)];
    };
    auto lap_at = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
      return lap[g.clampy(y) * g.w + g.clampx(x)];
    };

    std::size_t sweeps = 0;
    double last = 0.0;
    while (sweeps < options.max_sweeps) {
      for (std::size_t p : lap_pixels) {
        const auto y = static_cast<std::ptrdiff_t>(p / g.w), x = static_cast<std::ptrdiff_t>(p % g.w);
        lap[p] = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1) - 4.0 * img[p];
      }
      double max_update = 0.0;
      for (std::size_t k = 0; k < holes.size(); ++k) {
        const std::size_t p = holes[k];
        const auto y = static_cast<std::ptrdiff_t>(p / g.w), x = static_cast<std::ptrdiff_t>(p % g.w);
        const double v = img[p];
        const double ix = 0.5 * (at(y, x + 1) - at(y, x - 1));
        const double iy = 0.5 * (at(y + 1, x) - at(y - 1, x));
        const double dlx = 0.5 * (lap_at(y, x + 1) - lap_at(y, x - 1));
        const double dly = 0.5 * (lap_at(y + 1, x) - lap_at(y - 1, x));
        // Isophote direction is the gradient rotated by 90 degrees.
        const double nx = -iy, ny = ix;
        const double nn = std::sqrt(nx * nx + ny * ny);
        const double beta = nn > 1e-12 ? (dlx * nx + dly * ny) / nn : 0.0;

        const double ixf = at(y, x + 1) - v, ixb = v - at(y, x - 1);
        const double iyf = at(y + 1, x) - v, iyb = v - at(y - 1, x);
        auto sq = [](double a) { return a * a; };
        double grad;
        if (beta > 0) {
          grad = std::sqrt(sq(std::min(ixb, 0.0)) + sq(std::max(ixf, 0.0)) +
                           sq(std::min(iyb, 0.0)) + sq(std::max(iyf, 0.0)));
        } else {
          grad = std::sqrt(sq(std::max(ixb, 0.0)) + sq(std::min(ixf, 0.0)) +
                           sq(std::max(iyb, 0.0)) + sq(std::min(iyf, 0.0)));
        }

        double diffusion = 0.0;
        for (const double d : {ixf, -ixb, iyf, -iyb}) {
          diffusion += d / (1.0 + sq(d / kEdgeScale));
        }
        update[k] = kTransportStep * beta * grad + kDiffusionStep * diffusion;
        max_update = std::max(max_update, std::abs(update[k]));
      }
      for (std::size_t k = 0; k < holes.size(); ++k) img[holes[k]] += update[k];
      ++sweeps;
      last = max_update;
      if (max_update < options.tolerance) break;
    }
    max_sweeps_used = std::max(max_sweeps_used, sweeps);
    worst_final = std::max(worst_final, last);
    for (std::size_t p : holes) {
      plane[p] = static_cast<Real>(std::clamp(img[p], 0.0, 1.0));
    }
  }
  res.sweeps = max_sweeps_used;
  res.final_update = worst_final;
  return res;
}

Image inpaint(const Image& image, const BinaryMask& mask, std::size_t radius,
              const InpaintOptions& options) {
  return inpaint_detailed(image, mask, radius, options).image;
}

EVLOOP_NAMESPACE_END
