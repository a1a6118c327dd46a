#include "evloop/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "evloop/error.hpp"

EVLOOP_NAMESPACE_BEGIN

namespace {

constexpr std::size_t kPlacementAttempts = 1000;
// Gap kept between lesion discs so their masks stay separate components.
constexpr double kLesionGap = 2.0;

// Platform-independent draws (standard distributions are implementation
// defined; the engine is not).
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
std::size_t uniform_count(std::mt19937_64& rng, CountRange r) {
  return r.min + static_cast<std::size_t>(rng() % (r.max - r.min + 1));
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

struct Fov {
  double cy, cx, r;
};

Fov scene_fov(std::size_t size) {
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  return {c, c, static_cast<double>(size) / 2.0};
}

}  // namespace

std::string_view lesion_type_name(LesionType t) {
  switch (t) {
    case LesionType::micro_dot: return "micro_dot";
    case LesionType::dark_blob: return "dark_blob";
    case LesionType::bright_blob: return "bright_blob";
    case LesionType::diffuse_patch: return "diffuse_patch";
  }
  return "unknown";
}

LesionType parse_lesion_type(std::string_view name) {
  for (LesionType t : kAllLesionTypes) {
    if (lesion_type_name(t) == name) return t;
  }
  throw LookupError("unknown lesion type '" + std::string(name) + "'");
}

void GeneratorConfig::validate() const {
  if (image_size < 32) throw ArgumentError("image_size must be >= 32");
  for (const CountRange& r : {grade1_micro_dots, micro_dots, dark_blobs, bright_blobs,
                              diffuse_patches}) {
    if (r.min > r.max) throw ArgumentError("count range with min > max");
  }
  if (grade1_micro_dots.min < 1 || micro_dots.min < 3 || dark_blobs.min < 1 ||
      bright_blobs.min < 1 || diffuse_patches.min < 1) {
    throw ArgumentError("count ranges violate the grading rule minimums");
  }
  const double fov_r = static_cast<double>(image_size) / 2.0;
  for (const RadiusRange& r : {micro_dot_radius, blob_radius, diffuse_radius}) {
    if (!(r.min >= 1.0) || r.min > r.max) throw ArgumentError("radius range must satisfy 1 <= min <= max");
    if (r.max + kLesionGap >= fov_r) throw ArgumentError("lesion radius must be below the FOV radius");
  }
  if (background_amplitude < 0 || noise_amplitude < 0 || vessel_darkening < 0) {
    throw ArgumentError("texture amplitudes must be >= 0");
  }
}

double GeneratorConfig::offset(LesionType t) const {
  switch (t) {
    case LesionType::micro_dot: return micro_dot_offset;
    case LesionType::dark_blob: return dark_blob_offset;
    case LesionType::bright_blob: return bright_blob_offset;
    case LesionType::diffuse_patch: return diffuse_patch_offset;
  }
  return 0;
}

RadiusRange GeneratorConfig::radius(LesionType t) const {
  switch (t) {
    case LesionType::micro_dot: return micro_dot_radius;
    case LesionType::dark_blob:
    case LesionType::bright_blob: return blob_radius;
    case LesionType::diffuse_patch: return diffuse_radius;
  }
  return micro_dot_radius;
}

BinaryMask SyntheticScene::union_mask() const {
  BinaryMask out = masks[0];
  for (std::size_t i = 1; i < kLesionTypes; ++i) out |= masks[i];
  return out;
}

bool inside_disc(const PlantedLesion& l, std::size_t y, std::size_t x) {
  const double dy = static_cast<double>(y) - l.center_y, dx = static_cast<double>(x) - l.center_x;
  return dy * dy + dx * dx <= l.radius * l.radius;
}

Image render_background(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = cfg.image_size;
  const Fov fov = scene_fov(n);
  std::mt19937_64 rng = stream(seed, 1);

  constexpr std::array<double, 3> kBase{0.70, 0.50, 0.45};
  const double gy = uniform(rng, -cfg.background_amplitude, cfg.background_amplitude);
  const double gx = uniform(rng, -cfg.background_amplitude, cfg.background_amplitude);

  // Vessels: quadratic curves radiating from a point left or right of centre,
  // stamped into a darkness buffer.
  std::vector<double> dark(n * n, 0.0);
  const double side = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  const double oy = fov.cy + uniform(rng, -0.1, 0.1) * fov.r;
  const double ox = fov.cx + side * 0.35 * fov.r;
  for (std::size_t v = 0; v < cfg.vessel_count; ++v) {
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double len = uniform(rng, 0.6, 1.3) * fov.r;
    const double bend = uniform(rng, -0.4, 0.4);
    const double width = uniform(rng, 0.7, 1.6);
    const double ey = oy + len * std::sin(angle), ex = ox + len * std::cos(angle);
    const double my = 0.5 * (oy + ey) + bend * len * std::cos(angle);
    const double mx = 0.5 * (ox + ex) - bend * len * std::sin(angle);
    const auto steps = static_cast<std::size_t>(len * 4.0);
    for (std::size_t s = 0; s <= steps; ++s) {
      const double u = static_cast<double>(s) / static_cast<double>(steps);
      const double py = (1 - u) * (1 - u) * oy + 2 * u * (1 - u) * my + u * u * ey;
      const double px = (1 - u) * (1 - u) * ox + 2 * u * (1 - u) * mx + u * u * ex;
      const double w = width * (1.0 - 0.5 * u);
      const auto y0 = static_cast<std::ptrdiff_t>(std::floor(py - w - 1));
      const auto x0 = static_cast<std::ptrdiff_t>(std::floor(px - w - 1));
      for (std::ptrdiff_t y = y0; y <= y0 + static_cast<std::ptrdiff_t>(2 * w + 3); ++y) {
        for (std::ptrdiff_t x = x0; x <= x0 + static_cast<std::ptrdiff_t>(2 * w + 3); ++x) {
          if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(n) ||
              x >= static_cast<std::ptrdiff_t>(n)) {
            continue;
          }
          const double d = std::hypot(static_cast<double>(y) - py, static_cast<double>(x) - px);
          const double a = std::clamp(w + 0.5 - d, 0.0, 1.0);
          double& cell = dark[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)];
          cell = std::max(cell, a);
        }
      }
    }
  }

  Image img(n, n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dy = (static_cast<double>(y) - fov.cy) / fov.r;
      const double dx = (static_cast<double>(x) - fov.cx) / fov.r;
      const double r2 = dy * dy + dx * dx;
      const double noise = uniform(rng, -cfg.noise_amplitude, cfg.noise_amplitude);
      if (r2 > 1.0) continue;
      const double shade = (1.0 + gy * dy + gx * dx) * (1.0 - 0.1 * r2);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v =
            kBase[c] * shade - cfg.vessel_darkening * dark[y * n + x] + noise;
        img.at(c, y, x) = static_cast<Real>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

SyntheticScene generate_scene(const GeneratorConfig& cfg, int grade, std::uint64_t seed) {
  if (grade < 0 || grade > 3) throw ArgumentError("grade must be in 0..3");
  SyntheticScene scene;
  scene.image = render_background(cfg, seed);
  scene.grade = grade;
  scene.seed = seed;
  const std::size_t n = cfg.image_size;
  for (auto& m : scene.masks) m = BinaryMask(n, n);

  std::mt19937_64 rng = stream(seed, 2);
  std::vector<LesionType> plan;
  auto add = [&](LesionType t, CountRange r) {
    const std::size_t k = uniform_count(rng, r);
    plan.insert(plan.end(), k, t);
  };
  if (grade == 1) add(LesionType::micro_dot, cfg.grade1_micro_dots);
  if (grade >= 2) {
    add(LesionType::micro_dot, cfg.micro_dots);
    add(LesionType::dark_blob, cfg.dark_blobs);
  }
  if (grade == 3) {
    add(LesionType::bright_blob, cfg.bright_blobs);
    add(LesionType::diffuse_patch, cfg.diffuse_patches);
  }
  // Largest first so rejection sampling rarely fails.
  std::stable_sort(plan.begin(), plan.end(), [&](LesionType a, LesionType b) {
    return cfg.radius(a).max > cfg.radius(b).max;
  });

  const Fov fov = scene_fov(n);
  for (LesionType t : plan) {
    const RadiusRange rr = cfg.radius(t);
    const double radius = uniform(rng, rr.min, rr.max);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const double cy = uniform(rng, fov.cy - fov.r, fov.cy + fov.r);
      const double cx = uniform(rng, fov.cx - fov.r, fov.cx + fov.r);
      if (std::hypot(cy - fov.cy, cx - fov.cx) + radius + kLesionGap > fov.r) continue;
      const bool clear = std::all_of(scene.lesions.begin(), scene.lesions.end(), [&](const auto& o) {
        return std::hypot(cy - o.center_y, cx - o.center_x) > radius + o.radius + kLesionGap;
      });
      if (!clear) continue;
      scene.lesions.push_back({t, cy, cx, radius});
      placed = true;
    }
    if (!placed) {
      throw DataError("could not place a " + std::string(lesion_type_name(t)) + " lesion after " +
                      std::to_string(kPlacementAttempts) + " attempts");
    }
  }

  Tensor& px = scene.image.mutable_tensor();
  for (const PlantedLesion& l : scene.lesions) {
    const double off = cfg.offset(l.type);
    BinaryMask& mask = scene.masks[static_cast<std::size_t>(l.type)];
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor(l.center_y - l.radius - 1)));
    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor(l.center_x - l.radius - 1)));
    const std::size_t y1 = std::min(n - 1, static_cast<std::size_t>(l.center_y + l.radius + 1));
    const std::size_t x1 = std::min(n - 1, static_cast<std::size_t>(l.center_x + l.radius + 1));
    for (std::size_t y = y0; y <= y1; ++y) {
      for (std::size_t x = x0; x <= x1; ++x) {
        // Full offset on mask pixels, a thin anti-aliased rim just outside.
        double weight;
        if (inside_disc(l, y, x)) {
          weight = 1.0;
          mask.set(y, x);
        } else {
          const double d =
              std::hypot(static_cast<double>(y) - l.center_y, static_cast<double>(x) - l.center_x);
          weight = std::clamp(l.radius + 0.5 - d, 0.0, 1.0);
        }
        if (weight == 0.0) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          Real& v = px.at(c, y, x);
          v = static_cast<Real>(std::clamp(static_cast<double>(v) + weight * off, 0.0, 1.0));
        }
      }
    }
  }
  return scene;
}

EVLOOP_NAMESPACE_END
