#include "evloop/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "evloop/error.hpp"

EVLOOP_NAMESPACE_BEGIN

void AugmentConfig::validate() const {
  if (t_max < 1) throw ArgumentError("T_max must be >= 1");
  if (!(alpha > 0)) throw ArgumentError("alpha must be > 0");
  if (r_inp < 1) throw ArgumentError("r_inp must be >= 1");
  if (attribution.ig_steps < 1) throw ArgumentError("ig_steps must be >= 1");
}

std::string_view reason_name(TerminationReason r) {
  switch (r) {
    case TerminationReason::below_threshold: return "below_threshold";
    case TerminationReason::max_iterations: return "max_iterations";
    case TerminationReason::empty_mask: return "empty_mask";
    case TerminationReason::initially_nonreferable: return "initially_nonreferable";
    case TerminationReason::full_coverage: return "full_coverage";
  }
  return "unknown";
}

MapNormalization parse_normalization(std::string_view name) {
  if (name == "off") return MapNormalization::off;
  if (name == "minmax") return MapNormalization::minmax;
  throw LookupError("unknown normalization '" + std::string(name) + "' (valid: off, minmax)");
}

std::string_view normalization_name(MapNormalization n) {
  return n == MapNormalization::minmax ? "minmax" : "off";
}

namespace {

ExplanationMap minmax(const ExplanationMap& map) {
  ExplanationMap out = map;
  const auto vals = map.grid.values();
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  const double lo_v = *lo, range = static_cast<double>(*hi) - lo_v;
  for (auto& v : out.grid.values()) {
    v = range > 0 ? static_cast<Real>((static_cast<double>(v) - lo_v) / range) : Real(0);
  }
  out.normalized = true;
  return out;
}

BinaryMask fov_disc(std::size_t h, std::size_t w) {
  const FovCircle c = frame_fov(h, w);
  BinaryMask m(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - c.center_y, dx = static_cast<double>(x) - c.center_x;
      if (dy * dy + dx * dx <= c.radius * c.radius) m.set(y, x);
    }
  }
  return m;
}

}  // namespace

ExplanationMap combine_maps(const std::vector<ExplanationMap>& maps, double alpha,
                            std::size_t height, std::size_t width) {
  if (!(alpha > 0)) throw ArgumentError("alpha must be > 0");
  ExplanationMap out = ExplanationMap::zeros(
      height, width, maps.empty() ? AttributionMethod::saliency : maps.front().method);
  if (maps.empty()) return out;
  out.layer = maps.front().layer;
  std::vector<double> acc(height * width, 0.0);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].grid.shape() != out.grid.shape()) {
      throw ShapeError("cannot fuse maps of shape " + shape_to_string(maps[i].grid.shape()) +
                       " and " + shape_to_string(out.grid.shape()));
    }
    const double w = std::exp(-alpha * static_cast<double>(i + 1));
    for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += w * maps[i].grid[p];
  }
  for (std::size_t p = 0; p < acc.size(); ++p) out.grid[p] = static_cast<Real>(acc[p]);
  return out;
}

ExplanationMap combine_maps(const std::vector<ExplanationMap>& maps, double alpha) {
  if (maps.empty()) throw ArgumentError("fusing zero maps needs an explicit shape");
  return combine_maps(maps, alpha, maps.front().height(), maps.front().width());
}

AugmentResult augment(const Image& image, const Network& net, const AugmentConfig& cfg) {
  cfg.validate();
  const std::size_t h = image.height(), w = image.width();
  AugmentResult result;
  result.initial_map = attribute(net, image.tensor(), cfg.attribution);
  result.inpainted = image;

  Real y = predict_scalar(net, image.tensor());
  result.trace.final_prediction = y;
  if (y < cfg.th_pred) {
    result.trace.reason = TerminationReason::initially_nonreferable;
    result.augmented_map = ExplanationMap::zeros(h, w, cfg.attribution.method);
    return result;
  }

  const BinaryMask region = cfg.otsu_fov_only ? fov_disc(h, w) : BinaryMask();
  std::vector<ExplanationMap> fused;
  std::optional<TerminationReason> stop;
  std::size_t t = 1;
  while (y >= cfg.th_pred && t < cfg.t_max) {
    ExplanationMap map =
        t == 1 ? result.initial_map : attribute(net, result.inpainted.tensor(), cfg.attribution);
    const auto vals = map.grid.values();
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    IterationRecord rec{t, y, 0, 0, *lo, *hi};

    const OtsuResult otsu = binarize_otsu(map, cfg.otsu_fov_only ? &region : nullptr);
    rec.th_bin = otsu.th_bin;
    rec.mask_pixels = otsu.mask.count();
    result.trace.iterations.push_back(rec);
    if (rec.mask_pixels == 0) {
      stop = TerminationReason::empty_mask;
      break;
    }
    if (rec.mask_pixels == otsu.mask.size()) {
      // Nothing left to inpaint from; keep the evidence and stop.
      fused.push_back(cfg.per_iteration_normalize == MapNormalization::minmax ? minmax(map) : map);
      result.masks.push_back(otsu.mask);
      stop = TerminationReason::full_coverage;
      break;
    }
    result.inpainted = inpaint(result.inpainted, otsu.mask, cfg.r_inp);
    fused.push_back(cfg.per_iteration_normalize == MapNormalization::minmax ? minmax(map)
                                                                            : std::move(map));
    result.masks.push_back(otsu.mask);
    y = predict_scalar(net, result.inpainted.tensor());
    result.trace.final_prediction = y;
    ++t;
  }
  result.trace.reason = stop ? *stop
                             : (y < cfg.th_pred ? TerminationReason::below_threshold
                                                : TerminationReason::max_iterations);
  result.augmented_map = combine_maps(fused, cfg.alpha, h, w);
  result.augmented_map.method = cfg.attribution.method;
  result.augmented_map.layer = result.initial_map.layer;
  result.augmented_map.normalized = false;
  return result;
}

std::string trace_to_json(const IterationTrace& trace, const AugmentConfig& cfg) {
  nlohmann::ordered_json j;
  j["iterations"] = nlohmann::ordered_json::array();
  for (const auto& r : trace.iterations) {
    j["iterations"].push_back({{"t", r.t},
                               {"y_hat", r.y_hat},
                               {"th_bin", r.th_bin},
                               {"mask_pixels", r.mask_pixels},
                               {"map_min", r.map_min},
                               {"map_max", r.map_max}});
  }
  j["reason"] = reason_name(trace.reason);
  j["final_prediction"] = trace.final_prediction;
  j["alpha"] = cfg.alpha;
  j["T_max"] = cfg.t_max;
  j["th_pred"] = cfg.th_pred;
  j["method"] = method_name(cfg.attribution.method);
  j["per_iteration_normalize"] = normalization_name(cfg.per_iteration_normalize);
  return j.dump(2);
}

EVLOOP_NAMESPACE_END
