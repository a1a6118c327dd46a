#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evloop/attribution.hpp"
#include "evloop/image.hpp"
#include "evloop/network.hpp"

EVLOOP_NAMESPACE_BEGIN

enum class MapNormalization { off, minmax };

struct AugmentConfig {
  Real th_pred = 0;
  std::size_t t_max = 20;
  double alpha = 0.6;
  std::size_t r_inp = 3;
  AttributionConfig attribution;
  MapNormalization per_iteration_normalize = MapNormalization::off;
  /// Restrict the Otsu histogram to the inscribed FOV disc.
  bool otsu_fov_only = false;

  void validate() const;
};

enum class TerminationReason {
  below_threshold,
  max_iterations,
  empty_mask,
  initially_nonreferable,
  /// The mask covered every pixel, leaving nothing to inpaint from.
  full_coverage,
};

std::string_view reason_name(TerminationReason r);
MapNormalization parse_normalization(std::string_view name);
std::string_view normalization_name(MapNormalization n);

struct IterationRecord {
  std::size_t t = 0;
  /// Prediction on the image this iteration attributed.
  Real y_hat = 0;
  Real th_bin = 0;
  std::size_t mask_pixels = 0;
  Real map_min = 0;
  Real map_max = 0;
};

struct IterationTrace {
  std::vector<IterationRecord> iterations;
  TerminationReason reason = TerminationReason::initially_nonreferable;
  /// Prediction on the last inpainted image (the input's own if no inpainting).
  Real final_prediction = 0;
};

struct AugmentResult {
  ExplanationMap initial_map;
  ExplanationMap augmented_map;
  IterationTrace trace;
  /// Otsu mask of every fused iteration.
  std::vector<BinaryMask> masks;
  Image inpainted;
};

/// Iterates attribute / binarise / inpaint / re-predict while the prediction
/// stays at or above th_pred and t < t_max, then fuses the maps. The image must
/// already be preprocessed to the network's input size; it is never
/// re-preprocessed between iterations.
AugmentResult augment(const Image& image, const Network& net, const AugmentConfig& cfg);

/// sum_t exp(-alpha t) M^t with t counted from 1. Empty input needs the shape
/// from `height`/`width`.
ExplanationMap combine_maps(const std::vector<ExplanationMap>& maps, double alpha);
ExplanationMap combine_maps(const std::vector<ExplanationMap>& maps, double alpha,
                            std::size_t height, std::size_t width);

/// {iterations: [{t, y_hat, th_bin, mask_pixels, map_min, map_max}], reason,
///  final_prediction, alpha, T_max}
std::string trace_to_json(const IterationTrace& trace, const AugmentConfig& cfg);

EVLOOP_NAMESPACE_END
