#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evloop/explanation_map.hpp"
#include "evloop/image.hpp"

EVLOOP_NAMESPACE_BEGIN

// ---------------------------------------------------------------- ROC / kappa

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
};

/// Operating point for the rule "positive iff score >= threshold".
struct OperatingPoint {
  double threshold = 0;
  double sensitivity = 0;
  double specificity = 0;
};

struct RocCurve {
  /// From (0, 0) to (1, 1), one point per distinct score.
  std::vector<RocPoint> points;
  double auc = 0;
  /// Closest to the (FPR 0, TPR 1) corner among the midpoints between
  /// consecutive distinct scores; ties go to the higher sensitivity.
  OperatingPoint optimal;
};

/// Labels are nonzero for positives. Throws DegenerateError when only one
/// class is present, or when all scores coincide (no midpoint exists).
RocCurve roc(std::span<const double> scores, std::span<const int> labels);

/// K x K counts, rows = reference grade, columns = predicted grade.
using ConfusionMatrix = std::vector<std::vector<std::int64_t>>;

ConfusionMatrix confusion_matrix(std::span<const int> reference, std::span<const int> predicted,
                                 std::size_t classes);

/// 1 - sum(w*O) / sum(w*E), w_ij = (i-j)^2 / (K-1)^2. Throws DegenerateError
/// when the expected weighted disagreement is zero.
double quadratic_weighted_kappa(const ConfusionMatrix& confusion);

// ---------------------------------------------------------------------- FROC

/// Individual lesions of one image: 4-connected components of a mask.
struct LesionReference {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<std::size_t>> components;  // pixel indices, row-major
};

LesionReference lesion_reference(const BinaryMask& mask);

struct Detection {
  std::size_t y = 0;
  std::size_t x = 0;
  double confidence = 0;
  /// Number of previously undetected lesions this detection hit; TP iff > 0.
  std::size_t credited = 0;
  bool true_positive() const { return credited > 0; }
};

struct ImageDetections {
  std::vector<Detection> detections;
  std::size_t lesion_count = 0;
};

inline constexpr std::size_t kDefaultDetectionCap = 200;

/// Greedy peak picking: take the global maximum (first in row-major order on
/// ties), credit every undetected lesion with a pixel centre within `radius`,
/// zero the disc, repeat until the map is exhausted or `cap` detections.
ImageDetections froc_per_image(const ExplanationMap& map, const LesionReference& reference,
                               double radius, std::size_t cap = kDefaultDetectionCap);

struct FrocPoint {
  double threshold = 0;
  double avg_fp_per_image = 0;
  double sensitivity = 0;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // decreasing threshold
  double se_at_target_fp = 0;
  double target_fp = 10;
  std::size_t n_images = 0;
  std::size_t n_lesions = 0;
};

struct FrocOptions {
  double target_fp = 10.0;
  /// Average per-image sensitivities instead of pooling lesions.
  bool per_image_average = false;
};

/// Threshold sweep over every distinct detection confidence. Throws
/// DegenerateError when there are no reference lesions at all.
FrocCurve froc_aggregate(std::span<const ImageDetections> images, const FrocOptions& options = {});

/// Sensitivity at `target_fp` by linear interpolation on the curve prefixed
/// with the origin; the last sensitivity when the curve stops short.
double sensitivity_at_fp(const std::vector<FrocPoint>& points, double target_fp);

/// Detection radius as a percentage of the image dimension, rounded half up.
std::size_t radius_from_percent(double percent, std::size_t image_dim);

std::string froc_to_csv(const FrocCurve& curve);

EVLOOP_NAMESPACE_END
