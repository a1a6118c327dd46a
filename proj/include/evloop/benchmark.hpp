#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evloop/augmentation.hpp"
#include "evloop/classifier.hpp"
#include "evloop/dataset.hpp"
#include "evloop/evaluation.hpp"

EVLOOP_NAMESPACE_BEGIN

struct FrocBenchmarkConfig {
  /// An empty grad_cam_layer is filled from the model's preset.
  AttributionConfig attribution;
  bool augment = true;
  /// th_pred is taken from the model.
  AugmentConfig augmentation;
  double radius_pct = 1.4;
  FrocOptions froc;
  std::size_t detection_cap = kDefaultDetectionCap;
  /// Evaluate at most this many eligible images (0 = all).
  std::size_t limit = 0;
};

/// One preprocessed scene with its lesion masks in the same geometry.
struct BenchmarkScene {
  std::size_t id = 0;
  int grade = 0;
  Image image;
  std::array<BinaryMask, kLesionTypes> masks;
};

/// Reads and preprocesses every manifest entry with the model's spec.
std::vector<BenchmarkScene> load_benchmark_scenes(const Model& model,
                                                  const std::filesystem::path& data_dir);

struct LesionTypeFroc {
  LesionType type = LesionType::micro_dot;
  std::size_t n_lesions = 0;
  /// Empty when no evaluated image holds a lesion of this type.
  std::optional<FrocCurve> initial;
  std::optional<FrocCurve> augmented;
};

struct FrocBenchmarkResult {
  std::size_t radius = 0;
  std::size_t image_dim = 0;
  /// Scenes with grade >= 2 that the model also predicts referable.
  std::vector<std::size_t> evaluated_ids;
  /// Grade >= 2 scenes the model predicted non-referable (not evaluated).
  std::size_t missed_referable = 0;
  std::array<LesionTypeFroc, kLesionTypes> per_type;
  /// Mean SE at the target FP over types that have lesions.
  double mean_initial = 0;
  std::optional<double> mean_augmented;
  std::vector<IterationTrace> traces;

  /// (augmented - initial) / initial; empty without augmentation or when the
  /// initial mean is zero.
  std::optional<double> relative_change() const;
};

/// Attributes (and optionally augments) every eligible scene and computes
/// per-lesion-type FROC curves for the initial and augmented maps. Throws
/// DataError when no scene is eligible.
FrocBenchmarkResult run_froc_benchmark(const Model& model, const std::vector<BenchmarkScene>& scenes,
                                       const FrocBenchmarkConfig& cfg);

std::string benchmark_summary_json(const FrocBenchmarkResult& result,
                                   const FrocBenchmarkConfig& cfg);
/// Markdown table: lesion type, initial, augmented, relative change.
std::string benchmark_table(const FrocBenchmarkResult& result);

EVLOOP_NAMESPACE_END
