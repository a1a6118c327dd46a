#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evloop/attribution.hpp"
#include "evloop/evaluation.hpp"
#include "evloop/image.hpp"
#include "evloop/network.hpp"

EVLOOP_NAMESPACE_BEGIN

enum class PresetName { vgg_mini, deep_mini };

std::string_view preset_name(PresetName p);
PresetName parse_preset(std::string_view name);

struct ArchitecturePreset {
  PresetName name = PresetName::vgg_mini;
  std::size_t input_size = 128;
  /// Shallow layer whose feature maps Grad-CAM uses.
  std::string grad_cam_layer;
  /// Multiplies every convolution's channel count.
  std::size_t width_multiplier = 1;
};

ArchitecturePreset make_preset(PresetName name, std::size_t input_size = 128,
                               std::size_t width_multiplier = 1);
std::vector<LayerSpec> preset_layers(const ArchitecturePreset& preset);
Network build_network(const ArchitecturePreset& preset);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  bool class_balancing = true;
  /// Random flips and 90 degree rotations.
  bool augmentation = true;
  double validation_fraction = 0.2;

  void validate() const;
};

/// Referable means grade >= 2.
inline constexpr int kReferableGrade = 2;
inline bool is_referable_grade(int grade) { return grade >= kReferableGrade; }

struct ClassificationMetrics {
  double auc = 0;
  double sensitivity = 0;
  double specificity = 0;
  /// Quadratic weighted kappa of rounded predictions against grades; empty
  /// when undefined.
  std::optional<double> kappa;
  std::size_t n = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_auc = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

struct Model {
  ArchitecturePreset preset;
  Network net;
  PreprocessSpec preprocessing;
  Real th_pred = 0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  ClassificationMetrics metrics;  // on the validation split

  bool referable(Real y_hat) const { return y_hat >= th_pred; }
  /// Attribution settings with the preset's Grad-CAM layer filled in.
  AttributionConfig attribution_config(AttributionMethod method) const;
};

/// Images are raw and get preprocessed with `preprocessing`. Stratified
/// train/validation split; keeps the parameters of the epoch with the best
/// validation AUC and selects th_pred on the validation split.
std::pair<Model, TrainHistory> train(std::span<const Image> images, std::span<const int> grades,
                                     const ArchitecturePreset& preset, const TrainConfig& config,
                                     const PreprocessSpec& preprocessing = {});

/// With `preprocess_input` false the image must already match the input size.
Real predict(const Model& model, const Image& image, bool preprocess_input = true);

/// Threshold at the ROC point closest to the (0, 1) corner, placed midway
/// between the straddling scores; ties toward higher sensitivity.
Real select_threshold(std::span<const double> predictions, std::span<const int> labels);

/// AUC / SE / SP at model.th_pred and kappa on the given predictions.
ClassificationMetrics classification_metrics(std::span<const double> predictions,
                                             std::span<const int> grades, Real th_pred);

/// Bundle directory: model.evnet (parameters) and model.json (sidecar).
void save_model(const Model& model, const std::filesystem::path& dir);
Model load_model(const std::filesystem::path& dir);

/// One of the eight flip/rotation symmetries of a square (C, H, W) tensor.
Tensor dihedral(const Tensor& t, unsigned which);

EVLOOP_NAMESPACE_END
