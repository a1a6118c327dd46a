#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "evloop/benchmark.hpp"
#include "evloop/classifier.hpp"
#include "evloop/synthetic.hpp"

namespace evloop::cli {

/// Everything a command can be configured with. Loaded from JSON (unknown keys
/// rejected), then overridden by flags, then echoed next to the outputs.
struct RunConfig {
  std::uint64_t seed = 0;
  GeneratorConfig generator;
  std::array<std::size_t, 4> counts{10, 10, 10, 10};

  PresetName preset = PresetName::vgg_mini;
  std::size_t input_size = 128;
  std::size_t width_multiplier = 1;
  TrainConfig train;

  AttributionMethod method = AttributionMethod::guided_backprop;
  std::size_t ig_steps = 50;
  ChannelReduce channel_reduce = ChannelReduce::max_abs;
  std::string grad_cam_layer;

  std::size_t t_max = 20;
  double alpha = 0.6;
  std::size_t r_inp = 3;
  MapNormalization per_iteration_normalize = MapNormalization::off;
  bool otsu_fov_only = false;

  double radius_pct = 1.4;
  double target_fp = 10.0;
  std::size_t detection_cap = kDefaultDetectionCap;
  bool per_image_average = false;
  std::size_t limit = 0;

  AttributionConfig attribution() const;
  AugmentConfig augmentation() const;
  FrocBenchmarkConfig benchmark(bool augment) const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
/// Applies the keys present in `j` on top of `base`.
RunConfig merge_json(RunConfig base, const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void write_run_config(const std::filesystem::path& dir, const RunConfig& cfg);

}  // namespace evloop::cli
