#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "evloop/image.hpp"

EVLOOP_NAMESPACE_BEGIN

enum class LesionType { micro_dot = 0, dark_blob = 1, bright_blob = 2, diffuse_patch = 3 };
inline constexpr std::size_t kLesionTypes = 4;
inline constexpr std::array<LesionType, kLesionTypes> kAllLesionTypes{
    LesionType::micro_dot, LesionType::dark_blob, LesionType::bright_blob,
    LesionType::diffuse_patch};

std::string_view lesion_type_name(LesionType t);
LesionType parse_lesion_type(std::string_view name);

struct CountRange {
  std::size_t min = 0;
  std::size_t max = 0;
};

struct RadiusRange {
  double min = 1;
  double max = 2;
};

struct GeneratorConfig {
  std::size_t image_size = 128;
  /// Relative amplitude of the smooth illumination gradient.
  double background_amplitude = 0.05;
  /// Half-width of the uniform pixel noise.
  double noise_amplitude = 0.01;
  std::size_t vessel_count = 6;
  double vessel_darkening = 0.1;

  // Lesion counts per grade. Grade 0 plants nothing; grade 1 only micro dots;
  // grade 2 micro dots and dark blobs; grade 3 adds bright blobs and patches.
  CountRange grade1_micro_dots{1, 2};
  CountRange micro_dots{3, 6};
  CountRange dark_blobs{1, 3};
  CountRange bright_blobs{1, 3};
  CountRange diffuse_patches{1, 2};

  RadiusRange micro_dot_radius{1, 2};
  RadiusRange blob_radius{3, 8};
  RadiusRange diffuse_radius{8, 16};

  /// Additive per-channel offsets inside each lesion mask.
  double micro_dot_offset = -0.2;
  double dark_blob_offset = -0.2;
  double bright_blob_offset = 0.2;
  double diffuse_patch_offset = 0.12;

  void validate() const;
  double offset(LesionType t) const;
  RadiusRange radius(LesionType t) const;
};

struct PlantedLesion {
  LesionType type = LesionType::micro_dot;
  double center_y = 0;
  double center_x = 0;
  double radius = 1;
};

/// Image, one mask per lesion type, and the analytic discs behind them.
struct SyntheticScene {
  Image image;
  std::array<BinaryMask, kLesionTypes> masks;
  std::vector<PlantedLesion> lesions;
  int grade = 0;
  std::uint64_t seed = 0;

  const BinaryMask& mask(LesionType t) const { return masks[static_cast<std::size_t>(t)]; }
  BinaryMask union_mask() const;
};

/// Lesion-free render: FOV disc on black, illumination gradient, noise and
/// dark vessel curves. generate_scene draws the same background for a seed.
Image render_background(const GeneratorConfig& cfg, std::uint64_t seed);

/// Throws DataError when a lesion cannot be placed in 1000 attempts.
SyntheticScene generate_scene(const GeneratorConfig& cfg, int grade, std::uint64_t seed);

/// Pixel centres within `radius` of the centre; the analytic mask of a disc.
bool inside_disc(const PlantedLesion& lesion, std::size_t y, std::size_t x);

EVLOOP_NAMESPACE_END
