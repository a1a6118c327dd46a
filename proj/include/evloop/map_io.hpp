#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "evloop/explanation_map.hpp"
#include "evloop/image.hpp"
#include "evloop/png_io.hpp"

EVLOOP_NAMESPACE_BEGIN

// EVMAP1: magic "EVMAP1", u16 version, u32 height, u32 width, then the grid as
// row-major little-endian f32. Method and layer metadata are not stored.
inline constexpr std::uint16_t kMapFormatVersion = 1;

void write_map(std::ostream& os, const ExplanationMap& map);
ExplanationMap read_map(std::istream& is, AttributionMethod method = AttributionMethod::saliency);
void save_map(const std::filesystem::path& path, const ExplanationMap& map);
ExplanationMap load_map(const std::filesystem::path& path,
                        AttributionMethod method = AttributionMethod::saliency);

/// Min-max normalisation to [0, 1]; a constant map becomes all zeros.
ExplanationMap normalize_minmax(const ExplanationMap& map);

using ColorTable = std::array<std::array<std::uint8_t, 3>, 256>;
/// Piecewise-linear "jet" table: dark blue, blue, cyan, yellow, red, dark red.
const ColorTable& heat_colors();

/// Normalised map through the colour table, blended at 0.5 over the image's
/// grayscale intensity.
Rgb8 render_heatmap(const Image& image, const ExplanationMap& map);
/// Two renders placed left to right.
Rgb8 side_by_side(const Rgb8& left, const Rgb8& right);

EVLOOP_NAMESPACE_END
