#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "evloop/image.hpp"

EVLOOP_NAMESPACE_BEGIN

/// 8-bit interleaved RGB raster, used for renders.
struct Rgb8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel
};

Rgb8 to_rgb8(const Image& image);
Image from_rgb8(const Rgb8& raster);

/// 8-bit RGB PNG. Gray and alpha inputs are converted on read.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const Rgb8& raster);

/// 1-bit grayscale PNG; nonzero pixels read as set.
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

EVLOOP_NAMESPACE_END
