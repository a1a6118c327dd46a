#include "evloop/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

EVLOOP_NAMESPACE_BEGIN

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw IoError("cannot open '" + path.string() + "' (" + (mode[0] == 'w' ? "write" : "read") +
                  ")");
  }
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("libpng: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

// Writes rows of `bit_depth`-bit samples with the given colour type.
void write_rows(const std::filesystem::path& path, std::size_t h, std::size_t w, int color_type,
                int bit_depth, const std::vector<std::vector<png_byte>>& rows) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, row.data());
  png_write_end(png, nullptr);
}

struct Decoded {
  std::size_t h = 0, w = 0;
  std::vector<png_byte> rgb;  // 8-bit RGB
};

Decoded read_rgb(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("'" + path.string() + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Decoded d;
  d.h = png_get_image_height(png, info);
  d.w = png_get_image_width(png, info);
  if (png_get_rowbytes(png, info) != d.w * 3) throw DataError("unexpected PNG row layout");
  d.rgb.resize(d.h * d.w * 3);
  std::vector<png_bytep> rows(d.h);
  for (std::size_t y = 0; y < d.h; ++y) rows[y] = d.rgb.data() + y * d.w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return d;
}

}  // namespace

Rgb8 to_rgb8(const Image& image) {
  Rgb8 r{image.height(), image.width(), {}};
  r.pixels.resize(r.height * r.width * 3);
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
        r.pixels[(y * r.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return r;
}

Image from_rgb8(const Rgb8& raster) {
  Image img(raster.height, raster.width);
  for (std::size_t y = 0; y < raster.height; ++y) {
    for (std::size_t x = 0; x < raster.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, y, x) =
            static_cast<Real>(raster.pixels[(y * raster.width + x) * 3 + c] / 255.0);
      }
    }
  }
  return img;
}

Image read_png(const std::filesystem::path& path) {
  Decoded d = read_rgb(path);
  return from_rgb8(Rgb8{d.h, d.w, std::move(d.rgb)});
}

void write_png(const std::filesystem::path& path, const Rgb8& raster) {
  std::vector<std::vector<png_byte>> rows(raster.height);
  for (std::size_t y = 0; y < raster.height; ++y) {
    rows[y].assign(raster.pixels.begin() + static_cast<std::ptrdiff_t>(y * raster.width * 3),
                   raster.pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * raster.width * 3));
  }
  write_rows(path, raster.height, raster.width, PNG_COLOR_TYPE_RGB, 8, rows);
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_png(path, to_rgb8(image));
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  const Decoded d = read_rgb(path);
  BinaryMask m(d.h, d.w);
  for (std::size_t i = 0; i < d.h * d.w; ++i) {
    if (d.rgb[i * 3] || d.rgb[i * 3 + 1] || d.rgb[i * 3 + 2]) m.set(i / d.w, i % d.w);
  }
  return m;
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::vector<png_byte>> rows(mask.height());
  for (std::size_t y = 0; y < mask.height(); ++y) {
    rows[y].assign((mask.width() + 7) / 8, 0);
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (mask.get(y, x)) rows[y][x / 8] |= static_cast<png_byte>(0x80 >> (x % 8));
    }
  }
  write_rows(path, mask.height(), mask.width(), PNG_COLOR_TYPE_GRAY, 1, rows);
}

EVLOOP_NAMESPACE_END
