#include "evloop/map_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "evloop/error.hpp"

EVLOOP_NAMESPACE_BEGIN

namespace {
constexpr std::string_view kMagic = "EVMAP1";

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
}
}  // namespace

void write_map(std::ostream& os, const ExplanationMap& map) {
  if (map.grid.rank() != 2) throw ShapeError("explanation map must be 2-D");
  const std::size_t h = map.height(), w = map.width();
  if (h > std::numeric_limits<std::uint32_t>::max() ||
      w > std::numeric_limits<std::uint32_t>::max()) {
    throw ArgumentError("map too large for EVMAP1");
  }
  os.write(kMagic.data(), kMagic.size());
  detail::write_le<std::uint16_t>(os, kMapFormatVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(h));
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(w));
  for (Real v : map.grid.values()) detail::write_f32(os, static_cast<float>(v));
  if (!os) throw IoError("failed writing map");
}

ExplanationMap read_map(std::istream& is, AttributionMethod method) {
  detail::expect_magic(is, std::string(kMagic));
  const auto version = detail::read_le<std::uint16_t>(is);
  if (version != kMapFormatVersion) {
    throw DataError("unsupported map version " + std::to_string(version));
  }
  const auto h = detail::read_le<std::uint32_t>(is);
  const auto w = detail::read_le<std::uint32_t>(is);
  ExplanationMap map = ExplanationMap::zeros(h, w, method);
  for (auto& v : map.grid.values()) {
    const float f = detail::read_f32(is);
    if (!std::isfinite(f) || f < 0.0f) throw DataError("map holds a negative or non-finite value");
    v = static_cast<Real>(f);
  }
  return map;
}

void save_map(const std::filesystem::path& path, const ExplanationMap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_map(os, map);
}

ExplanationMap load_map(const std::filesystem::path& path, AttributionMethod method) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return read_map(is, method);
}

ExplanationMap normalize_minmax(const ExplanationMap& map) {
  ExplanationMap out = map;
  const auto vals = map.grid.values();
  out.normalized = true;
  if (vals.empty()) return out;
  const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
  const double lo_v = *lo, range = static_cast<double>(*hi) - lo_v;
  for (auto& v : out.grid.values()) {
    v = range > 0 ? static_cast<Real>((static_cast<double>(v) - lo_v) / range) : Real(0);
  }
  return out;
}

const ColorTable& heat_colors() {
  static const ColorTable table = [] {
    ColorTable t{};
    auto ramp = [](double x) { return std::clamp(1.5 - std::abs(4.0 * x - 3.0), 0.0, 1.0); };
    for (std::size_t i = 0; i < 256; ++i) {
      const double x = static_cast<double>(i) / 255.0;
      // Red peaks at x = 3/4, green at 1/2, blue at 1/4.
      t[i] = {to_byte(ramp(x)), to_byte(ramp(x + 0.25)), to_byte(ramp(x + 0.5))};
    }
    return t;
  }();
  return table;
}

Rgb8 render_heatmap(const Image& image, const ExplanationMap& map) {
  if (map.height() != image.height() || map.width() != image.width()) {
    throw ShapeError("map and image sizes differ");
  }
  const ExplanationMap norm = normalize_minmax(map);
  const ColorTable& colors = heat_colors();
  Rgb8 out{image.height(), image.width(), {}};
  out.pixels.resize(out.height * out.width * 3);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const double gray = image.intensity(y, x);
      const auto idx = static_cast<std::size_t>(
          std::min(255.0, std::floor(static_cast<double>(norm.at(y, x)) * 255.0 + 0.5)));
      for (std::size_t c = 0; c < 3; ++c) {
        out.pixels[(y * out.width + x) * 3 + c] =
            to_byte(0.5 * gray + 0.5 * colors[idx][c] / 255.0);
      }
    }
  }
  return out;
}

Rgb8 side_by_side(const Rgb8& left, const Rgb8& right) {
  if (left.height != right.height) throw ShapeError("renders differ in height");
  Rgb8 out{left.height, left.width + right.width, {}};
  out.pixels.reserve(out.height * out.width * 3);
  for (std::size_t y = 0; y < out.height; ++y) {
    const auto* l = left.pixels.data() + y * left.width * 3;
    const auto* r = right.pixels.data() + y * right.width * 3;
    out.pixels.insert(out.pixels.end(), l, l + left.width * 3);
    out.pixels.insert(out.pixels.end(), r, r + right.width * 3);
  }
  return out;
}

EVLOOP_NAMESPACE_END
