#include <doctest/doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "evloop/error.hpp"
#include "evloop/map_io.hpp"

using namespace evloop;

namespace {

ExplanationMap ramp_map(std::size_t h, std::size_t w) {
  ExplanationMap m = ExplanationMap::zeros(h, w, AttributionMethod::guided_backprop);
  for (std::size_t i = 0; i < m.grid.size(); ++i) m.grid[i] = static_cast<Real>(0.25 * static_cast<double>(i));
  return m;
}

}  // namespace

TEST_CASE("EVMAP1 round trip") {
  const ExplanationMap m = ramp_map(3, 5);
  std::stringstream ss;
  write_map(ss, m);
  CHECK(ss.str().substr(0, 6) == "EVMAP1");
  CHECK(ss.str().size() == 6 + 2 + 4 + 4 + 15 * 4);
  const ExplanationMap back = read_map(ss, AttributionMethod::guided_backprop);
  CHECK(back.grid == m.grid);
  CHECK(back.method == AttributionMethod::guided_backprop);

  std::stringstream bad("EVMAP9 garbage");
  CHECK_THROWS(read_map(bad));
  std::stringstream truncated(ss.str().substr(0, 20));
  CHECK_THROWS(read_map(truncated));
}

TEST_CASE("reading rejects negative and non-finite values") {
  for (Real bad : {Real(-1), std::numeric_limits<Real>::quiet_NaN(), std::numeric_limits<Real>::infinity()}) {
    ExplanationMap m = ramp_map(2, 2);
    m.grid[1] = bad;
    std::stringstream ss;
    write_map(ss, m);
    CHECK_THROWS_AS(read_map(ss), DataError);
  }
}

TEST_CASE("min-max normalisation") {
  const ExplanationMap n = normalize_minmax(ramp_map(2, 3));
  CHECK(n.grid[0] == 0);
  CHECK(n.grid[5] == doctest::Approx(1));
  CHECK(n.grid[2] == doctest::Approx(0.4));
  ExplanationMap flat = ExplanationMap::zeros(2, 2, AttributionMethod::saliency);
  flat.grid.fill(3);
  const ExplanationMap flat_n = normalize_minmax(flat);
  for (Real v : flat_n.grid.values()) CHECK(v == 0);
}

TEST_CASE("heat colour table runs from dark blue to dark red") {
  const ColorTable& t = heat_colors();
  CHECK(t[0][0] == 0);
  CHECK(t[0][1] == 0);
  CHECK(t[0][2] > 100);
  CHECK(t[255][0] > 100);
  CHECK(t[255][1] == 0);
  CHECK(t[255][2] == 0);
}

TEST_CASE("renders") {
  const Image img(3, 5, Real(0.5));
  const Rgb8 r = render_heatmap(img, ramp_map(3, 5));
  CHECK(r.height == 3);
  CHECK(r.width == 5);
  CHECK(r.pixels.size() == 45);
  const Rgb8 both = side_by_side(r, r);
  CHECK(both.width == 10);
  CHECK(both.height == 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 5; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(both.pixels[(y * 10 + x) * 3 + c] == r.pixels[(y * 5 + x) * 3 + c]);
        CHECK(both.pixels[(y * 10 + x + 5) * 3 + c] == r.pixels[(y * 5 + x) * 3 + c]);
      }
  CHECK_THROWS(render_heatmap(img, ramp_map(4, 5)));
}
