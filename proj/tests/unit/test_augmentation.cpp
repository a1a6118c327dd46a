#include <doctest/doctest.h>

#include <cmath>
#include <json.hpp>
#include <random>

#include "evloop/augmentation.hpp"
#include "evloop/error.hpp"
#include "support/fixtures.hpp"
#include "support/reference_net.hpp"

using namespace evloop;
using evloop_test::SingleIterationCase;

namespace {

ExplanationMap filled(std::size_t h, std::size_t w, Real v) {
  ExplanationMap m = ExplanationMap::zeros(h, w, AttributionMethod::saliency);
  m.grid.fill(v);
  return m;
}

AugmentConfig saliency_cfg(Real th) {
  AugmentConfig c;
  c.th_pred = th;
  c.attribution.method = AttributionMethod::saliency;
  return c;
}

}  // namespace

TEST_CASE("combine_maps weights") {
  const ExplanationMap one = filled(3, 4, 1);
  const ExplanationMap single = combine_maps({one}, 0.6);
  for (Real v : single.grid.values()) CHECK(v == doctest::Approx(0.548811636).epsilon(1e-7));

  std::mt19937_64 rng(1);
  std::vector<ExplanationMap> maps;
  for (int i = 0; i < 3; ++i) {
    ExplanationMap m = ExplanationMap::zeros(5, 5, AttributionMethod::saliency);
    for (auto& v : m.grid.values()) v = static_cast<Real>(std::uniform_real_distribution<>(0, 2)(rng));
    maps.push_back(m);
  }
  const ExplanationMap got = combine_maps(maps, 0.6);
  for (std::size_t p = 0; p < 25; ++p) {
    const double want = std::exp(-0.6) * maps[0].grid[p] + std::exp(-1.2) * maps[1].grid[p] +
                        std::exp(-1.8) * maps[2].grid[p];
    CHECK(got.grid[p] == doctest::Approx(want).epsilon(1e-6));
  }

  const ExplanationMap m1 = maps[0];
  const ExplanationMap fused = combine_maps({m1, filled(5, 5, 0)}, 0.6);
  for (std::size_t p = 0; p < 25; ++p) CHECK(fused.grid[p] == doctest::Approx(std::exp(-0.6) * m1.grid[p]));

  const ExplanationMap empty = combine_maps({}, 0.6, 2, 3);
  CHECK(empty.height() == 2);
  for (Real v : empty.grid.values()) CHECK(v == 0);
  CHECK_THROWS_AS(combine_maps({one, filled(2, 2, 1)}, 0.6), ShapeError);
  CHECK_THROWS(combine_maps({one}, 0));
}

TEST_CASE("fusion weights strictly decrease with t") {
  for (double alpha : {0.01, 0.6, 3.0}) {
    std::vector<ExplanationMap> maps(6, filled(1, 1, 0));
    double prev = 1e9;
    for (std::size_t t = 0; t < maps.size(); ++t) {
      maps.assign(6, filled(1, 1, 0));
      maps[t] = filled(1, 1, 1);
      const double w = combine_maps(maps, alpha).grid[0];
      CHECK(w < prev);
      prev = w;
    }
  }
}

TEST_CASE("non-referable input gives a zero map and no iterations") {
  SingleIterationCase sc;
  const AugmentResult r = augment(sc.image, sc.net, saliency_cfg(1000));
  CHECK(r.trace.reason == TerminationReason::initially_nonreferable);
  CHECK(r.trace.iterations.empty());
  for (Real v : r.augmented_map.grid.values()) CHECK(v == 0);
  CHECK(r.initial_map.grid == saliency(sc.net, sc.image.tensor(), {}).grid);
}

TEST_CASE("a single iteration fuses to exp(-0.6) M1") {
  SingleIterationCase sc;
  const Image before = sc.image;
  const AugmentResult r = augment(sc.image, sc.net, saliency_cfg(sc.th_pred));
  REQUIRE(r.trace.iterations.size() == 1);
  CHECK(r.trace.reason == TerminationReason::below_threshold);
  CHECK(r.trace.iterations[0].y_hat == predict_scalar(sc.net, sc.image.tensor()));
  CHECK(r.trace.iterations[0].mask_pixels == 16);
  CHECK(r.trace.final_prediction < sc.th_pred);
  for (std::size_t i = 0; i < r.augmented_map.grid.size(); ++i)
    CHECK(std::abs(r.augmented_map.grid[i] - std::exp(-0.6) * r.initial_map.grid[i]) <= 1e-6);
  for (std::size_t y = 0; y < SingleIterationCase::kSize; ++y)
    for (std::size_t x = 0; x < SingleIterationCase::kSize; ++x)
      CHECK(r.masks[0].get(y, x) == SingleIterationCase::in_block(y, x));
  // Non-interference.
  CHECK(sc.image == before);
  CHECK_FALSE(r.inpainted == sc.image);
}

TEST_CASE("T_max bounds the loop and the guard holds at every iteration") {
  std::mt19937_64 rng(2);
  Network net3({3, 16, 16}, {{"conv", Conv2d{2, 3, 1, 1}}, {"relu", Relu{}}, {"flat", Flatten{}}, {"out", Dense{1}}});
  net3.init_parameters(5);
  Image img(16, 16);
  for (auto& v : img.mutable_tensor().values()) v = static_cast<Real>(std::uniform_real_distribution<>(0, 1)(rng));
  for (std::size_t t_max : {1u, 2u, 3u, 20u}) {
    AugmentConfig c = saliency_cfg(-1e9);  // always referable
    c.t_max = t_max;
    const AugmentResult r = augment(img, net3, c);
    CAPTURE(t_max);
    CHECK(r.trace.iterations.size() <= t_max);
    for (const auto& it : r.trace.iterations) CHECK(it.y_hat >= c.th_pred);
    if (r.trace.reason == TerminationReason::max_iterations) CHECK(r.trace.iterations.size() == t_max - 1);
    CHECK(r.masks.size() <= r.trace.iterations.size());
    for (Real v : r.augmented_map.grid.values()) {
      CHECK(v >= 0);
      CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("constant maps stop the loop with an empty mask") {
  // Zero weights: the saliency map is identically zero.
  Network net({3, 8, 8}, {{"flat", Flatten{}}, {"out", Dense{1}}});
  net.mutable_params(1).bias = Tensor({1}, {1});
  const AugmentResult r = augment(Image(8, 8, Real(0.5)), net, saliency_cfg(0));
  CHECK(r.trace.reason == TerminationReason::empty_mask);
  REQUIRE(r.trace.iterations.size() == 1);
  for (Real v : r.augmented_map.grid.values()) CHECK(v == 0);
}

TEST_CASE("min-max normalisation option") {
  SingleIterationCase sc;
  AugmentConfig c = saliency_cfg(sc.th_pred);
  c.per_iteration_normalize = MapNormalization::minmax;
  const AugmentResult r = augment(sc.image, sc.net, c);
  double mx = 0;
  for (Real v : r.augmented_map.grid.values()) mx = std::max<double>(mx, v);
  CHECK(mx == doctest::Approx(std::exp(-0.6)));
  CHECK(parse_normalization("minmax") == MapNormalization::minmax);
  CHECK_THROWS_AS(parse_normalization("zscore"), LookupError);
}

TEST_CASE("config validation and trace JSON") {
  AugmentConfig c;
  c.t_max = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = AugmentConfig{};
  c.alpha = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);

  SingleIterationCase sc;
  const AugmentConfig ok = saliency_cfg(sc.th_pred);
  const AugmentResult r = augment(sc.image, sc.net, ok);
  const auto j = nlohmann::json::parse(trace_to_json(r.trace, ok));
  CHECK(j["reason"] == "below_threshold");
  CHECK(j["T_max"] == 20);
  CHECK(j["alpha"] == 0.6);
  CHECK(j["iterations"].size() == 1);
  CHECK(j["iterations"][0]["mask_pixels"] == 16);
}
