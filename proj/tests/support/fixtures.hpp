#pragma once

#include "evloop/config.hpp"

// Small hand-built instances shared by unit and acceptance tests.

#include <cmath>
#include <random>
#include <vector>

#include "evloop/evaluation.hpp"
#include "evloop/image.hpp"
#include "evloop/network.hpp"

// Tagged with the precision so 32- and 64-bit translation units can share a binary.
namespace evloop_test {
inline namespace EVLOOP_ABI {

using namespace evloop;

// 20x20 map, radius 2. Lesion A is a single pixel at (5,5) under the top peak,
// lesion B a single pixel at (3,16). Worked by hand:
//   1. (5,5)   0.9  credits A; the disc also wipes the 0.5 shoulder at (5,7)
//   2. (14,14) 0.7  FP
//   3. (5,8)   0.3  FP (distance 3 from A, and A is already credited)
//   4. (4,16)  0.2  credits B
// then the map is exhausted. Sweep: (0.9, 0 FP, 0.5), (0.7, 1, 0.5),
// (0.3, 2, 0.5), (0.2, 2, 1.0).
struct HandFroc {
  ExplanationMap map = ExplanationMap::zeros(20, 20, AttributionMethod::saliency);
  BinaryMask lesions{20, 20};
  double radius = 2;

  HandFroc() {
    auto put = [&](std::size_t y, std::size_t x, double v) {
      map.grid[y * 20 + x] = static_cast<Real>(v);
    };
    put(5, 5, 0.9);
    put(5, 7, 0.5);
    put(14, 14, 0.7);
    put(5, 8, 0.3);
    put(4, 16, 0.2);
    lesions.set(5, 5);
    lesions.set(3, 16);
  }

  struct Expected {
    std::size_t y, x;
    double confidence;
    std::size_t credited;
  };
  static std::vector<Expected> trace() {
    return {{5, 5, 0.9, 1}, {14, 14, 0.7, 0}, {5, 8, 0.3, 0}, {4, 16, 0.2, 1}};
  }
  static std::vector<FrocPoint> sweep() {
    return {{0.9, 0, 0.5}, {0.7, 1, 0.5}, {0.3, 2, 0.5}, {0.2, 2, 1.0}};
  }
};

// A linear scorer that only looks at a 4x4 block of channel 0. The saliency
// map is |w| (two levels), so Otsu selects exactly the block; inpainting the
// block from its dim surroundings drops the score below th_pred after one
// iteration.
struct SingleIterationCase {
  static constexpr std::size_t kSize = 16;
  Network net;
  Image image{kSize, kSize, Real(0.2)};
  Real th_pred = 8;

  SingleIterationCase()
      : net({3, kSize, kSize}, {{"flat", Flatten{}}, {"out", Dense{1}}}) {
    auto& p = net.mutable_params(1);
    p.weight.fill(0);
    p.bias.fill(0);
    for (std::size_t y = 0; y < kSize; ++y)
      for (std::size_t x = 0; x < kSize; ++x) {
        const bool block = y >= 6 && y < 10 && x >= 6 && x < 10;
        p.weight[y * kSize + x] = block ? Real(1) : Real(0.01);
        if (block)
          for (std::size_t c = 0; c < 3; ++c) image.at(c, y, x) = Real(0.9);
      }
  }
  static bool in_block(std::size_t y, std::size_t x) { return y >= 6 && y < 10 && x >= 6 && x < 10; }
};

// Random explanation-map values of four kinds: uniform, bimodal, heavily tied
// and skewed, selected by kind % 4.
inline std::vector<double> random_map_values(std::mt19937_64& rng, std::size_t n, int kind) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(n);
  for (auto& x : v) {
    switch (kind % 4) {
      case 0: x = u(rng); break;
      case 1: x = u(rng) < 0.2 ? 0.6 + 0.4 * u(rng) : 0.3 * u(rng); break;  // bimodal
      case 2: x = std::floor(u(rng) * 7) / 7; break;                         // heavy ties
      default: x = std::pow(u(rng), 6); break;                               // skewed
    }
  }
  return v;
}

// Linear ramp in x and y with a per-channel offset, inside (0, 1).
inline Image ramp_image(std::size_t n) {
  Image img(n, n);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        img.at(c, y, x) = static_cast<Real>(
            0.05 + 0.1 * static_cast<double>(c) +
            0.4 * (static_cast<double>(x) + 0.5 * static_cast<double>(y)) / static_cast<double>(n));
  return img;
}

inline BinaryMask disc_mask(std::size_t n, double cy, double cx, double r) {
  BinaryMask m(n, n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx) <= r) m.set(y, x);
  return m;
}

}  // namespace EVLOOP_ABI
}  // namespace evloop_test
