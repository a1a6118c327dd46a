#include <algorithm>
#include <array>
#include <cmath>

#include "evloop/image.hpp"

EVLOOP_NAMESPACE_BEGIN

std::size_t otsu_bin(double normalized) {
  const double scaled = std::floor(normalized * static_cast<double>(kOtsuBins));
  if (scaled <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(scaled), kOtsuBins - 1);
}

OtsuResult binarize_otsu(const ExplanationMap& map, const BinaryMask* region) {
  const std::size_t h = map.height(), w = map.width();
  if (region && (region->height() != h || region->width() != w)) {
    throw ShapeError("Otsu region mask does not match the map");
  }
  OtsuResult res;
  res.mask = BinaryMask(h, w);
  const Tensor& g = map.grid;
  auto in_region = [&](std::size_t i) { return region == nullptr || (*region)[i]; };

  double lo = 0.0, hi = 0.0;
  bool seen = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!in_region(i)) continue;
    const double v = g[i];
    if (!seen) {
      lo = hi = v;
      seen = true;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!seen || !(hi > lo)) {
    res.degenerate = true;
    return res;
  }

  const double span = hi - lo;
  std::vector<std::uint16_t> bins(g.size(), 0);
  std::array<std::uint64_t, kOtsuBins> hist{};
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!in_region(i)) continue;
    bins[i] = static_cast<std::uint16_t>(otsu_bin((g[i] - lo) / span));
    ++hist[bins[i]];
    ++total;
  }

  // Between-class variance for the cut "bins < k" vs "bins >= k", scaled by
  // N^2 (constant across k): (n1*S0 - n0*S1)^2 / (n0*n1), compared exactly in
  // integers so ties resolve to the first cut on every platform.
  using u128 = unsigned __int128;
  std::uint64_t sum_all = 0;
  for (std::size_t b = 0; b < kOtsuBins; ++b) sum_all += b * hist[b];
  struct Ratio {
    u128 num = 0;
    u128 den = 1;
  };
  auto greater = [](const Ratio& a, const Ratio& b) {
    const u128 qa = a.num / a.den, qb = b.num / b.den;
    if (qa != qb) return qa > qb;
    return (a.num % a.den) * b.den > (b.num % b.den) * a.den;
  };
  Ratio best;
  std::size_t best_cut = 0;
  std::uint64_t n0 = 0, s0 = 0;
  for (std::size_t k = 1; k < kOtsuBins; ++k) {
    n0 += hist[k - 1];
    s0 += (k - 1) * hist[k - 1];
    const std::uint64_t n1 = total - n0, s1 = sum_all - s0;
    if (n0 == 0 || n1 == 0) continue;
    // m1 >= m0, so n0*s1 >= n1*s0.
    const u128 diff = static_cast<u128>(n0) * s1 - static_cast<u128>(n1) * s0;
    const Ratio r{diff * diff, static_cast<u128>(n0) * n1};
    if (best_cut == 0 || greater(r, best)) {
      best = r;
      best_cut = k;
    }
  }
  if (best_cut == 0) {
    res.degenerate = true;
    return res;
  }
  res.cut = best_cut;
  res.th_bin = static_cast<Real>(static_cast<double>(best_cut) / static_cast<double>(kOtsuBins));
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (in_region(i) && bins[i] >= best_cut) res.mask.set(i / w, i % w);
  }
  return res;
}

EVLOOP_NAMESPACE_END
