#pragma once

#include "evloop/config.hpp"

// Brute-force reference computations. Each one is written from the textbook
// definition and shares no code with the library beyond the public types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

// Tagged with the precision so 32- and 64-bit translation units can share a binary.
namespace evloop_test {
inline namespace EVLOOP_ABI {

// ------------------------------------------------------------------- Otsu

struct OtsuOracle {
  std::size_t cut = 0;  // 0 when degenerate
  double th_bin = 0;
};

/// Tries every cut k in 1..255 by recounting both classes from the raw pixel
/// list; between-class variance compared as exact rationals.
inline OtsuOracle otsu_brute_force(const std::vector<double>& values) {
  OtsuOracle out;
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  std::vector<std::int64_t> bin(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double b = std::floor((values[i] - lo) / (hi - lo) * 256.0);
    bin[i] = static_cast<std::int64_t>(std::clamp(b, 0.0, 255.0));
  }
  using i128 = __int128;
  i128 best_num = -1, best_den = 1;
  for (std::int64_t k = 1; k < 256; ++k) {
    std::int64_t n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (std::int64_t b : bin) {
      if (b < k) {
        ++n0;
        s0 += b;
      } else {
        ++n1;
        s1 += b;
      }
    }
    if (n0 == 0 || n1 == 0) continue;
    // n0*n1*(m1-m0)^2 = (n0*s1 - n1*s0)^2 / (n0*n1)
    const i128 d = static_cast<i128>(n0) * s1 - static_cast<i128>(n1) * s0;
    const i128 num = d * d, den = static_cast<i128>(n0) * n1;
    if (best_num < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      out.cut = static_cast<std::size_t>(k);
    }
  }
  out.th_bin = static_cast<double>(out.cut) / 256.0;
  return out;
}

// -------------------------------------------------------------------- AUC

/// (concordant pairs + ties/2) / (P*N).
inline double auc_pair_counting(const std::vector<double>& s, const std::vector<int>& y) {
  std::int64_t twice = 0, p = 0, n = 0;
  for (int l : y) (l ? p : n) += 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      if (s[i] > s[j]) twice += 2;
      else if (s[i] == s[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(p) * static_cast<double>(n));
}

struct CornerChoice {
  double threshold = 0;
  double distance = 0;
};

/// Enumerates every midpoint between consecutive distinct scores, rule
/// "positive iff score >= t", and keeps the one nearest the (0, 1) corner;
/// ties go to the higher sensitivity.
inline CornerChoice corner_brute_force(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> u = s;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::int64_t p = 0, n = 0;
  for (int l : y) (l ? p : n) += 1;
  // Squared distance scaled by (P*N)^2 keeps the comparison exact.
  CornerChoice best{0, 1e300};
  std::int64_t best_key = -1, best_tp = -1;
  for (std::size_t k = 0; k + 1 < u.size(); ++k) {
    const double t = 0.5 * (u[k] + u[k + 1]);
    std::int64_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] < t) continue;
      (y[i] ? tp : fp) += 1;
    }
    const std::int64_t key = (p - tp) * n * (p - tp) * n + fp * p * fp * p;
    if (best_key < 0 || key < best_key || (key == best_key && tp > best_tp)) {
      best_key = key;
      best_tp = tp;
      best = {t, std::hypot(static_cast<double>(p - tp) / static_cast<double>(p),
                            static_cast<double>(fp) / static_cast<double>(n))};
    }
  }
  return best;
}

// ------------------------------------------------------------------ kappa

/// Kappa from joint and marginal proportions.
inline double kappa_formula(const std::vector<std::vector<std::int64_t>>& o) {
  const std::size_t k = o.size();
  double total = 0;
  for (const auto& row : o)
    for (auto v : row) total += static_cast<double>(v);
  std::vector<double> pr(k, 0), pc(k, 0);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      pr[i] += static_cast<double>(o[i][j]) / total;
      pc[j] += static_cast<double>(o[i][j]) / total;
    }
  double num = 0, den = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double w = std::pow((static_cast<double>(i) - static_cast<double>(j)) /
                                    static_cast<double>(k - 1),
                                2);
      num += w * static_cast<double>(o[i][j]) / total;
      den += w * pr[i] * pc[j];
    }
  return 1.0 - num / den;
}

// ------------------------------------------------------------------- FROC

struct OracleDetection {
  std::size_t y, x;
  double confidence;
  std::size_t credited;
};

/// Greedy peak picking over a row-major map with per-pixel lesion labels
/// (-1 = background), recomputing every distance from scratch.
inline std::vector<OracleDetection> froc_greedy(std::vector<double> map, std::size_t h, std::size_t w,
                                                const std::vector<int>& label, std::size_t n_lesions,
                                                double r, std::size_t cap) {
  std::vector<bool> hit(n_lesions, false);
  std::vector<OracleDetection> out;
  while (out.size() < cap) {
    double m = 0;
    std::size_t at = 0;
    bool found = false;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if (map[y * w + x] > m) {
          m = map[y * w + x];
          at = y * w + x;
          found = true;
        }
    if (!found) break;
    OracleDetection d{at / w, at % w, m, 0};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - static_cast<double>(d.y);
        const double dx = static_cast<double>(x) - static_cast<double>(d.x);
        if (dy * dy + dx * dx > r * r) continue;
        const int l = label[y * w + x];
        if (l >= 0 && !hit[static_cast<std::size_t>(l)]) {
          hit[static_cast<std::size_t>(l)] = true;
          ++d.credited;
        }
        map[y * w + x] = 0;
      }
    out.push_back(d);
  }
  return out;
}

/// 4-connected labelling by repeated label propagation until fixpoint; labels
/// renumbered in order of each component's first row-major pixel.
inline std::vector<int> label_components(const std::vector<bool>& mask, std::size_t h, std::size_t w,
                                         std::size_t* count) {
  std::vector<int> lab(h * w, -1);
  for (std::size_t i = 0; i < h * w; ++i)
    if (mask[i]) lab[i] = static_cast<int>(i);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        if (lab[i] < 0) continue;
        auto pull = [&](std::size_t j) {
          if (lab[j] >= 0 && lab[j] < lab[i]) {
            lab[i] = lab[j];
            changed = true;
          }
        };
        if (y > 0) pull(i - w);
        if (y + 1 < h) pull(i + w);
        if (x > 0) pull(i - 1);
        if (x + 1 < w) pull(i + 1);
      }
  }
  std::vector<int> remap(h * w, -1);
  int next = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (lab[i] < 0) continue;
    auto& r = remap[static_cast<std::size_t>(lab[i])];
    if (r < 0) r = next++;
    lab[i] = r;
  }
  *count = static_cast<std::size_t>(next);
  return lab;
}

}  // namespace EVLOOP_ABI
}  // namespace evloop_test
