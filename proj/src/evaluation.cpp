#include "evloop/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "evloop/error.hpp"

EVLOOP_NAMESPACE_BEGIN

RocCurve roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("scores and labels differ in length");
  std::int64_t pos = 0, neg = 0;
  for (int l : labels) (l != 0 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw DegenerateError("ROC undefined: only one class present");

  // Counts per distinct score, highest first.
  std::map<double, std::pair<std::int64_t, std::int64_t>, std::greater<>> by_score;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw NumericError("non-finite score in ROC input");
    auto& [p, n] = by_score[scores[i]];
    (labels[i] != 0 ? p : n) += 1;
  }

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  std::int64_t auc_num = 0;  // sum of dFP * (TP_prev + TP_cur)
  const auto P = static_cast<double>(pos), N = static_cast<double>(neg);

  double best_num = 0;
  bool have_best = false;
  std::vector<double> distinct;
  distinct.reserve(by_score.size());
  for (const auto& [score, counts] : by_score) distinct.push_back(score);

  std::size_t j = 0;
  for (const auto& [score, counts] : by_score) {
    const std::int64_t tp_prev = tp;
    tp += counts.first;
    fp += counts.second;
    auc_num += counts.second * (tp_prev + tp);
    curve.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P});
    // Midpoint between this score and the next lower one predicts positive
    // exactly for scores >= this one.
    if (j + 1 < distinct.size()) {
      const double fn_n = static_cast<double>(pos - tp) * N;
      const double fp_p = static_cast<double>(fp) * P;
      const double num = fn_n * fn_n + fp_p * fp_p;
      // Iterating from high to low thresholds, "<=" moves ties toward the
      // lower threshold, i.e. the higher sensitivity.
      if (!have_best || num <= best_num) {
        best_num = num;
        have_best = true;
        curve.optimal.threshold = 0.5 * (score + distinct[j + 1]);
        curve.optimal.sensitivity = static_cast<double>(tp) / P;
        curve.optimal.specificity = static_cast<double>(neg - fp) / N;
      }
    }
    ++j;
  }
  curve.auc = static_cast<double>(auc_num) / (2.0 * P * N);
  if (!have_best) throw DegenerateError("ROC operating point undefined: all scores are identical");
  return curve;
}

ConfusionMatrix confusion_matrix(std::span<const int> reference, std::span<const int> predicted,
                                 std::size_t classes) {
  if (reference.size() != predicted.size()) throw ArgumentError("label sequences differ in length");
  ConfusionMatrix m(classes, std::vector<std::int64_t>(classes, 0));
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(reference[i]) >= classes ||
        static_cast<std::size_t>(predicted[i]) >= classes) {
      throw ArgumentError("grade outside [0, " + std::to_string(classes) + ")");
    }
    ++m[static_cast<std::size_t>(reference[i])][static_cast<std::size_t>(predicted[i])];
  }
  return m;
}

double quadratic_weighted_kappa(const ConfusionMatrix& o) {
  const std::size_t k = o.size();
  if (k < 2) throw ArgumentError("kappa needs at least two classes");
  std::vector<double> rows(k, 0.0), cols(k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (o[i].size() != k) throw ArgumentError("confusion matrix must be square");
    for (std::size_t j = 0; j < k; ++j) {
      if (o[i][j] < 0) throw ArgumentError("negative count in confusion matrix");
      rows[i] += static_cast<double>(o[i][j]);
      cols[j] += static_cast<double>(o[i][j]);
      total += static_cast<double>(o[i][j]);
    }
  }
  if (total <= 0) throw ArgumentError("confusion matrix is empty");
  const double denom_w = static_cast<double>((k - 1) * (k - 1));
  double observed = 0.0, expected = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double w = d * d / denom_w;
      observed += w * static_cast<double>(o[i][j]);
      expected += w * rows[i] * cols[j] / total;
    }
  }
  if (expected == 0.0) throw DegenerateError("kappa undefined: zero expected disagreement");
  return 1.0 - observed / expected;
}

LesionReference lesion_reference(const BinaryMask& mask) {
  LesionReference ref{mask.height(), mask.width(), {}};
  const std::size_t h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> seen(h * w, 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!mask[start] || seen[start]) continue;
    std::vector<std::size_t> comp;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      comp.push_back(p);
      const std::size_t y = p / w, x = p % w;
      auto visit = [&](std::size_t q) {
        if (mask[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
    }
    std::sort(comp.begin(), comp.end());
    ref.components.push_back(std::move(comp));
  }
  return ref;
}

ImageDetections froc_per_image(const ExplanationMap& map, const LesionReference& reference,
                               double radius, std::size_t cap) {
  const std::size_t h = map.height(), w = map.width();
  if (reference.height != h || reference.width != w) {
    throw ShapeError("lesion reference does not match the map");
  }
  if (!(radius >= 1.0)) throw ArgumentError("detection radius must be >= 1");
  std::vector<std::ptrdiff_t> label(h * w, -1);
  for (std::size_t c = 0; c < reference.components.size(); ++c) {
    for (std::size_t p : reference.components[c]) label[p] = static_cast<std::ptrdiff_t>(c);
  }
  std::vector<std::uint8_t> detected(reference.components.size(), 0);
  std::vector<double> work(map.grid.values().begin(), map.grid.values().end());

  ImageDetections out;
  out.lesion_count = reference.components.size();
  const auto r = static_cast<std::ptrdiff_t>(std::floor(radius));
  const double r2 = radius * radius;
  while (out.detections.size() < cap) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < work.size(); ++i) {
      if (work[i] > work[best]) best = i;
    }
    if (!(work[best] > 0.0)) break;
    Detection det{best / w, best % w, work[best], 0};
    const auto cy = static_cast<std::ptrdiff_t>(det.y), cx = static_cast<std::ptrdiff_t>(det.x);
    for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, cy - r);
         y <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(h) - 1, cy + r); ++y) {
      for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, cx - r);
           x <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(w) - 1, cx + r); ++x) {
        const auto d2 = static_cast<double>((y - cy) * (y - cy) + (x - cx) * (x - cx));
        if (d2 > r2) continue;
        const std::size_t p = static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x);
        const std::ptrdiff_t lab = label[p];
        if (lab >= 0 && !detected[static_cast<std::size_t>(lab)]) {
          detected[static_cast<std::size_t>(lab)] = 1;
          ++det.credited;
        }
        work[p] = 0.0;
      }
    }
    out.detections.push_back(det);
  }
  return out;
}

double sensitivity_at_fp(const std::vector<FrocPoint>& points, double target_fp) {
  double prev_fp = 0.0, prev_se = 0.0;
  for (const auto& p : points) {
    if (p.avg_fp_per_image > target_fp) {
      return prev_se + (target_fp - prev_fp) * (p.sensitivity - prev_se) /
                           (p.avg_fp_per_image - prev_fp);
    }
    prev_fp = p.avg_fp_per_image;
    prev_se = p.sensitivity;
  }
  return prev_se;
}

FrocCurve froc_aggregate(std::span<const ImageDetections> images, const FrocOptions& options) {
  if (images.empty()) throw ArgumentError("FROC needs at least one image");
  FrocCurve curve;
  curve.target_fp = options.target_fp;
  curve.n_images = images.size();
  std::size_t images_with_lesions = 0;
  for (const auto& im : images) {
    curve.n_lesions += im.lesion_count;
    if (im.lesion_count > 0) ++images_with_lesions;
  }
  if (curve.n_lesions == 0) throw DegenerateError("FROC sensitivity undefined: no reference lesions");

  struct Item {
    double confidence;
    std::size_t image;
    std::size_t credited;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (const auto& d : images[i].detections) items.push_back({d.confidence, i, d.credited});
  }
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.confidence > b.confidence; });

  std::vector<std::size_t> credited_per_image(images.size(), 0);
  std::size_t fp = 0, credited = 0;
  const auto n_img = static_cast<double>(images.size());
  for (std::size_t k = 0; k < items.size();) {
    const double c = items[k].confidence;
    for (; k < items.size() && items[k].confidence == c; ++k) {
      if (items[k].credited > 0) {
        credited += items[k].credited;
        credited_per_image[items[k].image] += items[k].credited;
      } else {
        ++fp;
      }
    }
    double se;
    if (options.per_image_average) {
      double acc = 0.0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].lesion_count == 0) continue;
        acc += static_cast<double>(credited_per_image[i]) /
               static_cast<double>(images[i].lesion_count);
      }
      se = acc / static_cast<double>(images_with_lesions);
    } else {
      se = static_cast<double>(credited) / static_cast<double>(curve.n_lesions);
    }
    curve.points.push_back({c, static_cast<double>(fp) / n_img, se});
  }
  curve.se_at_target_fp = sensitivity_at_fp(curve.points, options.target_fp);
  return curve;
}

std::size_t radius_from_percent(double percent, std::size_t image_dim) {
  if (!(percent > 0)) throw ArgumentError("radius percentage must be > 0");
  const double r = std::floor(percent / 100.0 * static_cast<double>(image_dim) + 0.5);
  return std::max<std::size_t>(1, static_cast<std::size_t>(r));
}

std::string froc_to_csv(const FrocCurve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "threshold,avg_fp_per_image,sensitivity\n";
  for (const auto& p : curve.points) {
    os << p.threshold << ',' << p.avg_fp_per_image << ',' << p.sensitivity << '\n';
  }
  return os.str();
}

EVLOOP_NAMESPACE_END
