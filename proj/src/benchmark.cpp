#include "evloop/benchmark.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <sstream>

#include "evloop/error.hpp"
#include "evloop/parallel.hpp"

EVLOOP_NAMESPACE_BEGIN

std::optional<double> FrocBenchmarkResult::relative_change() const {
  if (!mean_augmented || mean_initial == 0.0) return std::nullopt;
  return (*mean_augmented - mean_initial) / mean_initial;
}

std::vector<BenchmarkScene> load_benchmark_scenes(const Model& model,
                                                  const std::filesystem::path& data_dir) {
  const Manifest manifest = read_manifest(data_dir);
  std::vector<BenchmarkScene> scenes(manifest.entries.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    const ManifestEntry& e = manifest.entries[i];
    const Image raw = load_entry_image(data_dir, e);
    const PreprocessGeometry geo = preprocess_geometry(raw, model.preprocessing);
    const auto masks = load_entry_masks(data_dir, e);
    BenchmarkScene& s = scenes[i];
    s.id = e.id;
    s.grade = e.grade;
    s.image = preprocess(raw, model.preprocessing);
    for (std::size_t t = 0; t < kLesionTypes; ++t) {
      if (masks[t].height() != raw.height() || masks[t].width() != raw.width()) {
        throw DataError("mask of scene " + std::to_string(e.id) + " does not match its image");
      }
      s.masks[t] = apply_geometry(masks[t], geo);
    }
  });
  return scenes;
}

FrocBenchmarkResult run_froc_benchmark(const Model& model, const std::vector<BenchmarkScene>& scenes,
                                       const FrocBenchmarkConfig& cfg) {
  AttributionConfig attr = cfg.attribution;
  if (attr.grad_cam_layer.empty()) attr.grad_cam_layer = model.preset.grad_cam_layer;
  AugmentConfig aug = cfg.augmentation;
  aug.attribution = attr;
  aug.th_pred = model.th_pred;
  aug.validate();

  FrocBenchmarkResult result;
  // Eligible: reference-referable and predicted referable.
  std::vector<Real> preds(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) { preds[i] = predict(model, scenes[i].image, false); });
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!is_referable_grade(scenes[i].grade)) continue;
    if (model.referable(preds[i])) {
      if (cfg.limit == 0 || eligible.size() < cfg.limit) eligible.push_back(i);
    } else {
      ++result.missed_referable;
    }
  }
  if (eligible.empty()) {
    throw DataError("no referable scene to evaluate (needs grade >= 2 and a referable prediction)");
  }
  result.image_dim = scenes[eligible.front()].image.height();
  result.radius = radius_from_percent(cfg.radius_pct, result.image_dim);
  const double r = static_cast<double>(result.radius);

  const std::size_t n = eligible.size();
  std::vector<std::array<ImageDetections, kLesionTypes>> det_init(n), det_aug(n);
  std::vector<IterationTrace> traces(n);
  parallel_for(n, [&](std::size_t k) {
    const BenchmarkScene& s = scenes[eligible[k]];
    ExplanationMap initial, augmented;
    if (cfg.augment) {
      AugmentResult ar = augment(s.image, model.net, aug);
      initial = std::move(ar.initial_map);
      augmented = std::move(ar.augmented_map);
      traces[k] = std::move(ar.trace);
    } else {
      initial = attribute(model.net, s.image.tensor(), attr);
    }
    for (std::size_t t = 0; t < kLesionTypes; ++t) {
      const LesionReference ref = lesion_reference(s.masks[t]);
      det_init[k][t] = froc_per_image(initial, ref, r, cfg.detection_cap);
      if (cfg.augment) det_aug[k][t] = froc_per_image(augmented, ref, r, cfg.detection_cap);
    }
  });

  double sum_init = 0.0, sum_aug = 0.0;
  std::size_t types_with_lesions = 0;
  for (std::size_t t = 0; t < kLesionTypes; ++t) {
    LesionTypeFroc& out = result.per_type[t];
    out.type = kAllLesionTypes[t];
    std::vector<ImageDetections> a, b;
    for (std::size_t k = 0; k < n; ++k) {
      out.n_lesions += det_init[k][t].lesion_count;
      a.push_back(det_init[k][t]);
      if (cfg.augment) b.push_back(det_aug[k][t]);
    }
    if (out.n_lesions == 0) continue;
    ++types_with_lesions;
    out.initial = froc_aggregate(a, cfg.froc);
    sum_init += out.initial->se_at_target_fp;
    if (cfg.augment) {
      out.augmented = froc_aggregate(b, cfg.froc);
      sum_aug += out.augmented->se_at_target_fp;
    }
  }
  if (types_with_lesions == 0) throw DataError("evaluated scenes hold no reference lesions");
  result.mean_initial = sum_init / static_cast<double>(types_with_lesions);
  if (cfg.augment) result.mean_augmented = sum_aug / static_cast<double>(types_with_lesions);
  for (std::size_t i : eligible) result.evaluated_ids.push_back(scenes[i].id);
  result.traces = std::move(traces);
  return result;
}

std::string benchmark_summary_json(const FrocBenchmarkResult& result,
                                   const FrocBenchmarkConfig& cfg) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["method"] = method_name(cfg.attribution.method);
  j["augment"] = cfg.augment;
  j["radius_pct"] = cfg.radius_pct;
  j["r"] = result.radius;
  j["image_dim"] = result.image_dim;
  j["target_fp"] = cfg.froc.target_fp;
  j["n_images"] = result.evaluated_ids.size();
  j["missed_referable"] = result.missed_referable;
  ordered_json types = ordered_json::object();
  for (const auto& t : result.per_type) {
    ordered_json e;
    e["n_lesions"] = t.n_lesions;
    e["initial"] = t.initial ? ordered_json(t.initial->se_at_target_fp) : ordered_json();
    if (cfg.augment) {
      e["augmented"] = t.augmented ? ordered_json(t.augmented->se_at_target_fp) : ordered_json();
      if (t.initial && t.augmented && t.initial->se_at_target_fp > 0) {
        e["relative_change"] =
            (t.augmented->se_at_target_fp - t.initial->se_at_target_fp) / t.initial->se_at_target_fp;
      } else {
        e["relative_change"] = nullptr;
      }
    }
    types[std::string(lesion_type_name(t.type))] = e;
  }
  j["lesion_types"] = types;
  j["mean_se_at_10fp_initial"] = result.mean_initial;
  j["mean_se_at_10fp_augmented"] =
      result.mean_augmented ? ordered_json(*result.mean_augmented) : ordered_json();
  const auto rel = result.relative_change();
  j["relative_change"] = rel ? ordered_json(*rel) : ordered_json();
  if (cfg.augment) {
    std::size_t max_len = 0;
    std::map<std::string, std::size_t> reasons;
    for (const auto& tr : result.traces) {
      max_len = std::max(max_len, tr.iterations.size());
      ++reasons[std::string(reason_name(tr.reason))];
    }
    j["max_trace_length"] = max_len;
    j["termination_reasons"] = reasons;
  }
  return j.dump(2);
}

std::string benchmark_table(const FrocBenchmarkResult& result) {
  std::ostringstream os;
  auto fmt = [](std::optional<double> v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  os << "| lesion type | lesions | initial SE@10FP | augmented SE@10FP | relative change |\n";
  os << "|---|---|---|---|---|\n";
  for (const auto& t : result.per_type) {
    std::optional<double> a, b, rel;
    if (t.initial) a = t.initial->se_at_target_fp;
    if (t.augmented) b = t.augmented->se_at_target_fp;
    if (a && b && *a > 0) rel = (*b - *a) / *a;
    os << "| " << lesion_type_name(t.type) << " | " << t.n_lesions << " | " << fmt(a) << " | "
       << fmt(b) << " | " << fmt(rel) << " |\n";
  }
  os << "| mean | | " << fmt(result.mean_initial) << " | " << fmt(result.mean_augmented) << " | "
     << fmt(result.relative_change()) << " |\n";
  return os.str();
}

EVLOOP_NAMESPACE_END
