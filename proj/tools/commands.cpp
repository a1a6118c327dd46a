#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "evloop/benchmark.hpp"
#include "evloop/dataset.hpp"
#include "evloop/error.hpp"
#include "evloop/map_io.hpp"
#include "evloop/parallel.hpp"
#include "evloop/png_io.hpp"

namespace evloop::cli {

using nlohmann::ordered_json;

namespace {

constexpr std::size_t kSmallDataset = 100;

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) throw IoError("cannot write '" + path.string() + "'");
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// FNV-1a over the bytes of the given files, in order.
std::string hash_files(const std::vector<fs::path>& files) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    if (!is) throw IoError("cannot read '" + f.string() + "'");
    char buf[1 << 14];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
      for (std::streamsize i = 0; i < is.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 0x100000001b3ULL;
      }
    }
  }
  return hex64(h);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

ordered_json metrics_json(const ClassificationMetrics& m) {
  ordered_json j{{"n", m.n}, {"auc", m.auc}, {"sensitivity", m.sensitivity},
                 {"specificity", m.specificity}};
  j["kappa"] = m.kappa ? ordered_json(*m.kappa) : ordered_json();
  return j;
}

void print_metrics(const char* label, const ClassificationMetrics& m, Real th) {
  std::cout << label << ": AUC " << fixed(m.auc) << "  SE " << fixed(m.sensitivity) << "  SP "
            << fixed(m.specificity) << "  kappa "
            << (m.kappa ? fixed(*m.kappa) : std::string("undefined")) << "  th_pred "
            << fixed(th, 6) << "  (n=" << m.n << ")\n";
}

}  // namespace

int cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir) {
  make_dir(out_dir);
  const Manifest m = generate_dataset(cfg.generator, cfg.counts, cfg.seed, out_dir);
  write_run_config(out_dir, cfg);
  std::vector<fs::path> files{out_dir / "manifest.json"};
  std::array<std::size_t, 4> per_grade{};
  for (const auto& e : m.entries) {
    ++per_grade[static_cast<std::size_t>(e.grade)];
    const std::string stem = entry_stem(e.id);
    files.push_back(out_dir / "images" / (stem + ".png"));
    for (LesionType t : kAllLesionTypes) {
      files.push_back(out_dir / "masks" / (stem + "." + std::string(lesion_type_name(t)) + ".png"));
    }
  }
  std::cout << "scenes: " << m.entries.size() << " (grade 0: " << per_grade[0]
            << ", 1: " << per_grade[1] << ", 2: " << per_grade[2] << ", 3: " << per_grade[3]
            << ")\n"
            << "image size: " << m.image_size << "\n"
            << "generator config hash: " << m.generator_cfg_hash << "\n"
            << "dataset hash: " << hash_files(files) << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_model) {
  const Manifest manifest = read_manifest(data_dir);
  std::vector<Image> images(manifest.entries.size());
  std::vector<int> grades;
  for (const auto& e : manifest.entries) grades.push_back(e.grade);
  parallel_for(images.size(),
               [&](std::size_t i) { images[i] = load_entry_image(data_dir, manifest.entries[i]); });
  if (images.size() < kSmallDataset) {
    std::cerr << "warning: only " << images.size()
              << " scenes; validation metrics will be noisy and th_pred unreliable\n";
  }
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  PreprocessSpec spec;
  spec.target_size = cfg.input_size;
  const ArchitecturePreset preset = make_preset(cfg.preset, cfg.input_size, cfg.width_multiplier);
  auto [model, history] = train(images, grades, preset, tc, spec);

  make_dir(out_model);
  save_model(model, out_model);
  write_run_config(out_model, cfg);
  ordered_json h;
  h["train_size"] = history.train_size;
  h["val_size"] = history.val_size;
  h["best_epoch"] = history.best_epoch;
  h["epochs"] = ordered_json::array();
  for (const auto& e : history.epochs) {
    h["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_loss", e.val_loss},
                           {"val_auc", e.val_auc}});
  }
  write_text(out_model / "history.json", h.dump(2) + "\n");
  std::cout << "trained " << preset_name(preset.name) << " on " << history.train_size
            << " scenes, validated on " << history.val_size << " (best epoch "
            << history.best_epoch << " of " << history.epochs.size() << ")\n";
  print_metrics("validation", model.metrics, model.th_pred);
  return 0;
}

int cmd_grade(const fs::path& model_dir, const fs::path& data_dir, const fs::path& out_dir) {
  const Model model = load_model(model_dir);
  const Manifest manifest = read_manifest(data_dir);
  std::vector<double> preds(manifest.entries.size());
  std::vector<int> grades;
  for (const auto& e : manifest.entries) grades.push_back(e.grade);
  parallel_for(preds.size(), [&](std::size_t i) {
    preds[i] = predict(model, load_entry_image(data_dir, manifest.entries[i]), true);
  });
  const ClassificationMetrics m = classification_metrics(preds, grades, model.th_pred);
  print_metrics("dataset", m, model.th_pred);
  if (!out_dir.empty()) {
    make_dir(out_dir);
    std::string csv = "id,grade,y_hat,referable\n";
    for (std::size_t i = 0; i < preds.size(); ++i) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%d,%.9g,%d\n", manifest.entries[i].id, grades[i],
                    preds[i], preds[i] >= model.th_pred ? 1 : 0);
      csv += buf;
    }
    write_text(out_dir / "predictions.csv", csv);
    write_text(out_dir / "metrics.json", metrics_json(m).dump(2) + "\n");
  }
  return 0;
}

int cmd_explain(const RunConfig& cfg, const fs::path& model_dir, const fs::path& image_path,
                bool with_augment, const fs::path& out_dir) {
  const Model model = load_model(model_dir);
  const Image image = preprocess(read_png(image_path), model.preprocessing);
  AugmentConfig aug = cfg.augmentation();
  if (aug.attribution.grad_cam_layer.empty()) aug.attribution.grad_cam_layer = model.preset.grad_cam_layer;
  aug.th_pred = model.th_pred;
  make_dir(out_dir);
  write_run_config(out_dir, cfg);
  const Real y = predict(model, image, false);
  std::cout << "prediction " << fixed(y, 6) << " (th_pred " << fixed(model.th_pred, 6) << ", "
            << (model.referable(y) ? "referable" : "non-referable") << ")\n";
  if (!with_augment) {
    const ExplanationMap map = attribute(model.net, image.tensor(), aug.attribution);
    save_map(out_dir / "initial.evmap", map);
    write_png(out_dir / "heatmap.png", render_heatmap(image, map));
    return 0;
  }
  const AugmentResult r = augment(image, model.net, aug);
  save_map(out_dir / "initial.evmap", r.initial_map);
  save_map(out_dir / "augmented.evmap", r.augmented_map);
  write_text(out_dir / "trace.json", trace_to_json(r.trace, aug) + "\n");
  write_png(out_dir / "heatmap.png",
            side_by_side(render_heatmap(image, r.initial_map), render_heatmap(image, r.augmented_map)));
  write_png(out_dir / "inpainted.png", r.inpainted);
  std::cout << "iterations " << r.trace.iterations.size() << ", reason "
            << reason_name(r.trace.reason) << ", final prediction "
            << fixed(r.trace.final_prediction, 6) << "\n";
  return 0;
}

int cmd_eval_froc(const RunConfig& cfg, const fs::path& model_dir, const fs::path& data_dir,
                  bool with_augment, const fs::path& out_dir) {
  const Model model = load_model(model_dir);
  const auto scenes = load_benchmark_scenes(model, data_dir);
  const FrocBenchmarkConfig bc = cfg.benchmark(with_augment);
  const FrocBenchmarkResult res = run_froc_benchmark(model, scenes, bc);

  make_dir(out_dir);
  write_run_config(out_dir, cfg);
  write_text(out_dir / "summary.json", benchmark_summary_json(res, bc) + "\n");
  const std::string table = benchmark_table(res);
  write_text(out_dir / "comparison.md", table);
  for (const auto& t : res.per_type) {
    const std::string name(lesion_type_name(t.type));
    if (t.initial) write_text(out_dir / ("froc_initial_" + name + ".csv"), froc_to_csv(*t.initial));
    if (t.augmented) {
      write_text(out_dir / ("froc_augmented_" + name + ".csv"), froc_to_csv(*t.augmented));
    }
  }
  if (with_augment) {
    AugmentConfig aug = bc.augmentation;
    aug.attribution = bc.attribution;
    aug.th_pred = model.th_pred;
    std::ofstream os(out_dir / "traces.jsonl");
    for (std::size_t k = 0; k < res.traces.size(); ++k) {
      auto j = ordered_json::parse(trace_to_json(res.traces[k], aug));
      ordered_json line{{"id", res.evaluated_ids[k]}};
      line.update(j);
      os << line.dump() << '\n';
    }
    if (!os) throw IoError("cannot write traces.jsonl");
  }
  std::cout << "method " << method_name(bc.attribution.method) << ", " << res.evaluated_ids.size()
            << " referable scenes evaluated (" << res.missed_referable
            << " missed by the classifier), r = " << res.radius << " px\n"
            << table;
  return 0;
}

int cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_dir) {
  ordered_json rows = ordered_json::array();
  std::string md = "| run | method | images | initial | augmented | relative change |\n"
                   "|---|---|---|---|---|---|\n";
  for (const auto& dir : inputs) {
    std::ifstream is(dir / "summary.json");
    if (!is) throw DataError("no summary.json in '" + dir.string() + "'");
    ordered_json s;
    try {
      s = ordered_json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("corrupt summary in '" + dir.string() + "': " + e.what());
    }
    auto num = [](const ordered_json& v) { return v.is_null() ? std::string("n/a") : fixed(v.get<double>()); };
    md += "| " + dir.filename().string() + " | " + s.value("method", std::string("?")) + " | " +
          std::to_string(s.value("n_images", 0)) + " | " + num(s["mean_se_at_10fp_initial"]) +
          " | " + num(s["mean_se_at_10fp_augmented"]) + " | " + num(s["relative_change"]) + " |\n";
    rows.push_back({{"run", dir.string()}, {"summary", s}});
  }
  std::cout << md;
  if (!out_dir.empty()) {
    make_dir(out_dir);
    write_text(out_dir / "report.md", md);
    write_text(out_dir / "report.json", rows.dump(2) + "\n");
  }
  return 0;
}

}  // namespace evloop::cli
