#include "run_config.hpp"

#include <fstream>
#include <set>

#include "evloop/dataset.hpp"
#include "evloop/error.hpp"

namespace evloop::cli {

using nlohmann::ordered_json;

AttributionConfig RunConfig::attribution() const {
  AttributionConfig a;
  a.method = method;
  a.ig_steps = ig_steps;
  a.channel_reduce = channel_reduce;
  a.grad_cam_layer = grad_cam_layer;
  return a;
}

AugmentConfig RunConfig::augmentation() const {
  AugmentConfig a;
  a.t_max = t_max;
  a.alpha = alpha;
  a.r_inp = r_inp;
  a.attribution = attribution();
  a.per_iteration_normalize = per_iteration_normalize;
  a.otsu_fov_only = otsu_fov_only;
  return a;
}

FrocBenchmarkConfig RunConfig::benchmark(bool augment) const {
  FrocBenchmarkConfig b;
  b.attribution = attribution();
  b.augment = augment;
  b.augmentation = augmentation();
  b.radius_pct = radius_pct;
  b.froc.target_fp = target_fp;
  b.froc.per_image_average = per_image_average;
  b.detection_cap = detection_cap;
  b.limit = limit;
  return b;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["generator"] = ordered_json::parse(generator_config_json(c.generator));
  j["counts"] = c.counts;
  j["train"] = {{"preset", preset_name(c.preset)},
                {"input_size", c.input_size},
                {"width_multiplier", c.width_multiplier},
                {"learning_rate", c.train.learning_rate},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"class_balancing", c.train.class_balancing},
                {"augmentation", c.train.augmentation},
                {"validation_fraction", c.train.validation_fraction}};
  j["attribution"] = {{"method", method_name(c.method)},
                      {"ig_steps", c.ig_steps},
                      {"channel_reduce", channel_reduce_name(c.channel_reduce)},
                      {"grad_cam_layer", c.grad_cam_layer}};
  j["augment"] = {{"T_max", c.t_max},
                  {"alpha", c.alpha},
                  {"r_inp", c.r_inp},
                  {"per_iteration_normalize", normalization_name(c.per_iteration_normalize)},
                  {"otsu_fov_only", c.otsu_fov_only}};
  j["evaluation"] = {{"radius_pct", c.radius_pct},
                     {"target_fp", c.target_fp},
                     {"detection_cap", c.detection_cap},
                     {"per_image_average", c.per_image_average},
                     {"limit", c.limit}};
  return j;
}

namespace {

void check_keys(const ordered_json& j, const ordered_json& allowed, const std::string& where) {
  if (!j.is_object()) throw ArgumentError("config section '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) {
      throw ArgumentError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <class T>
void get(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig merge_json(RunConfig c, const ordered_json& j) {
  const ordered_json defaults = to_json(c);
  check_keys(j, defaults, "");
  try {
    get(j, "seed", c.seed);
    if (j.contains("generator")) {
      // Merge onto the current generator settings, then validate strictly.
      ordered_json g = defaults["generator"];
      check_keys(j["generator"], g, "generator");
      g.update(j["generator"]);
      c.generator = generator_config_from_json(g.dump());
    }
    get(j, "counts", c.counts);
    if (j.contains("train")) {
      const auto& t = j["train"];
      check_keys(t, defaults["train"], "train");
      if (t.contains("preset")) c.preset = parse_preset(t["preset"].get<std::string>());
      get(t, "input_size", c.input_size);
      get(t, "width_multiplier", c.width_multiplier);
      get(t, "learning_rate", c.train.learning_rate);
      get(t, "epochs", c.train.epochs);
      get(t, "batch_size", c.train.batch_size);
      get(t, "class_balancing", c.train.class_balancing);
      get(t, "augmentation", c.train.augmentation);
      get(t, "validation_fraction", c.train.validation_fraction);
    }
    if (j.contains("attribution")) {
      const auto& a = j["attribution"];
      check_keys(a, defaults["attribution"], "attribution");
      if (a.contains("method")) c.method = parse_method(a["method"].get<std::string>());
      get(a, "ig_steps", c.ig_steps);
      if (a.contains("channel_reduce")) {
        c.channel_reduce = parse_channel_reduce(a["channel_reduce"].get<std::string>());
      }
      get(a, "grad_cam_layer", c.grad_cam_layer);
    }
    if (j.contains("augment")) {
      const auto& a = j["augment"];
      check_keys(a, defaults["augment"], "augment");
      get(a, "T_max", c.t_max);
      get(a, "alpha", c.alpha);
      get(a, "r_inp", c.r_inp);
      if (a.contains("per_iteration_normalize")) {
        c.per_iteration_normalize = parse_normalization(a["per_iteration_normalize"].get<std::string>());
      }
      get(a, "otsu_fov_only", c.otsu_fov_only);
    }
    if (j.contains("evaluation")) {
      const auto& e = j["evaluation"];
      check_keys(e, defaults["evaluation"], "evaluation");
      get(e, "radius_pct", c.radius_pct);
      get(e, "target_fp", c.target_fp);
      get(e, "detection_cap", c.detection_cap);
      get(e, "per_image_average", c.per_image_average);
      get(e, "limit", c.limit);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config '" + path.string() + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return merge_json(RunConfig{}, j);
}

void write_run_config(const std::filesystem::path& dir, const RunConfig& cfg) {
  std::ofstream os(dir / "run_config.json");
  os << to_json(cfg).dump(2) << '\n';
  if (!os) throw IoError("cannot write run_config.json in '" + dir.string() + "'");
}

}  // namespace evloop::cli
