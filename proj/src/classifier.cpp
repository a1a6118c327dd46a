#include "evloop/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "evloop/checkpoint.hpp"
#include "evloop/error.hpp"
#include "evloop/optimizer.hpp"
#include "evloop/parallel.hpp"

EVLOOP_NAMESPACE_BEGIN

std::string_view preset_name(PresetName p) {
  return p == PresetName::vgg_mini ? "vgg_mini" : "deep_mini";
}

PresetName parse_preset(std::string_view name) {
  if (name == "vgg_mini") return PresetName::vgg_mini;
  if (name == "deep_mini") return PresetName::deep_mini;
  throw LookupError("unknown preset '" + std::string(name) + "' (valid: vgg_mini, deep_mini)");
}

ArchitecturePreset make_preset(PresetName name, std::size_t input_size,
                               std::size_t width_multiplier) {
  if (input_size < 64 || input_size % 32 != 0) {
    throw ArgumentError("preset input size must be a multiple of 32 and >= 64");
  }
  if (width_multiplier < 1) throw ArgumentError("width multiplier must be >= 1");
  return {name, input_size, "b2_relu2", width_multiplier};
}

std::vector<LayerSpec> preset_layers(const ArchitecturePreset& p) {
  const std::size_t m = p.width_multiplier;
  std::vector<LayerSpec> l;
  auto conv = [&](const std::string& name, std::size_t ch, std::size_t stride = 1,
                  std::size_t pad = 1) {
    l.push_back({name, Conv2d{ch * m, 3, stride, pad}});
  };
  auto relu = [&](const std::string& name) { l.push_back({name, Relu{}}); };
  auto pool = [&](const std::string& name) { l.push_back({name, MaxPool2d{2, 2}}); };

  if (p.name == PresetName::vgg_mini) {
    // Strided first convolution, then VGG-style blocks; the last block uses a
    // valid convolution.
    conv("b1_conv1", 8, 2);
    relu("b1_relu1");
    pool("b1_pool");
    conv("b2_conv1", 16);
    relu("b2_relu1");
    conv("b2_conv2", 16);
    relu("b2_relu2");
    pool("b2_pool");
    conv("b3_conv1", 32);
    relu("b3_relu1");
    conv("b3_conv2", 32);
    relu("b3_relu2");
    pool("b3_pool");
    conv("b4_conv1", 64, 1, 0);
    relu("b4_relu1");
    pool("b4_pool");
    l.push_back({"flatten", Flatten{}});
    l.push_back({"head_fc1", Dense{64}});
    relu("head_relu");
    l.push_back({"head_dropout", Dropout{0.5}});
    l.push_back({"head_out", Dense{1}});
  } else {
    // Deeper stack with a global-average-pooling head.
    conv("stem_conv", 8, 2);
    relu("stem_relu");
    conv("b1_conv1", 12);
    relu("b1_relu1");
    conv("b1_conv2", 12);
    relu("b1_relu2");
    pool("b1_pool");
    conv("b2_conv1", 16);
    relu("b2_relu1");
    conv("b2_conv2", 16);
    relu("b2_relu2");
    pool("b2_pool");
    conv("b3_conv1", 32);
    relu("b3_relu1");
    conv("b3_conv2", 32);
    relu("b3_relu2");
    pool("b3_pool");
    conv("b4_conv1", 64);
    relu("b4_relu1");
    conv("b4_conv2", 64);
    relu("b4_relu2");
    l.push_back({"gap", GlobalAvgPool{}});
    l.push_back({"head_dropout", Dropout{0.5}});
    l.push_back({"head_out", Dense{1}});
  }
  return l;
}

Network build_network(const ArchitecturePreset& preset) {
  return Network({3, preset.input_size, preset.input_size}, preset_layers(preset));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ArgumentError("learning_rate must be > 0");
  if (!(validation_fraction > 0 && validation_fraction < 1)) {
    throw ArgumentError("validation_fraction must be in (0, 1)");
  }
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
}

AttributionConfig Model::attribution_config(AttributionMethod method) const {
  AttributionConfig cfg;
  cfg.method = method;
  cfg.grad_cam_layer = preset.grad_cam_layer;
  return cfg;
}

Tensor dihedral(const Tensor& t, unsigned which) {
  const std::size_t c = t.dim(0), n = t.dim(1);
  if (t.dim(2) != n) throw ShapeError("dihedral transforms need a square input");
  which %= 8;
  if (which == 0) return t;
  Tensor out(t.shape());
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        std::size_t sy = y, sx = x;
        if (which & 4) std::swap(sy, sx);  // transpose
        if (which & 2) sy = n - 1 - sy;    // vertical flip
        if (which & 1) sx = n - 1 - sx;    // horizontal flip
        out.at(k, y, x) = t.at(k, sy, sx);
      }
    }
  }
  return out;
}

Real select_threshold(std::span<const double> predictions, std::span<const int> labels) {
  return static_cast<Real>(roc(predictions, labels).optimal.threshold);
}

ClassificationMetrics classification_metrics(std::span<const double> predictions,
                                             std::span<const int> grades, Real th_pred) {
  ClassificationMetrics m;
  m.n = predictions.size();
  std::vector<int> labels(grades.size());
  std::vector<int> rounded(grades.size());
  std::size_t pos = 0, neg = 0, tp = 0, tn = 0;
  for (std::size_t i = 0; i < grades.size(); ++i) {
    labels[i] = is_referable_grade(grades[i]) ? 1 : 0;
    const bool predicted = predictions[i] >= th_pred;
    if (labels[i]) {
      ++pos;
      tp += predicted;
    } else {
      ++neg;
      tn += !predicted;
    }
    rounded[i] = static_cast<int>(std::clamp(std::floor(predictions[i] + 0.5), 0.0, 3.0));
  }
  m.auc = roc(predictions, labels).auc;
  m.sensitivity = static_cast<double>(tp) / static_cast<double>(pos);
  m.specificity = static_cast<double>(tn) / static_cast<double>(neg);
  std::vector<int> clamped(grades.begin(), grades.end());
  try {
    m.kappa = quadratic_weighted_kappa(confusion_matrix(clamped, rounded, 4));
  } catch (const DegenerateError&) {
    m.kappa.reset();
  }
  return m;
}

namespace {

std::vector<double> predict_all(const Network& net, const std::vector<Tensor>& inputs,
                                std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size());
  parallel_for(idx.size(), [&](std::size_t i) { out[i] = predict_scalar(net, inputs[idx[i]]); });
  return out;
}

double safe_auc(std::span<const double> scores, std::span<const int> labels) {
  try {
    return roc(scores, labels).auc;
  } catch (const DegenerateError&) {
    return 0.5;
  }
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace

std::pair<Model, TrainHistory> train(std::span<const Image> images, std::span<const int> grades,
                                     const ArchitecturePreset& preset, const TrainConfig& config,
                                     const PreprocessSpec& preprocessing) {
  config.validate();
  preprocessing.validate();
  if (images.size() != grades.size()) throw ArgumentError("images and grades differ in length");
  if (preprocessing.target_size != preset.input_size) {
    throw ArgumentError("preprocessing target size differs from the preset input size");
  }
  std::vector<std::vector<std::size_t>> by_grade(4);
  for (std::size_t i = 0; i < grades.size(); ++i) {
    if (grades[i] < 0 || grades[i] > 3) throw DataError("grade outside 0..3");
    by_grade[static_cast<std::size_t>(grades[i])].push_back(i);
  }
  const auto present = std::count_if(by_grade.begin(), by_grade.end(),
                                     [](const auto& v) { return !v.empty(); });
  if (present < 2) throw DegenerateError("training needs at least two grades (ROC undefined)");

  // Stratified split.
  std::mt19937_64 rng(config.seed ^ 0x5EEDULL);
  std::vector<std::size_t> train_idx, val_idx;
  for (auto& g : by_grade) {
    shuffle(g, rng);
    const auto n_val = static_cast<std::size_t>(
        std::floor(static_cast<double>(g.size()) * config.validation_fraction + 0.5));
    val_idx.insert(val_idx.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), g.begin() + static_cast<std::ptrdiff_t>(n_val), g.end());
  }
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  if (train_idx.size() < 2) {
    throw DataError("insufficient training data: " + std::to_string(train_idx.size()) +
                    " image(s) left after the validation split");
  }
  std::vector<int> val_labels;
  for (std::size_t i : val_idx) val_labels.push_back(is_referable_grade(grades[i]) ? 1 : 0);
  if (std::count(val_labels.begin(), val_labels.end(), 1) == 0 ||
      std::count(val_labels.begin(), val_labels.end(), 0) == 0) {
    throw DataError("validation split lacks referable or non-referable images");
  }

  std::vector<Tensor> inputs(images.size());
  parallel_for(images.size(),
               [&](std::size_t i) { inputs[i] = preprocess(images[i], preprocessing).tensor(); });

  Model model;
  model.preset = preset;
  model.preprocessing = preprocessing;
  model.seed = config.seed;
  model.net = build_network(preset);
  model.net.init_parameters(config.seed);
  model.net.set_mode(Mode::train);
  AdamState state = AdamState::for_network(model.net);
  const AdamConfig adam{config.learning_rate};

  std::vector<std::vector<std::size_t>> train_by_grade(4);
  for (std::size_t i : train_idx) train_by_grade[static_cast<std::size_t>(grades[i])].push_back(i);

  TrainHistory history;
  history.train_size = train_idx.size();
  history.val_size = val_idx.size();
  double best_auc = -1.0;
  std::vector<LayerParams> best_params = model.net.all_params();
  std::uint64_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order;
    if (config.class_balancing) {
      // Equal share per present grade, epoch size unchanged.
      std::vector<std::size_t> groups;
      for (std::size_t g = 0; g < 4; ++g) {
        if (!train_by_grade[g].empty()) groups.push_back(g);
      }
      const std::size_t n = train_idx.size();
      for (std::size_t k = 0; k < groups.size(); ++k) {
        const std::size_t quota = n / groups.size() + (k < n % groups.size() ? 1 : 0);
        std::vector<std::size_t> pool = train_by_grade[groups[k]];
        std::size_t taken = 0;
        while (taken < quota) {
          shuffle(pool, rng);
          for (std::size_t j = 0; j < pool.size() && taken < quota; ++j, ++taken) {
            order.push_back(pool[j]);
          }
        }
      }
    } else {
      order = train_idx;
    }
    shuffle(order, rng);

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      std::vector<Tensor> batch_in(n);
      std::vector<Real> batch_y(n);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t idx = order[start + k];
        const unsigned which = config.augmentation ? static_cast<unsigned>(rng() % 8) : 0;
        batch_in[k] = dihedral(inputs[idx], which);
        batch_y[k] = static_cast<Real>(grades[idx]);
      }
      const Real loss = train_step(model.net, Batch{batch_in, batch_y}, state, adam, ++step);
      loss_sum += static_cast<double>(loss) * static_cast<double>(n);
      loss_count += n;
    }

    model.net.set_mode(Mode::inference);
    const std::vector<double> val_pred = predict_all(model.net, inputs, val_idx);
    double val_loss = 0.0;
    for (std::size_t k = 0; k < val_idx.size(); ++k) {
      const double e = val_pred[k] - grades[val_idx[k]];
      val_loss += e * e;
    }
    val_loss /= static_cast<double>(val_idx.size());
    const double auc = safe_auc(val_pred, val_labels);
    history.epochs.push_back({epoch, loss_sum / static_cast<double>(loss_count), val_loss, auc});
    if (auc > best_auc) {
      best_auc = auc;
      best_params = model.net.all_params();
      history.best_epoch = epoch;
    }
    model.net.set_mode(Mode::train);
  }

  model.net.mutable_all_params() = best_params;
  model.net.set_mode(Mode::inference);
  model.epochs = config.epochs;
  const std::vector<double> val_pred = predict_all(model.net, inputs, val_idx);
  try {
    model.th_pred = select_threshold(val_pred, val_labels);
  } catch (const DegenerateError&) {
    throw NumericError("validation predictions are constant; cannot select th_pred");
  }
  std::vector<int> val_grades;
  for (std::size_t i : val_idx) val_grades.push_back(grades[i]);
  model.metrics = classification_metrics(val_pred, val_grades, model.th_pred);
  return {std::move(model), std::move(history)};
}

Real predict(const Model& model, const Image& image, bool preprocess_input) {
  if (preprocess_input) return predict_scalar(model.net, preprocess(image, model.preprocessing).tensor());
  if (image.tensor().shape() != model.net.input_shape()) {
    throw ShapeError("image " + shape_to_string(image.tensor().shape()) +
                     " does not match model input " + shape_to_string(model.net.input_shape()));
  }
  return predict_scalar(model.net, image.tensor());
}

namespace {

using nlohmann::ordered_json;

ordered_json spec_json(const PreprocessSpec& s) {
  return {{"target_size", s.target_size},
          {"fov_threshold", s.fov_threshold},
          {"graham_alpha", s.graham_alpha},
          {"graham_beta", s.graham_beta},
          {"graham_gamma", s.graham_gamma},
          {"blur_sigma_fraction", s.blur_sigma_fraction},
          {"border_fraction", s.border_fraction}};
}

PreprocessSpec spec_from_json(const ordered_json& j) {
  PreprocessSpec s;
  s.target_size = j.at("target_size").get<std::size_t>();
  s.fov_threshold = j.at("fov_threshold").get<double>();
  s.graham_alpha = j.at("graham_alpha").get<double>();
  s.graham_beta = j.at("graham_beta").get<double>();
  s.graham_gamma = j.at("graham_gamma").get<double>();
  s.blur_sigma_fraction = j.at("blur_sigma_fraction").get<double>();
  s.border_fraction = j.at("border_fraction").get<double>();
  s.validate();
  return s;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create model directory '" + dir.string() + "': " + ec.message());
  save_checkpoint(model.net, dir / "model.evnet");
  ordered_json j;
  j["preset"] = preset_name(model.preset.name);
  j["input_size"] = model.preset.input_size;
  j["width_multiplier"] = model.preset.width_multiplier;
  j["grad_cam_layer"] = model.preset.grad_cam_layer;
  j["th_pred"] = model.th_pred;
  j["preprocessing"] = spec_json(model.preprocessing);
  j["seed"] = model.seed;
  j["epochs"] = model.epochs;
  ordered_json metrics{{"auc", model.metrics.auc},
                       {"sensitivity", model.metrics.sensitivity},
                       {"specificity", model.metrics.specificity},
                       {"n", model.metrics.n}};
  metrics["kappa"] = model.metrics.kappa ? ordered_json(*model.metrics.kappa) : ordered_json();
  j["metrics"] = metrics;
  j["checkpoint"] = "model.evnet";
  std::ofstream os(dir / "model.json");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("cannot write model sidecar in '" + dir.string() + "'");
}

Model load_model(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) throw DataError("missing model sidecar '" + (dir / "model.json").string() + "'");
  Model model;
  std::string checkpoint;
  try {
    const auto j = ordered_json::parse(is);
    model.preset = make_preset(parse_preset(j.at("preset").get<std::string>()),
                               j.at("input_size").get<std::size_t>(),
                               j.value("width_multiplier", std::size_t{1}));
    model.preset.grad_cam_layer = j.at("grad_cam_layer").get<std::string>();
    model.th_pred = static_cast<Real>(j.at("th_pred").get<double>());
    model.preprocessing = spec_from_json(j.at("preprocessing"));
    model.seed = j.at("seed").get<std::uint64_t>();
    model.epochs = j.at("epochs").get<std::size_t>();
    const auto& m = j.at("metrics");
    model.metrics.auc = m.at("auc").get<double>();
    model.metrics.sensitivity = m.at("sensitivity").get<double>();
    model.metrics.specificity = m.at("specificity").get<double>();
    model.metrics.n = m.at("n").get<std::size_t>();
    if (!m.at("kappa").is_null()) model.metrics.kappa = m.at("kappa").get<double>();
    checkpoint = j.value("checkpoint", std::string("model.evnet"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt model sidecar: " + std::string(e.what()));
  }
  model.net = build_network(model.preset);
  model.net.layer_index(model.preset.grad_cam_layer);
  load_checkpoint(model.net, dir / checkpoint);
  model.net.set_mode(Mode::inference);
  return model;
}

EVLOOP_NAMESPACE_END
