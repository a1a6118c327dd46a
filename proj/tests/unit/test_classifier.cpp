#include <doctest/doctest.h>

#include <filesystem>
#include <random>

#include "evloop/classifier.hpp"
#include "evloop/error.hpp"
#include "evloop/optimizer.hpp"
#include "evloop/synthetic.hpp"
#include "support/oracles.hpp"

using namespace evloop;
namespace fs = std::filesystem;

namespace {

struct SmallCorpus {
  std::vector<Image> images;
  std::vector<int> grades;
  explicit SmallCorpus(std::size_t per_grade, std::size_t size = 64) {
    GeneratorConfig cfg;
    cfg.image_size = size;
    cfg.diffuse_radius = {6, 10};
    cfg.blob_radius = {2, 5};
    for (std::size_t i = 0; i < per_grade; ++i)
      for (int g = 0; g < 4; ++g) {
        images.push_back(generate_scene(cfg, g, 1000 + 4 * i + static_cast<std::size_t>(g)).image);
        grades.push_back(g);
      }
  }
};

PreprocessSpec spec64() {
  PreprocessSpec s;
  s.target_size = 64;
  return s;
}

TrainConfig quick(std::size_t epochs = 2) {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = epochs;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("presets end in a single node and keep Grad-CAM two blocks from the head") {
  for (PresetName p : {PresetName::vgg_mini, PresetName::deep_mini}) {
    const ArchitecturePreset pre = make_preset(p);
    const Network net = build_network(pre);
    CHECK(net.output_shape(net.layer_count() - 1) == Shape{1});
    const std::size_t cam = net.layer_index(pre.grad_cam_layer);
    CHECK(net.output_shape(cam).size() == 3);
    std::size_t pools_after = 0;
    for (std::size_t i = cam + 1; i < net.layer_count(); ++i)
      if (std::holds_alternative<MaxPool2d>(net.layer(i).kind)) ++pools_after;
    std::size_t convs_after = 0;
    for (std::size_t i = cam + 1; i < net.layer_count(); ++i)
      if (std::holds_alternative<Conv2d>(net.layer(i).kind)) ++convs_after;
    CHECK(convs_after >= 2);
    CHECK(pools_after >= 1);
    CHECK(std::holds_alternative<Conv2d>(net.layer(0).kind));
    CHECK(std::get<Conv2d>(net.layer(0).kind).stride == 2);
  }
  CHECK(build_network(make_preset(PresetName::vgg_mini, 256)).input_shape() == Shape{3, 256, 256});
  CHECK_THROWS_AS(make_preset(PresetName::vgg_mini, 100), ArgumentError);
  CHECK_THROWS_AS(parse_preset("inception"), LookupError);
}

TEST_CASE("zero image through a zero-bias network predicts zero") {
  Network net = build_network(make_preset(PresetName::deep_mini, 64));
  net.init_parameters(1);
  CHECK(predict_scalar(net, Tensor({3, 64, 64})) == 0);
}

TEST_CASE("select_threshold examples and brute force") {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  CHECK(select_threshold(s, std::vector<int>{0, 0, 1, 1}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(select_threshold(std::vector<double>{1, 1, 1}, std::vector<int>{0, 1, 1}), DegenerateError);
  CHECK_THROWS_AS(select_threshold(s, std::vector<int>{1, 1, 1, 1}), DegenerateError);

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(20);
    std::vector<int> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      y[i] = static_cast<int>(rng() % 2);
      p[i] = std::floor(std::uniform_real_distribution<>(0, 1)(rng) * 12 + y[i] * 3) / 4;
    }
    y[0] = 0;
    y[1] = 1;
    p[0] = -1;
    CHECK(static_cast<double>(select_threshold(p, y)) ==
          doctest::Approx(evloop_test::corner_brute_force(p, y).threshold));
  }
}

TEST_CASE("classification metrics") {
  const std::vector<double> pred{0.1, 0.9, 2.2, 3.4, 1.4, 2.6};
  const std::vector<int> grades{0, 1, 2, 3, 2, 3};
  const ClassificationMetrics m = classification_metrics(pred, grades, 1.5);
  CHECK(m.n == 6);
  CHECK(m.auc == 1.0);
  CHECK(m.sensitivity == doctest::Approx(0.75));
  CHECK(m.specificity == 1.0);
  REQUIRE(m.kappa.has_value());
  CHECK(*m.kappa == doctest::Approx(evloop_test::kappa_formula({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 1, 1, 0}, {0, 0, 0, 2}})));
}

TEST_CASE("dihedral transforms are the eight square symmetries") {
  Tensor t({1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) t[i] = static_cast<Real>(i);
  CHECK(dihedral(t, 0) == t);
  std::vector<Tensor> seen;
  for (unsigned w = 0; w < 8; ++w) {
    const Tensor d = dihedral(t, w);
    for (const auto& s : seen) CHECK_FALSE(s == d);
    seen.push_back(d);
  }
}

TEST_CASE("dense regression on mean intensity converges") {
  // label = mean pixel value; a single dense layer can represent it exactly.
  Network net({3, 6, 6}, {{"flat", Flatten{}}, {"out", Dense{1}}});
  net.init_parameters(9);
  net.set_mode(Mode::train);
  std::mt19937_64 rng(9);
  std::vector<Tensor> xs;
  std::vector<Real> ys;
  for (int i = 0; i < 32; ++i) {
    Tensor x({3, 6, 6});
    double sum = 0;
    for (auto& v : x.values()) {
      v = static_cast<Real>(std::uniform_real_distribution<>(0, 1)(rng));
      sum += v;
    }
    xs.push_back(x);
    ys.push_back(static_cast<Real>(sum / 108.0));
  }
  AdamState st = AdamState::for_network(net);
  const Real first = train_step(net, Batch{xs, ys}, st, AdamConfig{0.1});
  Real last = first;
  for (int s = 1; s < 200; ++s) last = train_step(net, Batch{xs, ys}, st, AdamConfig{0.1});
  CHECK(last < 1e-4);
  CHECK(last < 1e-4 * first);
}

TEST_CASE("training rejects degenerate data") {
  const SmallCorpus c(3);
  std::vector<int> one_class(c.grades.size(), 0);
  CHECK_THROWS_AS(train(c.images, one_class, make_preset(PresetName::vgg_mini, 64), quick(), spec64()),
                  DegenerateError);
  const std::vector<Image> ten(c.images.begin(), c.images.begin() + 10);
  const std::vector<int> ten_g(c.grades.begin(), c.grades.begin() + 10);
  TrainConfig cfg = quick();
  cfg.validation_fraction = 0.999;
  try {
    train(ten, ten_g, make_preset(PresetName::vgg_mini, 64), cfg, spec64());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("insufficient training data") != std::string::npos);
  }
}

TEST_CASE("training is reproducible and the bundle round-trips") {
  const SmallCorpus c(6);
  const ArchitecturePreset pre = make_preset(PresetName::vgg_mini, 64);
  const auto [m1, h1] = train(c.images, c.grades, pre, quick(), spec64());
  const auto [m2, h2] = train(c.images, c.grades, pre, quick(), spec64());
  for (std::size_t i = 0; i < m1.net.layer_count(); ++i) {
    CHECK(m1.net.params(i).weight == m2.net.params(i).weight);
    CHECK(m1.net.params(i).bias == m2.net.params(i).bias);
  }
  CHECK(m1.th_pred == m2.th_pred);
  CHECK(h1.epochs.size() == 2);
  CHECK(h1.train_size + h1.val_size == c.images.size());
  CHECK(h1.best_epoch >= 1);
  CHECK(m1.net.mode() == Mode::inference);

  const Real y = predict(m1, c.images[5]);
  CHECK(predict(m1, c.images[5]) == y);
  CHECK(m1.referable(y) == (y >= m1.th_pred));
  CHECK_THROWS_AS(predict(m1, Image(32, 32), false), ShapeError);

  const fs::path dir = fs::temp_directory_path() / "evloop_bundle_test";
  fs::remove_all(dir);
  save_model(m1, dir);
  CHECK(fs::exists(dir / "model.evnet"));
  CHECK(fs::exists(dir / "model.json"));
  const Model back = load_model(dir);
  CHECK(back.th_pred == m1.th_pred);
  CHECK(back.preset.grad_cam_layer == m1.preset.grad_cam_layer);
  CHECK(back.preprocessing.target_size == 64);
  CHECK(predict(back, c.images[5]) == y);
  fs::remove(dir / "model.evnet");
  CHECK_THROWS(load_model(dir));
  fs::remove_all(dir);
}
