// Python module: NumPy in, NumPy out. Images are float32 (3, H, W) in [0, 1],
// maps float32 (H, W), masks bool (H, W).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "evloop/augmentation.hpp"
#include "evloop/classifier.hpp"
#include "evloop/dataset.hpp"
#include "evloop/error.hpp"
#include "evloop/evaluation.hpp"
#include "evloop/image.hpp"
#include "evloop/png_io.hpp"
#include "evloop/synthetic.hpp"

namespace py = pybind11;
using namespace evloop;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  const float* p = a.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<Real>(p[i]);
  return t;
}

FloatArray to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray a(shape);
  float* p = a.mutable_data();
  for (std::size_t i = 0; i < t.size(); ++i) p[i] = static_cast<float>(t[i]);
  return a;
}

Image to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(0) != 3) throw ShapeError("image must have shape (3, H, W)");
  return Image(to_tensor(a));
}

ExplanationMap to_map(const FloatArray& a) {
  if (a.ndim() != 2) throw ShapeError("map must have shape (H, W)");
  ExplanationMap m = ExplanationMap::zeros(static_cast<std::size_t>(a.shape(0)),
                                           static_cast<std::size_t>(a.shape(1)), AttributionMethod::saliency);
  m.grid = to_tensor(a);
  return m;
}

BinaryMask to_mask(const BoolArray& a) {
  if (a.ndim() != 2) throw ShapeError("mask must have shape (H, W)");
  const auto h = static_cast<std::size_t>(a.shape(0)), w = static_cast<std::size_t>(a.shape(1));
  BinaryMask m(h, w);
  const bool* p = a.data();
  for (std::size_t i = 0; i < h * w; ++i)
    if (p[i]) m.set(i / w, i % w);
  return m;
}

BoolArray to_array(const BinaryMask& m) {
  BoolArray a({static_cast<py::ssize_t>(m.height()), static_cast<py::ssize_t>(m.width())});
  bool* p = a.mutable_data();
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m.get(i / m.width(), i % m.width());
  return a;
}

py::dict scene_dict(const SyntheticScene& s) {
  py::dict masks;
  for (LesionType t : kAllLesionTypes) masks[py::str(std::string(lesion_type_name(t)))] = to_array(s.mask(t));
  py::list lesions;
  for (const auto& l : s.lesions)
    lesions.append(py::dict(py::arg("type") = std::string(lesion_type_name(l.type)), py::arg("y") = l.center_y,
                            py::arg("x") = l.center_x, py::arg("radius") = l.radius));
  return py::dict(py::arg("image") = to_array(s.image.tensor()), py::arg("masks") = masks,
                  py::arg("lesions") = lesions, py::arg("grade") = s.grade);
}

GeneratorConfig generator(std::size_t image_size, const std::string& json) {
  GeneratorConfig cfg = json.empty() ? GeneratorConfig{} : generator_config_from_json(json);
  if (image_size) cfg.image_size = image_size;
  cfg.validate();
  return cfg;
}

py::dict explain(const Model& model, const FloatArray& image, const std::string& method, bool augment_loop,
                 std::size_t t_max, double alpha, std::size_t ig_steps) {
  const Image pre = preprocess(to_image(image), model.preprocessing);
  AugmentConfig cfg;
  cfg.th_pred = model.th_pred;
  cfg.t_max = t_max;
  cfg.alpha = alpha;
  cfg.attribution = model.attribution_config(parse_method(method));
  cfg.attribution.ig_steps = ig_steps;
  const Real y = predict_scalar(model.net, pre.tensor());
  py::dict out(py::arg("prediction") = static_cast<double>(y), py::arg("referable") = model.referable(y),
               py::arg("image") = to_array(pre.tensor()));
  if (!augment_loop) {
    out["map"] = to_array(attribute(model.net, pre.tensor(), cfg.attribution).grid);
    return out;
  }
  AugmentResult r;
  {
    py::gil_scoped_release release;
    r = augment(pre, model.net, cfg);
  }
  out["map"] = to_array(r.initial_map.grid);
  out["augmented_map"] = to_array(r.augmented_map.grid);
  out["trace"] = py::module_::import("json").attr("loads")(trace_to_json(r.trace, cfg));
  py::list masks;
  for (const auto& m : r.masks) masks.append(to_array(m));
  out["masks"] = masks;
  return out;
}

}  // namespace

PYBIND11_MODULE(_evloop, m) {
  m.doc() = "Attribution maps, iterative evidence augmentation and FROC evaluation";

  auto base = py::register_exception<Error>(m, "EvloopError", PyExc_RuntimeError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<LookupError>(m, "LookupError", PyExc_KeyError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<DegenerateError>(m, "DegenerateError", data.ptr());
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FullCoverageError>(m, "FullCoverageError", base.ptr());

  m.def("generate_scene",
        [](int grade, std::uint64_t seed, std::size_t image_size, const std::string& config_json) {
          return scene_dict(generate_scene(generator(image_size, config_json), grade, seed));
        },
        py::arg("grade"), py::arg("seed"), py::arg("image_size") = 0, py::arg("config_json") = "");
  m.def("generate_dataset",
        [](const std::filesystem::path& out, std::array<std::size_t, 4> counts, std::uint64_t seed,
           std::size_t image_size) {
          const Manifest man = generate_dataset(generator(image_size, ""), counts, seed, out);
          return man.entries.size();
        },
        py::arg("out"), py::arg("counts"), py::arg("seed"), py::arg("image_size") = 0,
        "Write images, masks and manifest.json; returns the number of scenes.");

  m.def("read_png", [](const std::filesystem::path& p) { return to_array(read_png(p).tensor()); });
  m.def("write_png", [](const std::filesystem::path& p, const FloatArray& img) { write_png(p, to_image(img)); });
  m.def("preprocess",
        [](const FloatArray& img, std::size_t target_size) {
          PreprocessSpec spec;
          spec.target_size = target_size;
          return to_array(preprocess(to_image(img), spec).tensor());
        },
        py::arg("image"), py::arg("target_size") = 128);

  m.def("binarize_otsu",
        [](const FloatArray& map) {
          const OtsuResult r = binarize_otsu(to_map(map));
          return py::make_tuple(to_array(r.mask), static_cast<double>(r.th_bin), r.degenerate);
        },
        "Returns (mask, th_bin, degenerate).");
  m.def("inpaint",
        [](const FloatArray& img, const BoolArray& mask, std::size_t radius) {
          return to_array(inpaint(to_image(img), to_mask(mask), radius).tensor());
        },
        py::arg("image"), py::arg("mask"), py::arg("radius") = 3);
  m.def("combine_maps",
        [](const std::vector<FloatArray>& maps, double alpha) {
          std::vector<ExplanationMap> ms;
          for (const auto& a : maps) ms.push_back(to_map(a));
          return to_array(combine_maps(ms, alpha).grid);
        },
        py::arg("maps"), py::arg("alpha") = 0.6);

  m.def("roc_auc", [](const std::vector<double>& s, const std::vector<int>& y) { return roc(s, y).auc; });
  m.def("quadratic_weighted_kappa",
        [](const std::vector<int>& reference, const std::vector<int>& predicted, std::size_t classes) {
          return quadratic_weighted_kappa(confusion_matrix(reference, predicted, classes));
        },
        py::arg("reference"), py::arg("predicted"), py::arg("classes") = 5);
  m.def("froc_detections",
        [](const FloatArray& map, const BoolArray& lesions, double radius, std::size_t cap) {
          const ImageDetections d = froc_per_image(to_map(map), lesion_reference(to_mask(lesions)), radius, cap);
          py::list out;
          for (const auto& x : d.detections)
            out.append(py::make_tuple(x.y, x.x, x.confidence, x.credited));
          return py::make_tuple(out, d.lesion_count);
        },
        py::arg("map"), py::arg("lesions"), py::arg("radius"), py::arg("cap") = kDefaultDetectionCap,
        "Greedy detections (y, x, confidence, credited) and the lesion count.");
  m.def("radius_from_percent", &radius_from_percent);

  py::class_<Model>(m, "Model")
      .def_property_readonly("th_pred", [](const Model& md) { return static_cast<double>(md.th_pred); })
      .def_property_readonly("input_size", [](const Model& md) { return md.preset.input_size; })
      .def_property_readonly("preset", [](const Model& md) { return std::string(preset_name(md.preset.name)); })
      .def_property_readonly("val_auc", [](const Model& md) { return md.metrics.auc; })
      .def("predict",
           [](const Model& md, const FloatArray& img) { return static_cast<double>(predict(md, to_image(img))); })
      .def("explain", &explain, py::arg("image"), py::arg("method") = "guided_backprop",
           py::arg("augment") = true, py::arg("t_max") = 20, py::arg("alpha") = 0.6, py::arg("ig_steps") = 50)
      .def("save", [](const Model& md, const std::filesystem::path& dir) { save_model(md, dir); });

  m.def("load_model", &load_model);
  m.def("train",
        [](const std::vector<FloatArray>& images, const std::vector<int>& grades, const std::string& preset,
           std::size_t input_size, std::size_t epochs, double lr, std::size_t batch_size, std::uint64_t seed) {
          std::vector<Image> imgs;
          for (const auto& a : images) imgs.push_back(to_image(a));
          TrainConfig tc;
          tc.epochs = epochs;
          tc.learning_rate = lr;
          tc.batch_size = batch_size;
          tc.seed = seed;
          PreprocessSpec spec;
          spec.target_size = input_size;
          py::gil_scoped_release release;
          return train(imgs, grades, make_preset(parse_preset(preset), input_size), tc, spec).first;
        },
        py::arg("images"), py::arg("grades"), py::arg("preset") = "vgg_mini", py::arg("input_size") = 128,
        py::arg("epochs") = 30, py::arg("lr") = 1e-4, py::arg("batch_size") = 16, py::arg("seed") = 0);
}
