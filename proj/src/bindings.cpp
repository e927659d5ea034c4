#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "scavit/checkpoint.hpp"
#include "scavit/cli.hpp"
#include "scavit/config.hpp"
#include "scavit/data.hpp"
#include "scavit/errors.hpp"
#include "scavit/gradcheck.hpp"
#include "scavit/metrics.hpp"
#include "scavit/model.hpp"
#include "scavit/ops.hpp"

namespace py = pybind11;
using namespace scavit;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Tensor to_images(const DoubleArray& a) {
  if (a.ndim() != 3) throw ShapeError("images must have shape [batch, height, width]");
  Shape shape{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
              static_cast<std::size_t>(a.shape(2))};
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

DoubleArray to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  DoubleArray out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

std::span<const int> ints(const IntArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}
std::span<const double> doubles(const DoubleArray& a) {
  return {a.data(), static_cast<std::size_t>(a.size())};
}

py::dict counts_dict(const ConfusionCounts& c) {
  py::dict d;
  d["tp"] = c.tp;
  d["tn"] = c.tn;
  d["fp"] = c.fp;
  d["fn"] = c.fn;
  return d;
}

class PyModel {
 public:
  PyModel(const std::string& config_text, std::optional<std::uint64_t> seed)
      : config_(parse_config_text(config_text)) {
    if (seed) config_.model.seed = config_.train.seed = *seed;
    Rng rng(config_.model.seed, 1);
    model_ = CrossVit::init(config_.model, rng);
  }

  explicit PyModel(TrainState state) : config_(state.config), model_(std::move(state.model)) {}

  DoubleArray logits(const DoubleArray& images) {
    Graph g(false);
    Rng unused(0);
    return to_array(model_.forward(g, to_images(images), false, unused).value());
  }

  DoubleArray probabilities(const DoubleArray& images) {
    Graph g(false);
    Rng unused(0);
    return to_array(
        ops::softmax_lastdim(model_.forward(g, to_images(images), false, unused)).value());
  }

  py::dict gradcheck(const DoubleArray& image, int label) {
    if (image.ndim() != 2) throw ShapeError("gradcheck expects one [height, width] image");
    const Tensor t(
        {static_cast<std::size_t>(image.shape(0)), static_cast<std::size_t>(image.shape(1))},
        std::vector<double>(image.data(), image.data() + image.size()));
    const GradcheckReport r = scavit::gradcheck(model_, t, label);
    py::dict d;
    d["checked"] = r.checked;
    d["max_rel_error"] = r.max_rel_error;
    d["worst_parameter"] = r.worst_parameter;
    d["seconds"] = r.seconds;
    d["passed"] = r.passed(GradcheckOptions{});
    return d;
  }

  std::size_t parameter_count() const { return model_.parameter_count(); }
  std::string config_text() const { return serialize_config(config_); }

 private:
  RunConfig config_;
  CrossVit model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual-branch vision transformer with selective cross-attention fusion";

  py::register_exception<Error>(m, "ScavitError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValueError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DatasetError>(m, "DatasetError", PyExc_RuntimeError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, std::optional<std::uint64_t>>(),
           py::arg("config") = "preset = desk", py::arg("seed") = py::none())
      .def("logits", &PyModel::logits, py::arg("images"))
      .def("probabilities", &PyModel::probabilities, py::arg("images"))
      .def("gradcheck", &PyModel::gradcheck, py::arg("image"), py::arg("label"))
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("config", &PyModel::config_text);

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) { return PyModel(load_checkpoint(path)); },
      py::arg("path"));

  m.def(
      "generate_synthetic",
      [](std::size_t n, std::size_t image_size, std::uint64_t seed, double positive_fraction) {
        SyntheticSpec spec;
        spec.n_samples = n;
        spec.image_size = image_size;
        spec.seed = seed;
        spec.positive_fraction = positive_fraction;
        const auto samples = generate_synthetic(spec);
        DoubleArray images({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(image_size),
                            static_cast<py::ssize_t>(image_size)});
        IntArray labels(static_cast<py::ssize_t>(n));
        double* px = images.mutable_data();
        for (std::size_t i = 0; i < n; ++i) {
          const auto v = samples[i].image.values();
          std::copy(v.begin(), v.end(), px + i * v.size());
          labels.mutable_at(static_cast<py::ssize_t>(i)) = samples[i].label;
        }
        return py::make_tuple(images, labels);
      },
      py::arg("n"), py::arg("image_size") = 32, py::arg("seed") = 0,
      py::arg("positive_fraction") = 0.5);

  m.def(
      "confusion",
      [](const IntArray& predictions, const IntArray& labels) {
        return counts_dict(confusion(ints(predictions), ints(labels)));
      },
      py::arg("predictions"), py::arg("labels"));

  m.def(
      "report",
      [](const IntArray& predictions, const IntArray& labels, const DoubleArray& scores) {
        return report_json(make_report(ints(predictions), ints(labels), doubles(scores)));
      },
      py::arg("predictions"), py::arg("labels"), py::arg("scores"),
      "Metrics report as the JSON text written by `eval`.");

  m.def(
      "roc_curve",
      [](const DoubleArray& scores, const IntArray& labels) {
        const RocCurve c = roc_curve(doubles(scores), ints(labels));
        return py::make_tuple(c.thresholds, c.fpr, c.tpr);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "auc",
      [](const DoubleArray& scores, const IntArray& labels) {
        return auc(roc_curve(doubles(scores), ints(labels)));
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "f1_from", [](double p, double r) { return f1_from(p, r).value; }, py::arg("precision"),
      py::arg("recall"));
  m.def("percent_2dp", &percent_2dp, py::arg("fraction"));

  m.def(
      "drop_probability",
      [](std::size_t layer, std::size_t total_layers, const std::string& mode, double p) {
        StochasticDepthSchedule s;
        s.total_layers = total_layers;
        s.p_const = p;
        if (mode == "linear_schedule") {
          s.mode = LayerDropMode::linear_schedule;
        } else if (mode != "constant") {
          throw ConfigError("mode must be constant or linear_schedule, got '" + mode + "'");
        }
        return drop_probability(layer, s);
      },
      py::arg("layer"), py::arg("total_layers"), py::arg("mode") = "linear_schedule",
      py::arg("p") = 0.0);

  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "scavit");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release release;
        return cli_main(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs a CLI subcommand and returns its exit code.");
}
