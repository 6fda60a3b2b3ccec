#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "rcaiunet/data.hpp"
#include "rcaiunet/errors.hpp"
#include "rcaiunet/layers.hpp"
#include "rcaiunet/loss.hpp"
#include "rcaiunet/metrics.hpp"
#include "rcaiunet/model.hpp"
#include "rcaiunet/postprocess.hpp"
#include "rcaiunet/suites.hpp"

namespace py = pybind11;
using namespace rca;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Plane to_plane(const F64Array& a) {
  if (a.ndim() != 2) throw ShapeMismatch("expected a 2-D array");
  Plane p(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), p.values.begin());
  return p;
}

Mask to_mask(const U8Array& a) {
  if (a.ndim() != 2) throw ShapeMismatch("expected a 2-D array");
  Mask m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  for (py::ssize_t i = 0; i < a.size(); ++i) m.bits[static_cast<std::size_t>(i)] = a.data()[i] ? 1 : 0;
  return m;
}

py::array_t<double> from_plane(const Plane& p) {
  py::array_t<double> out({p.height, p.width});
  std::copy(p.values.begin(), p.values.end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> from_mask(const Mask& m) {
  py::array_t<std::uint8_t> out({m.height, m.width});
  std::copy(m.bits.begin(), m.bits.end(), out.mutable_data());
  return out;
}

Tensor to_tensor_any(const F64Array& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<std::size_t>(a.shape(i)));
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict metrics_dict(const metrics::ImageMetrics& r) {
  py::dict d;
  d["Acc"] = r.accuracy;
  d["Pr"] = r.precision;
  d["R"] = r.recall;
  d["DC"] = r.dice;
  d["mIoU"] = r.miou;
  d["AHD"] = r.ahd;
  d["MAE"] = r.mae;
  d["empty_dice"] = r.dice_convention;
  d["ahd_sentinel"] = r.ahd_sentinel;
  return d;
}

}  // namespace

PYBIND11_MODULE(_rcaiunet, m) {
  m.doc() = "RCA-IUnet segmentation core";

  py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch");
  py::register_exception<BadConfig>(m, "BadConfig");
  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<IoError>(m, "IoError");

  // cost model
  m.def(
      "separable_cost_ratio",
      [](std::size_t f, std::size_t r, std::size_t d) {
        nn::ConvSpec s;
        s.kernel = f;
        s.kernels = r;
        s.depth = d;
        const auto q = nn::separable_cost_ratio(s);
        return py::make_tuple(q.num, q.den);
      },
      py::arg("f"), py::arg("r"), py::arg("d"), "P_DSC / P_SC as (numerator, denominator)");

  // model
  py::class_<model::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("stages", &model::ModelConfig::stages)
      .def_readwrite("input_size", &model::ModelConfig::input_size)
      .def_readwrite("input_channels", &model::ModelConfig::input_channels)
      .def_readwrite("base_channels", &model::ModelConfig::base_channels)
      .def_readwrite("growth", &model::ModelConfig::growth)
      .def("channels", &model::ModelConfig::channels)
      .def("validate", &model::ModelConfig::validate);

  py::class_<model::RcaIUnet>(m, "Model")
      .def(py::init<const model::ModelConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config", &model::RcaIUnet::config)
      .def("param_count", &model::RcaIUnet::param_count)
      .def("param_table",
           [](const model::RcaIUnet& net) {
             py::list rows;
             for (const auto& r : net.param_table()) rows.append(py::make_tuple(r.name, r.shape, r.count));
             return rows;
           })
      .def(
          "predict",
          [](model::RcaIUnet& net, const F64Array& x) {
            if (x.ndim() == 2) return from_plane(plane_from(net.predict(to_tensor(to_plane(x)))));
            return from_tensor(net.predict(to_tensor_any(x)));
          },
          py::arg("x"), "Probability map for a 2-D image or an [N, 1, H, W] batch")
      .def("save", [](const model::RcaIUnet& net, const std::string& path) { net.save(path); })
      .def_static("load", [](const std::string& path) { return model::RcaIUnet::load(path); });

  m.def("count_parameters", &model::count_parameters, py::arg("config"));

  // loss
  m.def(
      "combined_loss",
      [](const F64Array& y, const F64Array& p) {
        const auto r = loss::combined_loss(to_tensor_any(y), to_tensor_any(p));
        py::dict d;
        d["total"] = r.total;
        d["bce_mean"] = r.bce_mean;
        d["bce_sum"] = r.bce_sum;
        d["dice"] = r.dice;
        d["grad"] = from_tensor(r.grad);
        return d;
      },
      py::arg("y"), py::arg("p"));

  // metrics
  m.def(
      "confusion",
      [](const U8Array& p, const U8Array& g) {
        const auto c = metrics::confusion(to_mask(p), to_mask(g));
        return py::make_tuple(c.tp, c.tn, c.fp, c.fn);
      },
      py::arg("pred"), py::arg("truth"), "(TP, TN, FP, FN)");
  m.def(
      "miou", [](const F64Array& prob, const U8Array& g) { return metrics::miou(to_plane(prob), to_mask(g)); },
      py::arg("prob"), py::arg("truth"));
  m.def(
      "ahd", [](const U8Array& p, const U8Array& g) { return metrics::ahd(to_mask(p), to_mask(g)).value; },
      py::arg("pred"), py::arg("truth"));
  m.def(
      "mae", [](const U8Array& p, const U8Array& g) { return metrics::mae(to_mask(p), to_mask(g)); }, py::arg("pred"),
      py::arg("truth"));
  m.def(
      "evaluate_pair",
      [](const U8Array& p, const U8Array& g, std::optional<F64Array> prob) {
        if (prob) {
          const Plane pl = to_plane(*prob);
          return metrics_dict(metrics::evaluate_pair("", to_mask(p), to_mask(g), &pl));
        }
        return metrics_dict(metrics::evaluate_pair("", to_mask(p), to_mask(g)));
      },
      py::arg("pred"), py::arg("truth"), py::arg("prob") = py::none());

  // postprocess
  m.def(
      "threshold", [](const F64Array& prob, double t) { return from_mask(postprocess::threshold(to_plane(prob), t)); },
      py::arg("prob"), py::arg("t") = 0.5);
  m.def(
      "fill_holes", [](const U8Array& mask) { return from_mask(postprocess::fill_holes(to_mask(mask))); },
      py::arg("mask"));
  m.def(
      "remove_small_regions",
      [](const U8Array& mask, double fraction) {
        return from_mask(postprocess::remove_small_regions(to_mask(mask), fraction));
      },
      py::arg("mask"), py::arg("min_area_fraction") = postprocess::kMinAreaFraction);
  m.def(
      "refine", [](const F64Array& prob) { return from_mask(postprocess::refine(to_plane(prob))); }, py::arg("prob"));

  // data
  m.def(
      "generate_synthetic",
      [](std::size_t count, std::size_t size, std::uint64_t seed) {
        py::list out;
        for (const auto& s : data::generate_synthetic(count, size, seed))
          out.append(py::make_tuple(s.id, from_plane(s.image), from_mask(s.mask)));
        return out;
      },
      py::arg("count"), py::arg("size"), py::arg("seed") = 0, "List of (id, image, mask)");
  m.def(
      "read_png", [](const std::string& path) { return from_plane(data::read_png(path)); }, py::arg("path"));
  m.def(
      "write_png", [](const std::string& path, const F64Array& img) { data::write_png(path, to_plane(img)); },
      py::arg("path"), py::arg("image"));

  // gradient checks
  m.def(
      "gradcheck_layers",
      [](std::uint64_t seed) {
        py::dict out;
        for (const auto& run : suites::layer_gradchecks(seed)) out[py::str(run.name)] = run.report.max_rel_err();
        return out;
      },
      py::arg("seed") = 0, "Max relative error per layer type");
}
