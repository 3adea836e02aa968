/* Copyright 2026 The locdistill Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "locdistill/errors.h"
#include "locdistill/experiment.h"

namespace py = pybind11;
using namespace locdistill;

namespace {

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["mean_iou"] = m.mean_iou;
  d["mean_ap"] = m.mean_ap;
  d["ap50"] = m.ap(0.5);
  d["ap75"] = m.ap(0.75);
  d["strict_ap"] = strict_ap(m);
  return d;
}

Var tape_input(Tape& tape, const std::vector<double>& x) { return tape.input(x); }

}  // namespace

PYBIND11_MODULE(_locdistill, m) {
  m.doc() = "Localization distillation for bounding-box regression";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_RuntimeError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<Box>(m, "Box")
      .def(py::init<double, double, double, double, double, int>(), py::arg("x1"),
           py::arg("y1"), py::arg("x2"), py::arg("y2"), py::arg("score") = 1.0,
           py::arg("class_id") = 0)
      .def_readwrite("x1", &Box::x1)
      .def_readwrite("y1", &Box::y1)
      .def_readwrite("x2", &Box::x2)
      .def_readwrite("y2", &Box::y2)
      .def_readwrite("score", &Box::score)
      .def_readwrite("class_id", &Box::class_id)
      .def("area", &Box::area)
      .def("__eq__", [](const Box& a, const Box& b) { return a == b; })
      .def("__repr__", [](const Box& b) {
        return "Box(" + std::to_string(b.x1) + ", " + std::to_string(b.y1) +
               ", " + std::to_string(b.x2) + ", " + std::to_string(b.y2) + ")";
      });

  m.def("iou", &iou);
  m.def("giou", &giou);
  m.def("decode_box",
        [](double x, double y, double t, double b, double l, double r) {
          return decode_box({x, y}, {t, b, l, r});
        },
        py::arg("x"), py::arg("y"), py::arg("t"), py::arg("b"), py::arg("l"),
        py::arg("r"));
  m.def("nms", [](const std::vector<Box>& boxes, double thr) {
    return nms(boxes, thr);
  });

  m.def("support", [](double e_min, double e_max, std::size_t n) {
    const EdgeSupport s = make_support(e_min, e_max, n);
    return std::vector<double>(s.positions().begin(), s.positions().end());
  });
  m.def("softmax", [](const std::vector<double>& z, double tau) {
    const auto p = softmax_with_temperature({z}, tau);
    return std::vector<double>(p.probs().begin(), p.probs().end());
  }, py::arg("logits"), py::arg("temperature") = 1.0);
  m.def("expect", [](double e_min, double e_max, const std::vector<double>& p) {
    return expect(make_support(e_min, e_max, p.size()), EdgeDistribution(p));
  });
  m.def("kl_divergence", [](const std::vector<double>& p,
                            const std::vector<double>& q) {
    return kl_divergence(EdgeDistribution(p), EdgeDistribution(q));
  });
  m.def("project_target", [](double y, double e_min, double e_max,
                             std::size_t n) {
    const auto t = project_target(y, make_support(e_min, e_max, n));
    return py::make_tuple(t.index, t.w_left, t.w_right, t.clamped);
  });

  m.def("ld_edge_loss",
        [](const std::vector<double>& zs, const std::vector<double>& zt,
           double tau) { return ld_edge_loss({zs}, {zt}, tau); },
        py::arg("student"), py::arg("teacher"), py::arg("temperature") = 10.0);
  m.def("ld_loss_and_grad",
        [](const std::vector<double>& zs, const std::vector<double>& zt,
           std::size_t bins, double tau) {
          Tape tape;
          Var x = tape_input(tape, zs);
          Var loss = ld_loss(x, zt, bins, tau);
          return py::make_tuple(loss.scalar(), tape.backward(loss).of(x));
        },
        py::arg("student"), py::arg("teacher"), py::arg("bins"),
        py::arg("temperature") = 10.0);
  m.def("dfl_loss", [](const std::vector<double>& z, double y, double e_min,
                       double e_max) {
    return dfl_loss({z}, y, make_support(e_min, e_max, z.size()));
  });
  m.def("giou_loss", [](const Box& pred, const Box& gt) {
    return giou_regression_loss(pred, gt);
  });
  m.def("tbr_gate_active", [](double s, double t, double eps, bool formula) {
    return tbr_gate_active(s, t, eps,
                           formula ? TbrGate::kFormula : TbrGate::kStudentInferior);
  }, py::arg("student_error"), py::arg("teacher_error"), py::arg("epsilon"),
        py::arg("formula") = false);
  m.def("tbr_loss", [](const Box& s, const Box& t, const Box& gt, double eps,
                       double lambda) { return tbr_loss(s, t, gt, eps, lambda); });

  m.def("ta_path_labels", [](std::size_t assistants) {
    ModelLadder l;
    l.teacher.name = "T";
    l.teacher.hidden = {std::size_t{1} << (assistants + 3)};
    for (std::size_t i = 0; i < assistants; ++i) {
      ModelConfig a;
      a.name = "A" + std::to_string(i + 1);
      a.hidden = {std::size_t{1} << (assistants + 2 - i)};
      l.assistants.push_back(a);
    }
    l.student.name = "S";
    l.student.hidden = {2};
    std::vector<std::string> labels;
    for (const TAPath& p : enumerate_ta_paths(l)) labels.push_back(p.label());
    return labels;
  });

  m.def("generate_dataset", [](std::size_t count, double sigma,
                               std::uint64_t seed) {
    py::list out;
    for (const SceneSample& s : generate_dataset(count, sigma, seed)) {
      py::dict d;
      d["scene_id"] = s.scene_id;
      d["class"] = s.gt_class;
      d["anchor"] = py::make_tuple(s.anchor.x, s.anchor.y);
      d["gt"] = s.gt_box;
      d["features"] = s.features;
      out.append(d);
    }
    return out;
  });

  m.def("default_config_text", [] {
    std::ostringstream os;
    save_config(os, ExperimentConfig{});
    return os.str();
  });
  m.def("compare_ld",
        [](const std::string& config_text, std::uint64_t seed) {
          std::istringstream is(config_text);
          const ExperimentConfig c = parse_config(is);
          LdComparison r;
          {
            py::gil_scoped_release release;
            r = compare_ld(c, seed);
          }
          py::dict d;
          d["teacher"] = metrics_dict(r.teacher_metrics);
          d["baseline"] = metrics_dict(r.baseline_metrics);
          d["ld"] = metrics_dict(r.distilled_metrics);
          return d;
        },
        py::arg("config_text"), py::arg("seed") = 1);
}
