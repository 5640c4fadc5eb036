// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "brainstack/montage.hpp"
#include "brainstack/objective.hpp"
#include "brainstack/router.hpp"
#include "brainstack/tensor.hpp"

namespace py = pybind11;
using namespace brainstack;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core numeric operations of the brainstack library";

  py::register_exception<Error>(m, "BrainstackError");

  m.def("cross_entropy", [](const std::vector<double>& logits, int label) {
    return cross_entropy(logits, label);
  }, py::arg("logits"), py::arg("label"),
     "Softmax cross entropy of one logit row against an integer label");

  m.def("distill_loss", [](const std::vector<double>& teacher,
                           const std::vector<std::vector<double>>& students,
                           double temperature) {
    return distill_loss(teacher, students, temperature);
  }, py::arg("teacher_logits"), py::arg("student_logits"), py::arg("temperature"),
     "Sum over students of KL(softened teacher || softened student)");

  m.def("schedule_weights", [](int epoch, double fused_loss, int t_warmup, int t_transition,
                               double lambda_min, double lambda_max, double alpha_max,
                               double beta_max, double gamma_max, double max_loss_estimate) {
    ScheduleConfig cfg;
    cfg.t_warmup = t_warmup;
    cfg.t_transition = t_transition;
    cfg.lambda_min = lambda_min;
    cfg.lambda_max = lambda_max;
    cfg.alpha_max = alpha_max;
    cfg.beta_max = beta_max;
    cfg.gamma_max = gamma_max;
    cfg.max_loss_estimate = max_loss_estimate;
    cfg.validate();
    ScheduledWeights w = schedule_weights(epoch, fused_loss, cfg);
    return py::make_tuple(w.lambda, w.alpha, w.beta, w.gamma);
  }, py::arg("epoch"), py::arg("fused_loss"), py::arg("t_warmup") = 5,
     py::arg("t_transition") = 20, py::arg("lambda_min") = 0.2, py::arg("lambda_max") = 1.0,
     py::arg("alpha_max") = 0.8, py::arg("beta_max") = 0.5, py::arg("gamma_max") = 0.5,
     py::arg("max_loss_estimate") = 1.3862943611198906,
     "Loss-term weights (lambda, alpha, beta, gamma) for one epoch");

  m.def("routing_weights", [](const std::vector<double>& scores) {
    return routing_weights(scores);
  }, py::arg("scores"), "Softmax routing weights over expert scores");

  m.def("parse_montage_text", [](const std::string& text) {
    MontageSpec spec = parse_montage(text);
    py::dict regions;
    for (int r = 0; r < kNumRegions; ++r)
      regions[region_name(static_cast<Region>(r))] =
          spec.partition.of(static_cast<Region>(r));
    return py::make_tuple(spec.montage.channel_names, regions);
  }, py::arg("text"), "Parse a region-map config into (channel names, region dict)");

  m.def("default_montage16", [] { return default_montage16_text(); },
        "The 16-channel desk montage config text");
}
