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
#include "locdistill/losses.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "locdistill/errors.h"

namespace locdistill {

void DistillConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be > 0");
  }
  if (!(weights.reg >= 0.0)) throw ConfigError("lambda_reg must be >= 0");
  if (!(weights.dfl >= 0.0)) throw ConfigError("lambda_dfl must be >= 0");
  if (!(weights.ld >= 0.0)) throw ConfigError("lambda_ld must be >= 0");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (!(tbr_lambda >= 0.0)) throw ConfigError("tbr_lambda must be >= 0");
  if (!(class_kd_weight >= 0.0)) {
    throw ConfigError("class_kd_weight must be >= 0");
  }
}

namespace {

// KL(reference || other) where `reference` is a constant distribution and
// the other side is the student's softened distribution (or vice versa).
Var softened_kl(Var student_logits, std::span<const double> teacher_logits,
                double temperature, const KlOptions& options) {
  if (student_logits.size() != teacher_logits.size()) {
    throw DomainError("student and teacher logits differ in length");
  }
  const EdgeDistribution teacher = softmax_with_temperature(
      EdgeLogits{{teacher_logits.begin(), teacher_logits.end()}}, temperature);
  Tape& tape = student_logits.tape();
  const std::size_t n = teacher.size();

  Var student_p = softmax(student_logits, temperature);
  Var kl;
  if (options.orientation == KlOrientation::kTeacherReference) {
    // sum p_T log p_T - sum p_T log max(p_S, eps)
    std::vector<double> pt(n);
    double neg_entropy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pt[i] = teacher[i];
      if (pt[i] > 0.0) neg_entropy += pt[i] * std::log(pt[i]);
    }
    Var cross = dot(tape.constant(std::move(pt)),
                    log(clamp_min(student_p, kKlClampEpsilon)));
    kl = neg_entropy - cross;
  } else {
    std::vector<double> log_pt(n);
    for (std::size_t i = 0; i < n; ++i) {
      log_pt[i] = std::log(std::max(teacher[i], kKlClampEpsilon));
    }
    Var log_ps = log(clamp_min(student_p, kKlClampEpsilon));
    kl = sum(student_p * (log_ps - tape.constant(std::move(log_pt))));
  }
  if (options.scale_by_tau_squared) kl = kl * (temperature * temperature);
  return kl;
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("temperature must be positive");
  }
}

}  // namespace

Var ld_edge_loss(Var student_logits, std::span<const double> teacher_logits,
                 double temperature, const KlOptions& options) {
  check_temperature(temperature);
  return softened_kl(student_logits, teacher_logits, temperature, options);
}

Var ld_loss(Var student_box_logits, std::span<const double> teacher_box_logits,
            std::size_t bins, double temperature, const KlOptions& options) {
  check_temperature(temperature);
  if (student_box_logits.size() != 4 * bins ||
      teacher_box_logits.size() != 4 * bins) {
    throw DomainError("box logits must hold 4 * bins values on both sides");
  }
  Var total;
  for (std::size_t k = 0; k < 4; ++k) {
    Var edge = ld_edge_loss(slice(student_box_logits, k * bins, bins),
                            teacher_box_logits.subspan(k * bins, bins),
                            temperature, options);
    total = k == 0 ? edge : total + edge;
  }
  return total;
}

double ld_edge_loss(const EdgeLogits& student, const EdgeLogits& teacher,
                    double temperature, const KlOptions& options) {
  Tape tape;
  return ld_edge_loss(tape.constant(student.z), teacher.z, temperature, options)
      .scalar();
}

double ld_loss(const BoxDistribution& student, const BoxDistribution& teacher,
               double temperature, const KlOptions& options) {
  if (!(student.support() == teacher.support())) {
    throw DomainError("student and teacher use different edge supports");
  }
  Tape tape;
  const auto s = student.flat();
  const auto t = teacher.flat();
  return ld_loss(tape.constant(s), t, student.support().size(), temperature,
                 options)
      .scalar();
}

Var dfl_loss(Var edge_logits, double target, const EdgeSupport& support) {
  if (edge_logits.size() != support.size()) {
    throw DomainError("edge logits length does not match support");
  }
  const TargetProjection proj = project_target(target, support);
  Var log_p = log_softmax(edge_logits);
  Var pair = slice(log_p, proj.index, 2);
  Tape& tape = edge_logits.tape();
  return -dot(tape.constant({proj.w_left, proj.w_right}), pair);
}

double dfl_loss(const EdgeLogits& logits, double target,
                const EdgeSupport& support) {
  Tape tape;
  return dfl_loss(tape.constant(logits.z), target, support).scalar();
}

std::array<Var, 4> expected_offsets(Var box_logits,
                                    const EdgeSupport& support) {
  const std::size_t n = support.size();
  if (box_logits.size() != 4 * n) {
    throw DomainError("box logits must hold 4 * n values");
  }
  Tape& tape = box_logits.tape();
  Var positions = tape.constant(
      std::vector<double>(support.positions().begin(), support.positions().end()));
  std::array<Var, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    out[k] = dot(positions, softmax(slice(box_logits, k * n, n)));
  }
  return out;
}

Var giou_regression_loss(const std::array<Var, 4>& offsets,
                         const AnchorPoint& anchor, const Box& gt) {
  validate_box(gt);
  Tape& tape = offsets[0].tape();
  const auto& [t, b, l, r] = offsets;
  Var x1 = anchor.x - l;
  Var x2 = r + anchor.x;
  Var y1 = anchor.y - t;
  Var y2 = b + anchor.y;
  Var gx1 = tape.constant(gt.x1), gx2 = tape.constant(gt.x2);
  Var gy1 = tape.constant(gt.y1), gy2 = tape.constant(gt.y2);

  Var inter_w = relu(minimum(x2, gx2) - maximum(x1, gx1));
  Var inter_h = relu(minimum(y2, gy2) - maximum(y1, gy1));
  Var inter = inter_w * inter_h;
  Var pred_area = (x2 - x1) * (y2 - y1);
  Var uni = clamp_min(pred_area + gt.area() - inter, 1e-12);
  Var enclose = clamp_min((maximum(x2, gx2) - minimum(x1, gx1)) *
                              (maximum(y2, gy2) - minimum(y1, gy1)),
                          1e-12);
  Var g = inter / uni - (enclose - uni) / enclose;
  return 1.0 - g;
}

double giou_regression_loss(const Box& pred, const Box& gt) {
  return 1.0 - giou(pred, gt);
}

bool tbr_gate_active(double student_error, double teacher_error,
                     double epsilon, TbrGate gate) {
  if (!(epsilon >= 0.0)) throw DomainError("epsilon must be >= 0");
  if (gate == TbrGate::kStudentInferior) {
    return student_error > teacher_error + epsilon;
  }
  return student_error + epsilon <= teacher_error;
}

double tbr_loss(const Box& student, const Box& teacher, const Box& gt,
                double epsilon, double lambda, TbrGate gate) {
  validate_box(student);
  validate_box(teacher);
  validate_box(gt);
  if (!tbr_gate_active(corner_distance(student, gt),
                       corner_distance(teacher, gt), epsilon, gate)) {
    return 0.0;
  }
  return lambda * giou_regression_loss(student, gt);
}

Var tbr_loss(const std::array<Var, 4>& student_offsets,
             const AnchorPoint& anchor, const Box& teacher, const Box& gt,
             double epsilon, double lambda, TbrGate gate) {
  Box student;
  student.x1 = anchor.x - student_offsets[2].scalar();
  student.x2 = anchor.x + student_offsets[3].scalar();
  student.y1 = anchor.y - student_offsets[0].scalar();
  student.y2 = anchor.y + student_offsets[1].scalar();
  Tape& tape = student_offsets[0].tape();
  if (!tbr_gate_active(corner_distance(student, gt),
                       corner_distance(teacher, gt), epsilon, gate)) {
    return tape.constant(0.0);
  }
  return giou_regression_loss(student_offsets, anchor, gt) * lambda;
}

Var class_cross_entropy(Var logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw DomainError("class label out of range");
  }
  return -slice(log_softmax(logits), static_cast<std::size_t>(label), 1);
}

Var kd_class_loss(Var student_logits, std::span<const double> teacher_logits,
                  std::span<const double> one_hot, double temperature,
                  double ce_weight, double kl_weight,
                  const KlOptions& options) {
  check_temperature(temperature);
  if (one_hot.size() != student_logits.size()) {
    throw DomainError("one-hot label length does not match logits");
  }
  int label = -1;
  for (std::size_t i = 0; i < one_hot.size(); ++i) {
    if (one_hot[i] == 1.0) {
      if (label >= 0) throw DomainError("one-hot label has several ones");
      label = static_cast<int>(i);
    } else if (one_hot[i] != 0.0) {
      throw DomainError("one-hot label entries must be 0 or 1");
    }
  }
  if (label < 0) throw DomainError("one-hot label has no hot entry");

  Var ce = class_cross_entropy(student_logits, label);
  Var kl = softened_kl(student_logits, teacher_logits, temperature, options);
  return ce * ce_weight + kl * kl_weight;
}

LossTerms total_loss(Var box_logits, const EdgeSupport& support,
                     const AnchorPoint& anchor, const Box& gt,
                     std::optional<std::span<const double>> teacher_box_logits,
                     const DistillConfig& config) {
  const std::size_t n = support.size();
  const bool use_teacher = config.weights.ld > 0.0;
  if (use_teacher && !teacher_box_logits) {
    throw ConfigError("lambda_ld > 0 but no teacher outputs were given");
  }

  LossTerms terms;
  terms.reg = giou_regression_loss(expected_offsets(box_logits, support),
                                   anchor, gt);
  const auto targets = encode_box(anchor, gt).as_array();
  for (std::size_t k = 0; k < 4; ++k) {
    Var edge = dfl_loss(slice(box_logits, k * n, n), targets[k], support);
    terms.dfl = k == 0 ? edge : terms.dfl + edge;
  }
  terms.total = terms.reg * config.weights.reg + terms.dfl * config.weights.dfl;
  if (use_teacher) {
    terms.ld = ld_loss(box_logits, *teacher_box_logits, n, config.temperature,
                       {config.orientation, config.scale_by_tau_squared});
    terms.total = terms.total + *terms.ld * config.weights.ld;
  }
  return terms;
}

}  // namespace locdistill
