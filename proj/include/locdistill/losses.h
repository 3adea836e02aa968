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
#ifndef LOCDISTILL_LOSSES_H_
#define LOCDISTILL_LOSSES_H_

#include <array>
#include <optional>
#include <span>

#include "locdistill/autodiff.h"
#include "locdistill/distributions.h"
#include "locdistill/geometry.h"

namespace locdistill {

// Trade-off weights of the regression-branch objective.
struct LossWeights {
  double reg = 2.0;   // GIoU regression
  double dfl = 0.25;  // distribution focal loss
  double ld = 0.25;   // localization distillation

  double combine(double reg_loss, double dfl_loss, double ld_loss) const {
    return reg * reg_loss + dfl * dfl_loss + ld * ld_loss;
  }
  bool operator==(const LossWeights&) const = default;
};

enum class KlOrientation {
  kTeacherReference,  // KL(p_T || p_S)
  kStudentReference,  // KL(p_S || p_T)
};

// Which side of the teacher-bounded regression inequality activates the
// penalty.
enum class TbrGate {
  // Active when |b_s - gt| > |b_t - gt| + eps (student worse than teacher).
  kStudentInferior,
  // Active when |b_s - gt| + eps <= |b_t - gt|, the literal formula.
  kFormula,
};

enum class DistillMethod { kLocalization, kTeacherBoundedRegression };

struct DistillConfig {
  double temperature = 10.0;
  LossWeights weights;
  double epsilon = 0.0;     // TBR margin
  double tbr_lambda = 1.0;  // TBR trade-off
  TbrGate tbr_gate = TbrGate::kStudentInferior;
  DistillMethod method = DistillMethod::kLocalization;
  KlOrientation orientation = KlOrientation::kTeacherReference;
  // Multiply KL terms by τ² (classical KD gradient rescaling). Off by default.
  bool scale_by_tau_squared = false;
  // Also distil the classification branch with kd_class_loss.
  bool class_kd = false;
  double class_kd_weight = 1.0;

  // Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const DistillConfig&) const = default;
};

struct KlOptions {
  KlOrientation orientation = KlOrientation::kTeacherReference;
  bool scale_by_tau_squared = false;
};

// KL between temperature-softened teacher and student distributions of one
// edge. Teacher logits are constants.
Var ld_edge_loss(Var student_logits, std::span<const double> teacher_logits,
                 double temperature, const KlOptions& options = {});

// Sum of ld_edge_loss over t, b, l, r. Both arguments hold 4*n logits.
Var ld_loss(Var student_box_logits, std::span<const double> teacher_box_logits,
            std::size_t bins, double temperature,
            const KlOptions& options = {});

// Value-only conveniences; throw DomainError on support mismatch.
double ld_edge_loss(const EdgeLogits& student, const EdgeLogits& teacher,
                    double temperature, const KlOptions& options = {});
double ld_loss(const BoxDistribution& student, const BoxDistribution& teacher,
               double temperature, const KlOptions& options = {});

// -(w_l log p_i + w_r log p_{i+1}) for the bins bracketing `target`.
Var dfl_loss(Var edge_logits, double target, const EdgeSupport& support);
double dfl_loss(const EdgeLogits& logits, double target,
                const EdgeSupport& support);

// Expected {t, b, l, r} offsets of a 4*n logit vector.
std::array<Var, 4> expected_offsets(Var box_logits, const EdgeSupport& support);

// 1 - GIoU between the box decoded from `offsets` at `anchor` and `gt`.
Var giou_regression_loss(const std::array<Var, 4>& offsets,
                         const AnchorPoint& anchor, const Box& gt);
double giou_regression_loss(const Box& pred, const Box& gt);

bool tbr_gate_active(double student_error, double teacher_error,
                     double epsilon, TbrGate gate = TbrGate::kStudentInferior);

// λ * (1 - GIoU(b_s, gt)) when the gate is active, exactly 0 otherwise.
// Errors are corner distances to the ground truth.
double tbr_loss(const Box& student, const Box& teacher, const Box& gt,
                double epsilon, double lambda,
                TbrGate gate = TbrGate::kStudentInferior);
Var tbr_loss(const std::array<Var, 4>& student_offsets,
             const AnchorPoint& anchor, const Box& teacher, const Box& gt,
             double epsilon, double lambda,
             TbrGate gate = TbrGate::kStudentInferior);

// ce_weight * CE(softmax(z_S), g) + kl_weight * KL(softmax(z_T/τ), softmax(z_S/τ)).
// `one_hot` must contain a single 1 and zeros elsewhere.
Var kd_class_loss(Var student_logits, std::span<const double> teacher_logits,
                  std::span<const double> one_hot, double temperature,
                  double ce_weight, double kl_weight,
                  const KlOptions& options = {});

// Cross entropy of softmax(logits) against a class index.
Var class_cross_entropy(Var logits, int label);

struct LossTerms {
  Var total;
  Var reg;
  Var dfl;
  std::optional<Var> ld;  // set when the teacher term is active
};

// weights.reg * L_reg + weights.dfl * sum_edges L_DFL + weights.ld * L_LD for
// one positive location. With weights.ld == 0 the teacher is ignored. Throws
// ConfigError when weights.ld > 0 and no teacher logits are given.
LossTerms total_loss(Var box_logits, const EdgeSupport& support,
                     const AnchorPoint& anchor, const Box& gt,
                     std::optional<std::span<const double>> teacher_box_logits,
                     const DistillConfig& config);

}  // namespace locdistill

#endif  // LOCDISTILL_LOSSES_H_
