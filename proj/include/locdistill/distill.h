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
#ifndef LOCDISTILL_DISTILL_H_
#define LOCDISTILL_DISTILL_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "locdistill/losses.h"
#include "locdistill/toydet.h"

namespace locdistill {

struct TrainConfig {
  int epochs = 30;
  double lr = 0.05;
  // lr is multiplied by decay_factor once, from decay_epoch on. 0 places the
  // step at 75% of the schedule, a negative value disables it.
  double decay_factor = 0.1;
  int decay_epoch = 0;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;  // shuffling order
  // Weight of the plain cross-entropy on the classification branch.
  double class_weight = 1.0;

  int resolved_decay_epoch() const;
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
};

// Called after every epoch with the current parameters.
using EpochCallback =
    std::function<void(const EpochStats&, const ModelParams&)>;

struct TrainResult {
  ModelParams params;
  ModelParams initial;
  std::vector<EpochStats> curve;
  // Ground-truth offsets clamped into the support while building targets.
  std::size_t clamped_targets = 0;
};

// Mean per-sample objective on `data` at fixed parameters: the regression
// branch objective (GIoU + DFL + LD, or TBR when selected) plus the class
// cross entropy and optional class KD.
double mean_objective(const ModelParams& params, const ModelConfig& config,
                      std::span<const SceneSample> data,
                      const ModelParams* teacher,
                      const ModelConfig* teacher_config,
                      const DistillConfig& dcfg, double class_weight = 1.0);

// Mini-batch SGD with step decay. The teacher, when given, is only read.
// Throws NumericError naming the epoch if the loss stops being finite.
TrainResult train_model(const ModelConfig& config, const TrainConfig& tcfg,
                        std::span<const SceneSample> data,
                        const ModelParams* teacher,
                        const ModelConfig* teacher_config,
                        const DistillConfig& dcfg,
                        const EpochCallback& on_epoch = {},
                        const ModelParams* warm_start = nullptr);

// train_model with the teacher's localization distributions as LD targets.
// Throws ConfigError when the two edge supports differ.
TrainResult distill_student(const ModelParams& teacher,
                            const ModelConfig& teacher_config,
                            const ModelConfig& student_config,
                            const TrainConfig& tcfg,
                            std::span<const SceneSample> data,
                            const DistillConfig& dcfg,
                            const EpochCallback& on_epoch = {});

struct SelfDistillResult {
  TrainResult teacher;
  TrainResult student;
  int rounds = 1;
};

// Trains a model normally, freezes it, and distils one fresh model of the
// same configuration from it. A single round, never repeated.
SelfDistillResult self_distill(const ModelConfig& config,
                               const TrainConfig& tcfg,
                               std::span<const SceneSample> data,
                               const DistillConfig& dcfg);

// Teacher, assistants (descending capacity) and student.
struct ModelLadder {
  ModelConfig teacher;
  std::vector<ModelConfig> assistants;
  ModelConfig student;
};

struct TAPath {
  std::vector<ModelConfig> models;  // teacher first, student last
  std::string label() const;        // e.g. "T>A1>S"
};

// All 2^m teacher-to-student paths through ordered subsets of the
// assistants, in subset-bitmask order (bit k selects assistant k+1).
// Throws ConfigError unless capacities strictly decrease along the ladder.
std::vector<TAPath> enumerate_ta_paths(const ModelLadder& ladder);

struct CurvePoint {
  int epoch = 0;
  double loss = 0.0;
  double mean_iou = 0.0;
  double mean_ap = 0.0;
};

struct StageRecord {
  std::string model;
  std::string teacher;
  Metrics metrics;
  std::vector<CurvePoint> curve;
};

struct RunRecord {
  std::string path;
  Metrics head_metrics;  // the teacher at the head of the path
  std::vector<StageRecord> stages;  // one per distillation hop
  std::string config_snapshot;
  double wall_seconds = 0.0;
};

struct SequenceOptions {
  // Epochs for the head (teacher) model; 0 uses tcfg.epochs.
  int head_epochs = 0;
  // Initialise each successor from its predecessor (same shapes required)
  // instead of from scratch.
  bool warm_start = false;
  // Evaluate on the held-out set after every epoch for the curve.
  bool track_curves = true;
  double nms_threshold = 0.6;
};

// Trains the head of the path without distillation, then distils each
// successor from its immediate predecessor and evaluates it on `test`.
// `head`, when given, is used instead of training the head model.
RunRecord run_ta_sequence(const TAPath& path, std::span<const SceneSample> train,
                          std::span<const SceneSample> test,
                          const TrainConfig& tcfg, const DistillConfig& dcfg,
                          const SequenceOptions& options = {},
                          const ModelParams* head = nullptr);

// run_ta_sequence over every path of the ladder; trained prefixes are shared
// between paths.
std::vector<RunRecord> run_ta_sweep(const ModelLadder& ladder,
                                    std::span<const SceneSample> train,
                                    std::span<const SceneSample> test,
                                    const TrainConfig& tcfg,
                                    const DistillConfig& dcfg,
                                    const SequenceOptions& options = {});

void write_run_record(std::ostream& os, const RunRecord& record);
// Columns: path,stage,model,epoch,loss,mean_iou,mean_ap
void write_curve_csv(std::ostream& os, std::span<const RunRecord> records);

}  // namespace locdistill

#endif  // LOCDISTILL_DISTILL_H_
