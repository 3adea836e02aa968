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
#ifndef LOCDISTILL_EXPERIMENT_H_
#define LOCDISTILL_EXPERIMENT_H_

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "locdistill/distill.h"

namespace locdistill {

// Everything one CLI invocation needs. Stored as `key = value` lines; see
// save_config for the full key list.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs";

  std::size_t train_count = 400;
  std::size_t test_count = 500;
  double sigma = 0.5;

  std::vector<std::size_t> teacher_hidden = {64, 64};
  std::vector<std::vector<std::size_t>> assistant_hidden = {{32}};
  std::vector<std::size_t> student_hidden = {8};
  std::size_t n_bins = 17;
  double e_min = 0.0;
  double e_max = 16.0;

  TrainConfig train{.epochs = 50, .lr = 0.1};
  int head_epochs = 80;

  DistillConfig distill;
  bool warm_start = false;
  double nms_threshold = 0.6;

  std::size_t sweep_seeds = 3;
  std::vector<double> sweep_temperatures = {1, 5, 10, 15, 20};
  std::size_t nms_views = 8;
  double nms_jitter = 1.0;
  // Evaluate on the test split after every epoch for the curve CSVs.
  bool track_curves = true;

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;

  // Model configs with names T, A1..Am, S and seeds derived from `seed`.
  ModelLadder ladder(std::uint64_t run_seed) const;
  TrainConfig student_schedule(std::uint64_t run_seed) const;
  TrainConfig head_schedule(std::uint64_t run_seed) const;
};

ExperimentConfig parse_config(std::istream& is);
// Missing file -> ConfigError; syntax problems -> ParseError with the line.
ExperimentConfig load_config(const std::string& path);
void save_config(std::ostream& os, const ExperimentConfig& config);

struct DataSplit {
  std::vector<SceneSample> train;
  std::vector<SceneSample> test;
};
DataSplit make_data(const ExperimentConfig& config, std::uint64_t run_seed);

// Mean AP over the IoU thresholds 0.75 .. 0.95.
double strict_ap(const Metrics& metrics);

struct LdComparison {
  ModelParams teacher;
  ModelParams baseline;
  ModelParams distilled;
  Metrics teacher_metrics;
  Metrics baseline_metrics;
  Metrics distilled_metrics;
};

// Trains the teacher, a plain student and an LD student from the same
// initialisation and data order, and evaluates all three on the test split.
LdComparison compare_ld(const ExperimentConfig& config, std::uint64_t run_seed);

struct SelfLdOutcome {
  Metrics before;
  Metrics after;
  int rounds = 1;
};
// Self-LD on the student configuration.
SelfLdOutcome run_self_ld(const ExperimentConfig& config,
                          std::uint64_t run_seed);

struct TempSweepRow {
  double temperature = 0.0;
  double ld_mean_iou = 0.0;
  double ld_mean_ap = 0.0;
  double ld_ap75 = 0.0;
  double baseline_mean_iou = 0.0;
  double baseline_mean_ap = 0.0;
  double baseline_ap75 = 0.0;
};
// One row per configured temperature, averaged over sweep_seeds seeds
// (config.seed, config.seed + 1, ...). The teacher and the baseline student
// are shared by all temperatures of a seed.
std::vector<TempSweepRow> run_temp_sweep(const ExperimentConfig& config);
void write_temp_sweep_csv(std::ostream& os, const std::vector<TempSweepRow>& rows);

struct NmsDemoRow {
  std::string model;  // "baseline" or "ld"
  double nms_threshold = 0.0;
  double boxes_per_scene = 0.0;
  double mean_iou = 0.0;
  double mean_ap = 0.0;
  double ap75 = 0.0;
};
// Runs both students on several jittered views per test scene and reports
// how many candidates survive NMS at the configured threshold and at 0.95.
std::vector<NmsDemoRow> run_nms_demo(const ExperimentConfig& config,
                                     std::uint64_t run_seed);
void write_nms_demo_csv(std::ostream& os, const std::vector<NmsDemoRow>& rows);

std::vector<RunRecord> run_ta_experiment(const ExperimentConfig& config,
                                         std::uint64_t run_seed);
// Columns: path,stages,student_mean_iou,student_mean_ap,student_strict_ap
void write_ta_summary_csv(std::ostream& os, std::span<const RunRecord> records);

// Columns: model,mean_iou,mean_ap,ap50,ap75,strict_ap
void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const std::string& model,
                       const Metrics& metrics);

}  // namespace locdistill

#endif  // LOCDISTILL_EXPERIMENT_H_
