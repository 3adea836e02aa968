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
#ifndef LOCDISTILL_TOYDET_H_
#define LOCDISTILL_TOYDET_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "locdistill/autodiff.h"
#include "locdistill/distributions.h"
#include "locdistill/geometry.h"

namespace locdistill {

// One synthetic scene with a single object seen from one sampling point.
struct SceneSample {
  std::size_t scene_id = 0;
  // Noisy observations of the four edge offsets (normalised), followed by
  // distractor channels.
  std::vector<double> features;
  AnchorPoint anchor;
  Box gt_box;
  int gt_class = 0;
  // Observation noise per edge, in t, b, l, r order.
  std::array<double, 4> sigma{};

  bool operator==(const SceneSample&) const = default;
};

struct SceneOptions {
  int n_classes = 2;
  std::size_t distractors = 4;
  // Offsets are drawn inside [min_offset, max_offset].
  double min_offset = 1.0;
  double max_offset = 15.0;
  // Crisp edges get sigma / crisp_ratio.
  double crisp_ratio = 10.0;
};

inline constexpr double kFeatureCenter = 8.0;
inline constexpr double kFeatureScale = 4.0;

std::size_t feature_dim(const SceneOptions& options = {});

// Deterministic per seed. Each class has two ambiguous edges observed with
// noise of scale `sigma` and two crisp edges observed with sigma/10.
std::vector<SceneSample> generate_dataset(std::size_t count, double sigma,
                                          std::uint64_t seed,
                                          const SceneOptions& options = {});

// Extra observations of the same scene from sampling points jittered by up
// to `jitter` in x and y, with fresh observation noise. Used to produce
// redundant candidate boxes.
std::vector<SceneSample> jittered_views(const SceneSample& sample,
                                        std::size_t count, double jitter,
                                        std::uint64_t seed,
                                        const SceneOptions& options = {});

// Number of ground-truth offsets that fall outside the support and would be
// clamped by target projection.
std::size_t count_clamped_targets(std::span<const SceneSample> samples,
                                  const EdgeSupport& support);

void write_dataset(std::ostream& os, std::span<const SceneSample> samples);
std::vector<SceneSample> read_dataset(std::istream& is);

struct ModelConfig {
  std::string name = "model";
  std::vector<std::size_t> hidden = {16};
  std::size_t input_dim = 8;
  std::size_t n_bins = 17;
  double e_min = 0.0;
  double e_max = 16.0;
  std::size_t n_classes = 2;
  std::uint64_t seed = 0;

  EdgeSupport support() const { return EdgeSupport(e_min, e_max, n_bins); }
  std::size_t output_dim() const { return 4 * n_bins + n_classes; }
  // Number of trainable scalars; orders models along the capacity axis.
  std::size_t capacity() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct Layer {
  std::size_t rows = 0;  // outputs
  std::size_t cols = 0;  // inputs
  std::vector<double> weights;  // row-major rows x cols
  std::vector<double> bias;

  bool operator==(const Layer&) const = default;
};

// MLP with ReLU between layers; the last layer emits 4*n_bins localization
// logits followed by n_classes class logits.
struct ModelParams {
  std::vector<Layer> layers;

  bool operator==(const ModelParams&) const = default;
  std::uint64_t hash() const;
  bool all_finite() const;
};

// He-normal hidden layers, a down-scaled output layer, zero biases.
ModelParams init_params(const ModelConfig& config);
ModelParams zero_params(const ModelConfig& config);
void check_shapes(const ModelParams& params, const ModelConfig& config);

void write_params(std::ostream& os, const ModelParams& params);
ModelParams read_params(std::istream& is);

struct ModelOutput {
  std::vector<double> box_logits;    // 4 * n_bins, edges t, b, l, r
  std::vector<double> class_logits;  // n_classes
};

ModelOutput forward(const ModelParams& params, const ModelConfig& config,
                    std::span<const double> features);

// Parameters recorded as tape leaves; frozen leaves never get adjoints.
struct ParamVars {
  std::vector<Var> weights;
  std::vector<Var> bias;
};
ParamVars record_params(Tape& tape, const ModelParams& params,
                        bool frozen = false);

struct OutputVars {
  Var box_logits;
  Var class_logits;
};
OutputVars forward(Tape& tape, const ParamVars& params,
                   const ModelConfig& config, std::span<const double> features);

struct Detection {
  std::size_t scene_id = 0;
  Box box;
};

// Decodes one box per sample (score = max class probability, class =
// argmax) and runs greedy NMS within each scene.
std::vector<Detection> predict_detections(const ModelParams& params,
                                          const ModelConfig& config,
                                          std::span<const SceneSample> samples,
                                          double nms_threshold);

struct GroundTruth {
  std::size_t scene_id = 0;
  Box box;
};
std::vector<GroundTruth> ground_truths(std::span<const SceneSample> samples);

// IoU thresholds 0.50, 0.55, ..., 0.95.
std::array<double, 10> ap_thresholds();

struct Metrics {
  double mean_iou = 0.0;
  std::map<double, double> ap_at;
  double mean_ap = 0.0;

  double ap(double threshold) const;
};

// Mean over ground truths of the best IoU with any prediction in the same
// scene; COCO-style AP (greedy score-ordered matching, 101-point
// interpolation, averaged over classes present in the ground truth) at each
// threshold. Throws DomainError for an empty ground-truth set.
Metrics evaluate_metrics(std::span<const Detection> predictions,
                         std::span<const GroundTruth> truths);

// predict_detections + evaluate_metrics on a dataset.
Metrics evaluate_model(const ModelParams& params, const ModelConfig& config,
                       std::span<const SceneSample> samples,
                       double nms_threshold = 0.6);

}  // namespace locdistill

#endif  // LOCDISTILL_TOYDET_H_
