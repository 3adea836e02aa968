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
#include "locdistill/toydet.h"

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "locdistill/errors.h"

namespace locdistill {
namespace {

TEST(DatasetTest, SameSeedIsBitIdentical) {
  const auto a = generate_dataset(200, 0.8, 42);
  const auto b = generate_dataset(200, 0.8, 42);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, generate_dataset(200, 0.8, 43));
}

TEST(DatasetTest, CountAndClassHistogram) {
  const auto a = generate_dataset(1000, 1.0, 7);
  ASSERT_EQ(a.size(), 1000u);
  std::map<int, int> hist;
  for (const auto& s : a) ++hist[s.gt_class];
  EXPECT_EQ(hist.size(), 2u);
  std::map<int, int> again;
  for (const auto& s : generate_dataset(1000, 1.0, 7)) ++again[s.gt_class];
  EXPECT_EQ(hist, again);
}

TEST(DatasetTest, NoiselessFeaturesHoldExactOffsets) {
  for (const auto& s : generate_dataset(300, 0.0, 3)) {
    const auto off = encode_box(s.anchor, s.gt_box).as_array();
    ASSERT_EQ(s.features.size(), feature_dim());
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(s.features[k] * kFeatureScale + kFeatureCenter, off[k], 1e-9);
    }
  }
}

TEST(DatasetTest, AmbiguousEdgesDependOnClass) {
  for (const auto& s : generate_dataset(50, 2.0, 9)) {
    const double blurry = 2.0, crisp = 0.2;
    if (s.gt_class % 2 == 0) {
      EXPECT_EQ(s.sigma, (std::array<double, 4>{crisp, blurry, crisp, blurry}));
      EXPECT_GT(s.gt_box.width(), 0.0);
    } else {
      EXPECT_EQ(s.sigma, (std::array<double, 4>{blurry, crisp, blurry, crisp}));
    }
    EXPECT_EQ(s.gt_box.class_id, s.gt_class);
  }
}

TEST(DatasetTest, TargetsInsideDefaultSupport) {
  const auto a = generate_dataset(500, 1.0, 1);
  EXPECT_EQ(count_clamped_targets(a, default_support()), 0u);
  EXPECT_GT(count_clamped_targets(a, make_support(0, 8, 9)), 0u);
}

TEST(DatasetTest, RejectsBadArguments) {
  EXPECT_THROW(generate_dataset(0, 1.0, 1), DomainError);
  EXPECT_THROW(generate_dataset(10, -1.0, 1), DomainError);
}

TEST(DatasetTest, TextRoundTrip) {
  const auto a = generate_dataset(40, 0.7, 5);
  std::stringstream ss;
  write_dataset(ss, a);
  EXPECT_EQ(read_dataset(ss), a);
  std::istringstream bad("# locdistill-dataset v1\nscene=0 class=x\n");
  EXPECT_THROW(read_dataset(bad), ParseError);
}

TEST(JitteredViewsTest, StayOnTheSameObject) {
  const auto s = generate_dataset(1, 0.5, 2).front();
  const auto views = jittered_views(s, 6, 1.0, 11);
  ASSERT_EQ(views.size(), 6u);
  for (const auto& v : views) {
    EXPECT_EQ(v.gt_box, s.gt_box);
    EXPECT_EQ(v.scene_id, s.scene_id);
    EXPECT_LE(std::abs(v.anchor.x - s.anchor.x), 1.0);
    EXPECT_LE(std::abs(v.anchor.y - s.anchor.y), 1.0);
  }
  EXPECT_EQ(views, jittered_views(s, 6, 1.0, 11));
}

ModelConfig small_model() {
  ModelConfig c;
  c.hidden = {12, 6};
  c.seed = 17;
  return c;
}

TEST(ModelTest, ShapesAndCapacity) {
  const ModelConfig c = small_model();
  const ModelParams p = init_params(c);
  ASSERT_EQ(p.layers.size(), 3u);
  EXPECT_EQ(p.layers.back().rows, c.output_dim());
  EXPECT_EQ(c.capacity(), 8u * 12 + 12 + 12 * 6 + 6 + 6 * 70 + 70);
  EXPECT_NO_THROW(check_shapes(p, c));
  ModelConfig other = c;
  other.hidden = {12, 7};
  EXPECT_THROW(check_shapes(p, other), DomainError);
  EXPECT_EQ(init_params(c), p);
}

TEST(ModelTest, ZeroWeightsGiveUniformDistributions) {
  const ModelConfig c = small_model();
  const auto s = generate_dataset(1, 0.5, 1).front();
  const ModelOutput out = forward(zero_params(c), c, s.features);
  for (double v : out.box_logits) EXPECT_EQ(v, 0.0);
  for (double v : out.class_logits) EXPECT_EQ(v, 0.0);
  const BoxDistribution bd(c.support(), out.box_logits);
  const auto p = softmax_with_temperature(bd.edge(Edge::kTop), 1.0);
  for (double v : p.probs()) EXPECT_DOUBLE_EQ(v, 1.0 / 17.0);
}

TEST(ModelTest, ForwardIsPureAndMatchesTape) {
  const ModelConfig c = small_model();
  const ModelParams p = init_params(c);
  const auto s = generate_dataset(1, 0.5, 1).front();
  const ModelOutput a = forward(p, c, s.features);
  const ModelOutput b = forward(p, c, s.features);
  EXPECT_EQ(a.box_logits, b.box_logits);
  Tape tape;
  const OutputVars v = forward(tape, record_params(tape, p), c, s.features);
  for (std::size_t i = 0; i < a.box_logits.size(); ++i) {
    EXPECT_NEAR(v.box_logits.value()[i], a.box_logits[i], 1e-12);
  }
  EXPECT_THROW(forward(p, c, std::vector<double>(3)), DomainError);
}

TEST(ModelTest, ParamsRoundTripAndHash) {
  const ModelParams p = init_params(small_model());
  std::stringstream ss;
  write_params(ss, p);
  const ModelParams q = read_params(ss);
  EXPECT_EQ(p, q);
  EXPECT_EQ(p.hash(), q.hash());
  ModelParams r = p;
  r.layers[0].weights[0] += 1e-15;
  EXPECT_NE(p.hash(), r.hash());
}

TEST(PredictTest, OneSampleGivesOneBox) {
  const ModelConfig c = small_model();
  const auto s = generate_dataset(1, 0.5, 1);
  const auto d = predict_detections(init_params(c), c, s, 0.6);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].scene_id, s[0].scene_id);
}

TEST(PredictTest, DuplicateSamplesCollapse) {
  const ModelConfig c = small_model();
  const auto s = generate_dataset(1, 0.5, 1).front();
  const std::vector<SceneSample> dup = {s, s, s};
  EXPECT_EQ(predict_detections(init_params(c), c, dup, 0.6).size(), 1u);
  EXPECT_EQ(predict_detections(init_params(c), c, dup, 1.0).size(), 3u);
}

Detection det(std::size_t scene, double y2, double score) {
  return {scene, Box{0, 0, 10, y2, score, 0}};
}

TEST(MetricsTest, PerfectPredictions) {
  const auto samples = generate_dataset(30, 0.5, 4);
  const auto truths = ground_truths(samples);
  std::vector<Detection> preds;
  for (const auto& g : truths) preds.push_back({g.scene_id, g.box});
  const Metrics m = evaluate_metrics(preds, truths);
  EXPECT_DOUBLE_EQ(m.mean_iou, 1.0);
  for (const auto& [t, v] : m.ap_at) EXPECT_DOUBLE_EQ(v, 1.0) << t;
  EXPECT_DOUBLE_EQ(m.mean_ap, 1.0);
}

TEST(MetricsTest, NoPredictions) {
  const auto truths = ground_truths(generate_dataset(5, 0.5, 4));
  const Metrics m = evaluate_metrics({}, truths);
  EXPECT_EQ(m.mean_iou, 0.0);
  EXPECT_EQ(m.mean_ap, 0.0);
  EXPECT_EQ(m.ap_at.size(), 10u);
  EXPECT_THROW(evaluate_metrics({}, {}), DomainError);
}

// Three scenes with one 10x10 object each. Predictions overlap their objects
// with IoU 1.0, 0.82 and 0.62, plus a lower-scored duplicate in scene 0.
// Worked by hand:
//   t <= 0.60: TP TP TP FP  -> interpolated precision 1 up to recall 1
//   t in 0.65..0.80: TP TP FP FP -> precision 1 up to recall 2/3: 67 of 101
//   t >= 0.85: TP FP FP FP -> precision 1 up to recall 1/3: 34 of 101
TEST(MetricsTest, HandBuiltThreeBoxFixture) {
  std::vector<GroundTruth> truths;
  for (std::size_t s = 0; s < 3; ++s) truths.push_back({s, Box{0, 0, 10, 10}});
  const std::vector<Detection> preds = {det(0, 10, 0.9), det(1, 8.2, 0.8),
                                        det(2, 6.2, 0.7), det(0, 9.1, 0.6)};
  const Metrics m = evaluate_metrics(preds, truths);
  EXPECT_NEAR(m.mean_iou, (1.0 + 0.82 + 0.62) / 3.0, 1e-12);
  const std::map<double, double> expected = {
      {0.50, 1.0},        {0.55, 1.0},        {0.60, 1.0},
      {0.65, 67.0 / 101}, {0.70, 67.0 / 101}, {0.75, 67.0 / 101},
      {0.80, 67.0 / 101}, {0.85, 34.0 / 101}, {0.90, 34.0 / 101},
      {0.95, 34.0 / 101}};
  double mean = 0.0;
  for (const auto& [t, v] : expected) {
    EXPECT_NEAR(m.ap(t), v, 1e-12) << "threshold " << t;
    mean += v / 10.0;
  }
  EXPECT_NEAR(m.mean_ap, mean, 1e-12);
}

TEST(MetricsTest, ClassesAreAveraged) {
  std::vector<GroundTruth> truths = {{0, Box{0, 0, 10, 10, 1, 0}},
                                     {1, Box{0, 0, 10, 10, 1, 1}}};
  // Class 0 found exactly, class 1 missed.
  const std::vector<Detection> preds = {{0, Box{0, 0, 10, 10, 0.9, 0}}};
  const Metrics m = evaluate_metrics(preds, truths);
  EXPECT_DOUBLE_EQ(m.ap(0.5), 0.5);
}

TEST(MetricsTest, MonotoneProperties) {
  const ModelConfig c = small_model();
  const auto samples = generate_dataset(60, 1.0, 8);
  const auto truths = ground_truths(samples);
  auto preds = predict_detections(init_params(c), c, samples, 0.6);
  Metrics before = evaluate_metrics(preds, truths);
  for (auto it = before.ap_at.begin(); std::next(it) != before.ap_at.end(); ++it) {
    EXPECT_GE(it->second, std::next(it)->second);
  }
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const std::size_t i = rng() % preds.size();
    for (const auto& g : truths) {
      if (g.scene_id == preds[i].scene_id) {
        const double score = preds[i].box.score;
        preds[i].box = g.box;
        preds[i].box.score = score;
      }
    }
    const Metrics after = evaluate_metrics(preds, truths);
    EXPECT_GE(after.mean_iou, before.mean_iou);
    before = after;
  }
}

}  // namespace
}  // namespace locdistill
