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
#include "locdistill/distill.h"

#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "locdistill/errors.h"

namespace locdistill {
namespace {

ModelConfig model(const std::string& name, std::vector<std::size_t> hidden,
                  std::uint64_t seed) {
  ModelConfig c;
  c.name = name;
  c.hidden = std::move(hidden);
  c.seed = seed;
  return c;
}

TrainConfig schedule(int epochs, double lr = 0.05) {
  TrainConfig t;
  t.epochs = epochs;
  t.lr = lr;
  t.seed = 5;
  return t;
}

class DistillTest : public ::testing::Test {
 protected:
  const std::vector<SceneSample> train_ = generate_dataset(64, 0.5, 1);
  const std::vector<SceneSample> test_ = generate_dataset(64, 0.5, 2);
  const ModelConfig teacher_cfg_ = model("T", {24}, 10);
  const ModelConfig student_cfg_ = model("S", {6}, 11);
};

TEST(TrainConfigTest, DecaySchedule) {
  TrainConfig t;
  t.epochs = 40;
  EXPECT_EQ(t.resolved_decay_epoch(), 30);
  t.decay_epoch = 7;
  EXPECT_EQ(t.resolved_decay_epoch(), 7);
  t.decay_epoch = -1;
  EXPECT_LE(t.resolved_decay_epoch(), 0);
  t.epochs = 0;
  EXPECT_THROW(t.validate(), ConfigError);
}

TEST_F(DistillTest, ZeroLearningRateLeavesParamsUnchanged) {
  const TrainResult r = train_model(student_cfg_, schedule(3, 0.0), train_,
                                    nullptr, nullptr, DistillConfig{});
  EXPECT_EQ(r.params, r.initial);
  EXPECT_EQ(r.params.hash(), init_params(student_cfg_).hash());
  EXPECT_EQ(r.curve.size(), 3u);
}

TEST_F(DistillTest, TrainingReducesLossOnNoiselessData) {
  const auto clean = generate_dataset(64, 0.0, 3);
  DistillConfig dcfg;
  dcfg.weights.ld = 0.0;
  const TrainResult r =
      train_model(student_cfg_, schedule(30), clean, nullptr, nullptr, dcfg);
  const double before =
      mean_objective(r.initial, student_cfg_, clean, nullptr, nullptr, dcfg);
  const double after =
      mean_objective(r.params, student_cfg_, clean, nullptr, nullptr, dcfg);
  EXPECT_LT(after, before);
  EXPECT_LT(r.curve.back().loss, r.curve.front().loss);
}

TEST_F(DistillTest, DeterministicGivenSeeds) {
  const auto a = train_model(student_cfg_, schedule(4), train_, nullptr,
                             nullptr, DistillConfig{});
  const auto b = train_model(student_cfg_, schedule(4), train_, nullptr,
                             nullptr, DistillConfig{});
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.curve.back().loss, b.curve.back().loss);
}

TEST_F(DistillTest, TeacherIsNeverModified) {
  const ModelParams teacher = init_params(teacher_cfg_);
  const std::uint64_t before = teacher.hash();
  DistillConfig dcfg;
  dcfg.class_kd = true;
  distill_student(teacher, teacher_cfg_, student_cfg_, schedule(3), train_,
                  dcfg);
  dcfg.method = DistillMethod::kTeacherBoundedRegression;
  distill_student(teacher, teacher_cfg_, student_cfg_, schedule(3), train_,
                  dcfg);
  EXPECT_EQ(teacher.hash(), before);
}

TEST_F(DistillTest, ZeroLdWeightReducesToPlainTraining) {
  const ModelParams teacher = init_params(teacher_cfg_);
  DistillConfig dcfg;
  dcfg.weights.ld = 0.0;
  const auto a = distill_student(teacher, teacher_cfg_, student_cfg_,
                                 schedule(3), train_, dcfg);
  const auto b = train_model(student_cfg_, schedule(3), train_, nullptr,
                             nullptr, dcfg);
  EXPECT_EQ(a.params, b.params);
}

TEST_F(DistillTest, LdChangesTheResult) {
  const ModelParams teacher = init_params(teacher_cfg_);
  const auto a = distill_student(teacher, teacher_cfg_, student_cfg_,
                                 schedule(2), train_, DistillConfig{});
  const auto b = train_model(student_cfg_, schedule(2), train_, nullptr,
                             nullptr, DistillConfig{});
  EXPECT_NE(a.params, b.params);
}

TEST_F(DistillTest, SameCapacityTeacherRuns) {
  const ModelParams teacher = init_params(student_cfg_);
  EXPECT_NO_THROW(distill_student(teacher, student_cfg_, student_cfg_,
                                  schedule(2), train_, DistillConfig{}));
}

TEST_F(DistillTest, SupportMismatchIsAConfigError) {
  ModelConfig other = student_cfg_;
  other.e_max = 8.0;
  other.n_bins = 9;
  EXPECT_THROW(distill_student(init_params(teacher_cfg_), teacher_cfg_, other,
                               schedule(1), train_, DistillConfig{}),
               ConfigError);
}

TEST_F(DistillTest, NonFiniteLossNamesTheEpoch) {
  auto poisoned = train_;
  poisoned[5].features[0] = NAN;
  try {
    train_model(student_cfg_, schedule(3), poisoned, nullptr, nullptr,
                DistillConfig{});
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST_F(DistillTest, LdWeightContinuity) {
  const ModelParams teacher = init_params(teacher_cfg_);
  const ModelParams student = init_params(student_cfg_);
  DistillConfig plain;
  plain.weights.ld = 0.0;
  const double base = mean_objective(student, student_cfg_, train_, nullptr,
                                     nullptr, plain);
  double previous_gap = INFINITY;
  for (double lambda : {0.25, 0.025, 0.0025, 0.0}) {
    DistillConfig d;
    d.weights.ld = lambda;
    const double v = mean_objective(student, student_cfg_, train_, &teacher,
                                    &teacher_cfg_, d);
    const double gap = std::abs(v - base);
    EXPECT_LE(gap, previous_gap);
    previous_gap = gap;
  }
  EXPECT_EQ(previous_gap, 0.0);
}

TEST_F(DistillTest, SelfDistillationIsOneRoundOfTheSameModel) {
  const auto r = self_distill(student_cfg_, schedule(3), train_, DistillConfig{});
  EXPECT_EQ(r.rounds, 1);
  const auto plain = train_model(student_cfg_, schedule(3), train_, nullptr,
                                 nullptr, DistillConfig{});
  EXPECT_EQ(r.teacher.params, plain.params);
  EXPECT_EQ(r.student.initial, plain.initial);
  EXPECT_NE(r.student.params, r.teacher.params);
}

ModelLadder ladder(std::size_t m) {
  ModelLadder l;
  l.teacher = model("T", {64}, 1);
  const std::size_t widths[] = {32, 16, 8};
  for (std::size_t i = 0; i < m; ++i) {
    l.assistants.push_back(model("A" + std::to_string(i + 1), {widths[i]}, 2 + i));
  }
  l.student = model("S", {4}, 9);
  return l;
}

TEST(TaPathTest, CountsAreTwoToTheM) {
  for (std::size_t m = 0; m <= 3; ++m) {
    const auto paths = enumerate_ta_paths(ladder(m));
    EXPECT_EQ(paths.size(), std::size_t{1} << m);
    std::set<std::string> labels;
    for (const auto& p : paths) {
      labels.insert(p.label());
      EXPECT_EQ(p.models.front().name, "T");
      EXPECT_EQ(p.models.back().name, "S");
      for (std::size_t i = 0; i + 1 < p.models.size(); ++i) {
        EXPECT_GT(p.models[i].capacity(), p.models[i + 1].capacity());
      }
    }
    EXPECT_EQ(labels.size(), paths.size());
  }
}

TEST(TaPathTest, TwoAssistantsInBitmaskOrder) {
  const auto paths = enumerate_ta_paths(ladder(2));
  std::vector<std::string> labels;
  for (const auto& p : paths) labels.push_back(p.label());
  EXPECT_EQ(labels, (std::vector<std::string>{"T>S", "T>A1>S", "T>A2>S",
                                              "T>A1>A2>S"}));
}

TEST(TaPathTest, UnorderedLadderIsRejected) {
  ModelLadder l = ladder(2);
  std::swap(l.assistants[0], l.assistants[1]);
  EXPECT_THROW(enumerate_ta_paths(l), ConfigError);
  ModelLadder tiny_teacher = ladder(0);
  tiny_teacher.teacher.hidden = {2};
  EXPECT_THROW(enumerate_ta_paths(tiny_teacher), ConfigError);
}

TEST_F(DistillTest, DirectPathEqualsDistillStudent) {
  TAPath path;
  path.models = {teacher_cfg_, student_cfg_};
  SequenceOptions opts;
  opts.track_curves = false;
  const RunRecord rec = run_ta_sequence(path, train_, test_, schedule(3),
                                        DistillConfig{}, opts);
  const auto teacher = train_model(teacher_cfg_, schedule(3), train_, nullptr,
                                   nullptr, DistillConfig{});
  const auto student = distill_student(teacher.params, teacher_cfg_,
                                       student_cfg_, schedule(3), train_,
                                       DistillConfig{});
  ASSERT_EQ(rec.stages.size(), 1u);
  const Metrics m = evaluate_model(student.params, student_cfg_, test_, 0.6);
  EXPECT_EQ(rec.stages[0].metrics.mean_iou, m.mean_iou);
  EXPECT_EQ(rec.stages[0].metrics.mean_ap, m.mean_ap);
  EXPECT_EQ(rec.path, "T>S");
}

TEST_F(DistillTest, SweepSharesPrefixesAndMatchesSingleRuns) {
  ModelLadder l;
  l.teacher = teacher_cfg_;
  l.assistants = {model("A1", {12}, 12), model("A2", {9}, 13)};
  l.student = student_cfg_;
  SequenceOptions opts;
  opts.track_curves = true;
  const auto records = run_ta_sweep(l, train_, test_, schedule(2),
                                    DistillConfig{}, opts);
  ASSERT_EQ(records.size(), 4u);
  const auto paths = enumerate_ta_paths(l);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const RunRecord single = run_ta_sequence(paths[i], train_, test_,
                                             schedule(2), DistillConfig{}, opts);
    EXPECT_EQ(records[i].path, single.path);
    ASSERT_EQ(records[i].stages.size(), single.stages.size());
    EXPECT_EQ(records[i].stages.back().metrics.mean_iou,
              single.stages.back().metrics.mean_iou);
    EXPECT_EQ(records[i].stages.back().curve.size(), 2u);
  }
  std::ostringstream rec, csv;
  write_run_record(rec, records[3]);
  write_curve_csv(csv, records);
  EXPECT_NE(rec.str().find("path = T>A1>A2>S"), std::string::npos);
  EXPECT_EQ(csv.str().rfind("path,stage,model,epoch,loss,mean_iou,mean_ap\n", 0),
            0u);
}

TEST_F(DistillTest, WarmStartNeedsMatchingShapes) {
  TAPath path;
  path.models = {teacher_cfg_, student_cfg_};
  SequenceOptions opts;
  opts.warm_start = true;
  opts.track_curves = false;
  EXPECT_THROW(run_ta_sequence(path, train_, test_, schedule(1),
                               DistillConfig{}, opts),
               DomainError);
}

}  // namespace
}  // namespace locdistill
