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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "locdistill/errors.h"

namespace locdistill {
namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n,
                                  double scale = 2.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

double hand_kl(const std::vector<double>& zt, const std::vector<double>& zs,
               double tau) {
  const auto pt = softmax_with_temperature({zt}, tau);
  const auto ps = softmax_with_temperature({zs}, tau);
  return kl_divergence(pt, ps);
}

TEST(LdEdgeLossTest, IdenticalLogitsGiveZero) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const auto z = random_vector(rng, 17);
    for (double tau : {0.5, 1.0, 10.0}) {
      EXPECT_NEAR(ld_edge_loss({z}, {z}, tau), 0.0, 1e-12);
    }
  }
}

TEST(LdEdgeLossTest, SwappedPeaks) {
  const double v = ld_edge_loss({{0.0, 10.0}}, {{10.0, 0.0}}, 10.0);
  const auto p = softmax_with_temperature({{1.0, 0.0}}, 1.0);
  const auto q = softmax_with_temperature({{0.0, 1.0}}, 1.0);
  EXPECT_NEAR(v, kl_divergence(p, q), 1e-14);
  // (e - 1) / (e + 1) for this pair.
  const double e = std::exp(1.0);
  EXPECT_NEAR(v, (e - 1.0) / (e + 1.0), 1e-14);
}

TEST(LdEdgeLossTest, ShiftInvariantAndZeroSetKeptAcrossTemperatures) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    const auto zs = random_vector(rng, 9);
    const auto zt = random_vector(rng, 9);
    auto zs2 = zs, zt2 = zt, zc = zt;
    for (double& v : zs2) v += 3.7;
    for (double& v : zt2) v -= 1.2;
    for (double& v : zc) v += 5.0;
    EXPECT_NEAR(ld_edge_loss({zs}, {zt}, 4.0), ld_edge_loss({zs2}, {zt2}, 4.0),
                1e-12);
    for (double tau : {0.1, 1.0, 20.0}) {
      EXPECT_NEAR(ld_edge_loss({zc}, {zt}, tau), 0.0, 1e-12);
    }
  }
}

TEST(LdEdgeLossTest, MatchesHandComposedKlAndIsNonNegative) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 200; ++k) {
    const auto zs = random_vector(rng, 17, 4.0);
    const auto zt = random_vector(rng, 17, 4.0);
    const double v = ld_edge_loss({zs}, {zt}, 2.0);
    EXPECT_NEAR(v, hand_kl(zt, zs, 2.0), 1e-12);
    EXPECT_GE(v, 0.0);
    EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(LdEdgeLossTest, OptionsAndErrors) {
  const std::vector<double> zs = {0.3, -1.0, 2.0};
  const std::vector<double> zt = {1.0, 0.5, -0.5};
  const double tau = 3.0;
  const double plain = ld_edge_loss({zs}, {zt}, tau);
  KlOptions scaled;
  scaled.scale_by_tau_squared = true;
  EXPECT_NEAR(ld_edge_loss({zs}, {zt}, tau, scaled), tau * tau * plain, 1e-12);
  KlOptions reversed;
  reversed.orientation = KlOrientation::kStudentReference;
  EXPECT_NEAR(ld_edge_loss({zs}, {zt}, tau, reversed), hand_kl(zs, zt, tau),
              1e-12);
  EXPECT_THROW(ld_edge_loss({zs}, {zt}, 0.0), DomainError);
  EXPECT_THROW(ld_edge_loss({zs}, {zt}, -1.0), DomainError);
  EXPECT_THROW(ld_edge_loss({zs}, {{1.0, 2.0}}, 1.0), DomainError);
}

TEST(LdEdgeLossTest, NearDiracTeacherStaysFinite) {
  const std::vector<double> zt = {1e4, 0.0, 0.0};
  const std::vector<double> zs = {0.0, 0.0, 1e4};
  const double v = ld_edge_loss({zs}, {zt}, 1.0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 0.0);
}

TEST(LdLossTest, DecomposesIntoEdges) {
  std::mt19937_64 rng(4);
  const EdgeSupport s = default_support();
  for (int k = 0; k < 100; ++k) {
    const BoxDistribution bs(s, random_vector(rng, 68));
    const BoxDistribution bt(s, random_vector(rng, 68));
    double expected = 0.0;
    for (Edge e : kAllEdges) {
      expected += hand_kl(bt.edge(e).z, bs.edge(e).z, 10.0);
    }
    EXPECT_NEAR(ld_loss(bs, bt, 10.0), expected, 1e-12);
    EXPECT_NEAR(ld_loss(bs, bs, 10.0), 0.0, 1e-12);
  }
}

TEST(LdLossTest, SingleDifferingEdge) {
  std::mt19937_64 rng(5);
  const EdgeSupport s = default_support();
  const auto flat = random_vector(rng, 68);
  const BoxDistribution bt(s, flat);
  BoxDistribution bs(s, flat);
  bs.edge(Edge::kLeft).z = random_vector(rng, 17);
  EXPECT_NEAR(ld_loss(bs, bt, 10.0),
              ld_edge_loss(bs.edge(Edge::kLeft), bt.edge(Edge::kLeft), 10.0),
              1e-12);
}

TEST(LdLossTest, SupportMismatchThrows) {
  const BoxDistribution a(make_support(0, 16, 17), std::vector<double>(68));
  const BoxDistribution b(make_support(0, 8, 17), std::vector<double>(68));
  EXPECT_THROW(ld_loss(a, b, 10.0), DomainError);
}

TEST(DflLossTest, MidwayUniformPairGivesLogTwo) {
  const EdgeSupport s = make_support(0, 1, 2);
  EXPECT_NEAR(dfl_loss({{0.0, 0.0}}, 0.5, s), std::log(2.0), 1e-15);
}

TEST(DflLossTest, DiracAtTargetApproachesZero) {
  const EdgeSupport s = default_support();
  std::vector<double> z(17, -50.0);
  z[5] = 50.0;
  EXPECT_LT(dfl_loss({z}, 5.0, s), 1e-12);
}

TEST(DflLossTest, HandFormula) {
  std::mt19937_64 rng(6);
  const EdgeSupport s = default_support();
  const auto z = random_vector(rng, 17);
  const auto p = softmax_with_temperature({z}, 1.0);
  const double v = dfl_loss({z}, 7.25, s);
  EXPECT_NEAR(v, -(0.75 * std::log(p[7]) + 0.25 * std::log(p[8])), 1e-12);
}

TEST(DflLossTest, MinimumIsTheInterpolationEntropy) {
  const EdgeSupport s = make_support(0, 4, 5);
  const double y = 1.3;
  const double wl = 0.7, wr = 0.3;
  const double floor = -(wl * std::log(wl) + wr * std::log(wr));
  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    EXPECT_GE(dfl_loss({random_vector(rng, 5)}, y, s), floor - 1e-12);
  }
  // Plain gradient descent on the five logits.
  std::vector<double> z = random_vector(rng, 5);
  for (int step = 0; step < 20000; ++step) {
    Tape tape;
    Var v = tape.input(z);
    const auto g = tape.backward(dfl_loss(v, y, s)).of(v);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= 1.0 * g[i];
  }
  const double reached = dfl_loss({z}, y, s);
  EXPECT_NEAR(reached, floor, 1e-3);
  const auto p = softmax_with_temperature({z}, 1.0);
  EXPECT_NEAR(p[1], wl, 1e-2);
  EXPECT_NEAR(p[2], wr, 1e-2);
}

TEST(GiouRegressionLossTest, Values) {
  const Box gt{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(giou_regression_loss(gt, gt), 0.0);
  EXPECT_NEAR(giou_regression_loss(Box{2, 0, 3, 1}, gt), 4.0 / 3.0, 1e-15);
}

TEST(GiouRegressionLossTest, TapeVersionMatchesBoxVersion) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.5, 10.0);
  for (int k = 0; k < 200; ++k) {
    const AnchorPoint a{u(rng), u(rng)};
    const Box gt{a.x - u(rng), a.y - u(rng), a.x + u(rng), a.y + u(rng)};
    const EdgeOffsets off{u(rng), u(rng), u(rng), u(rng)};
    Tape tape;
    std::array<Var, 4> vars = {tape.input({off.t}), tape.input({off.b}),
                               tape.input({off.l}), tape.input({off.r})};
    EXPECT_NEAR(giou_regression_loss(vars, a, gt).scalar(),
                giou_regression_loss(decode_box(a, off), gt), 1e-12);
  }
}

Box shifted(const Box& b, double dx) { return Box{b.x1 + dx, b.y1, b.x2, b.y2}; }

TEST(TbrTest, GateExamples) {
  const Box gt{0, 0, 10, 10};
  const double lambda = 1.5;
  // student error 0.5, teacher 0.3, margin 0.1: active
  EXPECT_NEAR(tbr_loss(shifted(gt, 0.5), shifted(gt, 0.3), gt, 0.1, lambda),
              lambda * giou_regression_loss(shifted(gt, 0.5), gt), 1e-15);
  // student better than teacher
  EXPECT_EQ(tbr_loss(shifted(gt, 0.3), shifted(gt, 0.5), gt, 0.1, lambda), 0.0);
  // within the margin
  EXPECT_EQ(tbr_loss(shifted(gt, 0.35), shifted(gt, 0.3), gt, 0.1, lambda), 0.0);
  EXPECT_THROW(tbr_loss(gt, gt, gt, -0.1, 1.0), DomainError);
}

TEST(TbrTest, GateBoundaries) {
  EXPECT_FALSE(tbr_gate_active(0.75, 0.5, 0.25));
  EXPECT_TRUE(tbr_gate_active(0.75, 0.5, 0.125));
  EXPECT_FALSE(tbr_gate_active(0.5, 0.5, 0.0));
  EXPECT_TRUE(tbr_gate_active(0.5, 0.75, 0.25, TbrGate::kFormula));
  EXPECT_TRUE(tbr_gate_active(0.5, 0.5, 0.0, TbrGate::kFormula));
  EXPECT_FALSE(tbr_gate_active(0.75, 0.5, 0.0, TbrGate::kFormula));
}

TEST(TbrTest, GateIsMonotoneInEpsilon) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int k = 0; k < 1000; ++k) {
    const double s = u(rng), t = u(rng);
    bool was_active = true;
    for (double eps : {0.0, 0.1, 0.3, 0.7, 1.5, 3.0}) {
      const bool active = tbr_gate_active(s, t, eps);
      EXPECT_FALSE(active && !was_active);
      was_active = active;
    }
  }
}

TEST(TbrTest, TapeVersionIsConstantZeroWhenInactive) {
  const AnchorPoint a{5, 5};
  const Box gt{2, 4, 9, 7};
  Tape tape;
  std::array<Var, 4> off = {tape.input({1.0}), tape.input({2.0}),
                            tape.input({3.0}), tape.input({4.0})};
  Var loss = tbr_loss(off, a, Box{0, 0, 1, 1}, gt, 0.0, 1.0);
  EXPECT_EQ(loss.scalar(), 0.0);
  const auto g = tape.backward(loss);
  for (const Var& v : off) EXPECT_EQ(g.of(v)[0], 0.0);
}

TEST(KdClassLossTest, PeakedAgreementIsCrossEntropyOnly) {
  const std::vector<double> z = {8.0, -8.0, -8.0};
  const std::vector<double> g = {1.0, 0.0, 0.0};
  Tape tape;
  Var s = tape.input(z);
  const double p0 = softmax_with_temperature({z}, 1.0)[0];
  EXPECT_NEAR(kd_class_loss(s, z, g, 4.0, 0.7, 1.0).scalar(),
              0.7 * -std::log(p0), 1e-12);
}

TEST(KdClassLossTest, UniformStudentDiracTeacher) {
  Tape tape;
  Var s = tape.input({0.0, 0.0});
  const std::vector<double> zt = {100.0, -100.0};
  const std::vector<double> g = {0.0, 1.0};
  EXPECT_NEAR(kd_class_loss(s, zt, g, 1.0, 0.0, 1.0).scalar(), std::log(2.0),
              1e-12);
}

TEST(KdClassLossTest, MalformedOneHot) {
  Tape tape;
  Var s = tape.input({0.0, 0.0});
  const std::vector<double> zt = {0.0, 0.0};
  for (const std::vector<double>& bad :
       {std::vector<double>{0, 0}, std::vector<double>{1, 1},
        std::vector<double>{0.5, 0.5}, std::vector<double>{1}}) {
    EXPECT_THROW(kd_class_loss(s, zt, bad, 1.0, 1.0, 1.0), DomainError);
  }
}

TEST(TotalLossTest, WeightedSumWithDefaults) {
  EXPECT_DOUBLE_EQ(LossWeights{}.combine(0.5, 1.0, 2.0), 1.75);
}

TEST(TotalLossTest, ComponentsCombine) {
  std::mt19937_64 rng(10);
  const EdgeSupport s = default_support();
  const AnchorPoint a{20, 20};
  const Box gt{14.2, 17.5, 29.9, 23.1};
  const auto zs = random_vector(rng, 68);
  const auto zt = random_vector(rng, 68);
  Tape tape;
  Var v = tape.input(zs);
  DistillConfig cfg;
  const LossTerms terms = total_loss(v, s, a, gt, zt, cfg);
  ASSERT_TRUE(terms.ld.has_value());
  EXPECT_NEAR(terms.total.scalar(),
              cfg.weights.combine(terms.reg.scalar(), terms.dfl.scalar(),
                                  terms.ld->scalar()),
              1e-12);
  EXPECT_NEAR(terms.ld->scalar(),
              ld_loss(BoxDistribution(s, zs), BoxDistribution(s, zt), 10.0),
              1e-12);
  const auto off = encode_box(a, gt).as_array();
  double dfl = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    dfl += dfl_loss({{zs.begin() + 17 * k, zs.begin() + 17 * (k + 1)}}, off[k], s);
  }
  EXPECT_NEAR(terms.dfl.scalar(), dfl, 1e-12);
  EXPECT_NEAR(terms.reg.scalar(),
              giou_regression_loss(decode_bbox(BoxDistribution(s, zs), a), gt),
              1e-12);
}

TEST(TotalLossTest, ZeroLdWeightIgnoresTeacher) {
  std::mt19937_64 rng(11);
  const EdgeSupport s = default_support();
  const auto zs = random_vector(rng, 68);
  DistillConfig cfg;
  cfg.weights.ld = 0.0;
  Tape tape;
  Var v = tape.input(zs);
  const auto a = total_loss(v, s, {20, 20}, {15, 15, 30, 30}, std::nullopt, cfg);
  const auto t1 = random_vector(rng, 68);
  const auto b = total_loss(v, s, {20, 20}, {15, 15, 30, 30}, t1, cfg);
  EXPECT_FALSE(a.ld.has_value());
  EXPECT_EQ(a.total.scalar(), b.total.scalar());
}

TEST(TotalLossTest, MissingTeacherIsAConfigError) {
  Tape tape;
  Var v = tape.input(std::vector<double>(68));
  EXPECT_THROW(total_loss(v, default_support(), {20, 20}, {15, 15, 30, 30},
                          std::nullopt, DistillConfig{}),
               ConfigError);
}

TEST(DistillConfigTest, ValidationNamesTheField) {
  DistillConfig cfg;
  cfg.temperature = -1.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("temperature"), std::string::npos);
  }
  DistillConfig eps;
  eps.epsilon = -0.5;
  EXPECT_THROW(eps.validate(), ConfigError);
}

// Gradient checks for each objective over a few random instances; the
// acceptance run repeats these at a larger count.
TEST(LossGradientTest, AllObjectivesMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  const EdgeSupport s = default_support();
  for (int k = 0; k < 10; ++k) {
    const auto zt = random_vector(rng, 68);
    const auto x = random_vector(rng, 68);
    const AnchorPoint a{20, 20};
    const Box gt{13.3, 14.1, 27.2, 30.6};
    DistillConfig cfg;
    const ScalarFunction fns[] = {
        [&](Tape&, Var v) { return ld_loss(v, zt, 17, 10.0); },
        [&](Tape&, Var v) { return dfl_loss(slice(v, 0, 17), 6.4, s); },
        [&](Tape&, Var v) {
          return giou_regression_loss(expected_offsets(v, s), a, gt);
        },
        [&](Tape&, Var v) { return total_loss(v, s, a, gt, zt, cfg).total; },
        [&](Tape&, Var v) {
          const std::vector<double> g = {0, 1, 0};
          return kd_class_loss(slice(v, 0, 3), {zt.data(), 3}, g, 4.0, 1.0, 1.0);
        },
    };
    for (const auto& f : fns) {
      EXPECT_LT(finite_difference_check(f, x).max_relative_error, 1e-4);
    }
  }
}

}  // namespace
}  // namespace locdistill
