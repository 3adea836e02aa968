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
#ifndef LOCDISTILL_DISTRIBUTIONS_H_
#define LOCDISTILL_DISTRIBUTIONS_H_

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "locdistill/geometry.h"

namespace locdistill {

// Probabilities below this are clamped before taking a log in KL terms.
inline constexpr double kKlClampEpsilon = 1e-12;

// Uniformly spaced positions e_1 = e_min < ... < e_n = e_max.
class EdgeSupport {
 public:
  EdgeSupport(double e_min, double e_max, std::size_t n);

  double e_min() const { return e_min_; }
  double e_max() const { return e_max_; }
  std::size_t size() const { return positions_.size(); }
  double spacing() const { return spacing_; }
  std::span<const double> positions() const { return positions_; }
  double operator[](std::size_t i) const { return positions_[i]; }

  bool operator==(const EdgeSupport& other) const {
    return e_min_ == other.e_min_ && e_max_ == other.e_max_ &&
           size() == other.size();
  }

 private:
  double e_min_;
  double e_max_;
  double spacing_;
  std::vector<double> positions_;
};

// Throws DomainError if n < 2 or e_min >= e_max.
EdgeSupport make_support(double e_min, double e_max, std::size_t n);

// 0..16 with 17 bins, the usual general-distribution head layout.
EdgeSupport default_support();

// Raw, unconstrained scores for the n positions of one edge.
struct EdgeLogits {
  std::vector<double> z;

  std::size_t size() const { return z.size(); }
};

// Normalised probabilities over the n positions of one edge.
class EdgeDistribution {
 public:
  // Validates p_i >= 0 and |sum - 1| <= 1e-9.
  explicit EdgeDistribution(std::vector<double> p);

  static EdgeDistribution uniform(std::size_t n);
  static EdgeDistribution dirac(std::size_t n, std::size_t at);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> probs() const { return p_; }

 private:
  std::vector<double> p_;
};

enum class Edge : std::size_t { kTop = 0, kBottom = 1, kLeft = 2, kRight = 3 };
inline constexpr std::array<Edge, 4> kAllEdges = {Edge::kTop, Edge::kBottom,
                                                  Edge::kLeft, Edge::kRight};

// Logits for the four edges {t, b, l, r} of one box over a shared support.
class BoxDistribution {
 public:
  BoxDistribution(EdgeSupport support, std::array<EdgeLogits, 4> edges);
  // `flat` holds t, b, l, r logits back to back (4 * n values).
  BoxDistribution(EdgeSupport support, std::span<const double> flat);

  const EdgeSupport& support() const { return support_; }
  const EdgeLogits& edge(Edge e) const {
    return edges_[static_cast<std::size_t>(e)];
  }
  EdgeLogits& edge(Edge e) { return edges_[static_cast<std::size_t>(e)]; }
  std::vector<double> flat() const;

 private:
  EdgeSupport support_;
  std::array<EdgeLogits, 4> edges_;
};

EdgeDistribution softmax_with_temperature(const EdgeLogits& logits,
                                          double temperature);

// Expected position sum_i e_i p_i.
double expect(const EdgeSupport& support, const EdgeDistribution& p);

// Softmax (τ = 1) and expectation per edge, then decode_box at the anchor.
Box decode_bbox(const BoxDistribution& box, const AnchorPoint& anchor,
                double temperature = 1.0);

// sum_i p_i log(p_i / max(q_i, eps)), with 0 log 0 = 0.
double kl_divergence(const EdgeDistribution& p, const EdgeDistribution& q);

struct TargetProjection {
  std::size_t index = 0;  // left bracketing position
  double w_left = 1.0;
  double w_right = 0.0;
  double clamped_value = 0.0;
  bool clamped = false;
};

// Brackets y between two neighbouring support positions and returns linear
// interpolation weights. y outside [e_min, e_max] is clamped first and
// reported through `clamped`. At y == e_max the right bracket is used.
TargetProjection project_target(double y, const EdgeSupport& support);

}  // namespace locdistill

#endif  // LOCDISTILL_DISTRIBUTIONS_H_
