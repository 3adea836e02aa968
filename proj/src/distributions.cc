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
#include "locdistill/distributions.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "locdistill/errors.h"

namespace locdistill {

EdgeSupport::EdgeSupport(double e_min, double e_max, std::size_t n)
    : e_min_(e_min), e_max_(e_max) {
  if (n < 2) throw DomainError("edge support needs at least 2 positions");
  if (!std::isfinite(e_min) || !std::isfinite(e_max) || !(e_min < e_max)) {
    throw DomainError("edge support requires finite e_min < e_max");
  }
  spacing_ = (e_max - e_min) / static_cast<double>(n - 1);
  positions_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    positions_[i] = e_min + spacing_ * static_cast<double>(i);
  }
  positions_.back() = e_max;
}

EdgeSupport make_support(double e_min, double e_max, std::size_t n) {
  return EdgeSupport(e_min, e_max, n);
}

EdgeSupport default_support() { return EdgeSupport(0.0, 16.0, 17); }

EdgeDistribution::EdgeDistribution(std::vector<double> p) : p_(std::move(p)) {
  if (p_.empty()) throw DomainError("empty distribution");
  double total = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError("distribution entries must be finite and >= 0");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DomainError("distribution does not sum to 1");
  }
}

EdgeDistribution EdgeDistribution::uniform(std::size_t n) {
  return EdgeDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

EdgeDistribution EdgeDistribution::dirac(std::size_t n, std::size_t at) {
  if (at >= n) throw DomainError("dirac position out of range");
  std::vector<double> p(n, 0.0);
  p[at] = 1.0;
  return EdgeDistribution(std::move(p));
}

BoxDistribution::BoxDistribution(EdgeSupport support,
                                 std::array<EdgeLogits, 4> edges)
    : support_(std::move(support)), edges_(std::move(edges)) {
  for (const EdgeLogits& e : edges_) {
    if (e.size() != support_.size()) {
      throw DomainError("edge logits length does not match support");
    }
  }
}

BoxDistribution::BoxDistribution(EdgeSupport support,
                                 std::span<const double> flat)
    : support_(std::move(support)) {
  const std::size_t n = support_.size();
  if (flat.size() != 4 * n) {
    throw DomainError("box logits must hold 4 * n values");
  }
  for (std::size_t k = 0; k < 4; ++k) {
    edges_[k].z.assign(flat.begin() + k * n, flat.begin() + (k + 1) * n);
  }
}

std::vector<double> BoxDistribution::flat() const {
  std::vector<double> out;
  out.reserve(4 * support_.size());
  for (const EdgeLogits& e : edges_) out.insert(out.end(), e.z.begin(), e.z.end());
  return out;
}

EdgeDistribution softmax_with_temperature(const EdgeLogits& logits,
                                          double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw DomainError("temperature must be positive");
  }
  if (logits.z.empty()) throw DomainError("empty logits");
  for (double v : logits.z) {
    if (!std::isfinite(v)) throw DomainError("non-finite logit");
  }
  const double peak = *std::max_element(logits.z.begin(), logits.z.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits.z[i] - peak) / temperature);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return EdgeDistribution(std::move(p));
}

double expect(const EdgeSupport& support, const EdgeDistribution& p) {
  if (p.size() != support.size()) {
    throw DomainError("distribution length does not match support");
  }
  double value = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) value += support[i] * p[i];
  return std::clamp(value, support.e_min(), support.e_max());
}

Box decode_bbox(const BoxDistribution& box, const AnchorPoint& anchor,
                double temperature) {
  std::array<double, 4> offsets{};
  for (Edge e : kAllEdges) {
    offsets[static_cast<std::size_t>(e)] = expect(
        box.support(), softmax_with_temperature(box.edge(e), temperature));
  }
  return decode_box(anchor, {offsets[0], offsets[1], offsets[2], offsets[3]});
}

double kl_divergence(const EdgeDistribution& p, const EdgeDistribution& q) {
  if (p.size() != q.size()) throw DomainError("KL length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    total += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kKlClampEpsilon)));
  }
  return std::max(total, 0.0);
}

TargetProjection project_target(double y, const EdgeSupport& support) {
  if (std::isnan(y)) throw DomainError("target is NaN");
  TargetProjection out;
  const double clamped = std::clamp(y, support.e_min(), support.e_max());
  out.clamped = clamped != y;
  out.clamped_value = clamped;

  const std::size_t n = support.size();
  auto pos = support.positions();
  // First position strictly greater than y, so on-grid values land on the
  // left bracket.
  auto it = std::upper_bound(pos.begin(), pos.end(), clamped);
  std::size_t right = static_cast<std::size_t>(it - pos.begin());
  right = std::clamp<std::size_t>(right, 1, n - 1);
  out.index = right - 1;
  const double delta = pos[right] - pos[out.index];
  out.w_left = (pos[right] - clamped) / delta;
  out.w_right = (clamped - pos[out.index]) / delta;
  return out;
}

}  // namespace locdistill
