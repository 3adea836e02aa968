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
#include "locdistill/geometry.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "locdistill/errors.h"

namespace locdistill {

bool is_valid_box(const Box& box) {
  return std::isfinite(box.x1) && std::isfinite(box.y1) &&
         std::isfinite(box.x2) && std::isfinite(box.y2) && box.x1 <= box.x2 &&
         box.y1 <= box.y2 && box.score >= 0.0 && box.score <= 1.0 &&
         box.class_id >= 0;
}

void validate_box(const Box& box) {
  if (is_valid_box(box)) return;
  std::ostringstream os;
  os << "invalid box (" << box.x1 << ", " << box.y1 << ", " << box.x2 << ", "
     << box.y2 << ") score=" << box.score << " class=" << box.class_id;
  throw DomainError(os.str());
}

namespace {

double intersection_area(const Box& a, const Box& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  validate_box(a);
  validate_box(b);
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double giou(const Box& a, const Box& b) {
  validate_box(a);
  validate_box(b);
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double enclose = (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) *
                         (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
  if (enclose <= 0.0) return 0.0;
  const double overlap = uni > 0.0 ? inter / uni : 0.0;
  return std::clamp(overlap - (enclose - uni) / enclose, -1.0, 1.0);
}

Box decode_box(const AnchorPoint& anchor, const EdgeOffsets& offsets) {
  for (double v : offsets.as_array()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError("edge offsets must be finite and non-negative");
    }
  }
  if (!std::isfinite(anchor.x) || !std::isfinite(anchor.y)) {
    throw DomainError("anchor must be finite");
  }
  Box box;
  box.x1 = anchor.x - offsets.l;
  box.x2 = anchor.x + offsets.r;
  box.y1 = anchor.y - offsets.t;
  box.y2 = anchor.y + offsets.b;
  return box;
}

EdgeOffsets encode_box(const AnchorPoint& anchor, const Box& box) {
  return {anchor.y - box.y1, box.y2 - anchor.y, anchor.x - box.x1,
          box.x2 - anchor.x};
}

double corner_distance(const Box& a, const Box& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  double sq = 0.0;
  for (std::size_t i = 0; i < 4; ++i) sq += (ca[i] - cb[i]) * (ca[i] - cb[i]);
  return std::sqrt(sq);
}

std::vector<std::size_t> nms(std::span<const Box> boxes,
                             double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw DomainError("nms threshold must lie in [0, 1]");
  }
  for (const Box& b : boxes) validate_box(b);

  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) {
                     return boxes[i].score > boxes[j].score;
                   });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (boxes[k].class_id == boxes[idx].class_id &&
          iou(boxes[k], boxes[idx]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace locdistill
