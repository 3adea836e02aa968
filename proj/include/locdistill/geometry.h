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
#ifndef LOCDISTILL_GEOMETRY_H_
#define LOCDISTILL_GEOMETRY_H_

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace locdistill {

// Axis-aligned box in continuous coordinates. Area is (x2-x1)*(y2-y1), no
// +1 pixel correction.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;
  double score = 1.0;
  int class_id = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  std::array<double, 4> corners() const { return {x1, y1, x2, y2}; }

  bool operator==(const Box&) const = default;
};

// The sampling point from which {t,b,l,r} distances are measured.
struct AnchorPoint {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const AnchorPoint&) const = default;
};

// Distances from an anchor to the top, bottom, left and right edges.
struct EdgeOffsets {
  double t = 0.0;
  double b = 0.0;
  double l = 0.0;
  double r = 0.0;

  std::array<double, 4> as_array() const { return {t, b, l, r}; }
  bool operator==(const EdgeOffsets&) const = default;
};

// Throws DomainError unless x1<=x2, y1<=y2, score in [0,1], class_id >= 0 and
// all coordinates are finite.
void validate_box(const Box& box);
bool is_valid_box(const Box& box);

double iou(const Box& a, const Box& b);

// IoU minus the fraction of the enclosing box not covered by the union.
double giou(const Box& a, const Box& b);

Box decode_box(const AnchorPoint& anchor, const EdgeOffsets& offsets);

// Inverse of decode_box; offsets may be negative when the anchor lies outside
// the box.
EdgeOffsets encode_box(const AnchorPoint& anchor, const Box& box);

// Euclidean distance between the (x1,y1,x2,y2) corner vectors.
double corner_distance(const Box& a, const Box& b);

// Greedy per-class non-maximum suppression. Boxes are visited by descending
// score (ties: lower index first); a box is dropped when its IoU with an
// already kept box of the same class is strictly greater than iou_threshold.
// Returns kept indices in visiting order.
std::vector<std::size_t> nms(std::span<const Box> boxes, double iou_threshold);

}  // namespace locdistill

#endif  // LOCDISTILL_GEOMETRY_H_
