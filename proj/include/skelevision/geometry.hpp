/* Copyright 2026 The Skelevision Authors. All Rights Reserved.

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

#ifndef SKELEVISION_GEOMETRY_HPP_
#define SKELEVISION_GEOMETRY_HPP_

#include <cstddef>
#include <span>
#include <vector>

namespace skv::geometry {

// Corner form of an axis-aligned box, continuous pixel coordinates
// (pixel i covers [i, i + 1)).
struct Corners {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Axis-aligned box in center form. Width and height are always positive.
class Box {
 public:
  Box() = default;

  static Box FromCenter(double cx, double cy, double w, double h);
  static Box FromCorners(double x1, double y1, double x2, double y2);
  static Box FromCorners(const Corners& c) { return FromCorners(c.x1, c.y1, c.x2, c.y2); }
  // Top-left origin plus size, the layout used by most tracking benchmarks.
  static Box FromXywh(double x, double y, double w, double h);

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double area() const { return w_ * h_; }

  Corners corners() const;
  Box Translated(double dx, double dy) const { return FromCenter(cx_ + dx, cy_ + dy, w_, h_); }

  friend bool operator==(const Box&, const Box&) = default;

 private:
  Box(double cx, double cy, double w, double h) : cx_(cx), cy_(cy), w_(w), h_(h) {}

  double cx_ = 0.5, cy_ = 0.5, w_ = 1, h_ = 1;
};

double Iou(const Box& a, const Box& b);

// Mean over sequences of the per-sequence mean IoU. Throws ShapeError when
// the outer or any inner length differs, or when there are no sequences.
double MeanIou(std::span<const std::vector<Box>> pred, std::span<const std::vector<Box>> gt);

// Per-frame IoU of two equal-length box lists.
std::vector<double> FrameIous(std::span<const Box> pred, std::span<const Box> gt);

// Box clipped to the rectangle [0, width] x [0, height]. Keeps at least one
// pixel of extent so the result stays a valid Box.
Box ClipToFrame(const Box& b, double width, double height);

struct Deltas {
  double dx = 0, dy = 0, dw = 0, dh = 0;
};

Deltas EncodeDeltas(const Box& anchor, const Box& gt);
Box DecodeDeltas(const Box& anchor, const Deltas& d);

// Anchors tiled over a grid_h x grid_w response map with m = ratios.size()
// shapes per cell. Flat index layout is (ratio, row, col), ratio-major, which
// is also the channel-block order of the RPN outputs.
struct AnchorSet {
  int grid_h = 0;
  int grid_w = 0;
  double stride = 0;
  std::vector<double> ratios;
  double base_scale = 0;
  double patch_size = 0;
  std::vector<Box> boxes;

  int num_ratios() const { return static_cast<int>(ratios.size()); }
  std::size_t size() const { return boxes.size(); }
  std::size_t Index(int ratio, int row, int col) const {
    return (static_cast<std::size_t>(ratio) * grid_h + row) * grid_w + col;
  }
  const Box& at(int ratio, int row, int col) const { return boxes[Index(ratio, row, col)]; }
};

inline constexpr double kDefaultRatios[] = {0.33, 0.5, 1.0, 2.0, 3.0};

// Anchor centers sit on the stride lattice centered in a patch_size square.
// Ratio r is height / width: w = base_scale / sqrt(r), h = base_scale * sqrt(r).
AnchorSet GenerateAnchors(int grid_h, int grid_w, double stride, std::span<const double> ratios,
                          double base_scale, double patch_size = 255.0);

}  // namespace skv::geometry

#endif  // SKELEVISION_GEOMETRY_HPP_
