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

#include "skelevision/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skelevision/errors.hpp"

namespace skv::geometry {

Box Box::FromCenter(double cx, double cy, double w, double h) {
  if (!(w > 0) || !(h > 0) || !std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) ||
      !std::isfinite(h)) {
    throw ShapeError("box requires finite center and positive size, got w=" + std::to_string(w) +
                     " h=" + std::to_string(h));
  }
  return Box(cx, cy, w, h);
}

Box Box::FromCorners(double x1, double y1, double x2, double y2) {
  return FromCenter((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1);
}

Box Box::FromXywh(double x, double y, double w, double h) {
  return FromCenter(x + w / 2, y + h / 2, w, h);
}

Corners Box::corners() const {
  return {cx_ - w_ / 2, cy_ - h_ / 2, cx_ + w_ / 2, cy_ + h_ / 2};
}

double Iou(const Box& a, const Box& b) {
  const Corners ca = a.corners();
  const Corners cb = b.corners();
  const double iw = std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1);
  const double ih = std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<double> FrameIous(std::span<const Box> pred, std::span<const Box> gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("prediction/ground-truth length mismatch: " + std::to_string(pred.size()) +
                     " vs " + std::to_string(gt.size()));
  }
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = Iou(pred[i], gt[i]);
  return out;
}

double MeanIou(std::span<const std::vector<Box>> pred, std::span<const std::vector<Box>> gt) {
  if (pred.size() != gt.size()) throw ShapeError("sequence count mismatch in mIoU");
  if (pred.empty()) throw ShapeError("mIoU needs at least one sequence");
  double total = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    const auto ious = FrameIous(pred[s], gt[s]);
    if (ious.empty()) throw ShapeError("mIoU sequence " + std::to_string(s) + " is empty");
    double seq = 0;
    for (double v : ious) seq += v;
    total += seq / static_cast<double>(ious.size());
  }
  return total / static_cast<double>(pred.size());
}

Box ClipToFrame(const Box& b, double width, double height) {
  const Corners c = b.corners();
  double x1 = std::clamp(c.x1, 0.0, width - 1.0);
  double y1 = std::clamp(c.y1, 0.0, height - 1.0);
  double x2 = std::clamp(c.x2, 0.0, width);
  double y2 = std::clamp(c.y2, 0.0, height);
  x2 = std::max(x2, x1 + 1.0);
  y2 = std::max(y2, y1 + 1.0);
  return Box::FromCorners(x1, y1, x2, y2);
}

Deltas EncodeDeltas(const Box& anchor, const Box& gt) {
  return {(gt.cx() - anchor.cx()) / anchor.w(), (gt.cy() - anchor.cy()) / anchor.h(),
          std::log(gt.w() / anchor.w()), std::log(gt.h() / anchor.h())};
}

Box DecodeDeltas(const Box& anchor, const Deltas& d) {
  return Box::FromCenter(anchor.cx() + d.dx * anchor.w(), anchor.cy() + d.dy * anchor.h(),
                         anchor.w() * std::exp(d.dw), anchor.h() * std::exp(d.dh));
}

AnchorSet GenerateAnchors(int grid_h, int grid_w, double stride, std::span<const double> ratios,
                          double base_scale, double patch_size) {
  if (!(stride > 0)) throw ConfigError("anchor stride must be positive");
  if (!(base_scale > 0)) throw ConfigError("anchor base scale must be positive");
  if (grid_h <= 0 || grid_w <= 0) throw ConfigError("anchor grid must be non-empty");
  if (ratios.empty()) throw ConfigError("anchor ratios must be non-empty");
  for (double r : ratios) {
    if (!(r > 0)) throw ConfigError("anchor ratios must be positive");
  }

  AnchorSet set;
  set.grid_h = grid_h;
  set.grid_w = grid_w;
  set.stride = stride;
  set.ratios.assign(ratios.begin(), ratios.end());
  set.base_scale = base_scale;
  set.patch_size = patch_size;
  set.boxes.reserve(static_cast<std::size_t>(grid_h) * grid_w * ratios.size());

  const double center = patch_size / 2;
  for (double r : ratios) {
    const double w = base_scale / std::sqrt(r);
    const double h = base_scale * std::sqrt(r);
    for (int row = 0; row < grid_h; ++row) {
      for (int col = 0; col < grid_w; ++col) {
        const double cx = center + (col - (grid_w - 1) / 2.0) * stride;
        const double cy = center + (row - (grid_h - 1) / 2.0) * stride;
        set.boxes.push_back(Box::FromCenter(cx, cy, w, h));
      }
    }
  }
  return set;
}

}  // namespace skv::geometry
