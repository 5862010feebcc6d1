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

#ifndef SKELEVISION_TRACKING_HPP_
#define SKELEVISION_TRACKING_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "skelevision/geometry.hpp"
#include "skelevision/model.hpp"

namespace skv::tracking {

using geometry::Box;

enum class CropRole { kTemplate, kDetection };

// Square context window in frame coordinates and its resampled output size.
// Frame and patch coordinates are related by patch = (frame - origin) * scale.
struct CropWindow {
  double cx = 0;
  double cy = 0;
  double side = 1;
  int64_t out_size = model::kTemplateSize;

  double scale() const { return static_cast<double>(out_size) / side; }
  double origin_x() const { return cx - side / 2; }
  double origin_y() const { return cy - side / 2; }
  double ToPatchX(double x) const { return (x - origin_x()) * scale(); }
  double ToPatchY(double y) const { return (y - origin_y()) * scale(); }
  double ToFrameX(double x) const { return x / scale() + origin_x(); }
  double ToFrameY(double y) const { return y / scale() + origin_y(); }
  Box ToPatch(const Box& b) const;
  Box ToFrame(const Box& b) const;
};

// Template context side sqrt((w + p)(h + p)) with p = (w + h) / 2; the
// detection side is that value scaled by 255 / 127.
double ContextSide(double w, double h, CropRole role);
CropWindow MakeWindow(const Box& box, CropRole role);

struct Crop {
  torch::Tensor patch;  // [3, s, s]
  CropWindow window;
};

// Bilinear crop of a [3, H, W] frame; out-of-frame area takes the frame's
// per-channel mean. Differentiable with respect to frame pixels. Throws
// DataError when the box lies entirely outside the frame.
Crop CropContext(const torch::Tensor& frame, const Box& box, CropRole role);
torch::Tensor CropPatch(const torch::Tensor& frame, const CropWindow& window);

// Tensor-parameterized crop: center and side are 0-dim tensors so gradients
// can flow into the window placement.
torch::Tensor CropPatch(const torch::Tensor& frame, const torch::Tensor& cx,
                        const torch::Tensor& cy, const torch::Tensor& side, int64_t out_size);

struct TrackerConfig {
  // Blend weight of the cosine window over the response map.
  double window_influence = 0.4;
  // Scale-change penalty strength; 0 disables it.
  double penalty_k = 0.0;
  double base_scale = 64.0;
  std::vector<double> ratios{std::begin(geometry::kDefaultRatios),
                             std::end(geometry::kDefaultRatios)};
  bool clip_to_frame = true;
};

struct TrackerState {
  model::TemplateKernels kernels;
  torch::Tensor template_features;
  Box last;
  int64_t frame_h = 0;
  int64_t frame_w = 0;
  TrackerConfig config;
  geometry::AnchorSet anchors;
  torch::Tensor anchor_table;  // [N, 4] (cx, cy, w, h), detection-patch coordinates
  torch::Tensor window;        // [17, 17]
};

TrackerState TrackerInit(model::SiamRpn& net, const torch::Tensor& frame, const Box& gt,
                         const TrackerConfig& cfg = {});

struct UpdateResult {
  Box box;
  torch::Tensor scores;  // [m, 17, 17] foreground probabilities
  int64_t anchor = 0;    // selected anchor index
};

// One tracking step: crop around state.last, correlate, pick the best anchor,
// decode it back to frame coordinates and store it in state.last.
UpdateResult TrackerUpdate(model::SiamRpn& net, TrackerState& state, const torch::Tensor& frame);

struct TrackResult {
  std::vector<Box> boxes;    // one per frame; boxes[0] is the initialization box
  std::vector<double> ious;  // frames 2..n
  double miou = 0;
};

// Initializes on frame 1 with gt[0], then updates sequentially. Metrics cover
// frames 2..n. Requires at least two frames.
TrackResult TrackSequence(model::SiamRpn& net, std::span<const torch::Tensor> frames,
                          std::span<const Box> gt, const TrackerConfig& cfg = {});

struct RolloutOptions {
  // Keep the crop placement of frame t + 1 attached to the prediction of
  // frame t. Only allowed for sequences of at most kMaxUnrollFrames frames.
  bool full_unroll = false;
  // Optional fixed anchor per detection frame (frames 2..n); used when a
  // finite-difference check must hold the selection constant.
  std::vector<int64_t> forced_anchors;
};

inline constexpr std::size_t kMaxUnrollFrames = 10;

struct RolloutResult {
  torch::Tensor loss;                // sum over frames 2..n of the L1 box loss
  std::vector<Box> boxes;            // boxes[0] = gt[0]
  std::vector<int64_t> anchors;      // selected anchor per detection frame
  std::vector<double> frame_losses;  // per detection frame
};

// Differentiable version of TrackSequence. The selected anchor index is a
// constant of differentiation; gradients reach the frames through the crop,
// backbone and regression deltas. Between frames the crop placement is
// detached unless full_unroll is set.
RolloutResult DifferentiableRollout(model::SiamRpn& net, std::span<const torch::Tensor> frames,
                                    std::span<const Box> gt, const TrackerConfig& cfg,
                                    const RolloutOptions& options = {});

// [N, 4] table of anchors for the detection response map.
geometry::AnchorSet DetectionAnchors(const TrackerConfig& cfg);

}  // namespace skv::tracking

#endif  // SKELEVISION_TRACKING_HPP_
