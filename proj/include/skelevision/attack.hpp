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

#ifndef SKELEVISION_ATTACK_HPP_
#define SKELEVISION_ATTACK_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skelevision/geometry.hpp"
#include "skelevision/model.hpp"
#include "skelevision/tracking.hpp"

namespace skv::attack {

using geometry::Box;

// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct PixelRect {
  int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int64_t width() const { return x1 - x0; }
  int64_t height() const { return y1 - y0; }
  bool empty() const { return width() <= 0 || height() <= 0; }
};

// Pixels of a width x height frame whose centers fall inside `box`
// (x1 <= i + 0.5 < x2).
PixelRect CoveredPixels(const Box& box, int64_t width, int64_t height);

// Static adversarial texture bound to a sequence.
struct PatchSpec {
  Box region;                     // frame coordinates, constant over the sequence
  torch::Tensor masks;            // [T, H, W] bool; true where the patch is visible
  bool first_frame_clean = true;  // masks[0] all false
  torch::Tensor texture;          // [3, rect.height, rect.width] float32 in [0, 1]

  PixelRect rect() const { return CoveredPixels(region, masks.size(2), masks.size(1)); }
  int64_t frames() const { return masks.size(0); }

  // ShapeError/DataError when masks leak outside the region, frame 1 is not
  // clean although requested, or the texture has the wrong shape or range.
  void Validate() const;
};

// frame' = texture where the mask is set, frame elsewhere. Differentiable with
// respect to `texture`; unmasked pixels are copied bit for bit.
torch::Tensor Composite(const torch::Tensor& frame, const torch::Tensor& mask,
                        const torch::Tensor& texture, const PixelRect& rect);
std::vector<torch::Tensor> Composite(std::span<const torch::Tensor> frames, const PatchSpec& spec,
                                     const torch::Tensor& texture);
std::vector<torch::Tensor> Composite(std::span<const torch::Tensor> frames, const PatchSpec& spec);

// L1 distance between corner-form boxes, summed over (x1, y1, x2, y2).
torch::Tensor AdvTaskLoss(const torch::Tensor& pred_corners, const Box& gt);
double AdvTaskLoss(const Box& pred, const Box& gt);

struct AttackConfig {
  double delta = 0.1;
  int steps = 10;
  int attacked_frames = 100;
  bool full_unroll = false;
  // Extra step counts at which the trajectory is evaluated (0 = benign).
  std::vector<int> snapshot_steps;
  tracking::TrackerConfig tracker = [] {
    tracking::TrackerConfig c;
    c.window_influence = 0.0;
    return c;
  }();

  void Validate() const;
};

struct AttackSnapshot {
  int steps = 0;
  double miou = 0;
  std::vector<double> ious;
  torch::Tensor texture;
};

struct AttackResult {
  torch::Tensor texture;
  double benign_miou = 0;
  double adversarial_miou = 0;
  std::vector<double> benign_ious;
  std::vector<double> adversarial_ious;
  std::vector<double> loss_trace;  // summed task loss before each update
  std::vector<AttackSnapshot> snapshots;
};

// Gradient-ascent patch attack. Each iteration composites the current
// texture, runs the differentiable rollout over the first attacked_frames
// frames and applies texture <- clip01(texture + delta * g / n), with g the
// gradient of the summed box loss and n the number of scored frames. Benign
// and adversarial mIoU are measured with TrackSequence on the attacked span.
AttackResult RunPatchAttack(model::SiamRpn& net, std::span<const torch::Tensor> frames,
                            std::span<const Box> gt, const PatchSpec& spec,
                            const AttackConfig& cfg);

inline constexpr double kOverlayMargin = 0.1;
inline constexpr double kOverlayPadding = 25.0;
inline constexpr int64_t kMinOverlayFrameSize = 50;

// Overlay scenario for benchmarks without physical patches: a region inset
// by 10% per edge, uncovered around each frame's gt box plus 25 px per side,
// and a clean first frame. The initial texture copies frame 1 inside the region.
PatchSpec BuildOverlaySpec(std::span<const torch::Tensor> frames, std::span<const Box> gt,
                           double margin = kOverlayMargin, double padding = kOverlayPadding);

struct TextureMetadata {
  Box region;
  double delta = 0;
  int steps = 0;
  uint64_t seed = 0;
};

// Writes <stem>.png (16-bit RGB) and <stem>.json.
void SaveTexture(const std::filesystem::path& stem, const torch::Tensor& texture,
                 const TextureMetadata& meta);
torch::Tensor LoadTexture(const std::filesystem::path& stem, TextureMetadata* meta = nullptr);

}  // namespace skv::attack

#endif  // SKELEVISION_ATTACK_HPP_
