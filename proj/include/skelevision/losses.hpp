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

#ifndef SKELEVISION_LOSSES_HPP_
#define SKELEVISION_LOSSES_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "skelevision/geometry.hpp"

namespace skv::losses {

enum class AnchorLabel : int8_t { kIgnore = -1, kNegative = 0, kPositive = 1 };

struct AnchorThresholds {
  double pos = 0.6;
  double neg = 0.3;
  int pos_cap = 16;
  int neg_cap = 48;
};

struct AnchorTargets {
  std::vector<AnchorLabel> label;           // one per anchor, AnchorSet index order
  std::vector<geometry::Deltas> reg_target;  // meaningful for positives only
  int pos_count = 0;
  int neg_count = 0;
};

// Labels anchors against `gt` (detection-patch coordinates). Positives beyond
// the cap keep the highest IoU; negatives beyond the cap are subsampled
// uniformly with `rng`. If nothing clears the positive threshold the single
// best-IoU anchor is forced positive.
AnchorTargets AssignAnchorTargets(const geometry::AnchorSet& anchors, const geometry::Box& gt,
                                  const AnchorThresholds& thresholds, std::mt19937_64& rng);

// Mean two-class cross-entropy over non-ignored anchors of the whole batch.
// cls_logits: [B, 2m, H, W]; targets.size() == B. Throws DataError when every
// anchor is ignored.
torch::Tensor ClsLoss(const torch::Tensor& cls_logits, std::span<const AnchorTargets> targets);

// Mean over positive anchors of the smooth-L1 error summed over (dx, dy, dw, dh).
// Zero (still attached to the graph) when there are no positives.
torch::Tensor RegLoss(const torch::Tensor& reg_deltas, std::span<const AnchorTargets> targets);

struct LossWeights {
  double lambda_c = 1.0;
  double lambda_r = 1.2;
  double lambda_k = 0.0;

  void Validate() const;  // ConfigError on any negative weight
};

// lambda_c * cls + lambda_r * reg.
torch::Tensor TrkLoss(const torch::Tensor& cls_loss, const torch::Tensor& reg_loss,
                      const LossWeights& w);

// trk + lambda_k * kpt. Returns `trk` itself when lambda_k == 0, so the
// single-task objective is reproduced bit for bit.
torch::Tensor MtlLoss(const torch::Tensor& trk_loss, const torch::Tensor& kpt_loss,
                      const LossWeights& w);

struct Keypoint {
  double x = 0;
  double y = 0;
  int visibility = 0;  // 0 or 1
};

struct KeypointTarget {
  torch::Tensor target_map;          // [K, size, size] float32 in {0, 1}
  std::vector<uint8_t> visibility;   // K flags
};

inline constexpr int kDefaultKeypointRadius = 2;

// Stamps a disk of ones (integer pixel distance <= radius around the pixel
// containing the keypoint) for each visible keypoint. Stamps are clipped to
// the map; a visible keypoint whose disk misses the map entirely is marked
// invisible.
KeypointTarget MakeKeypointTarget(std::span<const Keypoint> keypoints,
                                  int radius = kDefaultKeypointRadius, int size = 127);

// Per-pixel binary cross-entropy from logits, averaged over the pixels of
// visible channels only. logits: [B, K, H, W]; targets[b] empty means the
// sample has no keypoint annotation and is skipped. Returns a detached 0 when
// no channel is visible, so invisible logits never reach the graph.
torch::Tensor KptLoss(const torch::Tensor& logits,
                      std::span<const std::optional<KeypointTarget>> targets);
torch::Tensor KptLoss(const torch::Tensor& logits, const KeypointTarget& target);

}  // namespace skv::losses

#endif  // SKELEVISION_LOSSES_HPP_
