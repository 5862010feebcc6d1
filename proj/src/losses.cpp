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

#include "skelevision/losses.hpp"


#include <algorithm>
#include <cmath>
#include <numeric>

#include "skelevision/errors.hpp"
#include "skelevision/log.hpp"

namespace skv::losses {

namespace F = torch::nn::functional;

AnchorTargets AssignAnchorTargets(const geometry::AnchorSet& anchors, const geometry::Box& gt,
                                  const AnchorThresholds& thresholds, std::mt19937_64& rng) {
  if (thresholds.neg > thresholds.pos) throw ConfigError("negative threshold above positive");
  const std::size_t n = anchors.size();
  AnchorTargets t;
  t.label.assign(n, AnchorLabel::kIgnore);
  t.reg_target.assign(n, geometry::Deltas{});

  std::vector<double> ious(n);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    ious[i] = geometry::Iou(anchors.boxes[i], gt);
    if (ious[i] >= thresholds.pos) {
      pos.push_back(i);
    } else if (ious[i] <= thresholds.neg) {
      neg.push_back(i);
    }
  }
  if (pos.empty()) {
    const auto best = static_cast<std::size_t>(
        std::distance(ious.begin(), std::max_element(ious.begin(), ious.end())));
    pos.push_back(best);
    std::erase(neg, best);
  }
  if (static_cast<int>(pos.size()) > thresholds.pos_cap) {
    std::stable_sort(pos.begin(), pos.end(),
                     [&](std::size_t a, std::size_t b) { return ious[a] > ious[b]; });
    pos.resize(static_cast<std::size_t>(std::max(thresholds.pos_cap, 1)));
  }
  if (static_cast<int>(neg.size()) > thresholds.neg_cap) {
    std::shuffle(neg.begin(), neg.end(), rng);
    neg.resize(static_cast<std::size_t>(std::max(thresholds.neg_cap, 0)));
  }
  for (std::size_t i : pos) {
    t.label[i] = AnchorLabel::kPositive;
    t.reg_target[i] = geometry::EncodeDeltas(anchors.boxes[i], gt);
  }
  for (std::size_t i : neg) t.label[i] = AnchorLabel::kNegative;
  t.pos_count = static_cast<int>(pos.size());
  t.neg_count = static_cast<int>(neg.size());
  return t;
}

namespace {

// [B, k*m, H, W] -> [B, m*H*W, k] with anchor index (ratio, row, col).
torch::Tensor PerAnchor(const torch::Tensor& x, int64_t k) {
  const int64_t b = x.size(0), m = x.size(1) / k, h = x.size(2), w = x.size(3);
  return x.reshape({b, m, k, h, w}).permute({0, 1, 3, 4, 2}).reshape({b, m * h * w, k});
}

void CheckBatch(const torch::Tensor& x, int64_t k, std::size_t targets, const char* what) {
  if (x.dim() != 4 || x.size(1) % k != 0) {
    throw ShapeError(std::string(what) + " must be [B, " + std::to_string(k) + "m, H, W]");
  }
  if (static_cast<std::size_t>(x.size(0)) != targets) {
    throw ShapeError(std::string(what) + " batch does not match target count");
  }
}

}  // namespace

torch::Tensor ClsLoss(const torch::Tensor& cls_logits, std::span<const AnchorTargets> targets) {
  CheckBatch(cls_logits, 2, targets.size(), "classification logits");
  const auto logits = PerAnchor(cls_logits, 2);
  const int64_t n = logits.size(1);
  auto labels = torch::empty({logits.size(0), n}, torch::kInt64);
  auto acc = labels.accessor<int64_t, 2>();
  int64_t used = 0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (static_cast<int64_t>(targets[b].label.size()) != n) {
      throw ShapeError("anchor target count does not match logits");
    }
    for (int64_t i = 0; i < n; ++i) {
      acc[static_cast<int64_t>(b)][i] = static_cast<int64_t>(targets[b].label[i]);
      used += targets[b].label[i] != AnchorLabel::kIgnore;
    }
  }
  if (used == 0) throw DataError("classification loss has no labelled anchors");
  return F::cross_entropy(logits.reshape({-1, 2}), labels.reshape({-1}),
                          F::CrossEntropyFuncOptions().ignore_index(-1));
}

torch::Tensor RegLoss(const torch::Tensor& reg_deltas, std::span<const AnchorTargets> targets) {
  CheckBatch(reg_deltas, 4, targets.size(), "regression deltas");
  const auto pred = PerAnchor(reg_deltas, 4);
  const int64_t n = pred.size(1);
  std::vector<int64_t> flat;
  std::vector<double> goal;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (static_cast<int64_t>(targets[b].label.size()) != n) {
      throw ShapeError("anchor target count does not match deltas");
    }
    for (int64_t i = 0; i < n; ++i) {
      if (targets[b].label[i] != AnchorLabel::kPositive) continue;
      flat.push_back(static_cast<int64_t>(b) * n + i);
      const auto& d = targets[b].reg_target[i];
      goal.insert(goal.end(), {d.dx, d.dy, d.dw, d.dh});
    }
  }
  if (flat.empty()) return reg_deltas.sum() * 0;
  const auto index = torch::tensor(flat, torch::kInt64);
  const auto chosen = pred.reshape({-1, 4}).index_select(0, index);
  const auto target = torch::tensor(goal, torch::kFloat64)
                          .reshape({-1, 4})
                          .to(chosen.dtype());
  const auto per = F::smooth_l1_loss(chosen, target,
                                     F::SmoothL1LossFuncOptions().reduction(torch::kNone).beta(1.0));
  return per.sum() / static_cast<double>(flat.size());
}

void LossWeights::Validate() const {
  if (lambda_c < 0 || lambda_r < 0 || lambda_k < 0 || !std::isfinite(lambda_c) ||
      !std::isfinite(lambda_r) || !std::isfinite(lambda_k)) {
    throw ConfigError("loss weights must be finite and non-negative");
  }
}

torch::Tensor TrkLoss(const torch::Tensor& cls_loss, const torch::Tensor& reg_loss,
                      const LossWeights& w) {
  w.Validate();
  return w.lambda_c * cls_loss + w.lambda_r * reg_loss;
}

torch::Tensor MtlLoss(const torch::Tensor& trk_loss, const torch::Tensor& kpt_loss,
                      const LossWeights& w) {
  w.Validate();
  if (w.lambda_k == 0) return trk_loss;
  return trk_loss + w.lambda_k * kpt_loss;
}

KeypointTarget MakeKeypointTarget(std::span<const Keypoint> keypoints, int radius, int size) {
  if (radius < 0) throw ConfigError("keypoint radius must be non-negative");
  if (size <= 0) throw ConfigError("keypoint map size must be positive");
  const auto k = static_cast<int64_t>(keypoints.size());
  KeypointTarget t;
  t.target_map = torch::zeros({k, size, size}, torch::kFloat32);
  t.visibility.assign(keypoints.size(), 0);
  auto acc = t.target_map.accessor<float, 3>();
  for (int64_t c = 0; c < k; ++c) {
    const auto& kp = keypoints[static_cast<std::size_t>(c)];
    if (kp.visibility == 0 || !std::isfinite(kp.x) || !std::isfinite(kp.y)) continue;
    const auto px = static_cast<int64_t>(std::floor(kp.x));
    const auto py = static_cast<int64_t>(std::floor(kp.y));
    bool stamped = false;
    for (int64_t y = std::max<int64_t>(0, py - radius); y <= std::min<int64_t>(size - 1, py + radius);
         ++y) {
      for (int64_t x = std::max<int64_t>(0, px - radius);
           x <= std::min<int64_t>(size - 1, px + radius); ++x) {
        if ((x - px) * (x - px) + (y - py) * (y - py) <= int64_t{radius} * radius) {
          acc[c][y][x] = 1.0f;
          stamped = true;
        }
      }
    }
    t.visibility[static_cast<std::size_t>(c)] = stamped ? 1 : 0;
  }
  return t;
}

torch::Tensor KptLoss(const torch::Tensor& logits,
                      std::span<const std::optional<KeypointTarget>> targets) {
  if (logits.dim() != 4) throw ShapeError("keypoint logits must be [B, K, H, W]");
  if (static_cast<std::size_t>(logits.size(0)) != targets.size()) {
    throw ShapeError("keypoint logits batch does not match target count");
  }
  std::vector<int64_t> flat;
  std::vector<torch::Tensor> maps;
  bool any_annotated = false;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (!targets[b]) continue;
    any_annotated = true;
    const auto& t = *targets[b];
    if (t.target_map.sizes() != logits[static_cast<int64_t>(b)].sizes() ||
        static_cast<int64_t>(t.visibility.size()) != logits.size(1)) {
      throw ShapeError("keypoint target shape does not match logits");
    }
    for (std::size_t c = 0; c < t.visibility.size(); ++c) {
      if (!t.visibility[c]) continue;
      flat.push_back(static_cast<int64_t>(b) * logits.size(1) + static_cast<int64_t>(c));
      maps.push_back(t.target_map[static_cast<int64_t>(c)]);
    }
  }
  if (flat.empty()) {
    if (any_annotated) log::Warn("keypoint loss: every keypoint channel is invisible");
    return torch::zeros({}, logits.options());
  }
  const auto chosen = logits.reshape({-1, logits.size(2), logits.size(3)})
                          .index_select(0, torch::tensor(flat, torch::kInt64));
  const auto goal = torch::stack(maps).to(chosen.dtype());
  return F::binary_cross_entropy_with_logits(chosen, goal);
}

torch::Tensor KptLoss(const torch::Tensor& logits, const KeypointTarget& target) {
  const auto batched = logits.dim() == 3 ? logits.unsqueeze(0) : logits;
  const std::optional<KeypointTarget> one = target;
  return KptLoss(batched, std::span<const std::optional<KeypointTarget>>(&one, 1));
}

}  // namespace skv::losses
