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

#include "skelevision/attack.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "skelevision/errors.hpp"
#include "skelevision/image_io.hpp"

namespace skv::attack {

namespace F = torch::nn::functional;

PixelRect CoveredPixels(const Box& box, int64_t width, int64_t height) {
  const auto c = box.corners();
  auto lo = [](double v) { return static_cast<int64_t>(std::ceil(v - 0.5)); };
  PixelRect r{lo(c.x1), lo(c.y1), lo(c.x2), lo(c.y2)};
  r.x0 = std::clamp<int64_t>(r.x0, 0, width);
  r.x1 = std::clamp<int64_t>(r.x1, 0, width);
  r.y0 = std::clamp<int64_t>(r.y0, 0, height);
  r.y1 = std::clamp<int64_t>(r.y1, 0, height);
  return r;
}

void PatchSpec::Validate() const {
  if (!masks.defined() || masks.dim() != 3 || masks.scalar_type() != torch::kBool) {
    throw ShapeError("patch masks must be a [T, H, W] bool tensor");
  }
  const PixelRect r = rect();
  if (r.empty()) throw DataError("patch region covers no pixels");
  if (!texture.defined() || texture.dim() != 3 || texture.size(0) != 3 ||
      texture.size(1) != r.height() || texture.size(2) != r.width()) {
    throw ShapeError("texture must be [3, " + std::to_string(r.height()) + ", " +
                     std::to_string(r.width()) + "]");
  }
  if (texture.min().item<double>() < 0 || texture.max().item<double>() > 1) {
    throw DataError("texture values must lie in [0, 1]");
  }
  auto inside = torch::zeros({masks.size(1), masks.size(2)}, torch::kBool);
  inside.slice(0, r.y0, r.y1).slice(1, r.x0, r.x1).fill_(true);
  if ((masks & ~inside.unsqueeze(0)).any().item<bool>()) {
    throw DataError("patch masks are set outside the patch region");
  }
  if (first_frame_clean && masks.size(0) > 0 && masks[0].any().item<bool>()) {
    throw DataError("first frame must be clean but its mask is not empty");
  }
}

torch::Tensor Composite(const torch::Tensor& frame, const torch::Tensor& mask,
                        const torch::Tensor& texture, const PixelRect& rect) {
  if (frame.dim() != 3 || mask.dim() != 2 || frame.size(1) != mask.size(0) ||
      frame.size(2) != mask.size(1)) {
    throw ShapeError("frame and mask sizes disagree");
  }
  if (texture.size(1) != rect.height() || texture.size(2) != rect.width()) {
    throw ShapeError("texture does not match the patch rectangle");
  }
  const auto canvas = F::pad(texture.to(frame.dtype()),
                             F::PadFuncOptions({rect.x0, frame.size(2) - rect.x1, rect.y0,
                                                frame.size(1) - rect.y1}));
  return torch::where(mask.unsqueeze(0), canvas, frame);
}

std::vector<torch::Tensor> Composite(std::span<const torch::Tensor> frames, const PatchSpec& spec,
                                     const torch::Tensor& texture) {
  if (static_cast<int64_t>(frames.size()) > spec.frames()) {
    throw ShapeError("patch spec has fewer masks than frames");
  }
  const PixelRect r = spec.rect();
  std::vector<torch::Tensor> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    out.push_back(Composite(frames[t], spec.masks[static_cast<int64_t>(t)], texture, r));
  }
  return out;
}

std::vector<torch::Tensor> Composite(std::span<const torch::Tensor> frames, const PatchSpec& spec) {
  return Composite(frames, spec, spec.texture);
}

torch::Tensor AdvTaskLoss(const torch::Tensor& pred_corners, const Box& gt) {
  const auto c = gt.corners();
  const auto target =
      torch::tensor({c.x1, c.y1, c.x2, c.y2}, pred_corners.options().requires_grad(false));
  return (pred_corners - target).abs().sum();
}

double AdvTaskLoss(const Box& pred, const Box& gt) {
  const auto a = pred.corners();
  const auto b = gt.corners();
  return std::abs(a.x1 - b.x1) + std::abs(a.y1 - b.y1) + std::abs(a.x2 - b.x2) +
         std::abs(a.y2 - b.y2);
}

void AttackConfig::Validate() const {
  if (!(delta >= 0) || !std::isfinite(delta)) throw ConfigError("attack step size must be >= 0");
  if (steps < 0) throw ConfigError("attack steps must be non-negative");
  if (attacked_frames < 2) throw ConfigError("attack needs at least two attacked frames");
  for (int s : snapshot_steps) {
    if (s < 0 || s > steps) throw ConfigError("snapshot step outside [0, steps]");
  }
}

namespace {

// Parameters stay read-only while the attack differentiates through them.
class FrozenParameters {
 public:
  explicit FrozenParameters(model::SiamRpn& net) {
    for (auto& p : net->parameters()) {
      params_.push_back(p);
      flags_.push_back(p.requires_grad());
      p.set_requires_grad(false);
    }
  }
  ~FrozenParameters() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(flags_[i]);
  }
  FrozenParameters(const FrozenParameters&) = delete;
  FrozenParameters& operator=(const FrozenParameters&) = delete;

 private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> flags_;
};

}  // namespace

AttackResult RunPatchAttack(model::SiamRpn& net, std::span<const torch::Tensor> frames,
                            std::span<const Box> gt, const PatchSpec& spec,
                            const AttackConfig& cfg) {
  cfg.Validate();
  spec.Validate();
  if (frames.size() != gt.size()) throw ShapeError("one ground-truth box per frame is required");
  const std::size_t n = std::min<std::size_t>(frames.size(), cfg.attacked_frames);
  if (n < 2) throw ShapeError("attack needs at least two frames");
  const auto span_frames = frames.first(n);
  const auto span_gt = gt.first(n);
  if (!spec.masks.slice(0, 0, static_cast<int64_t>(n)).any().item<bool>()) {
    throw DataError("patch is never visible in the attacked frames");
  }

  FrozenParameters frozen(net);
  auto evaluate = [&](const torch::Tensor& texture) {
    const auto composed = Composite(span_frames, spec, texture);
    return tracking::TrackSequence(net, composed, span_gt, cfg.tracker);
  };

  AttackResult result;
  const auto benign = evaluate(spec.texture);
  result.benign_miou = benign.miou;
  result.benign_ious = benign.ious;

  std::vector<int> snaps = cfg.snapshot_steps;
  std::sort(snaps.begin(), snaps.end());
  snaps.erase(std::unique(snaps.begin(), snaps.end()), snaps.end());
  auto snap_it = snaps.begin();
  auto take_snapshot = [&](int step, const torch::Tensor& texture) {
    while (snap_it != snaps.end() && *snap_it == step) {
      const auto r = step == 0 ? benign : evaluate(texture);
      result.snapshots.push_back({step, r.miou, r.ious, texture.clone()});
      ++snap_it;
    }
  };

  const double scored = static_cast<double>(n - 1);
  torch::Tensor texture = spec.texture.detach().clone();
  take_snapshot(0, texture);
  tracking::RolloutOptions roll_opts;
  roll_opts.full_unroll = cfg.full_unroll;
  for (int i = 0; i < cfg.steps; ++i) {
    auto tex = texture.clone().requires_grad_(true);
    const auto composed = Composite(span_frames, spec, tex);
    const auto roll = tracking::DifferentiableRollout(net, composed, span_gt, cfg.tracker, roll_opts);
    result.loss_trace.push_back(roll.loss.item<double>());
    const auto grad = torch::autograd::grad({roll.loss}, {tex}, /*grad_outputs=*/{},
                                            /*retain_graph=*/false, /*create_graph=*/false,
                                            /*allow_unused=*/true)[0];
    // Undefined when no crop ever sees the patch; the texture then stays put.
    if (grad.defined()) {
      if (!torch::isfinite(grad).all().item<bool>()) {
        throw NumericalError("non-finite attack gradient at step " + std::to_string(i + 1));
      }
      texture = (texture + cfg.delta * grad / scored).clamp(0.0, 1.0);
    }
    take_snapshot(i + 1, texture);
  }

  const auto adversarial = evaluate(texture);
  result.adversarial_miou = adversarial.miou;
  result.adversarial_ious = adversarial.ious;
  result.texture = texture;
  return result;
}

PatchSpec BuildOverlaySpec(std::span<const torch::Tensor> frames, std::span<const Box> gt,
                           double margin, double padding) {
  if (frames.empty() || frames.size() != gt.size()) {
    throw ShapeError("overlay spec needs one gt box per frame");
  }
  const int64_t h = frames[0].size(1), w = frames[0].size(2);
  if (h < kMinOverlayFrameSize || w < kMinOverlayFrameSize) {
    throw DataError("frames smaller than " + std::to_string(kMinOverlayFrameSize) +
                    " px cannot host an overlay patch");
  }
  if (!(margin >= 0 && margin < 0.5)) throw ConfigError("overlay margin must be in [0, 0.5)");
  PatchSpec spec;
  spec.region = Box::FromCorners(margin * static_cast<double>(w), margin * static_cast<double>(h),
                                 (1 - margin) * static_cast<double>(w),
                                 (1 - margin) * static_cast<double>(h));
  const PixelRect r = CoveredPixels(spec.region, w, h);
  auto region_mask = torch::zeros({h, w}, torch::kBool);
  region_mask.slice(0, r.y0, r.y1).slice(1, r.x0, r.x1).fill_(true);

  spec.masks = torch::zeros({static_cast<int64_t>(frames.size()), h, w}, torch::kBool);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const auto c = gt[t].corners();
    const auto open = CoveredPixels(
        Box::FromCorners(c.x1 - padding, c.y1 - padding, c.x2 + padding, c.y2 + padding), w, h);
    auto mask = region_mask.clone();
    mask.slice(0, open.y0, open.y1).slice(1, open.x0, open.x1).fill_(false);
    spec.masks[static_cast<int64_t>(t)].copy_(mask);
  }
  spec.first_frame_clean = true;
  spec.texture = frames[0].slice(1, r.y0, r.y1).slice(2, r.x0, r.x1).detach().to(torch::kFloat32)
                     .clamp(0, 1)
                     .clone();
  return spec;
}

void SaveTexture(const std::filesystem::path& stem, const torch::Tensor& texture,
                 const TextureMetadata& meta) {
  image_io::WriteImage(stem.string() + ".png", texture, 16);
  const auto c = meta.region.corners();
  nlohmann::json j = {{"region", {c.x1, c.y1, c.x2, c.y2}},
                      {"delta", meta.delta},
                      {"steps", meta.steps},
                      {"seed", meta.seed},
                      {"height", texture.size(1)},
                      {"width", texture.size(2)}};
  std::ofstream os(stem.string() + ".json");
  if (!os) throw DataError("cannot write texture metadata for " + stem.string());
  os << j.dump(2) << "\n";
}

torch::Tensor LoadTexture(const std::filesystem::path& stem, TextureMetadata* meta) {
  auto texture = image_io::ReadImage(stem.string() + ".png");
  std::ifstream is(stem.string() + ".json");
  if (!is) throw DataError("missing texture metadata for " + stem.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed texture metadata " + stem.string() + ": " + e.what());
  }
  if (j.at("height").get<int64_t>() != texture.size(1) ||
      j.at("width").get<int64_t>() != texture.size(2)) {
    throw DataError("texture image and metadata disagree on size for " + stem.string());
  }
  if (meta) {
    const auto r = j.at("region");
    meta->region = Box::FromCorners(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                                    r[3].get<double>());
    meta->delta = j.at("delta").get<double>();
    meta->steps = j.at("steps").get<int>();
    meta->seed = j.at("seed").get<uint64_t>();
  }
  return texture;
}

}  // namespace skv::attack
