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

#include "skelevision/tracking.hpp"

#include <cmath>

#include "skelevision/attack.hpp"
#include "skelevision/errors.hpp"

namespace skv::tracking {

namespace F = torch::nn::functional;

Box CropWindow::ToPatch(const Box& b) const {
  return Box::FromCenter(ToPatchX(b.cx()), ToPatchY(b.cy()), b.w() * scale(), b.h() * scale());
}

Box CropWindow::ToFrame(const Box& b) const {
  return Box::FromCenter(ToFrameX(b.cx()), ToFrameY(b.cy()), b.w() / scale(), b.h() / scale());
}

double ContextSide(double w, double h, CropRole role) {
  const double p = (w + h) / 2;
  const double sz = std::sqrt((w + p) * (h + p));
  if (role == CropRole::kTemplate) return sz;
  return sz * static_cast<double>(model::kDetectionSize) / static_cast<double>(model::kTemplateSize);
}

CropWindow MakeWindow(const Box& box, CropRole role) {
  return {box.cx(), box.cy(), ContextSide(box.w(), box.h(), role),
          role == CropRole::kTemplate ? model::kTemplateSize : model::kDetectionSize};
}

namespace {

void CheckFrame(const torch::Tensor& frame) {
  if (frame.dim() != 3 || frame.size(0) != 3 || frame.size(1) < 1 || frame.size(2) < 1) {
    throw ShapeError("frames must be [3, H, W] tensors");
  }
}

}  // namespace

torch::Tensor CropPatch(const torch::Tensor& frame, const torch::Tensor& cx,
                        const torch::Tensor& cy, const torch::Tensor& side, int64_t out_size) {
  CheckFrame(frame);
  const auto opts = frame.options();
  const double h = static_cast<double>(frame.size(1));
  const double w = static_cast<double>(frame.size(2));
  // Output pixel u samples the frame at origin + (u + 0.5) * side / out_size.
  const auto unit = (torch::arange(out_size, opts) + 0.5) / static_cast<double>(out_size);
  const auto xs = ((cx - side / 2) + unit * side) * (2.0 / w) - 1.0;
  const auto ys = ((cy - side / 2) + unit * side) * (2.0 / h) - 1.0;
  const auto grid = torch::stack({xs.unsqueeze(0).expand({out_size, out_size}),
                                  ys.unsqueeze(1).expand({out_size, out_size})},
                                 /*dim=*/-1)
                        .unsqueeze(0);
  const auto mean = frame.mean({1, 2}, /*keepdim=*/true);
  const auto sampled = F::grid_sample((frame - mean).unsqueeze(0), grid,
                                      F::GridSampleFuncOptions()
                                          .mode(torch::kBilinear)
                                          .padding_mode(torch::kZeros)
                                          .align_corners(false));
  return sampled.squeeze(0) + mean;
}

torch::Tensor CropPatch(const torch::Tensor& frame, const CropWindow& window) {
  const auto opts = frame.options();
  return CropPatch(frame, torch::scalar_tensor(window.cx, opts),
                   torch::scalar_tensor(window.cy, opts), torch::scalar_tensor(window.side, opts),
                   window.out_size);
}

Crop CropContext(const torch::Tensor& frame, const Box& box, CropRole role) {
  CheckFrame(frame);
  const auto c = box.corners();
  if (c.x2 <= 0 || c.y2 <= 0 || c.x1 >= static_cast<double>(frame.size(2)) ||
      c.y1 >= static_cast<double>(frame.size(1))) {
    throw DataError("crop box lies entirely outside the frame");
  }
  const CropWindow window = MakeWindow(box, role);
  return {CropPatch(frame, window), window};
}

geometry::AnchorSet DetectionAnchors(const TrackerConfig& cfg) {
  return geometry::GenerateAnchors(static_cast<int>(model::kResponseSize),
                                   static_cast<int>(model::kResponseSize), 8.0, cfg.ratios,
                                   cfg.base_scale, static_cast<double>(model::kDetectionSize));
}

namespace {

torch::Tensor CosineWindow(int64_t n) {
  const auto idx = torch::arange(n, torch::kFloat64);
  const auto hann = 0.5 - 0.5 * torch::cos(2.0 * M_PI * idx / static_cast<double>(n - 1));
  return torch::outer(hann, hann);
}

torch::Tensor AnchorTable(const geometry::AnchorSet& anchors) {
  std::vector<double> flat;
  flat.reserve(anchors.size() * 4);
  for (const auto& b : anchors.boxes) flat.insert(flat.end(), {b.cx(), b.cy(), b.w(), b.h()});
  return torch::tensor(flat, torch::kFloat64).reshape({-1, 4});
}

struct BoxTensors {
  torch::Tensor cx, cy, w, h;  // 0-dim
};

BoxTensors ToTensors(const Box& b, const torch::TensorOptions& opts) {
  return {torch::scalar_tensor(b.cx(), opts), torch::scalar_tensor(b.cy(), opts),
          torch::scalar_tensor(b.w(), opts), torch::scalar_tensor(b.h(), opts)};
}

Box CornersToBox(const torch::Tensor& corners) {
  const auto c = corners.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  const double* p = c.data_ptr<double>();
  return Box::FromCorners(p[0], p[1], p[2], p[3]);
}

struct StepOutput {
  torch::Tensor corners;  // [4] frame coordinates, clipped
  torch::Tensor scores;   // [m, 17, 17]
  int64_t anchor = 0;
};

StepOutput DetectStep(model::SiamRpn& net, const TrackerState& st, const torch::Tensor& frame,
                      const BoxTensors& prev, std::optional<int64_t> forced) {
  CheckFrame(frame);
  const auto& cfg = st.config;
  const auto p = (prev.w + prev.h) / 2;
  const auto side = torch::sqrt((prev.w + p) * (prev.h + p)) *
                    (static_cast<double>(model::kDetectionSize) / model::kTemplateSize);
  const auto patch = CropPatch(frame, prev.cx, prev.cy, side, model::kDetectionSize);
  const auto feat = net->Features(patch.unsqueeze(0));
  const auto out = net->rpn()->Correlate(st.kernels, feat);

  const int64_t m = net->rpn()->num_anchors();
  const int64_t hw = out.cls.size(2) * out.cls.size(3);
  const auto probs =
      torch::softmax(out.cls[0].reshape({m, 2, out.cls.size(2), out.cls.size(3)}), 1)
          .select(1, 1);
  const auto reg = out.reg[0].reshape({m, 4, hw});

  int64_t best = 0;
  {
    torch::NoGradGuard no_grad;
    auto score = probs.detach().to(torch::kFloat64);
    if (!torch::isfinite(score).all().item<bool>() ||
        !torch::isfinite(reg.detach()).all().item<bool>()) {
      throw NumericalError("non-finite tracker response (diverged parameters?)");
    }
    if (cfg.penalty_k > 0) {
      const auto d = reg.detach().to(torch::kFloat64).permute({0, 2, 1}).reshape({-1, 4});
      const auto aw = st.anchor_table.select(1, 2), ah = st.anchor_table.select(1, 3);
      const auto pw = aw * torch::exp(d.select(1, 2)), ph = ah * torch::exp(d.select(1, 3));
      const double to_patch = model::kDetectionSize / side.item<double>();
      const double tw = prev.w.item<double>() * to_patch, th = prev.h.item<double>() * to_patch;
      auto sz = [](const torch::Tensor& w, const torch::Tensor& h) {
        const auto pad = (w + h) / 2;
        return torch::sqrt((w + pad) * (h + pad));
      };
      auto change = [](const torch::Tensor& r) { return torch::maximum(r, 1.0 / r); };
      const double tpad = (tw + th) / 2;
      const auto s_c = change(sz(pw, ph) / std::sqrt((tw + tpad) * (th + tpad)));
      const auto r_c = change((tw / th) / (pw / ph));
      score = score * torch::exp(-(r_c * s_c - 1) * cfg.penalty_k).reshape(score.sizes());
    }
    if (cfg.window_influence > 0) {
      score = score * (1 - cfg.window_influence) + st.window.unsqueeze(0) * cfg.window_influence;
    }
    best = forced ? *forced : score.reshape({-1}).argmax().item<int64_t>();
    if (best < 0 || best >= m * hw) throw ShapeError("anchor index out of range");
  }

  const int64_t a = best / hw;
  const auto d = reg.select(0, a).select(1, best % hw);  // [4]
  const auto anchor = st.anchor_table[best].to(frame.dtype());
  const auto pcx = anchor[0] + d[0] * anchor[2];
  const auto pcy = anchor[1] + d[1] * anchor[3];
  const auto pw = anchor[2] * torch::exp(d[2]);
  const auto ph = anchor[3] * torch::exp(d[3]);

  const auto scale = side / static_cast<double>(model::kDetectionSize);
  const auto fcx = (prev.cx - side / 2) + pcx * scale;
  const auto fcy = (prev.cy - side / 2) + pcy * scale;
  const auto fw = pw * scale, fh = ph * scale;
  auto x1 = fcx - fw / 2, y1 = fcy - fh / 2, x2 = fcx + fw / 2, y2 = fcy + fh / 2;
  if (cfg.clip_to_frame) {
    const double w = static_cast<double>(frame.size(2)), h = static_cast<double>(frame.size(1));
    x1 = x1.clamp(0.0, w - 1.0);
    y1 = y1.clamp(0.0, h - 1.0);
    x2 = torch::maximum(x2.clamp(0.0, w), x1 + 1.0);
    y2 = torch::maximum(y2.clamp(0.0, h), y1 + 1.0);
  }
  return {torch::stack({x1, y1, x2, y2}), probs, best};
}

}  // namespace

TrackerState TrackerInit(model::SiamRpn& net, const torch::Tensor& frame, const Box& gt,
                         const TrackerConfig& cfg) {
  if (cfg.window_influence < 0 || cfg.window_influence > 1) {
    throw ConfigError("window influence must lie in [0, 1]");
  }
  if (static_cast<int>(cfg.ratios.size()) != net->rpn()->num_anchors()) {
    throw ConfigError("tracker anchor ratios do not match the model's anchor count");
  }
  const auto crop = CropContext(frame, gt, CropRole::kTemplate);
  TrackerState st;
  st.template_features = net->TemplateFeatures(crop.patch.unsqueeze(0));
  st.kernels = net->rpn()->MakeKernels(st.template_features);
  st.last = gt;
  st.frame_h = frame.size(1);
  st.frame_w = frame.size(2);
  st.config = cfg;
  st.anchors = DetectionAnchors(cfg);
  st.anchor_table = AnchorTable(st.anchors);
  st.window = CosineWindow(model::kResponseSize);
  return st;
}

UpdateResult TrackerUpdate(model::SiamRpn& net, TrackerState& state, const torch::Tensor& frame) {
  if (!state.kernels.cls.defined()) throw ConfigError("tracker state is not initialized");
  torch::NoGradGuard no_grad;
  const auto step = DetectStep(net, state, frame, ToTensors(state.last, frame.options()),
                               std::nullopt);
  state.last = CornersToBox(step.corners);
  return {state.last, step.scores, step.anchor};
}

TrackResult TrackSequence(model::SiamRpn& net, std::span<const torch::Tensor> frames,
                          std::span<const Box> gt, const TrackerConfig& cfg) {
  if (frames.size() < 2) throw ShapeError("tracking needs at least two frames");
  if (gt.size() != frames.size()) throw ShapeError("one ground-truth box per frame is required");
  torch::NoGradGuard no_grad;
  auto state = TrackerInit(net, frames[0], gt[0], cfg);
  TrackResult r;
  r.boxes.push_back(gt[0]);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    r.boxes.push_back(TrackerUpdate(net, state, frames[t]).box);
  }
  r.ious = geometry::FrameIous(std::span(r.boxes).subspan(1), gt.subspan(1));
  double sum = 0;
  for (double v : r.ious) sum += v;
  r.miou = sum / static_cast<double>(r.ious.size());
  return r;
}

RolloutResult DifferentiableRollout(model::SiamRpn& net, std::span<const torch::Tensor> frames,
                                    std::span<const Box> gt, const TrackerConfig& cfg,
                                    const RolloutOptions& options) {
  if (frames.size() < 2) throw ShapeError("rollout needs at least two frames");
  if (gt.size() != frames.size()) throw ShapeError("one ground-truth box per frame is required");
  if (options.full_unroll && frames.size() > kMaxUnrollFrames) {
    throw ConfigError("full unroll is limited to " + std::to_string(kMaxUnrollFrames) + " frames");
  }
  if (!options.forced_anchors.empty() && options.forced_anchors.size() != frames.size() - 1) {
    throw ShapeError("forced anchors need one entry per detection frame");
  }
  const auto opts = frames[0].options();
  const auto state = TrackerInit(net, frames[0], gt[0], cfg);

  RolloutResult r;
  r.boxes.push_back(gt[0]);
  BoxTensors prev = ToTensors(gt[0], opts);
  torch::Tensor total = torch::zeros({}, opts);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    std::optional<int64_t> forced;
    if (!options.forced_anchors.empty()) forced = options.forced_anchors[t - 1];
    const auto step = DetectStep(net, state, frames[t], prev, forced);
    const auto frame_loss = attack::AdvTaskLoss(step.corners, gt[t]);
    total = total + frame_loss;
    r.frame_losses.push_back(frame_loss.item<double>());
    r.anchors.push_back(step.anchor);
    r.boxes.push_back(CornersToBox(step.corners));

    const auto c = options.full_unroll ? step.corners : step.corners.detach();
    prev = {(c[0] + c[2]) / 2, (c[1] + c[3]) / 2, c[2] - c[0], c[3] - c[1]};
  }
  r.loss = total;
  return r;
}

}  // namespace skv::tracking
