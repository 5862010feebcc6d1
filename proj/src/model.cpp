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

#include "skelevision/model.hpp"

#include <sstream>

#include "skelevision/digest.hpp"
#include "skelevision/errors.hpp"

namespace skv::model {

namespace F = torch::nn::functional;

std::string ToString(BackboneVariant v) {
  return v == BackboneVariant::kPaperAlexNet ? "paper-alexnet" : "tiny";
}

BackboneVariant ParseBackboneVariant(const std::string& s) {
  if (s == "paper-alexnet") return BackboneVariant::kPaperAlexNet;
  if (s == "tiny") return BackboneVariant::kTiny;
  throw ConfigError("unknown backbone variant '" + s + "' (expected paper-alexnet|tiny)");
}

std::string ToString(HeadDepth d) { return d == HeadDepth::kShallow ? "shallow" : "deep"; }

HeadDepth ParseHeadDepth(const std::string& s) {
  if (s == "shallow") return HeadDepth::kShallow;
  if (s == "deep") return HeadDepth::kDeep;
  throw ConfigError("unknown keypoint head depth '" + s + "' (expected shallow|deep)");
}

std::string ModelConfig::Canonical() const {
  std::ostringstream os;
  os << "backbone=" << ToString(backbone.variant) << ";channels=" << backbone.out_channels
     << ";stride=" << backbone.total_stride << ";head=" << ToString(keypoint_head.depth)
     << ";head_channels=";
  for (std::size_t i = 0; i < keypoint_head.channels.size(); ++i) {
    os << (i ? "," : "") << keypoint_head.channels[i];
  }
  os << ";keypoints=" << keypoint_head.num_keypoints << ";anchors=" << num_anchors;
  return os.str();
}

std::string ModelConfig::Digest() const { return ShortDigest(Canonical()); }

namespace {

torch::nn::Conv2d Conv(int in, int out, int k, int stride = 1, int pad = 0, bool bias = true) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(pad).bias(bias));
}

struct LayerSpec {
  int out;
  int kernel;
  int stride;
  bool pool_after;
};

std::vector<LayerSpec> Schedule(const BackboneConfig& cfg) {
  const int c = cfg.out_channels;
  if (cfg.variant == BackboneVariant::kPaperAlexNet) {
    return {{96, 11, 2, true}, {256, 5, 1, true}, {384, 3, 1, false}, {384, 3, 1, false},
            {c, 3, 1, false}};
  }
  return {{c, 11, 2, true}, {c, 5, 1, true}, {c, 7, 1, false}};
}

}  // namespace

BackboneImpl::BackboneImpl(const BackboneConfig& cfg) : cfg_(cfg) {
  if (cfg.out_channels <= 0) throw ConfigError("backbone channels must be positive");
  if (cfg.total_stride != 8) throw ConfigError("only total stride 8 is supported");
  int in = 3;
  int idx = 1;
  for (const auto& layer : Schedule(cfg)) {
    convs_.push_back(register_module("conv" + std::to_string(idx++),
                                     Conv(in, layer.out, layer.kernel, layer.stride)));
    in = layer.out;
  }
}

torch::Tensor BackboneImpl::forward(const torch::Tensor& patch) {
  if (patch.dim() != 4 || patch.size(1) != 3) {
    throw ShapeError("backbone expects [B, 3, s, s] input");
  }
  const int64_t s = patch.size(2);
  if (patch.size(3) != s || (s != kTemplateSize && s != kDetectionSize)) {
    throw ShapeError("backbone input must be 127x127 or 255x255, got " +
                     std::to_string(patch.size(2)) + "x" + std::to_string(patch.size(3)));
  }
  const auto schedule = Schedule(cfg_);
  torch::Tensor x = patch;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i]->forward(x);
    if (i + 1 == convs_.size()) break;
    x = torch::relu(x);
    if (schedule[i].pool_after) x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2));
  }
  return x;
}

torch::Tensor CrossCorrelate(const torch::Tensor& kernels, const torch::Tensor& search) {
  if (kernels.dim() != 4 || search.dim() != 4 || kernels.size(0) != search.size(0)) {
    throw ShapeError("cross-correlation expects batched 4-D kernels and search features");
  }
  const int64_t batch = search.size(0);
  const int64_t channels = search.size(1);
  if (kernels.size(1) % channels != 0) {
    throw ShapeError("kernel channels " + std::to_string(kernels.size(1)) +
                     " are not a multiple of search channels " + std::to_string(channels));
  }
  const int64_t outputs = kernels.size(1) / channels;
  auto k = kernels.reshape({batch * outputs, channels, kernels.size(2), kernels.size(3)});
  auto x = search.reshape({1, batch * channels, search.size(2), search.size(3)});
  auto out = F::conv2d(x, k, F::Conv2dFuncOptions().groups(batch));
  return out.reshape({batch, outputs, out.size(2), out.size(3)});
}

RpnHeadImpl::RpnHeadImpl(int feature_channels, int num_anchors)
    : channels_(feature_channels), num_anchors_(num_anchors) {
  if (num_anchors <= 0) throw ConfigError("anchor count must be positive");
  const int c = feature_channels;
  template_cls_ = register_module("template_cls", Conv(c, 2 * num_anchors * c, 3));
  template_reg_ = register_module("template_reg", Conv(c, 4 * num_anchors * c, 3));
  search_cls_ = register_module("search_cls", Conv(c, c, 3));
  search_reg_ = register_module("search_reg", Conv(c, c, 3));
  reg_adjust_ = register_module("reg_adjust", Conv(4 * num_anchors, 4 * num_anchors, 1));
}

TemplateKernels RpnHeadImpl::MakeKernels(const torch::Tensor& feat_z) {
  if (feat_z.dim() != 4 || feat_z.size(1) != channels_) {
    throw ShapeError("template features must have " + std::to_string(channels_) + " channels");
  }
  return {template_cls_->forward(feat_z), template_reg_->forward(feat_z)};
}

RpnOutput RpnHeadImpl::Correlate(const TemplateKernels& kernels, const torch::Tensor& feat_x) {
  if (feat_x.dim() != 4 || feat_x.size(1) != channels_) {
    throw ShapeError("detection features must have " + std::to_string(channels_) + " channels");
  }
  auto cls = CrossCorrelate(kernels.cls, search_cls_->forward(feat_x));
  auto reg = reg_adjust_->forward(CrossCorrelate(kernels.reg, search_reg_->forward(feat_x)));
  return {cls, reg};
}

RpnOutput RpnHeadImpl::forward(const torch::Tensor& feat_z, const torch::Tensor& feat_x) {
  return Correlate(MakeKernels(feat_z), feat_x);
}

KeypointHeadImpl::KeypointHeadImpl(int feature_channels, const KeypointHeadConfig& cfg)
    : cfg_(cfg) {
  if (cfg.num_keypoints <= 0) throw ConfigError("keypoint count must be positive");
  if (cfg.channels.empty()) throw ConfigError("keypoint head needs at least one block");
  int in = feature_channels;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i),
                                      Conv(in, cfg.channels[i], 3, 1, 1, /*bias=*/false)));
    in = cfg.channels[i];
  }
  deconv_ = register_module(
      "deconv", torch::nn::ConvTranspose2d(
                    torch::nn::ConvTranspose2dOptions(in, cfg.num_keypoints, 4).stride(2)));
}

torch::Tensor KeypointHeadImpl::forward(const torch::Tensor& feat_z) {
  if (feat_z.dim() != 4 || feat_z.size(2) != kTemplateFeatureSize ||
      feat_z.size(3) != kTemplateFeatureSize) {
    throw ShapeError("keypoint head expects 6x6 template features");
  }
  torch::Tensor x = feat_z;
  for (auto& block : blocks_) x = torch::relu(block->forward(x));
  x = deconv_->forward(x);
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{kTemplateSize, kTemplateSize})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

int64_t KeypointHeadImpl::ParameterCount() const { return CountParameters(parameters()); }

SiamRpnImpl::SiamRpnImpl(const ModelConfig& cfg) : cfg_(cfg) {
  backbone_ = register_module("backbone", Backbone(cfg.backbone));
  rpn_ = register_module("rpn", RpnHead(cfg.backbone.out_channels, cfg.num_anchors));
  keypoint_head_ =
      register_module("keypoint_head", KeypointHead(cfg.backbone.out_channels, cfg.keypoint_head));
}

torch::Tensor SiamRpnImpl::TemplateFeatures(const torch::Tensor& patch) {
  ++template_calls_;
  return Features(patch);
}

SiamRpn MakeModel(const ModelConfig& cfg, uint64_t seed) {
  torch::manual_seed(seed);
  return SiamRpn(cfg);
}

int64_t CountParameters(const std::vector<torch::Tensor>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

}  // namespace skv::model
