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

#ifndef SKELEVISION_MODEL_HPP_
#define SKELEVISION_MODEL_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace skv::model {

enum class BackboneVariant { kPaperAlexNet, kTiny };

struct BackboneConfig {
  BackboneVariant variant = BackboneVariant::kTiny;
  // 256 for the AlexNet variant; configurable width for the tiny variant.
  int out_channels = 32;
  int total_stride = 8;

  static BackboneConfig PaperAlexNet() { return {BackboneVariant::kPaperAlexNet, 256, 8}; }
  static BackboneConfig Tiny(int channels = 32) { return {BackboneVariant::kTiny, channels, 8}; }
};

enum class HeadDepth { kShallow, kDeep };

struct KeypointHeadConfig {
  HeadDepth depth = HeadDepth::kShallow;
  std::vector<int> channels = {128, 64};
  int num_keypoints = 17;

  static KeypointHeadConfig Shallow(int k = 17) { return {HeadDepth::kShallow, {128, 64}, k}; }
  static KeypointHeadConfig Deep(int k = 17) { return {HeadDepth::kDeep, {128, 128, 64, 64}, k}; }
};

struct ModelConfig {
  BackboneConfig backbone;
  KeypointHeadConfig keypoint_head;
  int num_anchors = 5;

  // Canonical one-line description; the checkpoint digest is derived from it.
  std::string Canonical() const;
  std::string Digest() const;
};

std::string ToString(BackboneVariant v);
BackboneVariant ParseBackboneVariant(const std::string& s);
std::string ToString(HeadDepth d);
HeadDepth ParseHeadDepth(const std::string& s);

inline constexpr int64_t kTemplateSize = 127;
inline constexpr int64_t kDetectionSize = 255;
inline constexpr int64_t kTemplateFeatureSize = 6;
inline constexpr int64_t kDetectionFeatureSize = 22;
inline constexpr int64_t kResponseSize = 17;

// Shared feature extractor applied to both template and detection patches.
// Input [B, 3, s, s] with s in {127, 255}; output [B, C, 6, 6] or [B, C, 22, 22].
class BackboneImpl : public torch::nn::Module {
 public:
  explicit BackboneImpl(const BackboneConfig& cfg);
  torch::Tensor forward(const torch::Tensor& patch);

  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(Backbone);

struct RpnOutput {
  torch::Tensor cls;  // [B, 2m, 17, 17]; channels (2a, 2a + 1) = (background, foreground) of anchor a
  torch::Tensor reg;  // [B, 4m, 17, 17]; channels 4a..4a+3 = (dx, dy, dw, dh) of anchor a
};

// Correlation kernels derived from template features. These act as the
// detector parameters for a whole sequence.
struct TemplateKernels {
  torch::Tensor cls;  // [B, 2m * C, 4, 4]
  torch::Tensor reg;  // [B, 4m * C, 4, 4]
};

// Cross-correlates per-sample kernels [B, K * C, kh, kw] against search
// features [B, C, H, W] with one group per sample. Output [B, K, H', W'].
torch::Tensor CrossCorrelate(const torch::Tensor& kernels, const torch::Tensor& search);

class RpnHeadImpl : public torch::nn::Module {
 public:
  RpnHeadImpl(int feature_channels, int num_anchors);

  TemplateKernels MakeKernels(const torch::Tensor& feat_z);
  RpnOutput Correlate(const TemplateKernels& kernels, const torch::Tensor& feat_x);
  RpnOutput forward(const torch::Tensor& feat_z, const torch::Tensor& feat_x);

  int num_anchors() const { return num_anchors_; }

 private:
  int channels_;
  int num_anchors_;
  torch::nn::Conv2d template_cls_{nullptr}, template_reg_{nullptr};
  torch::nn::Conv2d search_cls_{nullptr}, search_reg_{nullptr};
  torch::nn::Conv2d reg_adjust_{nullptr};
};
TORCH_MODULE(RpnHead);

// Template-branch keypoint head: bias-free 3x3 conv blocks, a stride-2
// transpose convolution to K channels (6 -> 14), then bilinear resize to 127.
class KeypointHeadImpl : public torch::nn::Module {
 public:
  KeypointHeadImpl(int feature_channels, const KeypointHeadConfig& cfg);
  torch::Tensor forward(const torch::Tensor& feat_z);

  int64_t ParameterCount() const;

 private:
  KeypointHeadConfig cfg_;
  std::vector<torch::nn::Conv2d> blocks_;
  torch::nn::ConvTranspose2d deconv_{nullptr};
};
TORCH_MODULE(KeypointHead);

// Siamese RPN tracker with an optional keypoint head on the template branch.
// Parameter dot-paths: backbone.conv{1..}.{weight,bias},
// rpn.{template_cls,template_reg,search_cls,search_reg,reg_adjust}.{weight,bias},
// keypoint_head.block{0..}.weight, keypoint_head.deconv.{weight,bias}.
class SiamRpnImpl : public torch::nn::Module {
 public:
  explicit SiamRpnImpl(const ModelConfig& cfg);

  torch::Tensor Features(const torch::Tensor& patch) { return backbone_->forward(patch); }
  // Same transformation as Features; counted so callers can assert that the
  // template is computed once per sequence.
  torch::Tensor TemplateFeatures(const torch::Tensor& patch);

  RpnOutput Rpn(const torch::Tensor& feat_z, const torch::Tensor& feat_x) {
    return rpn_->forward(feat_z, feat_x);
  }
  torch::Tensor Keypoints(const torch::Tensor& feat_z) { return keypoint_head_->forward(feat_z); }

  Backbone& backbone() { return backbone_; }
  RpnHead& rpn() { return rpn_; }
  KeypointHead& keypoint_head() { return keypoint_head_; }
  const ModelConfig& config() const { return cfg_; }

  int64_t template_calls() const { return template_calls_; }
  void ResetTemplateCalls() { template_calls_ = 0; }

 private:
  ModelConfig cfg_;
  Backbone backbone_{nullptr};
  RpnHead rpn_{nullptr};
  KeypointHead keypoint_head_{nullptr};
  int64_t template_calls_ = 0;
};
TORCH_MODULE(SiamRpn);

// Builds a model with deterministic initialization from `seed`.
SiamRpn MakeModel(const ModelConfig& cfg, uint64_t seed);

int64_t CountParameters(const std::vector<torch::Tensor>& params);

}  // namespace skv::model

#endif  // SKELEVISION_MODEL_HPP_
