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

#ifndef SKELEVISION_TESTS_SUPPORT_HPP_
#define SKELEVISION_TESTS_SUPPORT_HPP_

#include <torch/torch.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <unistd.h>
#include <string>

#include "skelevision/checkpoint.hpp"
#include "skelevision/data.hpp"
#include "skelevision/digest.hpp"
#include "skelevision/geometry.hpp"
#include "skelevision/train.hpp"

namespace skv::testing {

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("skv_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Counts unit cells covered by both integer-corner boxes.
inline double RasterIou(const geometry::Box& a, const geometry::Box& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const int lo_x = static_cast<int>(std::floor(std::min(ca.x1, cb.x1)));
  const int hi_x = static_cast<int>(std::ceil(std::max(ca.x2, cb.x2)));
  const int lo_y = static_cast<int>(std::floor(std::min(ca.y1, cb.y1)));
  const int hi_y = static_cast<int>(std::ceil(std::max(ca.y2, cb.y2)));
  long inter = 0, uni = 0;
  for (int y = lo_y; y < hi_y; ++y) {
    for (int x = lo_x; x < hi_x; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const bool in_a = px > ca.x1 && px < ca.x2 && py > ca.y1 && py < ca.y2;
      const bool in_b = px > cb.x1 && px < cb.x2 && py > cb.y1 && py < cb.y2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double RelativeError(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Directional derivative check: returns (analytic, numeric) of d/dt f(x + t v)
// at t = 0. `f` must be double precision and free of kinks near x.
struct DirectionalCheck {
  double analytic = 0;
  double numeric = 0;
  double error() const { return RelativeError(analytic, numeric); }
};

inline DirectionalCheck CheckDirection(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                                       const torch::Tensor& x, const torch::Tensor& v,
                                       double eps = 1e-6) {
  auto xg = x.detach().clone().requires_grad_(true);
  auto y = f(xg);
  auto g = torch::autograd::grad({y}, {xg}, {}, false, false, true)[0];
  DirectionalCheck c;
  c.analytic = g.defined() ? (g * v).sum().item<double>() : 0.0;
  torch::NoGradGuard no_grad;
  const double up = f(x + eps * v).item<double>();
  const double down = f(x - eps * v).item<double>();
  c.numeric = (up - down) / (2 * eps);
  return c;
}

// Small synthetic dataset held in memory.
inline data::SynthConfig ToySynthConfig() {
  data::SynthConfig c;
  c.seed = 3;
  c.n_sequences = 4;
  c.n_test_sequences = 2;
  c.frames_per_seq = 60;
  c.test_frames_per_seq = 20;
  c.frame_size = 128;
  c.n_stills = 18;
  return c;
}

inline data::LoadedSequence Loaded(const data::SyntheticSequence& s, std::size_t begin,
                                   std::size_t end, data::Split split) {
  data::LoadedSequence l;
  l.name = s.name;
  l.split = split;
  l.frames.assign(s.frames.begin() + static_cast<std::ptrdiff_t>(begin),
                  s.frames.begin() + static_cast<std::ptrdiff_t>(end));
  l.gt.assign(s.gt.begin() + static_cast<std::ptrdiff_t>(begin),
              s.gt.begin() + static_cast<std::ptrdiff_t>(end));
  return l;
}

inline train::TrainData ToTrainData(const data::SynthDataset& ds) {
  train::TrainData d;
  for (const auto& s : ds.sequences) {
    if (s.split == data::Split::kTest) continue;
    const auto [n_train, n_val] = data::SplitCounts(s.frames.size());
    d.train_sequences.push_back(Loaded(s, 0, n_train, data::Split::kTrain));
    d.val_sequences.push_back(Loaded(s, n_train, n_train + n_val, data::Split::kVal));
  }
  return d;
}

inline train::TrainConfig ToyTrainConfig() {
  train::TrainConfig cfg;
  cfg.mode = train::Mode::kStl;
  cfg.lambda_k = 0;
  cfg.model.backbone = model::BackboneConfig::Tiny(32);
  cfg.epochs = 20;
  cfg.video_pairs_per_epoch = 128;
  cfg.image_ratio = 0;
  cfg.val_pairs = 16;
  cfg.seed = 1;
  cfg.data_tag = "toy";
  return cfg;
}

// Digest of every frame, box and patch; cached models keyed on it notice
// generator changes.
inline std::string DatasetFingerprint(const data::SynthDataset& ds) {
  std::string bytes;
  for (const auto& s : ds.sequences) {
    for (const auto& f : s.frames) {
      const auto c = f.contiguous();
      bytes.append(static_cast<const char*>(c.data_ptr()), c.nbytes());
    }
    for (const auto& b : s.gt) bytes += std::to_string(b.cx()) + std::to_string(b.w());
    bytes += std::to_string(s.patch.region.cx()) + std::to_string(s.patch.region.w());
  }
  return ShortDigest(bytes);
}

// Tracker trained on the toy dataset; cached under ./test_cache by config digest.
struct TrainedToy {
  data::SynthDataset dataset;
  model::SiamRpn net{nullptr};
};

inline TrainedToy& Toy() {
  static TrainedToy toy = [] {
    TrainedToy t;
    t.dataset = data::SynthSpriteDataset(ToySynthConfig());
    auto cfg = ToyTrainConfig();
    cfg.data_tag = DatasetFingerprint(t.dataset);
    const auto dir = std::filesystem::current_path() / "test_cache" / ("toy_" + cfg.Digest());
    const auto rec = train::TrainOrReuse(cfg, ToTrainData(t.dataset), dir);
    t.net = model::MakeModel(cfg.model, 0);
    model::LoadCheckpoint(t.net, rec.checkpoint);
    t.net->eval();
    return t;
  }();
  return toy;
}

}  // namespace skv::testing

#endif  // SKELEVISION_TESTS_SUPPORT_HPP_
