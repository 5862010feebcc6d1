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

#ifndef SKELEVISION_TRAIN_HPP_
#define SKELEVISION_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skelevision/data.hpp"
#include "skelevision/losses.hpp"
#include "skelevision/model.hpp"
#include "skelevision/tracking.hpp"

namespace skv::train {

enum class Mode { kStl, kMtl, kKptPretrain };
std::string ToString(Mode m);
Mode ParseMode(const std::string& s);

struct TrainConfig {
  Mode mode = Mode::kMtl;
  double lambda_k = 0.2;
  double lr = 8e-4;
  double momentum = 0.9;
  int epochs = 50;
  int batch_size = 8;
  uint64_t seed = 0;
  model::ModelConfig model;
  // Optional starting point (e.g. the tracking-only warmup checkpoint).
  std::string init_checkpoint;
  // Optional checkpoint whose keypoint_head.* parameters replace the initial ones.
  std::string pretrained_head;
  int video_pairs_per_epoch = 256;
  // Image-pair samples drawn per video pair (mixed-source ratio).
  double image_ratio = 1.0;
  int max_frame_gap = 30;
  int val_pairs = 32;
  losses::LossWeights weights;
  losses::AnchorThresholds thresholds;
  data::AugmentConfig augment;
  tracking::TrackerConfig val_tracker;
  // Identifies the dataset; part of the digest so resumed sweeps notice new data.
  std::string data_tag;

  // ConfigError on inconsistent settings (stl with lambda_k != 0, ...).
  void Validate() const;
  std::string Canonical() const;
  std::string Digest() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_miou = 0;  // tracking modes
};

struct RunRecord {
  std::string digest;
  std::string config;  // canonical config text
  Mode mode = Mode::kMtl;
  double lambda_k = 0;
  std::vector<EpochRecord> epochs;
  int selected_epoch = 0;
  std::filesystem::path checkpoint;
  double wall_clock_s = 0;
  bool completed = false;
  bool reused = false;  // loaded from disk instead of retrained

  // Line-delimited log: one "config" line, one "epoch" line per epoch and a
  // final "summary" line.
  static RunRecord Load(const std::filesystem::path& jsonl);
};

// Best epoch: argmax val mIoU for tracking modes, argmin val loss for
// keypoint pretraining. Ties keep the earliest epoch.
int SelectEpoch(Mode mode, std::span<const EpochRecord> epochs);

struct TrainData {
  std::vector<data::LoadedSequence> train_sequences;
  std::vector<data::LoadedSequence> val_sequences;
  std::vector<data::TrainSample> keypoint_train;
  std::vector<data::TrainSample> keypoint_val;
};

// Dataset layout written by data::WriteDataset: root/sequences for train and
// val records, root/keypoints/annotations.json (optional) for image pairs, of
// which the last ninth is held out for validation.
TrainData LoadTrainData(const std::filesystem::path& root, const data::AugmentConfig& aug,
                        uint64_t seed);

// Observes every optimizer step; used by tests to compare trajectories.
using StepObserver = std::function<void(int epoch, int step, double loss, model::SiamRpn& net)>;

// Runs minibatch SGD with momentum and per-epoch validation; writes
// out_dir/record.jsonl and out_dir/best.ckpt. A non-finite loss raises
// NumericalError after saving out_dir/last_good.ckpt.
RunRecord Train(const TrainConfig& cfg, const TrainData& data, const std::filesystem::path& out_dir,
                const StepObserver& observer = {});

// One run per lambda_k value sharing the base seed, each in
// sweep_dir/run_<digest>. Completed runs are reused rather than retrained.
// With warmup_epochs > 0 a tracking-only warmup (lr warmup_lr) is trained
// first and becomes every run's init checkpoint. Writes sweep_dir/sweep.jsonl.
std::vector<RunRecord> Sweep(const TrainConfig& base, std::span<const double> lambda_values,
                             const TrainData& data, const std::filesystem::path& sweep_dir,
                             int warmup_epochs = 0, double warmup_lr = 0.0);

// Runs `cfg` in out_dir unless a completed record with the same digest exists.
RunRecord TrainOrReuse(const TrainConfig& cfg, const TrainData& data,
                       const std::filesystem::path& out_dir);

}  // namespace skv::train

#endif  // SKELEVISION_TRAIN_HPP_
