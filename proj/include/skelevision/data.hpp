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

#ifndef SKELEVISION_DATA_HPP_
#define SKELEVISION_DATA_HPP_

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "skelevision/attack.hpp"
#include "skelevision/geometry.hpp"
#include "skelevision/losses.hpp"

namespace skv::data {

using geometry::Box;
using losses::Keypoint;

inline constexpr int kNumKeypoints = 17;

// One template/detection training pair.
struct TrainSample {
  torch::Tensor template_patch;   // [3, 127, 127]
  Box template_box;               // template-patch coordinates
  std::optional<std::vector<Keypoint>> keypoints;  // template-patch coordinates
  torch::Tensor detection_patch;  // [3, 255, 255]
  Box detection_box;              // detection-patch coordinates

  // ShapeError/DataError on wrong patch shapes or keypoints whose visibility
  // disagrees with the patch bounds.
  void Validate() const;
};

struct AugmentConfig {
  double max_shift = 16.0;     // frame pixels, uniform in [-max_shift, max_shift] per axis
  double scale_jitter = 0.05;  // detection side multiplied by U[1 - s, 1 + s]
  double color_jitter = 0.05;  // per-channel gain U[1 - c, 1 + c]
};

// Template crop from `template_frame`; detection crop from an augmented view
// of `detection_frame`. Keypoints (frame coordinates, visibility 0/1) are
// mapped into the template patch; those falling outside become invisible.
TrainSample MakePair(const torch::Tensor& template_frame, const Box& template_box,
                     const torch::Tensor& detection_frame, const Box& detection_box,
                     const std::optional<std::vector<Keypoint>>& keypoints,
                     const AugmentConfig& aug, std::mt19937_64& rng);

struct KeypointIngest {
  std::vector<TrainSample> samples;
  int missing_images = 0;
};

// COCO person-keypoints subset: images[id, file_name], annotations[image_id,
// bbox, keypoints (17 x [x, y, v]), num_keypoints, iscrowd]. Crowd instances
// are skipped; v in {1, 2} maps to visible. Missing image files are skipped
// and counted; malformed annotations throw DataError.
KeypointIngest IngestKeypointImages(const std::filesystem::path& annotation_file,
                                    const std::filesystem::path& image_root,
                                    const AugmentConfig& aug, uint64_t seed);

enum class Split { kTrain, kVal, kTest };
std::string ToString(Split s);

struct SequenceRecord {
  std::string name;
  Split split = Split::kTrain;
  std::filesystem::path directory;
  std::vector<std::filesystem::path> frames;
  std::vector<Box> gt;
  int first_index = 1;  // 1-based index of frames[0] in the source sequence
};

// (train, val) frame counts: 800/100 when at least 900 frames exist,
// otherwise an 8:1 proportional split.
std::pair<std::size_t, std::size_t> SplitCounts(std::size_t frames);

// Sequence layout, one directory per sequence under `root`:
//   <name>/frames/*.png          ordered by file name
//   <name>/groundtruth.txt       one "x1,y1,x2,y2" line per frame
//   <name>/split.txt             optional; "test" keeps the whole sequence held out
//   <name>/patch/                optional patch spec (see WriteDataset)
// Sequences without a test tag yield a train and a val record.
std::vector<SequenceRecord> IngestSequences(const std::filesystem::path& root);

struct LoadedSequence {
  std::string name;
  Split split = Split::kTrain;
  std::vector<torch::Tensor> frames;
  std::vector<Box> gt;
  std::optional<attack::PatchSpec> patch;  // masks trimmed to the record's frames
};

LoadedSequence LoadSequence(const SequenceRecord& record);

// Loads every record of `split` under `root` in name order; at most `limit`
// sequences when limit >= 0.
std::vector<LoadedSequence> LoadSplit(const std::filesystem::path& root, Split split, int limit = -1);

struct SynthConfig {
  uint64_t seed = 0;
  int n_sequences = 8;
  int n_test_sequences = 5;
  int frames_per_seq = 90;
  int test_frames_per_seq = 40;
  int frame_size = 128;
  int n_stills = 96;
};

struct SyntheticSequence {
  std::string name;
  Split split = Split::kTrain;  // kTest for held-out sequences
  std::vector<torch::Tensor> frames;
  std::vector<Box> gt;
  std::vector<std::vector<Keypoint>> keypoints;  // per frame, frame coordinates
  torch::Tensor background;                      // [3, S, S]
  attack::PatchSpec patch;
};

struct KeypointStill {
  torch::Tensor image;  // [3, S, S]
  Box bbox;
  std::vector<Keypoint> keypoints;  // frame coordinates
};

struct SynthDataset {
  std::vector<SyntheticSequence> sequences;
  std::vector<KeypointStill> stills;
};

// Stick-figure sprites (head plus four two-segment limbs) walking over a
// textured background. Ground-truth boxes are the tight bounds of the
// rasterized sprite; keypoints follow the COCO order with eyes and ears
// marked invisible. Pixel values are multiples of 1/255 so PNG storage is
// exact. Bit-identical output for a given config.
SynthDataset SynthSpriteDataset(const SynthConfig& cfg);

// Persists `ds` under root/sequences (sequence layout) and root/keypoints
// (images/ plus annotations.json in the COCO subset).
void WriteDataset(const SynthDataset& ds, const std::filesystem::path& root);

}  // namespace skv::data

#endif  // SKELEVISION_DATA_HPP_
