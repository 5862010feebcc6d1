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

#include "skelevision/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "skelevision/errors.hpp"
#include "skelevision/log.hpp"
#include "skelevision/image_io.hpp"
#include "skelevision/tracking.hpp"

namespace skv::data {

namespace fs = std::filesystem;
using tracking::CropRole;

void TrainSample::Validate() const {
  const auto check = [](const torch::Tensor& t, int64_t s, const char* what) {
    if (!t.defined() || t.dim() != 3 || t.size(0) != 3 || t.size(1) != s || t.size(2) != s) {
      throw ShapeError(std::string(what) + " must be [3, " + std::to_string(s) + ", " +
                       std::to_string(s) + "]");
    }
  };
  check(template_patch, model::kTemplateSize, "template patch");
  check(detection_patch, model::kDetectionSize, "detection patch");
  if (keypoints) {
    if (keypoints->size() != static_cast<std::size_t>(kNumKeypoints)) {
      throw DataError("samples carry exactly " + std::to_string(kNumKeypoints) + " keypoints");
    }
    for (const auto& kp : *keypoints) {
      const bool inside = kp.x >= 0 && kp.y >= 0 && kp.x < model::kTemplateSize &&
                          kp.y < model::kTemplateSize;
      if (kp.visibility != 0 && kp.visibility != 1) throw DataError("visibility must be 0 or 1");
      if (kp.visibility == 1 && !inside) throw DataError("visible keypoint outside the template");
    }
  }
}

namespace {

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

TrainSample MakePair(const torch::Tensor& template_frame, const Box& template_box,
                     const torch::Tensor& detection_frame, const Box& detection_box,
                     const std::optional<std::vector<Keypoint>>& keypoints,
                     const AugmentConfig& aug, std::mt19937_64& rng) {
  TrainSample s;
  const auto tcrop = tracking::CropContext(template_frame, template_box, CropRole::kTemplate);
  s.template_patch = tcrop.patch;
  s.template_box = tcrop.window.ToPatch(template_box);

  // Draw order is fixed so zero magnitudes consume the same random stream.
  const double dx = Uniform(rng, -aug.max_shift, aug.max_shift);
  const double dy = Uniform(rng, -aug.max_shift, aug.max_shift);
  const double scale = Uniform(rng, 1 - aug.scale_jitter, 1 + aug.scale_jitter);
  std::vector<double> gains(3);
  for (auto& g : gains) g = Uniform(rng, 1 - aug.color_jitter, 1 + aug.color_jitter);

  tracking::CropWindow window = tracking::MakeWindow(detection_box, CropRole::kDetection);
  window.cx += dx;
  window.cy += dy;
  window.side *= scale;
  auto view = detection_frame;
  if (aug.color_jitter > 0) {
    view = (detection_frame * torch::tensor(gains, detection_frame.options()).view({3, 1, 1}))
               .clamp(0.0, 1.0);
  }
  s.detection_patch = tracking::CropPatch(view, window);
  s.detection_box = window.ToPatch(detection_box);

  if (keypoints) {
    std::vector<Keypoint> mapped;
    mapped.reserve(keypoints->size());
    for (const auto& kp : *keypoints) {
      Keypoint m{tcrop.window.ToPatchX(kp.x), tcrop.window.ToPatchY(kp.y), kp.visibility ? 1 : 0};
      if (m.x < 0 || m.y < 0 || m.x >= model::kTemplateSize || m.y >= model::kTemplateSize) {
        m.visibility = 0;
      }
      mapped.push_back(m);
    }
    s.keypoints = std::move(mapped);
  }
  return s;
}

KeypointIngest IngestKeypointImages(const fs::path& annotation_file, const fs::path& image_root,
                                    const AugmentConfig& aug, uint64_t seed) {
  std::ifstream is(annotation_file);
  if (!is) throw DataError("cannot open annotation file " + annotation_file.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed annotation file " + annotation_file.string() + ": " + e.what());
  }
  if (!doc.contains("images") || !doc.contains("annotations")) {
    throw DataError("annotation file lacks 'images' or 'annotations'");
  }

  std::map<int64_t, std::string> files;
  for (const auto& img : doc["images"]) {
    files[img.at("id").get<int64_t>()] = img.at("file_name").get<std::string>();
  }

  KeypointIngest out;
  std::mt19937_64 rng(seed);
  std::map<int64_t, torch::Tensor> cache;
  std::map<int64_t, bool> missing;
  for (const auto& ann : doc["annotations"]) {
    try {
      if (ann.value("iscrowd", 0) != 0) continue;
      const auto image_id = ann.at("image_id").get<int64_t>();
      const auto bbox = ann.at("bbox").get<std::vector<double>>();
      const auto raw = ann.at("keypoints").get<std::vector<double>>();
      if (bbox.size() != 4 || raw.size() != 3 * kNumKeypoints) {
        throw DataError("annotation " + ann.value("id", nlohmann::json(-1)).dump() +
                        " needs a 4-value bbox and " + std::to_string(3 * kNumKeypoints) +
                        " keypoint values");
      }
      if (!(bbox[2] > 0) || !(bbox[3] > 0)) {
        throw DataError("annotation with non-positive bbox size");
      }
      if (!files.contains(image_id)) {
        throw DataError("annotation refers to unknown image id " + std::to_string(image_id));
      }
      if (missing[image_id]) {
        ++out.missing_images;
        continue;
      }
      if (!cache.contains(image_id)) {
        const fs::path path = image_root / files[image_id];
        if (!fs::exists(path)) {
          log::Warn("missing keypoint image ", path.string());
          missing[image_id] = true;
          ++out.missing_images;
          continue;
        }
        cache[image_id] = image_io::ReadImage(path);
      }
      std::vector<Keypoint> kps;
      for (int k = 0; k < kNumKeypoints; ++k) {
        const double v = raw[3 * k + 2];
        kps.push_back({raw[3 * k], raw[3 * k + 1], v >= 1 ? 1 : 0});
      }
      const auto box = Box::FromXywh(bbox[0], bbox[1], bbox[2], bbox[3]);
      out.samples.push_back(
          MakePair(cache[image_id], box, cache[image_id], box, kps, aug, rng));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed keypoint annotation: ") + e.what());
    }
  }
  return out;
}

std::string ToString(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::pair<std::size_t, std::size_t> SplitCounts(std::size_t frames) {
  if (frames >= 900) return {800, 100};
  const std::size_t train = frames * 8 / 9;
  return {train, frames - train};
}

namespace {

std::vector<Box> ReadGroundTruth(const fs::path& file, std::size_t expected,
                                 const std::vector<fs::path>& frames) {
  std::ifstream is(file);
  if (!is) throw DataError("missing ground-truth file " + file.string());
  std::vector<Box> gt;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double x1, y1, x2, y2;
    if (!(ls >> x1 >> y1 >> x2 >> y2)) {
      throw DataError("malformed ground-truth line " + std::to_string(gt.size() + 1) + " in " +
                      file.string());
    }
    gt.push_back(Box::FromCorners(x1, y1, x2, y2));
  }
  if (gt.size() != expected) {
    const std::string frame =
        gt.size() < frames.size() ? frames[gt.size()].filename().string() : "<none>";
    throw DataError(file.string() + " has " + std::to_string(gt.size()) + " boxes for " +
                    std::to_string(expected) + " frames (first unmatched frame: " + frame + ")");
  }
  return gt;
}

std::vector<fs::path> SortedFiles(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<SequenceRecord> IngestSequences(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("sequence root " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<SequenceRecord> records;
  for (const auto& dir : dirs) {
    const auto frames = SortedFiles(dir / "frames");
    if (frames.empty()) throw DataError("sequence " + dir.string() + " has no frames");
    const auto gt = ReadGroundTruth(dir / "groundtruth.txt", frames.size(), frames);
    std::string tag;
    if (std::ifstream sf(dir / "split.txt"); sf) sf >> tag;

    SequenceRecord base;
    base.name = dir.filename().string();
    base.directory = dir;
    if (tag == "test") {
      base.split = Split::kTest;
      base.frames = frames;
      base.gt = gt;
      records.push_back(base);
      continue;
    }
    if (!tag.empty() && tag != "train") {
      throw DataError("unknown split tag '" + tag + "' in " + dir.string());
    }
    const auto [n_train, n_val] = SplitCounts(frames.size());
    SequenceRecord train = base;
    train.split = Split::kTrain;
    train.frames.assign(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(n_train));
    train.gt.assign(gt.begin(), gt.begin() + static_cast<std::ptrdiff_t>(n_train));
    records.push_back(train);
    if (n_val > 0) {
      SequenceRecord val = base;
      val.split = Split::kVal;
      val.first_index = static_cast<int>(n_train) + 1;
      const auto b = static_cast<std::ptrdiff_t>(n_train);
      const auto e = static_cast<std::ptrdiff_t>(n_train + n_val);
      val.frames.assign(frames.begin() + b, frames.begin() + e);
      val.gt.assign(gt.begin() + b, gt.begin() + e);
      records.push_back(val);
    }
  }
  return records;
}

LoadedSequence LoadSequence(const SequenceRecord& record) {
  LoadedSequence seq;
  seq.name = record.name;
  seq.split = record.split;
  seq.gt = record.gt;
  for (const auto& f : record.frames) seq.frames.push_back(image_io::ReadImage(f));

  const fs::path patch_dir = record.directory / "patch";
  if (fs::exists(patch_dir / "spec.json")) {
    std::ifstream is(patch_dir / "spec.json");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed patch spec in " + patch_dir.string() + ": " + e.what());
    }
    attack::PatchSpec spec;
    const auto r = j.at("region");
    spec.region = Box::FromCorners(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                                   r[3].get<double>());
    spec.first_frame_clean = j.value("first_frame_clean", true);
    spec.texture = image_io::ReadImage(patch_dir / "texture.png");
    const auto masks = SortedFiles(patch_dir / "masks");
    const auto first = static_cast<std::size_t>(record.first_index - 1);
    if (masks.size() < first + record.frames.size()) {
      throw DataError("patch masks missing for sequence " + record.name);
    }
    std::vector<torch::Tensor> picked;
    for (std::size_t i = 0; i < record.frames.size(); ++i) {
      picked.push_back(image_io::ReadMask(masks[first + i]));
    }
    spec.masks = torch::stack(picked);
    if (spec.first_frame_clean) spec.masks[0].fill_(false);
    spec.Validate();
    seq.patch = std::move(spec);
  }
  return seq;
}

std::vector<LoadedSequence> LoadSplit(const fs::path& root, Split split, int limit) {
  std::vector<LoadedSequence> out;
  for (const auto& r : IngestSequences(root)) {
    if (r.split != split) continue;
    if (limit >= 0 && static_cast<int>(out.size()) >= limit) break;
    out.push_back(LoadSequence(r));
  }
  return out;
}

}  // namespace skv::data
