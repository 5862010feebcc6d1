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

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "skelevision/data.hpp"
#include "skelevision/errors.hpp"
#include "skelevision/image_io.hpp"

namespace skv::data {

namespace fs = std::filesystem;

namespace {

struct Point {
  double x = 0, y = 0;
};

struct Segment {
  Point a, b;
  double radius = 1;
};

// COCO order: nose, eyes, ears, shoulders, elbows, wrists, hips, knees, ankles.
enum Joint : int {
  kNose = 0,
  kLeftShoulder = 5,
  kRightShoulder = 6,
  kLeftElbow = 7,
  kRightElbow = 8,
  kLeftWrist = 9,
  kRightWrist = 10,
  kLeftHip = 11,
  kRightHip = 12,
  kLeftKnee = 13,
  kRightKnee = 14,
  kLeftAnkle = 15,
  kRightAnkle = 16,
};

struct Figure {
  Point head;
  double head_radius = 1;
  std::vector<Segment> segments;
  std::array<Point, kNumKeypoints> joints{};
  std::array<bool, kNumKeypoints> labelled{};
};

Figure Pose(Point hip, double height, double phase) {
  Figure f;
  const double h = height;
  const double swing = 0.45 * std::sin(phase);
  const Point neck{hip.x, hip.y - 0.30 * h};
  f.head = {hip.x, hip.y - 0.42 * h};
  f.head_radius = 0.075 * h;

  auto at = [](Point p, double len, double angle) {
    return Point{p.x + len * std::sin(angle), p.y + len * std::cos(angle)};
  };
  const Point ls{neck.x + 0.07 * h, neck.y + 0.02 * h};
  const Point rs{neck.x - 0.07 * h, neck.y + 0.02 * h};
  const Point lh{hip.x + 0.05 * h, hip.y};
  const Point rh{hip.x - 0.05 * h, hip.y};
  const Point lk = at(lh, 0.23 * h, swing);
  const Point rk = at(rh, 0.23 * h, -swing);
  const Point la = at(lk, 0.22 * h, 0.5 * swing);
  const Point ra = at(rk, 0.22 * h, -0.5 * swing);
  const Point le = at(ls, 0.15 * h, 0.15 - 0.6 * swing);
  const Point re = at(rs, 0.15 * h, -0.15 + 0.6 * swing);
  const Point lw = at(le, 0.14 * h, 0.15 - 0.9 * swing);
  const Point rw = at(re, 0.14 * h, -0.15 + 0.9 * swing);

  const double limb = std::max(1.0, 0.0275 * h);
  const double torso = std::max(1.5, 0.055 * h);
  f.segments = {{neck, hip, torso}, {ls, rs, limb}, {lh, rh, limb},  {ls, le, limb},
                {le, lw, limb},     {rs, re, limb}, {re, rw, limb},  {lh, lk, limb},
                {lk, la, limb},     {rh, rk, limb}, {rk, ra, limb}};

  f.joints[kNose] = f.head;
  f.joints[kLeftShoulder] = ls;
  f.joints[kRightShoulder] = rs;
  f.joints[kLeftElbow] = le;
  f.joints[kRightElbow] = re;
  f.joints[kLeftWrist] = lw;
  f.joints[kRightWrist] = rw;
  f.joints[kLeftHip] = lh;
  f.joints[kRightHip] = rh;
  f.joints[kLeftKnee] = lk;
  f.joints[kRightKnee] = rk;
  f.joints[kLeftAnkle] = la;
  f.joints[kRightAnkle] = ra;
  f.labelled.fill(true);
  for (int k = 1; k <= 4; ++k) f.labelled[k] = false;  // eyes and ears
  return f;
}

double SegmentDistance(Point p, const Segment& s) {
  const double vx = s.b.x - s.a.x, vy = s.b.y - s.a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((p.x - s.a.x) * vx + (p.y - s.a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (s.a.x + t * vx), dy = p.y - (s.a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

struct Rendered {
  torch::Tensor image;
  torch::Tensor mask;  // [S, S] bool
  Box box;
  std::vector<Keypoint> keypoints;
};

using Color = std::array<float, 3>;

Rendered Render(const torch::Tensor& background, const Figure& fig, const Color& body,
                const Color& head) {
  const int64_t s = background.size(1);
  Rendered r;
  r.image = background.clone();
  r.mask = torch::zeros({s, s}, torch::kBool);
  auto img = r.image.accessor<float, 3>();
  auto mask = r.mask.accessor<bool, 2>();
  int64_t x_lo = s, y_lo = s, x_hi = -1, y_hi = -1;
  for (int64_t y = 0; y < s; ++y) {
    for (int64_t x = 0; x < s; ++x) {
      const Point p{x + 0.5, y + 0.5};
      const double hd = std::hypot(p.x - fig.head.x, p.y - fig.head.y);
      const Color* color = nullptr;
      if (hd <= fig.head_radius) {
        color = &head;
      } else {
        for (const auto& seg : fig.segments) {
          if (SegmentDistance(p, seg) <= seg.radius) {
            color = &body;
            break;
          }
        }
      }
      if (!color) continue;
      for (int c = 0; c < 3; ++c) img[c][y][x] = (*color)[static_cast<std::size_t>(c)];
      mask[y][x] = true;
      x_lo = std::min(x_lo, x);
      y_lo = std::min(y_lo, y);
      x_hi = std::max(x_hi, x);
      y_hi = std::max(y_hi, y);
    }
  }
  if (x_hi < 0) throw DataError("sprite rendered outside the frame");
  r.box = Box::FromCorners(static_cast<double>(x_lo), static_cast<double>(y_lo),
                           static_cast<double>(x_hi + 1), static_cast<double>(y_hi + 1));
  for (int k = 0; k < kNumKeypoints; ++k) {
    const auto& j = fig.joints[static_cast<std::size_t>(k)];
    const bool inside = j.x >= 0 && j.y >= 0 && j.x < static_cast<double>(s) &&
                        j.y < static_cast<double>(s);
    if (fig.labelled[static_cast<std::size_t>(k)] && inside) {
      r.keypoints.push_back({j.x, j.y, 1});
    } else {
      r.keypoints.push_back({0.0, 0.0, 0});
    }
  }
  return r;
}

double Uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Values are rounded to multiples of 1/255 and kept inside [0.12, 0.78], away
// from the saturated sprite colors.
torch::Tensor Background(std::mt19937_64& rng, int64_t s) {
  const auto ys = torch::arange(s, torch::kFloat64).view({s, 1});
  const auto xs = torch::arange(s, torch::kFloat64).view({1, s});
  auto bg = torch::empty({3, s, s}, torch::kFloat64);
  for (int c = 0; c < 3; ++c) bg[c].fill_(Uniform(rng, 0.3, 0.6));
  for (int g = 0; g < 3; ++g) {
    const double fx = Uniform(rng, -0.15, 0.15), fy = Uniform(rng, -0.15, 0.15);
    const double phase = Uniform(rng, 0, 2 * M_PI);
    const auto wave = torch::sin(xs * fx + ys * fy + phase);
    for (int c = 0; c < 3; ++c) bg[c] += Uniform(rng, 0.0, 0.09) * wave;
  }
  std::vector<double> noise(static_cast<std::size_t>(3 * s * s));
  for (auto& v : noise) v = Uniform(rng, -0.03, 0.03);
  bg += torch::tensor(noise, torch::kFloat64).view({3, s, s});
  return (bg.clamp(0.12, 0.78) * 255.0).round().div(255.0).to(torch::kFloat32);
}

Color PickColor(std::mt19937_64& rng, bool head) {
  static const Color kBody[] = {{1.0f, 0.0f, 0.0f}, {0.0f, 1.0f, 0.0f}, {1.0f, 1.0f, 0.0f},
                                {0.0f, 0.0f, 1.0f}, {1.0f, 0.0f, 1.0f}, {0.0f, 1.0f, 1.0f}};
  static const Color kHead[] = {{1.0f, 200.0f / 255, 160.0f / 255}, {1.0f, 1.0f, 1.0f}};
  if (head) return kHead[std::uniform_int_distribution<int>(0, 1)(rng)];
  return kBody[std::uniform_int_distribution<int>(0, 5)(rng)];
}

SyntheticSequence MakeSequence(uint64_t seed, const std::string& name, Split split, int frames,
                               int64_t s) {
  std::mt19937_64 rng(seed);
  SyntheticSequence seq;
  seq.name = name;
  seq.split = split;
  seq.background = Background(rng, s);
  const Color body = PickColor(rng, false);
  const Color head = PickColor(rng, true);
  const double sd = static_cast<double>(s);
  const double height = sd * Uniform(rng, 0.28, 0.38);
  const double breathe = Uniform(rng, 20.0, 40.0);
  double x = sd * Uniform(rng, 0.25, 0.75), y = sd * Uniform(rng, 0.5, 0.58);
  double vx = Uniform(rng, -1.5, 1.5), vy = Uniform(rng, -0.5, 0.5);
  double phase = Uniform(rng, 0, 2 * M_PI);
  std::normal_distribution<double> kick(0.0, 0.6);

  // Static backdrop patch spanning the band the figure walks in.
  const double rw = std::round(sd * Uniform(rng, 0.55, 0.75));
  const double rh = std::round(sd * Uniform(rng, 0.45, 0.6));
  const double rx = std::round(Uniform(rng, 0.05 * sd, 0.95 * sd - rw));
  const double ry = std::round(Uniform(rng, 0.2 * sd, std::min(0.5 * sd, 0.95 * sd - rh)));
  seq.patch.region = Box::FromXywh(rx, ry, rw, rh);
  seq.patch.first_frame_clean = true;
  const auto rect = attack::CoveredPixels(seq.patch.region, s, s);
  auto region_mask = torch::zeros({s, s}, torch::kBool);
  region_mask.slice(0, rect.y0, rect.y1).slice(1, rect.x0, rect.x1).fill_(true);
  seq.patch.texture =
      seq.background.slice(1, rect.y0, rect.y1).slice(2, rect.x0, rect.x1).clone();

  std::vector<torch::Tensor> masks;
  for (int t = 0; t < frames; ++t) {
    const double scale = 1.0 + 0.08 * std::sin(2 * M_PI * t / breathe);
    const auto fig = Pose({x, y}, height * scale, phase);
    auto r = Render(seq.background, fig, body, head);
    seq.frames.push_back(r.image);
    seq.gt.push_back(r.box);
    seq.keypoints.push_back(r.keypoints);
    masks.push_back(t == 0 ? torch::zeros({s, s}, torch::kBool) : (region_mask & ~r.mask));

    vx = std::clamp(0.9 * vx + kick(rng), -2.5, 2.5);
    vy = std::clamp(0.9 * vy + 0.3 * kick(rng), -0.8, 0.8);
    x += vx;
    y += vy;
    if (x < 0.15 * sd || x > 0.85 * sd) {
      vx = -vx;
      x = std::clamp(x, 0.15 * sd, 0.85 * sd);
    }
    if (y < 0.45 * sd || y > 0.62 * sd) {
      vy = -vy;
      y = std::clamp(y, 0.45 * sd, 0.62 * sd);
    }
    phase += 0.25 + 0.1 * std::abs(vx);
  }
  seq.patch.masks = torch::stack(masks);
  return seq;
}

KeypointStill MakeStill(uint64_t seed, int64_t s) {
  std::mt19937_64 rng(seed);
  const auto bg = Background(rng, s);
  const Color body = PickColor(rng, false);
  const Color head = PickColor(rng, true);
  const double sd = static_cast<double>(s);
  const double height = sd * Uniform(rng, 0.28, 0.42);
  const Point hip{sd * Uniform(rng, 0.25, 0.75), sd * Uniform(rng, 0.5, 0.58)};
  const auto r = Render(bg, Pose(hip, height, Uniform(rng, 0, 2 * M_PI)), body, head);
  return {r.image, r.box, r.keypoints};
}

std::string FrameName(std::size_t i) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << i + 1 << ".png";
  return os.str();
}

}  // namespace

SynthDataset SynthSpriteDataset(const SynthConfig& cfg) {
  if (cfg.frame_size < 64) throw ConfigError("synthetic frame size must be at least 64");
  if (cfg.frames_per_seq < 2 || cfg.test_frames_per_seq < 2) {
    throw ConfigError("synthetic sequences need at least two frames");
  }
  if (cfg.n_sequences < 0 || cfg.n_test_sequences < 0 || cfg.n_stills < 0) {
    throw ConfigError("synthetic dataset counts must be non-negative");
  }
  std::mt19937_64 master(cfg.seed);
  SynthDataset ds;
  auto name = [](const char* prefix, int i) {
    std::ostringstream os;
    os << prefix << std::setw(3) << std::setfill('0') << i;
    return os.str();
  };
  for (int i = 0; i < cfg.n_sequences; ++i) {
    ds.sequences.push_back(MakeSequence(master(), name("synth_", i), Split::kTrain,
                                        cfg.frames_per_seq, cfg.frame_size));
  }
  for (int i = 0; i < cfg.n_test_sequences; ++i) {
    ds.sequences.push_back(MakeSequence(master(), name("synth_test_", i), Split::kTest,
                                        cfg.test_frames_per_seq, cfg.frame_size));
  }
  for (int i = 0; i < cfg.n_stills; ++i) ds.stills.push_back(MakeStill(master(), cfg.frame_size));
  return ds;
}

void WriteDataset(const SynthDataset& ds, const fs::path& root) {
  for (const auto& seq : ds.sequences) {
    const fs::path dir = root / "sequences" / seq.name;
    fs::create_directories(dir / "frames");
    std::ofstream gt(dir / "groundtruth.txt");
    gt << std::setprecision(17);
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      image_io::WriteImage(dir / "frames" / FrameName(t), seq.frames[t]);
      const auto c = seq.gt[t].corners();
      gt << c.x1 << ',' << c.y1 << ',' << c.x2 << ',' << c.y2 << '\n';
    }
    std::ofstream(dir / "split.txt") << ToString(seq.split == Split::kTest ? Split::kTest
                                                                            : Split::kTrain)
                                     << '\n';
    const auto c = seq.patch.region.corners();
    nlohmann::json spec = {{"region", {c.x1, c.y1, c.x2, c.y2}},
                           {"first_frame_clean", seq.patch.first_frame_clean}};
    fs::create_directories(dir / "patch" / "masks");
    std::ofstream(dir / "patch" / "spec.json") << spec.dump(2) << '\n';
    image_io::WriteImage(dir / "patch" / "texture.png", seq.patch.texture);
    for (int64_t t = 0; t < seq.patch.masks.size(0); ++t) {
      image_io::WriteMask(dir / "patch" / "masks" / FrameName(static_cast<std::size_t>(t)),
                          seq.patch.masks[t]);
    }
  }

  const fs::path kdir = root / "keypoints";
  fs::create_directories(kdir / "images");
  nlohmann::json images = nlohmann::json::array();
  nlohmann::json annotations = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.stills.size(); ++i) {
    const auto& still = ds.stills[i];
    image_io::WriteImage(kdir / "images" / FrameName(i), still.image);
    images.push_back({{"id", i + 1},
                      {"file_name", FrameName(i)},
                      {"width", still.image.size(2)},
                      {"height", still.image.size(1)}});
    std::vector<double> kps;
    int labelled = 0;
    for (const auto& kp : still.keypoints) {
      kps.insert(kps.end(), {kp.x, kp.y, kp.visibility ? 2.0 : 0.0});
      labelled += kp.visibility ? 1 : 0;
    }
    const auto c = still.bbox.corners();
    annotations.push_back({{"id", i + 1},
                           {"image_id", i + 1},
                           {"category_id", 1},
                           {"bbox", {c.x1, c.y1, still.bbox.w(), still.bbox.h()}},
                           {"keypoints", kps},
                           {"num_keypoints", labelled},
                           {"iscrowd", 0}});
  }
  nlohmann::json doc = {
      {"images", images},
      {"annotations", annotations},
      {"categories",
       {{{"id", 1},
         {"name", "person"},
         {"keypoints",
          {"nose", "left_eye", "right_eye", "left_ear", "right_ear", "left_shoulder",
           "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hip",
           "right_hip", "left_knee", "right_knee", "left_ankle", "right_ankle"}}}}}};
  std::ofstream(kdir / "annotations.json") << doc.dump() << '\n';
}

}  // namespace skv::data
