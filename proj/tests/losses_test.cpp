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

#include "doctest.h"

#include <cmath>
#include <random>

#include "skelevision/errors.hpp"
#include "skelevision/geometry.hpp"
#include "skelevision/losses.hpp"
#include "support.hpp"

namespace {

namespace g = skv::geometry;
namespace l = skv::losses;
using g::Box;
using l::AnchorLabel;

constexpr int kGrid = 17;
constexpr int kAnchors = 5;
constexpr int kCount = kGrid * kGrid * kAnchors;

g::AnchorSet Anchors() { return g::GenerateAnchors(kGrid, kGrid, 8, g::kDefaultRatios, 64); }

l::AnchorTargets RandomTargets(std::mt19937_64& rng, double p_pos = 0.02, double p_neg = 0.05) {
  l::AnchorTargets t;
  t.label.assign(kCount, AnchorLabel::kIgnore);
  t.reg_target.resize(kCount);
  std::uniform_real_distribution<double> u(0, 1), d(-1.5, 1.5);
  for (int n = 0; n < kCount; ++n) {
    const double r = u(rng);
    if (r < p_pos) {
      t.label[n] = AnchorLabel::kPositive;
      t.reg_target[n] = {d(rng), d(rng), d(rng), d(rng)};
      ++t.pos_count;
    } else if (r < p_pos + p_neg) {
      t.label[n] = AnchorLabel::kNegative;
      ++t.neg_count;
    }
  }
  return t;
}

// (anchor, row, col) of a flat anchor index.
struct Cell {
  int a, r, c;
};
Cell Locate(int n) { return {n / (kGrid * kGrid), (n / kGrid) % kGrid, n % kGrid}; }

double SmoothL1(double u) { return std::abs(u) < 1 ? 0.5 * u * u : std::abs(u) - 0.5; }

double ClsOracle(const torch::Tensor& logits, const std::vector<l::AnchorTargets>& targets) {
  auto acc = logits.accessor<double, 4>();
  double sum = 0;
  int count = 0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    for (int n = 0; n < kCount; ++n) {
      if (targets[b].label[n] == AnchorLabel::kIgnore) continue;
      const auto [a, r, c] = Locate(n);
      const double bg = acc[b][2 * a][r][c];
      const double fg = acc[b][2 * a + 1][r][c];
      const double lse = std::max(bg, fg) + std::log(std::exp(bg - std::max(bg, fg)) + std::exp(fg - std::max(bg, fg)));
      sum += lse - (targets[b].label[n] == AnchorLabel::kPositive ? fg : bg);
      ++count;
    }
  }
  return sum / count;
}

double RegOracle(const torch::Tensor& deltas, const std::vector<l::AnchorTargets>& targets) {
  auto acc = deltas.accessor<double, 4>();
  double sum = 0;
  int count = 0;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    for (int n = 0; n < kCount; ++n) {
      if (targets[b].label[n] != AnchorLabel::kPositive) continue;
      const auto [a, r, c] = Locate(n);
      const auto& t = targets[b].reg_target[n];
      const double target[4] = {t.dx, t.dy, t.dw, t.dh};
      for (int k = 0; k < 4; ++k) sum += SmoothL1(acc[b][4 * a + k][r][c] - target[k]);
      ++count;
    }
  }
  return count == 0 ? 0.0 : sum / count;
}

std::vector<l::Keypoint> Invisible(int k = 17) { return std::vector<l::Keypoint>(k); }

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("gt equal to an anchor makes it positive with zero deltas") {
  const auto anchors = Anchors();
  std::mt19937_64 rng(0);
  const auto idx = anchors.Index(2, 8, 8);
  const auto t = l::AssignAnchorTargets(anchors, anchors.boxes[idx], {}, rng);
  CHECK(t.label[idx] == AnchorLabel::kPositive);
  CHECK(t.reg_target[idx].dx == 0);
  CHECK(t.reg_target[idx].dy == 0);
  CHECK(t.reg_target[idx].dw == 0);
  CHECK(t.reg_target[idx].dh == 0);
}

TEST_CASE("gt disjoint from every anchor forces exactly the best anchor positive") {
  const auto anchors = Anchors();
  std::mt19937_64 rng(0);
  const auto gt = Box::FromCorners(400, 400, 410, 410);
  const auto t = l::AssignAnchorTargets(anchors, gt, {}, rng);
  CHECK(t.pos_count == 1);
  std::size_t best = 0;
  for (std::size_t i = 1; i < anchors.size(); ++i) {
    if (g::Iou(anchors.boxes[i], gt) > g::Iou(anchors.boxes[best], gt)) best = i;
  }
  CHECK(t.label[best] == AnchorLabel::kPositive);
}

TEST_CASE("anchor labels agree with a brute-force threshold scan") {
  const auto anchors = Anchors();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> c(60, 195), s(20, 110);
  const l::AnchorThresholds thr;
  for (int trial = 0; trial < 50; ++trial) {
    const auto gt = Box::FromCenter(c(rng), c(rng), s(rng), s(rng));
    const auto t = l::AssignAnchorTargets(anchors, gt, thr, rng);
    std::vector<double> ious(anchors.size());
    int above = 0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      ious[i] = g::Iou(anchors.boxes[i], gt);
      above += ious[i] >= thr.pos;
    }
    int pos = 0, neg = 0;
    double min_pos = 2, max_skipped = -1;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      if (t.label[i] == AnchorLabel::kPositive) {
        ++pos;
        min_pos = std::min(min_pos, ious[i]);
        if (above > 0) CHECK(ious[i] >= thr.pos);
        const auto d = g::EncodeDeltas(anchors.boxes[i], gt);
        CHECK(t.reg_target[i].dx == doctest::Approx(d.dx));
        CHECK(t.reg_target[i].dw == doctest::Approx(d.dw));
      } else if (t.label[i] == AnchorLabel::kNegative) {
        ++neg;
        CHECK(ious[i] <= thr.neg);
      } else if (ious[i] >= thr.pos) {
        max_skipped = std::max(max_skipped, ious[i]);
      }
    }
    CHECK(pos == t.pos_count);
    CHECK(neg == t.neg_count);
    CHECK(pos == std::clamp(above, 1, thr.pos_cap));
    CHECK(neg <= thr.neg_cap);
    // capped positives keep the highest IoUs
    CHECK(max_skipped <= min_pos);
  }
}

TEST_CASE("cls loss: uniform logits give ln 2, confident logits approach 0") {
  std::mt19937_64 rng(1);
  const std::vector<l::AnchorTargets> targets{RandomTargets(rng)};
  const auto zero = torch::zeros({1, 10, kGrid, kGrid}, torch::kFloat64);
  CHECK(l::ClsLoss(zero, targets).item<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  auto confident = torch::zeros({1, 10, kGrid, kGrid}, torch::kFloat64);
  auto acc = confident.accessor<double, 4>();
  for (int n = 0; n < kCount; ++n) {
    const auto [a, r, c] = Locate(n);
    const bool pos = targets[0].label[n] == AnchorLabel::kPositive;
    acc[0][2 * a + (pos ? 1 : 0)][r][c] = 40.0;
  }
  CHECK(l::ClsLoss(confident, targets).item<double>() < 1e-12);
}

TEST_CASE("cls and reg losses match scalar recomputation") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<l::AnchorTargets> targets{RandomTargets(rng), RandomTargets(rng)};
    const auto logits = torch::randn({2, 10, kGrid, kGrid}, torch::kFloat64) * 3;
    const auto deltas = torch::randn({2, 20, kGrid, kGrid}, torch::kFloat64) * 2;
    CHECK(std::abs(l::ClsLoss(logits, targets).item<double>() - ClsOracle(logits, targets)) <= 1e-6);
    CHECK(std::abs(l::RegLoss(deltas, targets).item<double>() - RegOracle(deltas, targets)) <= 1e-6);
  }
}

TEST_CASE("cls loss with every anchor ignored is an error") {
  l::AnchorTargets t;
  t.label.assign(kCount, AnchorLabel::kIgnore);
  t.reg_target.resize(kCount);
  const std::vector<l::AnchorTargets> targets{t};
  CHECK_THROWS_AS(l::ClsLoss(torch::zeros({1, 10, kGrid, kGrid}), targets), skv::DataError);
}

TEST_CASE("reg loss piecewise values and gradient continuity") {
  l::AnchorTargets t;
  t.label.assign(kCount, AnchorLabel::kIgnore);
  t.reg_target.resize(kCount);
  t.label[7] = AnchorLabel::kPositive;
  t.pos_count = 1;
  const std::vector<l::AnchorTargets> targets{t};
  auto deltas = torch::zeros({1, 20, kGrid, kGrid}, torch::kFloat64);
  CHECK(l::RegLoss(deltas, targets).item<double>() == 0.0);
  const auto [a, r, c] = Locate(7);
  deltas[0][4 * a][r][c] = 2.0;
  CHECK(l::RegLoss(deltas, targets).item<double>() == doctest::Approx(1.5));
  for (double u : {1.0, -1.0}) {
    auto d = torch::zeros({1, 20, kGrid, kGrid}, torch::kFloat64);
    d[0][4 * a + 1][r][c] = u;
    d.requires_grad_(true);
    l::RegLoss(d, targets).backward();
    CHECK(std::abs(d.grad()[0][4 * a + 1][r][c].item<double>()) == doctest::Approx(1.0));
  }
  l::AnchorTargets none;
  none.label.assign(kCount, AnchorLabel::kNegative);
  none.reg_target.resize(kCount);
  const std::vector<l::AnchorTargets> no_pos{none};
  auto d = torch::randn({1, 20, kGrid, kGrid}, torch::kFloat64).requires_grad_(true);
  const auto zero = l::RegLoss(d, no_pos);
  CHECK(zero.item<double>() == 0.0);
  CHECK(zero.requires_grad());
}

TEST_CASE("tracking loss weights") {
  const auto cls = torch::tensor(0.5, torch::kFloat64);
  const auto reg = torch::tensor(0.25, torch::kFloat64);
  CHECK(l::TrkLoss(cls, reg, {1.0, 0.0, 0.0}).item<double>() == 0.5);
  CHECK(l::TrkLoss(cls, reg, {0.0, 1.0, 0.0}).item<double>() == 0.25);
  CHECK(l::TrkLoss(cls, reg, {1.0, 1.2, 0.0}).item<double>() == doctest::Approx(0.8));
  CHECK_THROWS_AS(l::TrkLoss(cls, reg, {-1.0, 1.0, 0.0}), skv::ConfigError);
}

TEST_CASE("multi-task loss reduces to the tracking loss at lambda_k = 0") {
  const auto trk = torch::tensor(1.0, torch::kFloat64);
  const auto kpt = torch::tensor(std::log(2.0), torch::kFloat64);
  const auto same = l::MtlLoss(trk, kpt, {1.0, 1.2, 0.0});
  CHECK(same.is_same(trk));
  CHECK(l::MtlLoss(trk, kpt, {1.0, 1.2, 1.0}).item<double>() == doctest::Approx(1.0 + std::log(2.0)));
  double prev = -1;
  for (double lk : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    const double v = l::MtlLoss(trk, kpt, {1.0, 1.2, lk}).item<double>();
    CHECK(v > prev);
    prev = v;
  }
  CHECK_THROWS_AS(l::MtlLoss(trk, kpt, {1.0, 1.2, -0.1}), skv::ConfigError);
}

TEST_CASE("keypoint targets: disks, clipping and visibility") {
  auto none = l::MakeKeypointTarget(Invisible());
  CHECK(none.target_map.sum().item<float>() == 0);
  CHECK(none.target_map.sizes() == torch::IntArrayRef({17, 127, 127}));

  auto kps = Invisible();
  kps[0] = {63.5, 63.5, 1};
  const auto single = l::MakeKeypointTarget(kps, 0);
  CHECK(single.target_map[0].sum().item<float>() == 1);
  CHECK(single.target_map[0][63][63].item<float>() == 1);
  CHECK(single.visibility[0] == 1);
  CHECK(single.visibility[1] == 0);

  kps[0] = {3, 3, 1};
  const auto disk = l::MakeKeypointTarget(kps, 2);
  CHECK(disk.target_map[0].sum().item<float>() == 13);

  // disk oracle near a corner: integer offsets with dx^2 + dy^2 <= r^2 inside the map
  kps[0] = {0.5, 1.5, 1};
  const auto clipped = l::MakeKeypointTarget(kps, 2);
  int expected = 0;
  for (int dy = -2; dy <= 2; ++dy) {
    for (int dx = -2; dx <= 2; ++dx) {
      if (dx * dx + dy * dy <= 4 && dx >= 0 && 1 + dy >= 0) ++expected;
    }
  }
  CHECK(clipped.target_map[0].sum().item<float>() == expected);

  kps[0] = {-30, 50, 1};
  const auto outside = l::MakeKeypointTarget(kps, 2);
  CHECK(outside.visibility[0] == 0);
  CHECK(outside.target_map[0].sum().item<float>() == 0);
}

TEST_CASE("keypoint loss: ln 2 at zero logits and scalar oracle on random cases") {
  auto kps = Invisible();
  kps[0] = {30, 40, 1};
  kps[5] = {90, 20, 1};
  kps[16] = {64, 100, 1};
  const auto target = l::MakeKeypointTarget(kps);
  CHECK(l::KptLoss(torch::zeros({1, 17, 127, 127}, torch::kFloat64), target).item<double>() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const auto logits = torch::randn({1, 17, 127, 127}, torch::kFloat64) * 2;
  auto acc = logits.accessor<double, 4>();
  auto tacc = target.target_map.accessor<float, 3>();
  double sum = 0;
  long count = 0;
  for (int k = 0; k < 17; ++k) {
    if (!target.visibility[k]) continue;
    for (int y = 0; y < 127; ++y) {
      for (int x = 0; x < 127; ++x) {
        const double z = acc[0][k][y][x];
        const double t = tacc[k][y][x];
        sum += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
        ++count;
      }
    }
  }
  CHECK(std::abs(l::KptLoss(logits, target).item<double>() - sum / count) <= 1e-6);
}

TEST_CASE("invisible keypoint channels contribute zero loss and zero gradient") {
  auto kps = Invisible();
  kps[3] = {50, 60, 1};
  const auto target = l::MakeKeypointTarget(kps);
  auto logits = torch::randn({1, 17, 127, 127}, torch::kFloat64).requires_grad_(true);
  const auto loss = l::KptLoss(logits, target);
  loss.backward();
  const auto grad = logits.grad();
  for (int k = 0; k < 17; ++k) {
    if (k == 3) {
      CHECK(grad[0][k].abs().sum().item<double>() > 0);
    } else {
      CHECK(grad[0][k].abs().max().item<double>() == 0.0);
    }
  }
  torch::NoGradGuard no_grad;
  auto changed = logits.detach().clone();
  changed.index_put_({0, torch::indexing::Slice(4, 17)}, torch::randn({13, 127, 127}, torch::kFloat64) * 50);
  CHECK(l::KptLoss(changed, target).item<double>() == loss.item<double>());
}

TEST_CASE("keypoint loss with nothing visible is a detached zero") {
  const std::vector<std::optional<l::KeypointTarget>> targets{l::MakeKeypointTarget(Invisible()),
                                                             std::nullopt};
  auto logits = torch::randn({2, 17, 127, 127}).requires_grad_(true);
  const auto loss = l::KptLoss(logits, targets);
  CHECK(loss.item<float>() == 0);
  CHECK_FALSE(loss.requires_grad());
}

TEST_CASE("loss gradients match central finite differences") {
  std::mt19937_64 rng(9);
  torch::manual_seed(9);
  const std::vector<l::AnchorTargets> targets{RandomTargets(rng, 0.05, 0.1)};
  auto kps = Invisible();
  kps[0] = {30, 40, 1};
  kps[9] = {70, 80, 1};
  const auto target = l::MakeKeypointTarget(kps);
  for (int draw = 0; draw < 5; ++draw) {
    const auto logits = torch::randn({1, 10, kGrid, kGrid}, torch::kFloat64);
    const auto deltas = torch::randn({1, 20, kGrid, kGrid}, torch::kFloat64) * 2;
    const auto kl = torch::randn({1, 17, 127, 127}, torch::kFloat64);
    const auto cls = skv::testing::CheckDirection(
        [&](const torch::Tensor& x) { return l::ClsLoss(x, targets); }, logits,
        torch::randn_like(logits));
    const auto reg = skv::testing::CheckDirection(
        [&](const torch::Tensor& x) { return l::RegLoss(x, targets); }, deltas,
        torch::randn_like(deltas));
    const auto kpt = skv::testing::CheckDirection(
        [&](const torch::Tensor& x) { return l::KptLoss(x, target); }, kl, torch::randn_like(kl));
    CHECK(cls.error() <= 1e-3);
    CHECK(reg.error() <= 1e-3);
    CHECK(kpt.error() <= 1e-3);
  }
}

}  // TEST_SUITE
