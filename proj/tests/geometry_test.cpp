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
#include "support.hpp"

namespace {

using skv::geometry::Box;
namespace g = skv::geometry;

Box RandomIntBox(std::mt19937_64& rng, int extent) {
  std::uniform_int_distribution<int> pos(0, extent - 1);
  const int x1 = pos(rng), y1 = pos(rng);
  std::uniform_int_distribution<int> len(1, extent / 2);
  return Box::FromCorners(x1, y1, x1 + len(rng), y1 + len(rng));
}

Box RandomBox(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-50, 150), s(0.5, 80);
  return Box::FromCenter(c(rng), c(rng), s(rng), s(rng));
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("box corner conversions are exact inverses") {
  const auto b = Box::FromCorners(1.25, 2.5, 7.75, 10.0);
  CHECK(b.cx() == 4.5);
  CHECK(b.cy() == 6.25);
  CHECK(b.w() == 6.5);
  CHECK(b.h() == 7.5);
  const auto c = b.corners();
  CHECK(c.x1 == 1.25);
  CHECK(c.y1 == 2.5);
  CHECK(c.x2 == 7.75);
  CHECK(c.y2 == 10.0);
  CHECK(Box::FromXywh(1.25, 2.5, 6.5, 7.5) == b);
}

TEST_CASE("degenerate boxes are rejected") {
  CHECK_THROWS_AS(Box::FromCenter(0, 0, 0, 1), skv::ShapeError);
  CHECK_THROWS_AS(Box::FromCenter(0, 0, 1, -2), skv::ShapeError);
  CHECK_THROWS_AS(Box::FromCorners(5, 5, 5, 9), skv::ShapeError);
  CHECK_THROWS_AS(Box::FromCenter(NAN, 0, 1, 1), skv::ShapeError);
}

TEST_CASE("iou of identical, disjoint and overlapping boxes") {
  const auto a = Box::FromCorners(0, 0, 2, 2);
  CHECK(g::Iou(a, a) == 1.0);
  CHECK(g::Iou(a, Box::FromCorners(5, 5, 6, 6)) == 0.0);
  CHECK(g::Iou(a, Box::FromCorners(2, 0, 4, 2)) == 0.0);
  CHECK(g::Iou(a, Box::FromCorners(1, 1, 3, 3)) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("iou matches the rasterization oracle on integer boxes") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto a = RandomIntBox(rng, 40);
    const auto b = RandomIntBox(rng, 40);
    CHECK(std::abs(g::Iou(a, b) - skv::testing::RasterIou(a, b)) <= 1e-6);
  }
}

TEST_CASE("iou is symmetric and bounded") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const auto a = RandomBox(rng);
    const auto b = RandomBox(rng);
    const double ab = g::Iou(a, b);
    CHECK(ab == g::Iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(g::Iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("mean iou averages frames then sequences") {
  const auto a = Box::FromCorners(0, 0, 10, 10);
  std::vector<std::vector<Box>> pred{{a, a}};
  CHECK(g::MeanIou(pred, pred) == 1.0);

  // per-sequence means 0.4 and 0.8
  std::vector<std::vector<Box>> q{{Box::FromCorners(0, 0, 10, 4)}, {Box::FromCorners(0, 0, 10, 8)}};
  std::vector<std::vector<Box>> qgt{{a}, {a}};
  CHECK(g::MeanIou(q, qgt) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("mean iou equals a brute-force two-level mean") {
  std::mt19937_64 rng(3);
  std::vector<std::vector<Box>> pred(6), gt(6);
  double outer = 0;
  for (int s = 0; s < 6; ++s) {
    const int n = 1 + s * 3;
    double inner = 0;
    for (int t = 0; t < n; ++t) {
      pred[s].push_back(RandomBox(rng));
      gt[s].push_back(RandomBox(rng));
      inner += skv::geometry::Iou(pred[s].back(), gt[s].back());
    }
    outer += inner / n;
  }
  CHECK(g::MeanIou(pred, gt) == doctest::Approx(outer / 6).epsilon(1e-12));
}

TEST_CASE("mean iou rejects mismatched lengths") {
  const auto a = Box::FromCorners(0, 0, 1, 1);
  std::vector<std::vector<Box>> p{{a, a}}, q{{a}}, empty;
  CHECK_THROWS_AS(g::MeanIou(p, q), skv::ShapeError);
  std::vector<std::vector<Box>> two{{a}, {a}};
  CHECK_THROWS_AS(g::MeanIou(q, two), skv::ShapeError);
  CHECK_THROWS_AS(g::MeanIou(empty, empty), skv::ShapeError);
}

TEST_CASE("anchors: count, ratio shapes, equal areas and centered lattice") {
  const auto set = g::GenerateAnchors(17, 17, 8, g::kDefaultRatios, 64);
  CHECK(set.size() == 1445u);
  CHECK(set.num_ratios() == 5);
  const auto& unit = set.at(2, 8, 8);
  CHECK(unit.w() == doctest::Approx(64));
  CHECK(unit.h() == doctest::Approx(64));
  CHECK(unit.cx() == doctest::Approx(127.5));
  CHECK(unit.cy() == doctest::Approx(127.5));
  for (int r = 0; r < 5; ++r) {
    const auto& b = set.at(r, 3, 5);
    CHECK(b.area() == doctest::Approx(64.0 * 64.0).epsilon(1e-9));
    CHECK(b.h() / b.w() == doctest::Approx(g::kDefaultRatios[r]).epsilon(1e-9));
    CHECK(b.cx() == doctest::Approx(127.5 + (5 - 8) * 8));
    CHECK(b.cy() == doctest::Approx(127.5 + (3 - 8) * 8));
  }
  const double ratios[] = {0.5, 2.0};
  const auto two = g::GenerateAnchors(3, 3, 8, ratios, 40);
  CHECK(std::abs(two.boxes[0].area() - two.boxes[9].area()) <= 1e-6);
}

TEST_CASE("anchor generation rejects bad configuration") {
  const double ratios[] = {1.0};
  CHECK_THROWS_AS(g::GenerateAnchors(17, 17, 0, ratios, 64), skv::ConfigError);
  CHECK_THROWS_AS(g::GenerateAnchors(17, 17, 8, ratios, -1), skv::ConfigError);
  CHECK_THROWS_AS(g::GenerateAnchors(17, 17, 8, std::span<const double>{}, 64), skv::ConfigError);
}

TEST_CASE("delta encoding examples") {
  const auto a = Box::FromCenter(10, 10, 4, 4);
  const auto d0 = g::EncodeDeltas(a, a);
  CHECK(d0.dx == 0);
  CHECK(d0.dy == 0);
  CHECK(d0.dw == 0);
  CHECK(d0.dh == 0);
  const auto d = g::EncodeDeltas(a, Box::FromCenter(12, 10, 8, 4));
  CHECK(d.dx == doctest::Approx(0.5));
  CHECK(d.dy == doctest::Approx(0.0));
  CHECK(d.dw == doctest::Approx(std::log(2.0)));
  CHECK(d.dh == doctest::Approx(0.0));
}

TEST_CASE("delta round trip over random pairs") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto a = RandomBox(rng);
    const auto b = RandomBox(rng);
    const auto r = g::DecodeDeltas(a, g::EncodeDeltas(a, b));
    CHECK(std::abs(r.cx() - b.cx()) <= 1e-5);
    CHECK(std::abs(r.cy() - b.cy()) <= 1e-5);
    CHECK(std::abs(r.w() - b.w()) <= 1e-5);
    CHECK(std::abs(r.h() - b.h()) <= 1e-5);
  }
}

TEST_CASE("clip to frame keeps a valid box") {
  const auto c = g::ClipToFrame(Box::FromCorners(-10, -5, 20, 30), 16, 24).corners();
  CHECK(c.x1 == 0);
  CHECK(c.y1 == 0);
  CHECK(c.x2 == 16);
  CHECK(c.y2 == 24);
  const auto outside = g::ClipToFrame(Box::FromCorners(50, 50, 60, 60), 16, 24);
  CHECK(outside.w() > 0);
  CHECK(outside.h() > 0);
}

}  // TEST_SUITE
