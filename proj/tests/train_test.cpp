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
#include <fstream>
#include <map>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "skelevision/checkpoint.hpp"
#include "skelevision/data.hpp"
#include "skelevision/errors.hpp"
#include "skelevision/model.hpp"
#include "skelevision/train.hpp"
#include "support.hpp"

namespace {

namespace t = skv::train;
namespace d = skv::data;
namespace fs = std::filesystem;

using Params = std::map<std::string, torch::Tensor>;

Params Snapshot(skv::model::SiamRpn& net) {
  Params p;
  for (const auto& kv : net->named_parameters()) p[kv.key()] = kv.value().detach().clone();
  return p;
}

bool SameTensors(const Params& a, const Params& b, const std::string& prefix = "") {
  for (const auto& [k, v] : a) {
    if (k.rfind(prefix, 0) != 0) continue;
    if (!b.contains(k) || !torch::equal(v, b.at(k))) return false;
  }
  return true;
}

const t::TrainData& SmallData() {
  static const t::TrainData data = [] {
    d::SynthConfig c;
    c.seed = 8;
    c.n_sequences = 2;
    c.n_test_sequences = 0;
    c.frames_per_seq = 18;
    c.frame_size = 96;
    c.n_stills = 10;
    const auto ds = d::SynthSpriteDataset(c);
    auto out = skv::testing::ToTrainData(ds);
    std::mt19937_64 rng(4);
    for (std::size_t i = 0; i < ds.stills.size(); ++i) {
      const auto& s = ds.stills[i];
      auto sample = d::MakePair(s.image, s.bbox, s.image, s.bbox, s.keypoints, {}, rng);
      (i < 8 ? out.keypoint_train : out.keypoint_val).push_back(std::move(sample));
    }
    return out;
  }();
  return data;
}

t::TrainConfig QuickConfig(t::Mode mode, double lambda_k) {
  t::TrainConfig cfg;
  cfg.mode = mode;
  cfg.lambda_k = lambda_k;
  cfg.model.backbone = skv::model::BackboneConfig::Tiny(8);
  cfg.epochs = 2;
  cfg.video_pairs_per_epoch = 8;
  cfg.image_ratio = 0.5;
  cfg.batch_size = 4;
  cfg.val_pairs = 4;
  cfg.seed = 5;
  cfg.data_tag = "small";
  return cfg;
}

struct Trace {
  std::vector<double> losses;
  std::vector<Params> params;
};

Trace Run(const t::TrainConfig& cfg, const fs::path& dir, t::RunRecord* record = nullptr) {
  Trace tr;
  auto rec = t::Train(cfg, SmallData(), dir, [&](int, int, double loss, skv::model::SiamRpn& net) {
    tr.losses.push_back(loss);
    tr.params.push_back(Snapshot(net));
  });
  if (record) *record = rec;
  return tr;
}

}  // namespace

TEST_SUITE("train") {
  TEST_CASE("configuration checks") {
    CHECK(t::ParseMode("stl") == t::Mode::kStl);
    CHECK(t::ParseMode("kpt-pretrain") == t::Mode::kKptPretrain);
    CHECK(t::ToString(t::Mode::kMtl) == "mtl");
    CHECK_THROWS_AS(t::ParseMode("joint"), skv::ConfigError);
    auto cfg = QuickConfig(t::Mode::kStl, 0.5);
    CHECK_THROWS_AS(cfg.Validate(), skv::ConfigError);
    cfg = QuickConfig(t::Mode::kMtl, 0.2);
    cfg.lr = 0;
    CHECK_THROWS_AS(cfg.Validate(), skv::ConfigError);
    cfg = QuickConfig(t::Mode::kMtl, 0.2);
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.Validate(), skv::ConfigError);
    // The digest follows every field.
    auto a = QuickConfig(t::Mode::kMtl, 0.2), b = a;
    CHECK(a.Digest() == b.Digest());
    b.lambda_k = 0.4;
    CHECK(a.Digest() != b.Digest());
    b = a;
    b.data_tag = "other";
    CHECK(a.Digest() != b.Digest());
  }

  TEST_CASE("epoch selection") {
    std::vector<t::EpochRecord> e{{1, 1.0, 0.9, 0.5}, {2, 0.8, 0.5, 0.7}, {3, 0.7, 0.6, 0.7},
                                  {4, 0.6, 0.4, 0.6}};
    CHECK(t::SelectEpoch(t::Mode::kMtl, e) == 2);
    CHECK(t::SelectEpoch(t::Mode::kStl, e) == 2);
    CHECK(t::SelectEpoch(t::Mode::kKptPretrain, e) == 4);
  }

  TEST_CASE("single-task and zero-weight multi-task runs coincide") {
    skv::testing::TempDir dir("stl_mtl");
    const auto stl = Run(QuickConfig(t::Mode::kStl, 0), dir.path() / "stl");
    const auto mtl = Run(QuickConfig(t::Mode::kMtl, 0), dir.path() / "mtl");
    REQUIRE(stl.losses.size() == mtl.losses.size());
    REQUIRE(!stl.losses.empty());
    CHECK(stl.losses == mtl.losses);
    for (std::size_t i = 0; i < stl.params.size(); ++i) {
      CHECK(SameTensors(stl.params[i], mtl.params[i], "backbone."));
      CHECK(SameTensors(stl.params[i], mtl.params[i], "rpn."));
    }
  }

  TEST_CASE("multi-task training moves the keypoint head") {
    skv::testing::TempDir dir("mtl");
    auto fresh = skv::model::MakeModel(QuickConfig(t::Mode::kMtl, 0.5).model, 5);
    const auto init = Snapshot(fresh);
    const auto mtl = Run(QuickConfig(t::Mode::kMtl, 0.5), dir.path());
    CHECK_FALSE(SameTensors(init, mtl.params.back(), "keypoint_head."));
    CHECK_FALSE(SameTensors(init, mtl.params.back(), "backbone."));
  }

  TEST_CASE("keypoint pretraining freezes the backbone") {
    skv::testing::TempDir dir("pretrain");
    auto cfg = QuickConfig(t::Mode::kKptPretrain, 1.0);
    auto fresh = skv::model::MakeModel(cfg.model, cfg.seed);
    const auto init = Snapshot(fresh);
    t::RunRecord rec;
    const auto run = Run(cfg, dir.path(), &rec);
    REQUIRE(!run.params.empty());
    CHECK(SameTensors(init, run.params.back(), "backbone."));
    CHECK(SameTensors(init, run.params.back(), "rpn."));
    CHECK_FALSE(SameTensors(init, run.params.back(), "keypoint_head."));
    // Selection uses validation loss.
    double best = 1e300;
    int want = 0;
    for (const auto& e : rec.epochs) {
      if (e.val_loss < best) best = e.val_loss, want = e.epoch;
    }
    CHECK(rec.selected_epoch == want);
  }

  TEST_CASE("training is deterministic and its record reloads") {
    skv::testing::TempDir dir("determinism");
    const auto cfg = QuickConfig(t::Mode::kMtl, 0.2);
    t::RunRecord rec;
    const auto a = Run(cfg, dir.path() / "a", &rec);
    const auto b = Run(cfg, dir.path() / "b");
    REQUIRE(a.losses.size() == b.losses.size());
    for (std::size_t i = 0; i < a.losses.size(); ++i) CHECK(std::abs(a.losses[i] - b.losses[i]) <= 1e-6);
    for (const auto& [k, v] : a.params.back()) {
      CHECK((v - b.params.back().at(k)).abs().max().item<double>() <= 1e-6);
    }
    const auto loaded = t::RunRecord::Load(dir.path() / "a" / "record.jsonl");
    CHECK(loaded.completed);
    CHECK(loaded.digest == cfg.Digest());
    REQUIRE(loaded.epochs.size() == 2);
    CHECK(loaded.epochs[1].val_miou == rec.epochs[1].val_miou);
    // The recorded choice is the argmax of the recorded validation mIoU.
    CHECK(loaded.selected_epoch == t::SelectEpoch(t::Mode::kMtl, loaded.epochs));
    CHECK(loaded.selected_epoch == rec.selected_epoch);
    CHECK(fs::exists(loaded.checkpoint));
    // The best checkpoint holds the selected epoch's parameters.
    auto net = skv::model::MakeModel(cfg.model, 0);
    skv::model::LoadCheckpoint(net, loaded.checkpoint);
    const std::size_t steps_per_epoch = a.params.size() / 2;
    const auto& want = a.params[steps_per_epoch * static_cast<std::size_t>(loaded.selected_epoch) - 1];
    CHECK(SameTensors(want, Snapshot(net)));
  }

  TEST_CASE("a diverging run stops with its last good checkpoint") {
    skv::testing::TempDir dir("diverge");
    auto cfg = QuickConfig(t::Mode::kStl, 0);
    cfg.lr = 1e12;
    cfg.epochs = 3;
    CHECK_THROWS_AS(t::Train(cfg, SmallData(), dir.path()), skv::NumericalError);
    CHECK(fs::exists(dir.path() / "last_good.ckpt"));
    std::ifstream is(dir.path() / "record.jsonl");
    std::string line, last;
    while (std::getline(is, line)) last = line;
    CHECK(nlohmann::json::parse(last).at("type") == "aborted");
    CHECK_FALSE(t::RunRecord::Load(dir.path() / "record.jsonl").completed);
  }

  TEST_CASE("sweeps run once per weight and resume") {
    skv::testing::TempDir dir("sweep");
    auto base = QuickConfig(t::Mode::kMtl, 0.2);
    base.epochs = 1;
    const std::vector<double> zero{0.0};
    const auto only = t::Sweep(base, zero, SmallData(), dir.path() / "zero");
    REQUIRE(only.size() == 1);
    CHECK(only[0].mode == t::Mode::kStl);

    const std::vector<double> two{0.2, 1.0};
    const auto first = t::Sweep(base, two, SmallData(), dir.path() / "two");
    REQUIRE(first.size() == 2);
    CHECK(first[0].digest != first[1].digest);
    CHECK_FALSE(first[0].reused);
    const auto again = t::Sweep(base, two, SmallData(), dir.path() / "two");
    CHECK(again[0].reused);
    CHECK(again[1].reused);
    CHECK(again[0].digest == first[0].digest);
    std::ifstream index(dir.path() / "two" / "sweep.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(index, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.at("reused").get<bool>());
      CHECK(fs::exists(j.at("checkpoint").get<std::string>()));
      ++lines;
    }
    CHECK(lines == 2);
    CHECK_THROWS_AS(t::Sweep(base, std::vector<double>{}, SmallData(), dir.path() / "none"),
                    skv::ConfigError);
  }

  TEST_CASE("warmup becomes the starting point of every run") {
    skv::testing::TempDir dir("warmup");
    auto base = QuickConfig(t::Mode::kMtl, 0.2);
    base.epochs = 1;
    const std::vector<double> one{0.4};
    const auto runs = t::Sweep(base, one, SmallData(), dir.path(), 1, 1e-3);
    REQUIRE(runs.size() == 1);
    int warm_dirs = 0;
    for (const auto& e : fs::directory_iterator(dir.path())) {
      warm_dirs += e.path().filename().string().rfind("warmup_", 0) == 0;
    }
    CHECK(warm_dirs == 1);
    CHECK(runs[0].config.find("warmup_") != std::string::npos);
  }
}
