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

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "skelevision/config.hpp"
#include "skelevision/errors.hpp"
#include "skelevision/report.hpp"
#include "support.hpp"

namespace {

namespace c = skv::config;
namespace r = skv::report;
namespace fs = std::filesystem;

void WriteFile(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string ReadFile(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Restores SKELEVISION_DATA on scope exit.
class DataEnv {
 public:
  explicit DataEnv(const char* value) {
    if (const char* old = std::getenv(c::kDataRootEnv)) saved_ = old;
    if (value) {
      ::setenv(c::kDataRootEnv, value, 1);
    } else {
      ::unsetenv(c::kDataRootEnv);
    }
  }
  ~DataEnv() {
    if (saved_) {
      ::setenv(c::kDataRootEnv, saved_->c_str(), 1);
    } else {
      ::unsetenv(c::kDataRootEnv);
    }
  }

 private:
  std::optional<std::string> saved_;
};

r::SequenceAttackRecord Record(const std::string& model, double delta, const std::string& seq,
                               std::vector<double> mious) {
  r::SequenceAttackRecord rec;
  rec.model = model;
  rec.checkpoint_digest = "abc";
  rec.delta = delta;
  rec.sequence = seq;
  const int steps[] = {0, 10, 50};
  for (std::size_t i = 0; i < mious.size(); ++i) {
    rec.results.push_back({steps[i], mious[i], {mious[i], mious[i] / 2, 1.0}});
  }
  rec.loss_trace = {1.5, 2.25};
  rec.config_digest = "cfg";
  return rec;
}

std::vector<r::SequenceAttackRecord> Records() {
  return {Record("STL", 0.1, "s1", {0.8, 0.6, 0.4}), Record("STL", 0.1, "s2", {0.6, 0.5, 0.2}),
          Record("MTL(0.2)", 0.1, "s1", {0.9, 0.7, 0.5}),
          Record("MTL(0.2)", 0.1, "s2", {0.7, 0.75, 0.3}),
          Record("STL", 0.5, "s1", {0.8, 0.3, 0.1}), Record("MTL(0.2)", 0.5, "s1", {0.9, 0.4, 0.2})};
}

// (model, steps, miou) triples from a chart's data attributes.
struct Point {
  std::string model;
  int steps;
  double miou;
};

std::vector<Point> ChartPoints(const std::string& svg) {
  std::vector<Point> out;
  const std::regex re(R"re(data-model="([^"]*)" data-steps="(\d+)" data-miou="([^"]*)")re");
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    out.push_back({(*it)[1].str(), std::stoi((*it)[2].str()), std::stod((*it)[3].str())});
  }
  return out;
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults validate and every key round trips") {
    c::ExperimentConfig cfg;
    CHECK_NOTHROW(cfg.Validate());
    for (const auto& k : c::ExperimentConfig::Keys()) {
      c::ExperimentConfig copy;
      CHECK_NOTHROW(copy.Set(k, cfg.Get(k)));
      CHECK(copy.Canonical() == cfg.Canonical());
    }
    CHECK(cfg.Canonical().find("train.lambda_k = ") != std::string::npos);
  }

  TEST_CASE("unknown keys and bad values are rejected") {
    c::ExperimentConfig cfg;
    CHECK_THROWS_AS(cfg.Set("train.lamda_k", "0.2"), skv::ConfigError);
    CHECK_THROWS_AS(cfg.Set("train.epochs", "many"), skv::ConfigError);
    CHECK_THROWS_AS(cfg.Set("train.mode", "joint"), skv::ConfigError);
    CHECK_THROWS_AS(cfg.Get("nothing.here"), skv::ConfigError);
    skv::testing::TempDir dir("cfg_bad");
    WriteFile(dir.path() / "a.ini", "[train]\nlamda_k = 0.2\n");
    CHECK_THROWS_AS(c::ApplyFile(cfg, dir.path() / "a.ini"), skv::ConfigError);
    WriteFile(dir.path() / "b.ini", "epochs = 3\n");
    CHECK_THROWS_AS(c::ApplyFile(cfg, dir.path() / "b.ini"), skv::ConfigError);
    CHECK_THROWS_AS(c::ApplyFile(cfg, dir.path() / "missing.ini"), skv::ConfigError);
    c::Overrides bad;
    bad.flags["train.mode"] = "stl";
    bad.flags["train.lambda_k"] = "0.5";
    CHECK_THROWS_AS(c::Resolve(bad), skv::ConfigError);
  }

  TEST_CASE("file, environment and flags override in order") {
    skv::testing::TempDir dir("cfg_order");
    WriteFile(dir.path() / "e.ini",
              "; experiment\n[data]\nroot = from_file\n[train]\nepochs = 7\nlr = 0.01\n"
              "[attack]\ndeltas = 0.1, 0.5\nsteps = 0,5\n");
    c::Overrides o;
    o.file = dir.path() / "e.ini";
    {
      DataEnv env(nullptr);
      const auto cfg = c::Resolve(o);
      CHECK(cfg.data_root == "from_file");
      CHECK(cfg.train.epochs == 7);
      CHECK(cfg.train.lr == 0.01);
      CHECK(cfg.deltas == std::vector<double>{0.1, 0.5});
      CHECK(cfg.steps == std::vector<int>{0, 5});
    }
    {
      DataEnv env("from_env");
      CHECK(c::Resolve(o).data_root == "from_env");
      o.flags["data.root"] = "from_flag";
      o.flags["train.epochs"] = "9";
      const auto cfg = c::Resolve(o);
      CHECK(cfg.data_root == "from_flag");
      CHECK(cfg.train.epochs == 9);
      CHECK(cfg.train.lr == 0.01);
    }
  }

  TEST_CASE("digest is stable and tracks changes") {
    c::ExperimentConfig a, b;
    CHECK(a.Digest() == b.Digest());
    CHECK(a.Canonical() == b.Canonical());
    b.Set("attack.steps", "0,10");
    CHECK(a.Digest() != b.Digest());
    // Equivalent spellings canonicalize alike.
    c::ExperimentConfig x, y;
    x.Set("train.lr", "0.001");
    y.Set("train.lr", "1e-3");
    CHECK(x.Digest() == y.Digest());
  }
}

TEST_SUITE("report") {
  TEST_CASE("records round trip through json lines") {
    skv::testing::TempDir dir("records");
    const auto recs = Records();
    for (const auto& rec : recs) r::AppendAttackRecord(dir.path() / "r.jsonl", rec);
    const auto back = r::ReadAttackRecords(dir.path() / "r.jsonl");
    REQUIRE(back.size() == recs.size());
    CHECK(back[2].model == "MTL(0.2)");
    CHECK(back[2].results[1].ious == recs[2].results[1].ious);
    CHECK(back[0].loss_trace == recs[0].loss_trace);
    CHECK_THROWS_AS(r::SequenceAttackRecord::FromJsonLine("{oops"), skv::DataError);
  }

  TEST_CASE("aggregation averages over sequences") {
    const auto table = r::Aggregate(Records(), {"STL", "MTL(0.2)"});
    CHECK(table.Models() == std::vector<std::string>{"STL", "MTL(0.2)"});
    CHECK(table.Deltas() == std::vector<double>{0.1, 0.5});
    CHECK(table.Steps() == std::vector<int>{0, 10, 50});
    CHECK(table.cells().size() == 2 * 3 * 2);
    CHECK(*table.At("STL", 0.1, 0) == doctest::Approx(0.7));
    CHECK(*table.At("MTL(0.2)", 0.1, 10) == doctest::Approx(0.725));
    CHECK(*table.At("STL", 0.5, 50) == doctest::Approx(0.1));
    CHECK_FALSE(table.At("STL", 0.3, 0).has_value());
    for (const auto& cell : table.cells()) CHECK(cell.sequences == (cell.delta == 0.1 ? 2 : 1));
  }

  TEST_CASE("csv round trip") {
    skv::testing::TempDir dir("csv");
    auto table = r::Aggregate(Records());
    table.Add({"odd, \"name\"", 0.1, 0, 1.0 / 3.0, 4});
    table.WriteCsv(dir.path() / "t.csv");
    CHECK(ReadFile(dir.path() / "t.csv").rfind("model,delta,steps,miou,sequences\n", 0) == 0);
    const auto back = r::ResultsTable::ReadCsv(dir.path() / "t.csv");
    REQUIRE(back.cells().size() == table.cells().size());
    for (std::size_t i = 0; i < back.cells().size(); ++i) {
      CHECK(back.cells()[i].model == table.cells()[i].model);
      CHECK(back.cells()[i].miou == table.cells()[i].miou);
      CHECK(back.cells()[i].delta == table.cells()[i].delta);
      CHECK(back.cells()[i].sequences == table.cells()[i].sequences);
    }
    // Adding an existing cell replaces it.
    table.Add({"STL", 0.1, 0, 0.25, 2});
    CHECK(*table.At("STL", 0.1, 0) == 0.25);
  }

  TEST_CASE("text layout") {
    const auto text = r::Aggregate(Records(), {"STL", "MTL(0.2)"}).RenderText();
    std::istringstream is(text);
    std::string header, rule, benign, ten;
    std::getline(is, header);
    std::getline(is, rule);
    std::getline(is, benign);
    std::getline(is, ten);
    CHECK(header.rfind("delta = 0.1", 0) == 0);
    CHECK(header.find("STL") < header.find("MTL(0.2)"));
    CHECK(rule.find_first_not_of('-') == std::string::npos);
    CHECK(benign.rfind("benign", 0) == 0);
    CHECK(benign.find("70.00") != std::string::npos);
    CHECK(benign.find("80.00") != std::string::npos);
    CHECK(ten.rfind("10 steps", 0) == 0);
    CHECK(ten.find("72.50") != std::string::npos);
    CHECK(text.find("delta = 0.5") != std::string::npos);
  }

  TEST_CASE("chart points carry the table values") {
    const auto table = r::Aggregate(Records());
    for (double delta : table.Deltas()) {
      const auto svg = r::MiouChartSvg(table, delta, 640, 400);
      CHECK(svg.rfind("<svg", 0) == 0);
      const auto points = ChartPoints(svg);
      CHECK(points.size() == table.Models().size() * table.Steps().size());
      for (const auto& p : points) CHECK(p.miou == *table.At(p.model, delta, p.steps));
    }
    const auto rec = Records()[0];
    const auto frames = r::FrameIouChartSvg(rec, 640, 400);
    const std::regex re(R"re(data-steps="(\d+)" data-values="([^"]*)")re");
    int series = 0;
    for (auto it = std::sregex_iterator(frames.begin(), frames.end(), re); it != std::sregex_iterator();
         ++it, ++series) {
      const int steps = std::stoi((*it)[1].str());
      std::vector<double> values;
      std::stringstream ss((*it)[2].str());
      for (std::string v; std::getline(ss, v, ',');) values.push_back(std::stod(v));
      const auto& want = rec.results[static_cast<std::size_t>(series)];
      CHECK(steps == want.steps);
      CHECK(values == want.ious);
    }
    CHECK(series == 3);
  }

  TEST_CASE("trend flags") {
    const auto rows = r::Trends(r::Aggregate(Records(), {"STL", "MTL(0.2)"}));
    REQUIRE(rows.size() == 4);
    for (const auto& row : rows) {
      CHECK(row.non_increasing);
      CHECK(row.final_steps == 50);
    }
    auto recs = Records();
    recs[0].results[2].miou = 0.95;
    const auto flagged = r::Trends(r::Aggregate(recs, {"STL", "MTL(0.2)"}));
    CHECK_FALSE(flagged[0].non_increasing);
    CHECK(r::RenderTrends(flagged).find("STL") != std::string::npos);
  }

  TEST_CASE("report files") {
    skv::testing::TempDir run("report_run"), out("report_out");
    CHECK_THROWS_AS(r::EmitReport(run.path(), out.path()), skv::DataError);
    const auto recs = Records();
    for (const auto& rec : recs) r::AppendAttackRecord(run.path() / "records.jsonl", rec);
    r::Aggregate(recs).WriteCsv(run.path() / "results.csv");
    const auto files = r::EmitReport(run.path(), out.path(), 320, 200);
    CHECK(fs::exists(files.csv));
    CHECK(fs::exists(files.text));
    CHECK(fs::exists(files.trends));
    CHECK(files.miou_charts.size() == 2);
    CHECK(files.frame_charts.size() == recs.size());
    CHECK(fs::exists(out.path() / "miou_vs_steps_delta_0.1.svg"));
    CHECK(ReadFile(files.csv) == ReadFile(run.path() / "results.csv"));
  }
}
