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

#ifndef SKELEVISION_REPORT_HPP_
#define SKELEVISION_REPORT_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace skv::report {

// Attack outcome of one model on one sequence at one step size.
struct StepResult {
  int steps = 0;  // 0 = benign
  double miou = 0;
  std::vector<double> ious;  // frames 2..n
};

struct SequenceAttackRecord {
  std::string model;
  std::string checkpoint_digest;
  double delta = 0;
  std::string sequence;
  std::vector<StepResult> results;  // ascending steps
  std::vector<double> loss_trace;
  std::string config_digest;

  std::string ToJsonLine() const;
  static SequenceAttackRecord FromJsonLine(const std::string& line);
};

// One JSON object per line. DataError on malformed lines.
std::vector<SequenceAttackRecord> ReadAttackRecords(const std::filesystem::path& jsonl);
void AppendAttackRecord(const std::filesystem::path& jsonl, const SequenceAttackRecord& r);

struct ResultCell {
  std::string model;
  double delta = 0;
  int steps = 0;
  double miou = 0;  // mean over sequences
  int sequences = 0;
};

// Rows keyed by (delta, steps), columns by model; steps = 0 is the benign row.
class ResultsTable {
 public:
  void Add(const ResultCell& cell);
  const std::vector<ResultCell>& cells() const { return cells_; }
  std::vector<std::string> Models() const;  // first-appearance order
  std::vector<double> Deltas() const;       // ascending
  std::vector<int> Steps() const;           // ascending
  std::optional<double> At(const std::string& model, double delta, int steps) const;

  // Canonical form: header model,delta,steps,miou,sequences.
  void WriteCsv(const std::filesystem::path& path) const;
  static ResultsTable ReadCsv(const std::filesystem::path& path);
  // One block per delta; mIoU shown in percent with two decimals.
  std::string RenderText() const;

 private:
  std::vector<ResultCell> cells_;
};

// Cell = mean of the per-sequence mIoU at that step count. Models keep the
// order given in `model_order` (unknown models are appended).
ResultsTable Aggregate(const std::vector<SequenceAttackRecord>& records,
                       const std::vector<std::string>& model_order = {});

// mIoU against attack steps, one series per model. Every point carries
// data-model, data-steps and data-miou attributes holding the plotted values.
std::string MiouChartSvg(const ResultsTable& table, double delta, int width, int height);

// IoU per frame for each step count in `record`; each series carries
// data-steps and a data-values list.
std::string FrameIouChartSvg(const SequenceAttackRecord& record, int width, int height);

// Whether mean mIoU never rises with more steps, per (model, delta).
struct TrendRow {
  std::string model;
  double delta = 0;
  bool non_increasing = true;
  double benign = 0;
  double final_miou = 0;
  int final_steps = 0;
};
std::vector<TrendRow> Trends(const ResultsTable& table);
std::string RenderTrends(const std::vector<TrendRow>& rows);

struct ReportFiles {
  std::filesystem::path csv;
  std::filesystem::path text;
  std::filesystem::path trends;
  std::vector<std::filesystem::path> miou_charts;
  std::vector<std::filesystem::path> frame_charts;
};

// Reads <run_dir>/results.csv and <run_dir>/records.jsonl and writes tables
// and charts into out_dir. DataError when run_dir holds no results.
ReportFiles EmitReport(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir,
                       int width = 640, int height = 400);

// "0.1" style label used in file names.
std::string FormatNumber(double v);

}  // namespace skv::report

#endif  // SKELEVISION_REPORT_HPP_
