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

#include "skelevision/report.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "skelevision/errors.hpp"

namespace skv::report {

namespace fs = std::filesystem;
using nlohmann::json;

std::string FormatNumber(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string SequenceAttackRecord::ToJsonLine() const {
  json steps = json::array();
  for (const auto& s : results) {
    steps.push_back({{"steps", s.steps}, {"miou", s.miou}, {"ious", s.ious}});
  }
  return json{{"model", model},
              {"checkpoint_digest", checkpoint_digest},
              {"delta", delta},
              {"sequence", sequence},
              {"results", steps},
              {"loss_trace", loss_trace},
              {"config_digest", config_digest}}
      .dump();
}

SequenceAttackRecord SequenceAttackRecord::FromJsonLine(const std::string& line) {
  try {
    const auto j = json::parse(line);
    SequenceAttackRecord r;
    r.model = j.at("model").get<std::string>();
    r.checkpoint_digest = j.at("checkpoint_digest").get<std::string>();
    r.delta = j.at("delta").get<double>();
    r.sequence = j.at("sequence").get<std::string>();
    for (const auto& s : j.at("results")) {
      r.results.push_back({s.at("steps").get<int>(), s.at("miou").get<double>(),
                           s.at("ious").get<std::vector<double>>()});
    }
    r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
    r.config_digest = j.value("config_digest", "");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed attack record: ") + e.what());
  }
}

std::vector<SequenceAttackRecord> ReadAttackRecords(const fs::path& jsonl) {
  std::ifstream is(jsonl);
  if (!is) throw DataError("cannot open attack records " + jsonl.string());
  std::vector<SequenceAttackRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(SequenceAttackRecord::FromJsonLine(line));
  }
  return out;
}

void AppendAttackRecord(const fs::path& jsonl, const SequenceAttackRecord& r) {
  std::ofstream os(jsonl, std::ios::app);
  if (!os) throw DataError("cannot append to " + jsonl.string());
  os << r.ToJsonLine() << '\n';
}

void ResultsTable::Add(const ResultCell& cell) {
  for (auto& c : cells_) {
    if (c.model == cell.model && c.delta == cell.delta && c.steps == cell.steps) {
      c = cell;
      return;
    }
  }
  cells_.push_back(cell);
}

std::vector<std::string> ResultsTable::Models() const {
  std::vector<std::string> out;
  for (const auto& c : cells_) {
    if (std::find(out.begin(), out.end(), c.model) == out.end()) out.push_back(c.model);
  }
  return out;
}

std::vector<double> ResultsTable::Deltas() const {
  std::set<double> s;
  for (const auto& c : cells_) s.insert(c.delta);
  return {s.begin(), s.end()};
}

std::vector<int> ResultsTable::Steps() const {
  std::set<int> s;
  for (const auto& c : cells_) s.insert(c.steps);
  return {s.begin(), s.end()};
}

std::optional<double> ResultsTable::At(const std::string& model, double delta, int steps) const {
  for (const auto& c : cells_) {
    if (c.model == model && c.delta == delta && c.steps == steps) return c.miou;
  }
  return std::nullopt;
}

namespace {

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::string> CsvSplit(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double ToDouble(const std::string& s) {
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw DataError("results table: bad number '" + s + "'");
  }
  return v;
}

std::string Fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

}  // namespace

void ResultsTable::WriteCsv(const fs::path& path) const {
  std::ostringstream os;
  os << "model,delta,steps,miou,sequences\n";
  for (const auto& c : cells_) {
    os << CsvField(c.model) << ',' << FormatNumber(c.delta) << ',' << c.steps << ','
       << FormatNumber(c.miou) << ',' << c.sequences << '\n';
  }
  WriteText(path, os.str());
}

ResultsTable ResultsTable::ReadCsv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open results table " + path.string());
  std::string line;
  if (!std::getline(is, line) || CsvSplit(line) != std::vector<std::string>{"model", "delta", "steps", "miou", "sequences"}) {
    throw DataError("results table " + path.string() + " has an unexpected header");
  }
  ResultsTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = CsvSplit(line);
    if (f.size() != 5) throw DataError("results table row with " + std::to_string(f.size()) + " fields");
    t.Add({f[0], ToDouble(f[1]), static_cast<int>(ToDouble(f[2])), ToDouble(f[3]),
           static_cast<int>(ToDouble(f[4]))});
  }
  return t;
}

std::string ResultsTable::RenderText() const {
  const auto models = Models();
  std::ostringstream os;
  for (double delta : Deltas()) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"delta = " + FormatNumber(delta)};
    for (const auto& m : models) header.push_back(m);
    rows.push_back(header);
    for (int steps : Steps()) {
      std::vector<std::string> row{steps == 0 ? "benign" : std::to_string(steps) + " steps"};
      for (const auto& m : models) {
        const auto v = At(m, delta, steps);
        row.push_back(v ? Fixed(*v * 100.0, 2) : "-");
      }
      rows.push_back(row);
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
      const auto& r = rows[ri];
      for (std::size_t i = 0; i < r.size(); ++i) {
        const auto pad = std::string(width[i] - r[i].size(), ' ');
        os << (i ? "  " : "") << (i ? pad + r[i] : r[i] + pad);
      }
      os << '\n';
      if (ri == 0) {
        std::size_t total = 0;
        for (auto w : width) total += w;
        os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
      }
    }
    os << '\n';
  }
  return os.str();
}

ResultsTable Aggregate(const std::vector<SequenceAttackRecord>& records,
                       const std::vector<std::string>& model_order) {
  std::vector<std::string> models = model_order;
  for (const auto& r : records) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  // (model index, delta, steps) -> per-sequence mIoUs
  std::map<std::tuple<std::size_t, double, int>, std::vector<double>> groups;
  for (const auto& r : records) {
    const auto mi = static_cast<std::size_t>(
        std::find(models.begin(), models.end(), r.model) - models.begin());
    for (const auto& s : r.results) groups[{mi, r.delta, s.steps}].push_back(s.miou);
  }
  ResultsTable t;
  for (const auto& [key, values] : groups) {
    double sum = 0;
    for (double v : values) sum += v;
    t.Add({models[std::get<0>(key)], std::get<1>(key), std::get<2>(key),
           sum / static_cast<double>(values.size()), static_cast<int>(values.size())});
  }
  return t;
}

namespace {

struct Frame {
  int width, height;
  double left = 60, right = 150, top = 30, bottom = 45;
  double PlotW() const { return width - left - right; }
  double PlotH() const { return height - top - bottom; }
  double Y(double v) const { return top + (1.0 - v) * PlotH(); }
};

std::string SeriesColor(const std::string& label, std::size_t index) {
  if (label.rfind("STL", 0) == 0) return "#808080";
  static const char* kPalette[] = {"#f28e2b", "#e15759", "#d37295", "#b07aa1", "#9c755f", "#edc948"};
  return kPalette[index % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

void Axes(std::ostringstream& os, const Frame& f, const std::string& title,
          const std::string& xlabel, const std::string& ylabel) {
  os << "<rect x=\"0\" y=\"0\" width=\"" << f.width << "\" height=\"" << f.height
     << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << f.width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
     << Escape(title) << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    const double y = f.Y(v);
    os << "<line x1=\"" << f.left << "\" y1=\"" << y << "\" x2=\"" << f.left + f.PlotW()
       << "\" y2=\"" << y << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << f.left - 6 << "\" y=\"" << y + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << Fixed(v, 1) << "</text>\n";
  }
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
     << f.top + f.PlotH() << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.top + f.PlotH() << "\" x2=\""
     << f.left + f.PlotW() << "\" y2=\"" << f.top + f.PlotH() << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << f.left + f.PlotW() / 2 << "\" y=\"" << f.height - 6
     << "\" text-anchor=\"middle\" font-size=\"12\">" << Escape(xlabel) << "</text>\n";
  os << "<text x=\"14\" y=\"" << f.top + f.PlotH() / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
     << "transform=\"rotate(-90 14 " << f.top + f.PlotH() / 2 << ")\">" << Escape(ylabel)
     << "</text>\n";
}

void Legend(std::ostringstream& os, const Frame& f, std::size_t i, const std::string& label,
            const std::string& color) {
  const double x = f.left + f.PlotW() + 12;
  const double y = f.top + 12 + 18.0 * static_cast<double>(i);
  os << "<rect x=\"" << x << "\" y=\"" << y - 8 << "\" width=\"10\" height=\"10\" fill=\"" << color
     << "\"/>\n<text x=\"" << x + 16 << "\" y=\"" << y + 1 << "\" font-size=\"11\">" << Escape(label)
     << "</text>\n";
}

}  // namespace

std::string MiouChartSvg(const ResultsTable& table, double delta, int width, int height) {
  const Frame f{width, height};
  const auto steps = table.Steps();
  const auto models = table.Models();
  auto x_of = [&](std::size_t i) {
    return steps.size() < 2 ? f.left + f.PlotW() / 2
                            : f.left + 20 + (f.PlotW() - 40) * static_cast<double>(i) /
                                                static_cast<double>(steps.size() - 1);
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" data-delta=\"" << FormatNumber(delta) << "\">\n";
  Axes(os, f, "mIoU vs attack steps, delta = " + FormatNumber(delta), "attack steps", "mIoU");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    os << "<text x=\"" << x_of(i) << "\" y=\"" << f.top + f.PlotH() + 16
       << "\" text-anchor=\"middle\" font-size=\"11\">" << steps[i] << "</text>\n";
  }
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const auto color = SeriesColor(models[mi], mi);
    std::ostringstream points, dots;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto v = table.At(models[mi], delta, steps[i]);
      if (!v) continue;
      points << x_of(i) << ',' << f.Y(*v) << ' ';
      dots << "<circle cx=\"" << x_of(i) << "\" cy=\"" << f.Y(*v) << "\" r=\"4\" fill=\"" << color
           << "\" data-model=\"" << Escape(models[mi]) << "\" data-steps=\"" << steps[i]
           << "\" data-miou=\"" << FormatNumber(*v) << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
       << points.str() << "\"/>\n"
       << dots.str();
    Legend(os, f, mi, models[mi], color);
  }
  os << "</svg>\n";
  return os.str();
}

std::string FrameIouChartSvg(const SequenceAttackRecord& record, int width, int height) {
  const Frame f{width, height};
  std::size_t n = 0;
  for (const auto& s : record.results) n = std::max(n, s.ious.size());
  auto x_of = [&](std::size_t i) {
    return n < 2 ? f.left + f.PlotW() / 2
                 : f.left + f.PlotW() * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" data-sequence=\"" << Escape(record.sequence) << "\" data-model=\""
     << Escape(record.model) << "\" data-delta=\"" << FormatNumber(record.delta) << "\">\n";
  Axes(os, f, "IoU per frame, " + record.sequence + ", " + record.model, "frame", "IoU");
  for (std::size_t si = 0; si < record.results.size(); ++si) {
    const auto& s = record.results[si];
    const std::string label = s.steps == 0 ? "benign" : std::to_string(s.steps) + " steps";
    const auto color = s.steps == 0 ? std::string("#4e79a7") : SeriesColor("", si);
    std::ostringstream points, values;
    for (std::size_t i = 0; i < s.ious.size(); ++i) {
      points << x_of(i) << ',' << f.Y(s.ious[i]) << ' ';
      values << (i ? "," : "") << FormatNumber(s.ious[i]);
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" data-steps=\""
       << s.steps << "\" data-values=\"" << values.str() << "\" points=\"" << points.str()
       << "\"/>\n";
    Legend(os, f, si, label, color);
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<TrendRow> Trends(const ResultsTable& table) {
  std::vector<TrendRow> out;
  const auto steps = table.Steps();
  for (const auto& m : table.Models()) {
    for (double d : table.Deltas()) {
      TrendRow row{m, d, true, 0, 0, 0};
      std::optional<double> prev;
      bool any = false;
      for (int s : steps) {
        const auto v = table.At(m, d, s);
        if (!v) continue;
        if (!any) row.benign = *v;
        any = true;
        if (prev && *v > *prev) row.non_increasing = false;
        prev = v;
        row.final_miou = *v;
        row.final_steps = s;
      }
      if (any) out.push_back(row);
    }
  }
  return out;
}

std::string RenderTrends(const std::vector<TrendRow>& rows) {
  std::ostringstream os;
  os << "model, delta, first mIoU, last mIoU (steps), non-increasing\n";
  for (const auto& r : rows) {
    os << r.model << ", " << FormatNumber(r.delta) << ", " << Fixed(r.benign * 100, 2) << ", "
       << Fixed(r.final_miou * 100, 2) << " (" << r.final_steps << "), "
       << (r.non_increasing ? "yes" : "no") << '\n';
  }
  return os.str();
}

ReportFiles EmitReport(const fs::path& run_dir, const fs::path& out_dir, int width, int height) {
  const auto csv = run_dir / "results.csv";
  if (!fs::exists(csv)) throw DataError("no results.csv in " + run_dir.string());
  const auto table = ResultsTable::ReadCsv(csv);
  if (table.cells().empty()) throw DataError("results table in " + run_dir.string() + " is empty");
  fs::create_directories(out_dir);

  ReportFiles files;
  files.csv = out_dir / "results.csv";
  if (fs::absolute(files.csv) != fs::absolute(csv)) table.WriteCsv(files.csv);
  files.text = out_dir / "results.txt";
  WriteText(files.text, table.RenderText());
  files.trends = out_dir / "trends.txt";
  WriteText(files.trends, RenderTrends(Trends(table)));

  for (double d : table.Deltas()) {
    const auto path = out_dir / ("miou_vs_steps_delta_" + FormatNumber(d) + ".svg");
    WriteText(path, MiouChartSvg(table, d, width, height));
    files.miou_charts.push_back(path);
  }

  const auto records_path = run_dir / "records.jsonl";
  if (fs::exists(records_path)) {
    const auto frame_dir = out_dir / "iou_per_frame";
    fs::create_directories(frame_dir);
    for (const auto& r : ReadAttackRecords(records_path)) {
      std::string stem = r.model + "_delta_" + FormatNumber(r.delta) + "_" + r.sequence;
      for (char& ch : stem) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-' && ch != '_') ch = '_';
      }
      const auto path = frame_dir / (stem + ".svg");
      WriteText(path, FrameIouChartSvg(r, width, height));
      files.frame_charts.push_back(path);
    }
  }
  return files;
}

}  // namespace skv::report
