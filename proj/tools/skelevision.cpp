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

// skelevision: dataset generation, training, attack sweeps and reports.

#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "skelevision/attack.hpp"
#include "skelevision/checkpoint.hpp"
#include "skelevision/config.hpp"
#include "skelevision/data.hpp"
#include "skelevision/digest.hpp"
#include "skelevision/errors.hpp"
#include "skelevision/log.hpp"
#include "skelevision/model.hpp"
#include "skelevision/report.hpp"
#include "skelevision/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using skv::config::ExperimentConfig;

struct CommonFlags {
  std::string config_file;
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
  std::vector<std::string> sets;
};

ExperimentConfig ResolveConfig(const CommonFlags& flags) {
  skv::config::Overrides o;
  if (!flags.config_file.empty()) o.file = flags.config_file;
  for (const auto& s : flags.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw skv::ConfigError("--set expects section.key=value, got '" + s + "'");
    o.flags[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (flags.seed) {
    o.flags["train.seed"] = std::to_string(*flags.seed);
    o.flags["data.seed"] = std::to_string(*flags.seed);
  }
  if (flags.jobs) o.flags["run.jobs"] = std::to_string(*flags.jobs);
  if (!flags.out.empty()) o.flags["run.out"] = flags.out;
  return skv::config::Resolve(o);
}

void WriteResolved(const ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "resolved_config.ini") << "; digest " << cfg.Digest() << "\n"
                                             << cfg.Canonical();
}

std::string SynthDigest(const skv::data::SynthConfig& s) {
  return skv::ShortDigest(json{{"seed", s.seed},
                               {"sequences", s.n_sequences},
                               {"test_sequences", s.n_test_sequences},
                               {"frames", s.frames_per_seq},
                               {"test_frames", s.test_frames_per_seq},
                               {"frame_size", s.frame_size},
                               {"stills", s.n_stills}}
                              .dump());
}

// Data identity folded into training digests so reused runs notice new data.
std::string DataTag(const ExperimentConfig& cfg) {
  const auto manifest = cfg.data_root / "dataset.json";
  if (fs::exists(manifest)) {
    std::ifstream is(manifest);
    return json::parse(is).value("digest", cfg.data_root.string());
  }
  return cfg.data_root.string();
}

int CmdSynth(const ExperimentConfig& cfg) {
  const auto manifest = cfg.data_root / "dataset.json";
  const auto digest = SynthDigest(cfg.synth);
  if (fs::exists(manifest)) {
    std::ifstream is(manifest);
    if (json::parse(is).value("digest", "") == digest) {
      std::cout << "dataset " << digest << " already present in " << cfg.data_root << "\n";
      return 0;
    }
  }
  const auto ds = skv::data::SynthSpriteDataset(cfg.synth);
  skv::data::WriteDataset(ds, cfg.data_root);
  const auto records = skv::data::IngestSequences(cfg.data_root / "sequences");
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.name);
  if (names.size() != ds.sequences.size()) {
    throw skv::DataError("ingest found " + std::to_string(names.size()) + " sequences, wrote " +
                         std::to_string(ds.sequences.size()));
  }
  std::ofstream(manifest) << json{{"digest", digest},
                                  {"config_digest", cfg.Digest()},
                                  {"sequences", ds.sequences.size()},
                                  {"stills", ds.stills.size()}}
                                 .dump(2)
                          << "\n";
  WriteResolved(cfg, cfg.data_root);
  std::cout << "wrote dataset " << digest << " to " << cfg.data_root << "\n";
  return 0;
}

skv::train::TrainConfig TrainConfigFor(const ExperimentConfig& cfg) {
  auto t = cfg.train;
  t.data_tag = DataTag(cfg);
  return t;
}

void PrintRecord(const skv::train::RunRecord& r) {
  const auto& best = r.epochs.empty() ? skv::train::EpochRecord{} : r.epochs[static_cast<std::size_t>(std::max(0, r.selected_epoch - 1))];
  std::cout << skv::train::ToString(r.mode) << " lambda_k=" << r.lambda_k << " digest=" << r.digest
            << " selected_epoch=" << r.selected_epoch << " val_miou=" << best.val_miou
            << " val_loss=" << best.val_loss << (r.reused ? " (reused)" : "")
            << " checkpoint=" << r.checkpoint.string() << "\n";
}

int CmdTrain(const ExperimentConfig& cfg) {
  const auto tcfg = TrainConfigFor(cfg);
  const auto data = skv::train::LoadTrainData(cfg.data_root, tcfg.augment, tcfg.seed);
  const auto dir = cfg.out / "train" / ("run_" + tcfg.Digest());
  WriteResolved(cfg, dir);
  PrintRecord(skv::train::TrainOrReuse(tcfg, data, dir));
  return 0;
}

int CmdSweep(const ExperimentConfig& cfg) {
  const auto tcfg = TrainConfigFor(cfg);
  const auto data = skv::train::LoadTrainData(cfg.data_root, tcfg.augment, tcfg.seed);
  const auto dir = cfg.out / "sweep";
  WriteResolved(cfg, dir);
  for (const auto& r :
       skv::train::Sweep(tcfg, cfg.sweep_lambdas, data, dir, cfg.warmup_epochs, cfg.warmup_lr)) {
    PrintRecord(r);
  }
  return 0;
}

struct ModelRef {
  std::string label;
  fs::path checkpoint;
};

std::vector<ModelRef> AttackModels(const ExperimentConfig& cfg) {
  std::vector<ModelRef> out;
  for (const auto& m : cfg.models) {
    const auto colon = m.find(':');
    out.push_back({m.substr(0, colon), m.substr(colon + 1)});
  }
  if (!out.empty()) return out;
  const auto index = cfg.out / "sweep" / "sweep.jsonl";
  if (!fs::exists(index)) {
    throw skv::ConfigError("no attack.models given and no sweep index at " + index.string());
  }
  std::ifstream is(index);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    const double lk = j.at("lambda_k").get<double>();
    out.push_back({lk == 0 ? "STL" : "MTL(" + skv::report::FormatNumber(lk) + ")",
                   j.at("checkpoint").get<std::string>()});
  }
  return out;
}

struct Cell {
  ModelRef model;
  std::string checkpoint_digest;
  double delta;
  skv::data::SequenceRecord sequence;
};

std::string CellKey(const std::string& model, const std::string& ckpt, double delta,
                    const std::string& seq) {
  return model + "|" + ckpt + "|" + skv::report::FormatNumber(delta) + "|" + seq;
}

std::string AttackDigest(const ExperimentConfig& cfg, const std::vector<int>& steps) {
  json j = {{"steps", steps},
            {"scenario", cfg.scenario},
            {"attacked_frames", cfg.attack.attacked_frames},
            {"full_unroll", cfg.attack.full_unroll},
            {"window_influence", cfg.attack.tracker.window_influence},
            {"penalty_k", cfg.attack.tracker.penalty_k},
            {"base_scale", cfg.attack.tracker.base_scale},
            {"model", cfg.train.model.Canonical()},
            {"data", DataTag(cfg)}};
  return skv::ShortDigest(j.dump());
}

void RunCell(const ExperimentConfig& cfg, const Cell& cell, const std::vector<int>& steps,
             const std::string& attack_digest, const fs::path& dir, const fs::path& part) {
  auto net = skv::model::MakeModel(cfg.train.model, 0);
  skv::model::LoadCheckpoint(net, cell.model.checkpoint);
  net->eval();
  auto seq = skv::data::LoadSequence(cell.sequence);
  skv::attack::PatchSpec spec;
  if (cfg.scenario == "overlay") {
    spec = skv::attack::BuildOverlaySpec(seq.frames, seq.gt);
  } else {
    if (!seq.patch) throw skv::DataError("sequence " + seq.name + " has no patch; use attack.scenario = overlay");
    spec = *seq.patch;
  }
  auto acfg = cfg.attack;
  acfg.delta = cell.delta;
  acfg.steps = steps.back();
  acfg.snapshot_steps = steps;
  const auto result = skv::attack::RunPatchAttack(net, seq.frames, seq.gt, spec, acfg);

  skv::report::SequenceAttackRecord rec;
  rec.model = cell.model.label;
  rec.checkpoint_digest = cell.checkpoint_digest;
  rec.delta = cell.delta;
  rec.sequence = seq.name;
  rec.loss_trace = result.loss_trace;
  rec.config_digest = attack_digest;
  const auto tex_dir = dir / "textures";
  fs::create_directories(tex_dir);
  for (const auto& s : result.snapshots) {
    rec.results.push_back({s.steps, s.miou, s.ious});
    if (s.steps == 0) continue;
    std::string stem = cell.model.label + "_delta_" + skv::report::FormatNumber(cell.delta) + "_" +
                       seq.name + "_steps_" + std::to_string(s.steps);
    for (char& ch : stem) {
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '_' && ch != '-') ch = '_';
    }
    skv::attack::SaveTexture(tex_dir / stem, s.texture,
                             {spec.region, cell.delta, s.steps, cfg.train.seed});
  }
  skv::report::AppendAttackRecord(part, rec);
}

// Runs `cells` across `jobs` forked workers; worker k appends to parts/part_k.jsonl.
// Returns the worst exit status.
int RunCells(const ExperimentConfig& cfg, const std::vector<Cell>& cells, const std::vector<int>& steps,
             const std::string& attack_digest, const fs::path& dir) {
  const auto parts = dir / "parts";
  fs::create_directories(parts);
  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(cells.size())));
  auto work = [&](int k) -> int {
    try {
      torch::set_num_threads(1);
      for (std::size_t i = static_cast<std::size_t>(k); i < cells.size(); i += static_cast<std::size_t>(jobs)) {
        skv::log::Info("attack ", cells[i].model.label, " delta=", cells[i].delta, " ", cells[i].sequence.name);
        RunCell(cfg, cells[i], steps, attack_digest, dir, parts / ("part_" + std::to_string(k) + ".jsonl"));
      }
    } catch (const skv::NumericalError& e) {
      std::cerr << "numerical error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
    return 0;
  };
  if (jobs == 1) return work(0);
  std::vector<pid_t> pids;
  for (int k = 0; k < jobs; ++k) {
    std::cout.flush();
    const pid_t pid = fork();
    if (pid < 0) throw skv::DataError("fork failed");
    if (pid == 0) _exit(work(k));
    pids.push_back(pid);
  }
  int worst = 0;
  for (pid_t pid : pids) {
    int status = 0;
    waitpid(pid, &status, 0);
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 1;
    worst = std::max(worst, code);
  }
  return worst;
}

int CmdAttack(const ExperimentConfig& cfg, const fs::path& dir, std::vector<int> steps) {
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  const auto models = AttackModels(cfg);
  std::vector<Cell> todo, all;
  const auto digest = AttackDigest(cfg, steps);
  WriteResolved(cfg, dir);

  const auto records_path = dir / "records.jsonl";
  std::set<std::string> done;
  std::vector<skv::report::SequenceAttackRecord> kept;
  if (fs::exists(records_path)) {
    for (auto& r : skv::report::ReadAttackRecords(records_path)) {
      if (r.config_digest != digest) continue;
      done.insert(CellKey(r.model, r.checkpoint_digest, r.delta, r.sequence));
      kept.push_back(std::move(r));
    }
  }

  std::vector<skv::data::SequenceRecord> seqs;
  for (const auto& r : skv::data::IngestSequences(cfg.data_root / "sequences")) {
    if (r.split == skv::data::Split::kTest && static_cast<int>(seqs.size()) < cfg.max_sequences) seqs.push_back(r);
  }
  if (seqs.empty()) throw skv::DataError("no held-out test sequences under " + cfg.data_root.string());

  std::set<std::string> wanted;
  for (const auto& m : models) {
    if (!fs::exists(m.checkpoint)) {
      throw skv::DataError("checkpoint for model " + m.label + " (config digest " +
                           cfg.train.model.Digest() + ") not found at " + m.checkpoint.string());
    }
    const auto ckpt = skv::model::ReadCheckpointDigest(m.checkpoint);
    for (double d : cfg.deltas) {
      for (const auto& s : seqs) {
        Cell c{m, ckpt, d, s};
        const auto key = CellKey(m.label, ckpt, d, s.name);
        wanted.insert(key);
        if (!done.count(key)) todo.push_back(c);
      }
    }
  }

  const int status = todo.empty() ? 0 : RunCells(cfg, todo, steps, digest, dir);

  // Merge worker parts into the record log.
  for (const auto& e : fs::directory_iterator(dir / "parts")) {
    for (auto& r : skv::report::ReadAttackRecords(e.path())) kept.push_back(std::move(r));
    fs::remove(e.path());
  }
  {
    std::ofstream os(records_path, std::ios::trunc);
    for (const auto& r : kept) os << r.ToJsonLine() << '\n';
  }
  if (status != 0) return status;

  std::vector<skv::report::SequenceAttackRecord> current;
  for (const auto& r : kept) {
    if (wanted.count(CellKey(r.model, r.checkpoint_digest, r.delta, r.sequence))) current.push_back(r);
  }
  std::vector<std::string> order;
  for (const auto& m : models) order.push_back(m.label);
  const auto table = skv::report::Aggregate(current, order);
  table.WriteCsv(dir / "results.csv");
  std::ofstream(dir / "results.txt") << table.RenderText();
  std::cout << table.RenderText();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skelevision: adversarial patch attacks on Siamese trackers"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string report_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_file, "INI config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "seed for data and training");
    sub->add_option("--jobs", flags.jobs, "worker processes for attack cells");
    sub->add_option("--out", flags.out, "output root");
    sub->add_option("--set", flags.sets, "override a key: section.key=value (repeatable)");
  };
  auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
  auto* train = app.add_subcommand("train", "train one model");
  auto* sweep = app.add_subcommand("sweep", "train one model per lambda_k");
  auto* attack = app.add_subcommand("attack", "patch attack over the steps grid");
  auto* eval = app.add_subcommand("eval", "benign mIoU of every model");
  auto* report = app.add_subcommand("report", "tables and charts from attack results");
  for (auto* s : {synth, train, sweep, attack, eval, report}) add_common(s);
  report->add_option("run_dir", report_dir, "directory holding results.csv (default <out>/attack)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    torch::set_num_threads(1);
    const auto cfg = ResolveConfig(flags);
    if (synth->parsed()) return CmdSynth(cfg);
    if (train->parsed()) return CmdTrain(cfg);
    if (sweep->parsed()) return CmdSweep(cfg);
    if (attack->parsed()) return CmdAttack(cfg, cfg.out / "attack", cfg.steps);
    if (eval->parsed()) return CmdAttack(cfg, cfg.out / "eval", {0});
    if (report->parsed()) {
      const fs::path run = report_dir.empty() ? cfg.out / "attack" : fs::path(report_dir);
      const auto files = skv::report::EmitReport(run, cfg.out / "report", cfg.chart_width, cfg.chart_height);
      std::cout << std::ifstream(files.text).rdbuf() << "\n" << std::ifstream(files.trends).rdbuf();
      return 0;
    }
  } catch (const skv::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const skv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const skv::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 1;
  } catch (const skv::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
