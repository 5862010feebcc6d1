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

#ifndef SKELEVISION_CONFIG_HPP_
#define SKELEVISION_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "skelevision/attack.hpp"
#include "skelevision/data.hpp"
#include "skelevision/train.hpp"

namespace skv::config {

inline constexpr const char* kDataRootEnv = "SKELEVISION_DATA";

// Everything a subcommand needs. File format: INI-style sections holding flat
// `key = value` lines, `;` comments, comma-separated lists. See Keys() for the
// accepted names.
struct ExperimentConfig {
  // [data]
  std::filesystem::path data_root = "data";
  data::SynthConfig synth;

  // [model] and [train]
  train::TrainConfig train;

  // [sweep]
  std::vector<double> sweep_lambdas{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  int warmup_epochs = 0;
  double warmup_lr = 1e-3;

  // [attack]
  std::vector<double> deltas{0.1};
  std::vector<int> steps{0, 10, 20, 50};
  // "label:checkpoint" entries; empty means the runs listed in <out>/sweep/sweep.jsonl.
  std::vector<std::string> models;
  // patch: the dataset's physical patch; overlay: BuildOverlaySpec.
  std::string scenario = "patch";
  int max_sequences = 5;
  attack::AttackConfig attack;

  // [report]
  int chart_width = 640;
  int chart_height = 400;

  // [run]
  std::filesystem::path out = "runs";
  int jobs = 1;

  // ConfigError on invalid or inconsistent values.
  void Validate() const;
  // Every key as "section.key = value", one per line, in Keys() order.
  std::string Canonical() const;
  std::string Digest() const;

  // Sets one "section.key"; ConfigError for unknown keys or unparsable values.
  void Set(const std::string& dotted_key, const std::string& value);
  std::string Get(const std::string& dotted_key) const;
  static std::vector<std::string> Keys();
};

// Overrides applied in order, later wins: defaults, file, environment, flags.
struct Overrides {
  std::filesystem::path file;  // empty: no file
  std::map<std::string, std::string> flags;  // dotted key -> value
};

// Reads an INI file; unknown sections or keys throw ConfigError.
void ApplyFile(ExperimentConfig& cfg, const std::filesystem::path& path);
ExperimentConfig Resolve(const Overrides& o);

}  // namespace skv::config

#endif  // SKELEVISION_CONFIG_HPP_
