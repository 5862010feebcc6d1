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

#include "skelevision/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <sstream>

#include "skelevision/digest.hpp"
#include "skelevision/errors.hpp"

namespace skv::config {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string FormatDouble(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double ParseDouble(const std::string& key, const std::string& text) {
  const auto t = Trim(text);
  double v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

int64_t ParseInt(const std::string& key, const std::string& text) {
  const auto t = Trim(text);
  int64_t v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
    throw ConfigError(key + ": expected an integer, got '" + text + "'");
  }
  return v;
}

bool ParseBool(const std::string& key, const std::string& text) {
  const auto t = Trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + text + "'");
}

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::string JoinList(const std::vector<T>& v, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt(v[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <typename Member>
Field DoubleField(std::string key, Member m) {
  return {std::move(key), [m](const ExperimentConfig& c) { return FormatDouble(m(const_cast<ExperimentConfig&>(c))); },
          [m](ExperimentConfig& c, const std::string& k, const std::string& v) { m(c) = ParseDouble(k, v); }};
}

template <typename Member>
Field IntField(std::string key, Member m) {
  return {std::move(key),
          [m](const ExperimentConfig& c) { return std::to_string(m(const_cast<ExperimentConfig&>(c))); },
          [m](ExperimentConfig& c, const std::string& k, const std::string& v) {
            using T = std::remove_reference_t<decltype(m(c))>;
            const auto x = ParseInt(k, v);
            if constexpr (std::is_unsigned_v<T>) {
              if (x < 0) throw ConfigError(k + " must be non-negative");
            }
            m(c) = static_cast<T>(x);
          }};
}

template <typename Member>
Field StringField(std::string key, Member m) {
  return {std::move(key), [m](const ExperimentConfig& c) { return std::string(m(const_cast<ExperimentConfig&>(c))); },
          [m](ExperimentConfig& c, const std::string&, const std::string& v) { m(c) = Trim(v); }};
}

const std::vector<Field>& Fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> fields = {
      StringField("data.root", [](C& c) -> auto& { return c.data_root; }),
      IntField("data.seed", [](C& c) -> auto& { return c.synth.seed; }),
      IntField("data.sequences", [](C& c) -> auto& { return c.synth.n_sequences; }),
      IntField("data.test_sequences", [](C& c) -> auto& { return c.synth.n_test_sequences; }),
      IntField("data.frames", [](C& c) -> auto& { return c.synth.frames_per_seq; }),
      IntField("data.test_frames", [](C& c) -> auto& { return c.synth.test_frames_per_seq; }),
      IntField("data.frame_size", [](C& c) -> auto& { return c.synth.frame_size; }),
      IntField("data.stills", [](C& c) -> auto& { return c.synth.n_stills; }),

      {"model.backbone",
       [](const C& c) { return model::ToString(c.train.model.backbone.variant); },
       [](C& c, const std::string&, const std::string& v) {
         const auto variant = model::ParseBackboneVariant(Trim(v));
         c.train.model.backbone = variant == model::BackboneVariant::kPaperAlexNet
                                      ? model::BackboneConfig::PaperAlexNet()
                                      : model::BackboneConfig::Tiny(c.train.model.backbone.out_channels);
       }},
      IntField("model.channels", [](C& c) -> auto& { return c.train.model.backbone.out_channels; }),
      {"model.head",
       [](const C& c) { return model::ToString(c.train.model.keypoint_head.depth); },
       [](C& c, const std::string&, const std::string& v) {
         const int k = c.train.model.keypoint_head.num_keypoints;
         c.train.model.keypoint_head = model::ParseHeadDepth(Trim(v)) == model::HeadDepth::kDeep
                                           ? model::KeypointHeadConfig::Deep(k)
                                           : model::KeypointHeadConfig::Shallow(k);
       }},
      IntField("model.keypoints", [](C& c) -> auto& { return c.train.model.keypoint_head.num_keypoints; }),

      {"train.mode", [](const C& c) { return train::ToString(c.train.mode); },
       [](C& c, const std::string&, const std::string& v) { c.train.mode = train::ParseMode(Trim(v)); }},
      DoubleField("train.lambda_k", [](C& c) -> auto& { return c.train.lambda_k; }),
      DoubleField("train.lambda_c", [](C& c) -> auto& { return c.train.weights.lambda_c; }),
      DoubleField("train.lambda_r", [](C& c) -> auto& { return c.train.weights.lambda_r; }),
      DoubleField("train.lr", [](C& c) -> auto& { return c.train.lr; }),
      DoubleField("train.momentum", [](C& c) -> auto& { return c.train.momentum; }),
      IntField("train.epochs", [](C& c) -> auto& { return c.train.epochs; }),
      IntField("train.batch_size", [](C& c) -> auto& { return c.train.batch_size; }),
      IntField("train.seed", [](C& c) -> auto& { return c.train.seed; }),
      StringField("train.init_checkpoint", [](C& c) -> auto& { return c.train.init_checkpoint; }),
      StringField("train.pretrained_head", [](C& c) -> auto& { return c.train.pretrained_head; }),
      IntField("train.video_pairs", [](C& c) -> auto& { return c.train.video_pairs_per_epoch; }),
      DoubleField("train.image_ratio", [](C& c) -> auto& { return c.train.image_ratio; }),
      IntField("train.max_frame_gap", [](C& c) -> auto& { return c.train.max_frame_gap; }),
      IntField("train.val_pairs", [](C& c) -> auto& { return c.train.val_pairs; }),
      DoubleField("train.anchor_pos", [](C& c) -> auto& { return c.train.thresholds.pos; }),
      DoubleField("train.anchor_neg", [](C& c) -> auto& { return c.train.thresholds.neg; }),
      IntField("train.anchor_pos_cap", [](C& c) -> auto& { return c.train.thresholds.pos_cap; }),
      IntField("train.anchor_neg_cap", [](C& c) -> auto& { return c.train.thresholds.neg_cap; }),
      DoubleField("train.aug_shift", [](C& c) -> auto& { return c.train.augment.max_shift; }),
      DoubleField("train.aug_scale", [](C& c) -> auto& { return c.train.augment.scale_jitter; }),
      DoubleField("train.aug_color", [](C& c) -> auto& { return c.train.augment.color_jitter; }),
      DoubleField("train.window_influence", [](C& c) -> auto& { return c.train.val_tracker.window_influence; }),
      DoubleField("train.penalty_k", [](C& c) -> auto& { return c.train.val_tracker.penalty_k; }),
      {"train.base_scale", [](const C& c) { return FormatDouble(c.train.val_tracker.base_scale); },
       [](C& c, const std::string& k, const std::string& v) {
         c.train.val_tracker.base_scale = ParseDouble(k, v);
         c.attack.tracker.base_scale = c.train.val_tracker.base_scale;
       }},

      {"sweep.lambdas", [](const C& c) { return JoinList(c.sweep_lambdas, FormatDouble); },
       [](C& c, const std::string& k, const std::string& v) {
         c.sweep_lambdas.clear();
         for (const auto& s : SplitList(v)) c.sweep_lambdas.push_back(ParseDouble(k, s));
       }},
      IntField("sweep.warmup_epochs", [](C& c) -> auto& { return c.warmup_epochs; }),
      DoubleField("sweep.warmup_lr", [](C& c) -> auto& { return c.warmup_lr; }),

      {"attack.deltas", [](const C& c) { return JoinList(c.deltas, FormatDouble); },
       [](C& c, const std::string& k, const std::string& v) {
         c.deltas.clear();
         for (const auto& s : SplitList(v)) c.deltas.push_back(ParseDouble(k, s));
       }},
      {"attack.steps", [](const C& c) { return JoinList(c.steps, [](int s) { return std::to_string(s); }); },
       [](C& c, const std::string& k, const std::string& v) {
         c.steps.clear();
         for (const auto& s : SplitList(v)) c.steps.push_back(static_cast<int>(ParseInt(k, s)));
       }},
      {"attack.models", [](const C& c) { return JoinList(c.models, [](const std::string& s) { return s; }); },
       [](C& c, const std::string&, const std::string& v) { c.models = SplitList(v); }},
      StringField("attack.scenario", [](C& c) -> auto& { return c.scenario; }),
      IntField("attack.sequences", [](C& c) -> auto& { return c.max_sequences; }),
      IntField("attack.attacked_frames", [](C& c) -> auto& { return c.attack.attacked_frames; }),
      {"attack.full_unroll", [](const C& c) { return std::string(c.attack.full_unroll ? "true" : "false"); },
       [](C& c, const std::string& k, const std::string& v) { c.attack.full_unroll = ParseBool(k, v); }},
      DoubleField("attack.window_influence", [](C& c) -> auto& { return c.attack.tracker.window_influence; }),
      DoubleField("attack.penalty_k", [](C& c) -> auto& { return c.attack.tracker.penalty_k; }),

      IntField("report.chart_width", [](C& c) -> auto& { return c.chart_width; }),
      IntField("report.chart_height", [](C& c) -> auto& { return c.chart_height; }),

      StringField("run.out", [](C& c) -> auto& { return c.out; }),
      IntField("run.jobs", [](C& c) -> auto& { return c.jobs; }),
  };
  return fields;
}

const Field& Find(const std::string& key) {
  for (const auto& f : Fields()) {
    if (f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void ApplyOrdered(ExperimentConfig& cfg, const std::map<std::string, std::string>& values) {
  for (const auto& [k, v] : values) Find(k);
  for (const auto& f : Fields()) {
    if (auto it = values.find(f.key); it != values.end()) f.set(cfg, f.key, it->second);
  }
}

}  // namespace

void ExperimentConfig::Validate() const {
  train.Validate();
  attack.Validate();
  if (train.model.backbone.variant == model::BackboneVariant::kPaperAlexNet &&
      train.model.backbone.out_channels != 256) {
    throw ConfigError("model.channels must be 256 for the paper-alexnet backbone");
  }
  if (train.model.backbone.out_channels < 1) throw ConfigError("model.channels must be positive");
  if (train.model.keypoint_head.num_keypoints < 1) throw ConfigError("model.keypoints must be positive");
  if (synth.n_sequences < 1 || synth.n_test_sequences < 0 || synth.frames_per_seq < 2 ||
      synth.test_frames_per_seq < 2 || synth.frame_size < attack::kMinOverlayFrameSize ||
      synth.n_stills < 0) {
    throw ConfigError("data.* counts out of range");
  }
  if (sweep_lambdas.empty()) throw ConfigError("sweep.lambdas must not be empty");
  for (double l : sweep_lambdas) {
    if (!(l >= 0)) throw ConfigError("sweep.lambdas must be non-negative");
  }
  if (warmup_epochs < 0 || !(warmup_lr > 0)) throw ConfigError("sweep warmup settings out of range");
  if (deltas.empty() || steps.empty()) throw ConfigError("attack.deltas and attack.steps must not be empty");
  for (double d : deltas) {
    if (!(d > 0)) throw ConfigError("attack.deltas must be positive");
  }
  for (int s : steps) {
    if (s < 0) throw ConfigError("attack.steps must be non-negative");
  }
  if (scenario != "patch" && scenario != "overlay") {
    throw ConfigError("attack.scenario must be patch or overlay");
  }
  for (const auto& m : models) {
    if (m.find(':') == std::string::npos) throw ConfigError("attack.models entries are label:checkpoint");
  }
  if (max_sequences < 1) throw ConfigError("attack.sequences must be >= 1");
  if (chart_width < 100 || chart_height < 100) throw ConfigError("report chart size too small");
  if (jobs < 1) throw ConfigError("run.jobs must be >= 1");
}

std::string ExperimentConfig::Canonical() const {
  std::string out;
  for (const auto& f : Fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

std::string ExperimentConfig::Digest() const { return ShortDigest(Canonical()); }

void ExperimentConfig::Set(const std::string& dotted_key, const std::string& value) {
  Find(dotted_key).set(*this, dotted_key, value);
}

std::string ExperimentConfig::Get(const std::string& dotted_key) const {
  return Find(dotted_key).get(*this);
}

std::vector<std::string> ExperimentConfig::Keys() {
  std::vector<std::string> out;
  for (const auto& f : Fields()) out.push_back(f.key);
  return out;
}

void ApplyFile(ExperimentConfig& cfg, const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  std::map<std::string, std::string> values;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config key '" + section + "' must live in a section");
    for (const auto& [key, node] : body) values[section + "." + key] = node.data();
  }
  ApplyOrdered(cfg, values);
}

ExperimentConfig Resolve(const Overrides& o) {
  ExperimentConfig cfg;
  if (!o.file.empty()) ApplyFile(cfg, o.file);
  if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') {
    cfg.data_root = env;
  }
  ApplyOrdered(cfg, o.flags);
  cfg.Validate();
  return cfg;
}

}  // namespace skv::config
