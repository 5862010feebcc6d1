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

#include "skelevision/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "skelevision/checkpoint.hpp"
#include "skelevision/digest.hpp"
#include "skelevision/errors.hpp"
#include "skelevision/log.hpp"

namespace skv::train {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ToString(Mode m) {
  switch (m) {
    case Mode::kStl: return "stl";
    case Mode::kMtl: return "mtl";
    case Mode::kKptPretrain: return "kpt-pretrain";
  }
  return "?";
}

Mode ParseMode(const std::string& s) {
  if (s == "stl") return Mode::kStl;
  if (s == "mtl") return Mode::kMtl;
  if (s == "kpt-pretrain") return Mode::kKptPretrain;
  throw ConfigError("unknown training mode '" + s + "' (expected stl|mtl|kpt-pretrain)");
}

void TrainConfig::Validate() const {
  weights.Validate();
  if (lambda_k < 0 || !std::isfinite(lambda_k)) throw ConfigError("lambda_k must be >= 0");
  if (mode == Mode::kStl && lambda_k != 0) throw ConfigError("stl mode requires lambda_k = 0");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (video_pairs_per_epoch < 0 || image_ratio < 0 || max_frame_gap < 0 || val_pairs < 0) {
    throw ConfigError("sampling counts must be non-negative");
  }
}

std::string TrainConfig::Canonical() const {
  const json j = {
      {"mode", ToString(mode)},
      {"lambda_k", lambda_k},
      {"lambda_c", weights.lambda_c},
      {"lambda_r", weights.lambda_r},
      {"lr", lr},
      {"momentum", momentum},
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"seed", seed},
      {"model", model.Canonical()},
      {"init_checkpoint", init_checkpoint},
      {"pretrained_head", pretrained_head},
      {"video_pairs_per_epoch", video_pairs_per_epoch},
      {"image_ratio", image_ratio},
      {"max_frame_gap", max_frame_gap},
      {"val_pairs", val_pairs},
      {"anchor_pos", thresholds.pos},
      {"anchor_neg", thresholds.neg},
      {"anchor_pos_cap", thresholds.pos_cap},
      {"anchor_neg_cap", thresholds.neg_cap},
      {"aug_shift", augment.max_shift},
      {"aug_scale", augment.scale_jitter},
      {"aug_color", augment.color_jitter},
      {"val_window_influence", val_tracker.window_influence},
      {"val_penalty_k", val_tracker.penalty_k},
      {"base_scale", val_tracker.base_scale},
      {"data_tag", data_tag},
  };
  return j.dump();
}

std::string TrainConfig::Digest() const { return ShortDigest(Canonical()); }

int SelectEpoch(Mode mode, std::span<const EpochRecord> epochs) {
  if (epochs.empty()) return 0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < epochs.size(); ++i) {
    const bool better = mode == Mode::kKptPretrain ? epochs[i].val_loss < epochs[best].val_loss
                                                   : epochs[i].val_miou > epochs[best].val_miou;
    if (better) best = i;
  }
  return epochs[best].epoch;
}

RunRecord RunRecord::Load(const fs::path& jsonl) {
  std::ifstream is(jsonl);
  if (!is) throw DataError("cannot open run record " + jsonl.string());
  RunRecord r;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("malformed run record line in " + jsonl.string() + ": " + e.what());
    }
    const auto type = j.at("type").get<std::string>();
    if (type == "config") {
      r.digest = j.at("digest").get<std::string>();
      r.config = j.at("config").get<std::string>();
      r.mode = ParseMode(j.at("mode").get<std::string>());
      r.lambda_k = j.at("lambda_k").get<double>();
    } else if (type == "epoch") {
      r.epochs.push_back({j.at("epoch").get<int>(), j.at("train_loss").get<double>(),
                          j.at("val_loss").get<double>(), j.at("val_miou").get<double>()});
    } else if (type == "summary") {
      r.selected_epoch = j.at("selected_epoch").get<int>();
      r.checkpoint = j.at("checkpoint").get<std::string>();
      r.wall_clock_s = j.at("wall_clock_s").get<double>();
      r.completed = true;
    }
  }
  return r;
}

namespace {

using data::TrainSample;

std::vector<TrainSample> VideoPairs(const std::vector<data::LoadedSequence>& seqs, int count,
                                    const TrainConfig& cfg, std::mt19937_64& rng) {
  std::vector<TrainSample> out;
  if (seqs.empty() || count <= 0) return out;
  out.reserve(static_cast<std::size_t>(count));
  std::uniform_int_distribution<std::size_t> pick_seq(0, seqs.size() - 1);
  std::uniform_int_distribution<int> pick_gap(-cfg.max_frame_gap, cfg.max_frame_gap);
  for (int i = 0; i < count; ++i) {
    const auto& seq = seqs[pick_seq(rng)];
    const int n = static_cast<int>(seq.frames.size());
    const int t = std::uniform_int_distribution<int>(0, n - 1)(rng);
    const int u = std::clamp(t + pick_gap(rng), 0, n - 1);
    out.push_back(data::MakePair(seq.frames[static_cast<std::size_t>(t)],
                                 seq.gt[static_cast<std::size_t>(t)],
                                 seq.frames[static_cast<std::size_t>(u)],
                                 seq.gt[static_cast<std::size_t>(u)], std::nullopt, cfg.augment,
                                 rng));
  }
  return out;
}

// Uniform interleave: image samples are spread evenly between video samples.
std::vector<TrainSample> Interleave(std::vector<TrainSample> video, std::vector<TrainSample> image) {
  std::vector<TrainSample> out;
  out.reserve(video.size() + image.size());
  const std::size_t total = video.size() + image.size();
  std::size_t vi = 0, ii = 0;
  for (std::size_t k = 0; k < total; ++k) {
    // Take an image sample whenever the image quota up to k + 1 is not yet met.
    const std::size_t quota = (k + 1) * image.size() / total;
    if (ii < quota || vi == video.size()) {
      out.push_back(std::move(image[ii++]));
    } else {
      out.push_back(std::move(video[vi++]));
    }
  }
  return out;
}

std::vector<TrainSample> ImageSamples(const std::vector<TrainSample>& pool, std::size_t count,
                                      std::mt19937_64& rng) {
  std::vector<TrainSample> out;
  if (pool.empty()) return out;
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  while (out.size() < count) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      if (out.size() == count) break;
      out.push_back(pool[i]);
    }
  }
  return out;
}

std::vector<TrainSample> EpochSamples(const TrainConfig& cfg, const TrainData& data,
                                      std::mt19937_64& rng) {
  if (cfg.mode == Mode::kKptPretrain) {
    return ImageSamples(data.keypoint_train, data.keypoint_train.size(), rng);
  }
  auto video = VideoPairs(data.train_sequences, cfg.video_pairs_per_epoch, cfg, rng);
  const auto n_image = static_cast<std::size_t>(
      std::llround(cfg.image_ratio * static_cast<double>(cfg.video_pairs_per_epoch)));
  auto image = ImageSamples(data.keypoint_train, n_image, rng);
  return Interleave(std::move(video), std::move(image));
}

struct BatchLoss {
  torch::Tensor total;
  torch::Tensor kpt;
};

class LossComputer {
 public:
  LossComputer(const TrainConfig& cfg)
      : cfg_(cfg), anchors_(tracking::DetectionAnchors(cfg.val_tracker)) {}

  BatchLoss operator()(model::SiamRpn& net, std::span<const TrainSample> batch,
                       std::mt19937_64& rng) const {
    std::vector<torch::Tensor> zs, xs;
    for (const auto& s : batch) {
      zs.push_back(s.template_patch);
      xs.push_back(s.detection_patch);
    }
    const auto z = torch::stack(zs);
    BatchLoss out;
    if (cfg_.mode == Mode::kKptPretrain) {
      torch::Tensor fz;
      {
        torch::NoGradGuard frozen;
        fz = net->Features(z);
      }
      out.kpt = KeypointLoss(net, fz, batch);
      out.total = out.kpt;
      return out;
    }
    const auto fz = net->Features(z);
    const auto fx = net->Features(torch::stack(xs));
    const auto rpn = net->Rpn(fz, fx);
    std::vector<losses::AnchorTargets> targets;
    targets.reserve(batch.size());
    for (const auto& s : batch) {
      targets.push_back(losses::AssignAnchorTargets(anchors_, s.detection_box, cfg_.thresholds, rng));
    }
    const auto trk = losses::TrkLoss(losses::ClsLoss(rpn.cls, targets),
                                     losses::RegLoss(rpn.reg, targets), cfg_.weights);
    if (cfg_.mode == Mode::kStl || cfg_.lambda_k == 0) {
      out.total = trk;
      return out;
    }
    out.kpt = KeypointLoss(net, fz, batch);
    losses::LossWeights w = cfg_.weights;
    w.lambda_k = cfg_.lambda_k;
    out.total = losses::MtlLoss(trk, out.kpt, w);
    return out;
  }

 private:
  torch::Tensor KeypointLoss(model::SiamRpn& net, const torch::Tensor& fz,
                             std::span<const TrainSample> batch) const {
    std::vector<std::optional<losses::KeypointTarget>> targets;
    for (const auto& s : batch) {
      if (s.keypoints) {
        targets.emplace_back(losses::MakeKeypointTarget(*s.keypoints));
      } else {
        targets.emplace_back(std::nullopt);
      }
    }
    return losses::KptLoss(net->Keypoints(fz), targets);
  }

  const TrainConfig& cfg_;
  geometry::AnchorSet anchors_;
};

std::vector<torch::Tensor> TrainableParameters(model::SiamRpn& net, Mode mode) {
  std::vector<torch::Tensor> out;
  auto add = [&](torch::nn::Module& m) {
    for (auto& p : m.parameters()) out.push_back(p);
  };
  switch (mode) {
    case Mode::kStl:
      add(*net->backbone());
      add(*net->rpn());
      break;
    case Mode::kMtl:
      add(*net);
      break;
    case Mode::kKptPretrain:
      for (auto& p : net->backbone()->parameters()) p.set_requires_grad(false);
      add(*net->keypoint_head());
      break;
  }
  return out;
}

void CopyKeypointHead(model::SiamRpn& net, const TrainConfig& cfg) {
  auto donor = model::MakeModel(cfg.model, cfg.seed);
  model::LoadCheckpoint(donor, cfg.pretrained_head);
  torch::NoGradGuard no_grad;
  auto src = donor->keypoint_head()->named_parameters();
  for (auto& item : net->keypoint_head()->named_parameters()) {
    item.value().copy_(src[item.key()]);
  }
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

class RecordWriter {
 public:
  explicit RecordWriter(const fs::path& path) : os_(path, std::ios::trunc) {
    if (!os_) throw DataError("cannot write run record " + path.string());
  }
  void Write(const json& j) { os_ << j.dump() << '\n' << std::flush; }

 private:
  std::ofstream os_;
};

}  // namespace

TrainData LoadTrainData(const fs::path& root, const data::AugmentConfig& aug, uint64_t seed) {
  TrainData d;
  d.train_sequences = data::LoadSplit(root / "sequences", data::Split::kTrain);
  d.val_sequences = data::LoadSplit(root / "sequences", data::Split::kVal);
  const auto annotations = root / "keypoints" / "annotations.json";
  if (fs::exists(annotations)) {
    auto ingest = data::IngestKeypointImages(annotations, root / "keypoints" / "images", aug, seed);
    const std::size_t n_val = ingest.samples.size() / 9;
    const std::size_t n_train = ingest.samples.size() - n_val;
    d.keypoint_train.assign(ingest.samples.begin(), ingest.samples.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.keypoint_val.assign(ingest.samples.begin() + static_cast<std::ptrdiff_t>(n_train), ingest.samples.end());
  }
  return d;
}

RunRecord Train(const TrainConfig& cfg, const TrainData& data, const fs::path& out_dir,
                const StepObserver& observer) {
  cfg.Validate();
  if (cfg.mode == Mode::kKptPretrain && data.keypoint_train.empty()) {
    throw DataError("keypoint pretraining needs keypoint-annotated samples");
  }
  if (cfg.mode != Mode::kKptPretrain && data.train_sequences.empty() &&
      data.keypoint_train.empty()) {
    throw DataError("tracking training needs sequences or image pairs");
  }
  fs::create_directories(out_dir);
  const auto start = std::chrono::steady_clock::now();

  auto net = model::MakeModel(cfg.model, cfg.seed);
  if (!cfg.init_checkpoint.empty()) model::LoadCheckpoint(net, cfg.init_checkpoint);
  if (!cfg.pretrained_head.empty()) CopyKeypointHead(net, cfg);
  net->train();
  auto params = TrainableParameters(net, cfg.mode);
  torch::optim::SGD optimizer(params, torch::optim::SGDOptions(cfg.lr).momentum(cfg.momentum));

  RunRecord record;
  record.digest = cfg.Digest();
  record.config = cfg.Canonical();
  record.mode = cfg.mode;
  record.lambda_k = cfg.lambda_k;
  record.checkpoint = out_dir / "best.ckpt";
  RecordWriter writer(out_dir / "record.jsonl");
  writer.Write({{"type", "config"},
                {"digest", record.digest},
                {"config", record.config},
                {"mode", ToString(cfg.mode)},
                {"lambda_k", cfg.lambda_k}});

  const LossComputer compute(cfg);
  // Fixed validation pairs so val losses are comparable across epochs.
  std::vector<TrainSample> val_samples;
  {
    std::mt19937_64 vrng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    if (cfg.mode == Mode::kKptPretrain) {
      val_samples = data.keypoint_val;
    } else {
      val_samples = Interleave(VideoPairs(data.val_sequences, cfg.val_pairs, cfg, vrng),
                               ImageSamples(data.keypoint_val,
                                            std::min<std::size_t>(data.keypoint_val.size(),
                                                                  static_cast<std::size_t>(cfg.val_pairs)),
                                            vrng));
    }
  }

  double best_metric = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<uint64_t>(epoch));
    const auto samples = EpochSamples(cfg, data, rng);
    std::vector<double> batch_losses;
    int step = 0;
    for (std::size_t b = 0; b < samples.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(samples.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const auto loss = compute(net, std::span(samples).subspan(b, e - b), rng).total;
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        model::SaveCheckpoint(net, out_dir / "last_good.ckpt");
        writer.Write({{"type", "aborted"}, {"epoch", epoch}, {"step", step}});
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(step));
      }
      batch_losses.push_back(value);
      if (loss.requires_grad()) {
        optimizer.zero_grad();
        loss.backward();
        optimizer.step();
      }
      if (observer) observer(epoch, step, value, net);
      ++step;
    }

    EpochRecord er;
    er.epoch = epoch;
    er.train_loss = Mean(batch_losses);
    {
      torch::NoGradGuard no_grad;
      net->eval();
      std::mt19937_64 vrng(cfg.seed ^ 0x5bd1e995ULL);
      std::vector<double> vl;
      for (std::size_t b = 0; b < val_samples.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t e =
            std::min(val_samples.size(), b + static_cast<std::size_t>(cfg.batch_size));
        vl.push_back(compute(net, std::span(val_samples).subspan(b, e - b), vrng).total.item<double>());
      }
      er.val_loss = Mean(vl);
      if (cfg.mode != Mode::kKptPretrain && !data.val_sequences.empty()) {
        std::vector<double> mious;
        for (const auto& seq : data.val_sequences) {
          if (seq.frames.size() < 2) continue;
          mious.push_back(tracking::TrackSequence(net, seq.frames, seq.gt, cfg.val_tracker).miou);
        }
        er.val_miou = Mean(mious);
      }
      net->train();
    }
    record.epochs.push_back(er);
    writer.Write({{"type", "epoch"},
                  {"epoch", er.epoch},
                  {"train_loss", er.train_loss},
                  {"val_loss", er.val_loss},
                  {"val_miou", er.val_miou}});
    log::Info("[", ToString(cfg.mode), "] epoch ", epoch, "/", cfg.epochs, " train_loss=", er.train_loss,
              " val_loss=", er.val_loss, " val_miou=", er.val_miou);

    const double metric = cfg.mode == Mode::kKptPretrain ? -er.val_loss : er.val_miou;
    if (epoch == 1 || metric > best_metric) {
      best_metric = metric;
      model::SaveCheckpoint(net, record.checkpoint);
    }
  }

  record.selected_epoch = SelectEpoch(cfg.mode, record.epochs);
  record.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  record.completed = true;
  writer.Write({{"type", "summary"},
                {"selected_epoch", record.selected_epoch},
                {"checkpoint", record.checkpoint.string()},
                {"wall_clock_s", record.wall_clock_s}});
  return record;
}

RunRecord TrainOrReuse(const TrainConfig& cfg, const TrainData& data, const fs::path& out_dir) {
  const auto path = out_dir / "record.jsonl";
  if (fs::exists(path)) {
    auto prior = RunRecord::Load(path);
    if (prior.completed && prior.digest == cfg.Digest() && fs::exists(prior.checkpoint)) {
      prior.reused = true;
      return prior;
    }
  }
  return Train(cfg, data, out_dir);
}

std::vector<RunRecord> Sweep(const TrainConfig& base, std::span<const double> lambda_values,
                             const TrainData& data, const fs::path& sweep_dir, int warmup_epochs,
                             double warmup_lr) {
  if (lambda_values.empty()) throw ConfigError("sweep needs at least one lambda_k value");
  fs::create_directories(sweep_dir);
  TrainConfig shared = base;
  if (warmup_epochs > 0) {
    TrainConfig warm = base;
    warm.mode = Mode::kStl;
    warm.lambda_k = 0;
    warm.epochs = warmup_epochs;
    warm.lr = warmup_lr > 0 ? warmup_lr : base.lr;
    warm.pretrained_head.clear();
    const auto rec = TrainOrReuse(warm, data, sweep_dir / ("warmup_" + warm.Digest()));
    shared.init_checkpoint = rec.checkpoint.string();
  }

  std::vector<RunRecord> out;
  std::ofstream index(sweep_dir / "sweep.jsonl", std::ios::trunc);
  for (double lk : lambda_values) {
    TrainConfig cfg = shared;
    cfg.lambda_k = lk;
    cfg.mode = lk == 0 ? Mode::kStl : Mode::kMtl;
    const fs::path dir = sweep_dir / ("run_" + cfg.Digest());
    auto rec = TrainOrReuse(cfg, data, dir);
    index << json{{"lambda_k", lk},
                  {"mode", ToString(cfg.mode)},
                  {"digest", rec.digest},
                  {"dir", dir.string()},
                  {"checkpoint", rec.checkpoint.string()},
                  {"selected_epoch", rec.selected_epoch},
                  {"reused", rec.reused}}
                 .dump()
          << '\n';
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace skv::train
