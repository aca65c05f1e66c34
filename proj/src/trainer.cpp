// Copyright (c) 2026 The pynet-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pynet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

namespace pynet::trainer {
namespace {

const char* kind_name(losses::LossKind k) {
  switch (k) {
    case losses::LossKind::kMse: return "mse";
    case losses::LossKind::kPerceptual: return "perceptual";
    case losses::LossKind::kSsim: return "ssim";
  }
  return "?";
}

// Area-average downsample by 2^level, then map [0,1] -> [-1,1].
Tensor level_target(const Tensor& rgb01, int level) {
  const int h = rgb01.dim(0), w = rgb01.dim(1);
  const int f = 1 << level;
  const int oh = h / f, ow = w / f;
  Tensor out({oh, ow, 3});
  const double inv = 1.0 / (f * f);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < f; ++dy)
          for (int dx = 0; dx < f; ++dx) acc += rgb01.at(y * f + dy, x * f + dx, c);
        out.at(y, x, c) = 2.0 * acc * inv - 1.0;
      }
    }
  }
  return out;
}

double now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  for (const auto& [level, b] : batch_size_per_level) {
    if (level < 0 || level > 5) throw ConfigError("batch_size_per_level keys must be levels 0..5");
    if (b < 1 || b > 64) throw ConfigError("batch sizes must lie in [1, 64]");
  }
  for (const auto& [level, e] : epochs_per_level) {
    if (level < 0 || level > 5) throw ConfigError("epochs_per_level keys must be levels 0..5");
    if (e < 1 || e > 100) throw ConfigError("epochs must lie in [1, 100]");
  }
  if (calibration_batches < 1) throw ConfigError("calibration_batches must be >= 1");
  if (checkpoint_every_steps < 0 || max_steps_per_level < 0 || val_cap < 0)
    throw ConfigError("step/cap settings must be non-negative");
}

std::map<int, Tensor> make_level_targets(const Tensor& rgb01) {
  if (rgb01.rank() != 3 || rgb01.dim(2) != 3)
    throw ContractError("make_level_targets expects an RGB tensor [H,W,3]");
  const int h = rgb01.dim(0), w = rgb01.dim(1);
  if (h < 32 || w < 32 || h % 32 != 0 || w % 32 != 0)
    throw ContractError("target sides must be multiples of 32, got " + rgb01.shape_str());
  if (rgb01.min() < 0.0 || rgb01.max() > 1.0)
    throw ContractError("make_level_targets expects values in [0,1]");
  std::map<int, Tensor> out;
  for (int level = 0; level <= 5; ++level) out.emplace(level, level_target(rgb01, level));
  return out;
}

struct Trainer::LevelGraph {
  nn::Graph g;
  nn::NodeId raw_in = 0;
  nn::NodeId tgt_in = 0;
  nn::NodeId loss = 0;
  std::vector<nn::NodeId> terms;
  std::vector<std::string> term_names;
  int oh = 0, ow = 0;
};

Trainer::Trainer(model::PyNetModel m, TrainConfig cfg, const losses::FeatureExtractor* fx)
    : model_(std::move(m)), cfg_(std::move(cfg)), fx_(fx) {
  cfg_.validate();
}

Trainer Trainer::resume(const std::string& ckpt_path, TrainConfig cfg,
                        const losses::FeatureExtractor* fx, const model::PyNetConfig* expected) {
  ckpt::Checkpoint c = ckpt::load_checkpoint(ckpt_path);
  if (expected) ckpt::require_config(c, *expected);
  Trainer t(ckpt::to_model(c), std::move(cfg), fx);
  t.norm_constants_ = std::move(c.norm_constants);
  if (c.opt) t.opt_ = std::move(*c.opt);
  t.history_ = std::move(c.history);
  t.progress_ = c.progress;
  t.next_step_ = t.history_.steps.empty() ? 0 : t.history_.steps.back().step + 1;
  t.csv_steps_ = t.history_.steps.size();
  t.csv_vals_ = t.history_.vals.size();
  return t;
}

std::vector<int> Trainer::epoch_order(int n, int level, int epoch) const {
  // Batch composition is a pure function of (seed, level, epoch) so a
  // resumed run replays the identical order.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::uint64_t salt =
      cfg_.seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(level + 1) * 1000003ULL +
                                           static_cast<std::uint64_t>(epoch) + 1ULL);
  Rng rng(salt);
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

namespace {

// Stacks samples order[first..first+batch) into model input and level
// target batches. All raw patches must share one shape.
std::pair<Tensor, Tensor> assemble_batch(const data::PairDataset& ds,
                                         const std::vector<int>& order, int first, int batch,
                                         int level) {
  Tensor raw, tgt;
  for (int i = 0; i < batch; ++i) {
    data::Sample s = ds.load(order[first + i]);
    if (s.rgb.rank() != 3 || s.raw.rank() != 3 || s.rgb.dim(0) != 2 * s.raw.dim(0) ||
        s.rgb.dim(1) != 2 * s.raw.dim(1))
      throw ContractError("pair " + s.basename + " target is not 2x the packed RAW size");
    Tensor t = level_target(s.rgb, level);
    if (i == 0) {
      raw = Tensor::zeros({batch, s.raw.dim(0), s.raw.dim(1), 4});
      tgt = Tensor::zeros({batch, t.dim(0), t.dim(1), 3});
    }
    if (s.raw.dim(0) != raw.dim(1) || s.raw.dim(1) != raw.dim(2))
      throw ContractError("mixed patch sizes in one dataset: " + s.basename);
    std::copy(s.raw.data(), s.raw.data() + s.raw.size(), raw.data() + i * s.raw.size());
    std::copy(t.data(), t.data() + t.size(), tgt.data() + i * t.size());
  }
  return {std::move(raw), std::move(tgt)};
}

}  // namespace

void Trainer::train_level(const data::PairDataset& train, const data::PairDataset* val,
                          int level) {
  if (level < 0 || level > 5) throw ContractError("level must lie in 0..5");
  if (model_.trained_level() != level + 1)
    throw ScheduleError("cannot train level " + std::to_string(level) + ": trained_level is " +
                        std::to_string(model_.trained_level()) + ", want " +
                        std::to_string(level + 1));
  if (train.size() == 0) throw ContractError("training set is empty");

  int start_epoch = 0;
  std::int64_t start_step = 0;
  if (progress_ && progress_->level == level) {
    start_epoch = progress_->epoch;
    start_step = progress_->step;
  } else {
    opt_ = ckpt::OptimizerState{};  // each level optimizes a fresh objective
    progress_.reset();
  }
  run_level(train, val, level, start_epoch, start_step);

  model_.set_trained_level(level);
  progress_.reset();
  opt_ = ckpt::OptimizerState{};
  if (!cfg_.checkpoint_dir.empty()) {
    std::filesystem::create_directories(cfg_.checkpoint_dir);
    save((std::filesystem::path(cfg_.checkpoint_dir) /
          ("ckpt-l" + std::to_string(level) + "-final.ckpt"))
             .string());
  }
  flush_csv();
}

void Trainer::train_progressive(const data::PairDataset& train, const data::PairDataset* val) {
  for (int level = 5; level >= 0; --level) {
    if (model_.trained_level() <= level) continue;  // already done, resume skips it
    train_level(train, val, level);
  }
}

void Trainer::calibrate(const data::PairDataset& train, int level, int batch, int nbatches) {
  const losses::LevelLossSpec spec = losses::LevelLossSpec::for_level(level);
  const bool wants_fx = std::any_of(spec.terms.begin(), spec.terms.end(), [](const auto& t) {
    return t.kind == losses::LossKind::kPerceptual;
  });
  if (wants_fx && fx_ == nullptr)
    throw ConfigError("level " + std::to_string(level) + " loss needs a feature extractor");

  nn::Graph g;
  nn::NodeId raw_in = g.input("raw");
  nn::NodeId tgt_in = g.input("target");
  nn::NodeId out = model_.build_forward(g, raw_in, level, false);
  const std::vector<int> order = epoch_order(train.size(), level, 0);
  auto probe = assemble_batch(train, order, 0, batch, level);
  const int oh = probe.second.dim(1), ow = probe.second.dim(2);
  std::vector<nn::NodeId> term_nodes;
  losses::level_loss_node(g, spec, out, tgt_in, fx_, oh, ow, &term_nodes);

  const int rounds = std::min(cfg_.calibration_batches, nbatches);
  std::vector<double> acc(term_nodes.size(), 0.0);
  for (int r = 0; r < rounds; ++r) {
    auto [raw, tgt] =
        r == 0 ? std::move(probe) : assemble_batch(train, order, r * batch, batch, level);
    std::vector<Tensor> vals =
        g.eval(term_nodes, {{raw_in, &raw}, {tgt_in, &tgt}});
    for (std::size_t i = 0; i < vals.size(); ++i) acc[i] += vals[i][0];
  }
  std::map<std::string, double> constants;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    double c = acc[i] / rounds;
    if (!std::isfinite(c) || c <= 0.0) c = 1.0;
    constants[kind_name(spec.terms[i].kind)] = c;
  }
  norm_constants_[level] = std::move(constants);
}

void Trainer::adam_step(nn::Graph& g, const std::unordered_map<nn::NodeId, Tensor>& grads) {
  opt_.t += 1;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(opt_.t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(opt_.t));
  for (const auto& [id, grad] : grads) {
    const std::string name = g.node_name(id);
    Tensor& p = model_.param(name);
    Tensor& m = opt_.m.try_emplace(name, Tensor::zeros(p.shape())).first->second;
    Tensor& v = opt_.v.try_emplace(name, Tensor::zeros(p.shape())).first->second;
    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double gi = grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      p[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_epsilon);
    }
    p.quantize_f32();
  }
}

void Trainer::run_level(const data::PairDataset& train, const data::PairDataset* val, int level,
                        int start_epoch, std::int64_t start_step) {
  const int n = train.size();
  auto bit = cfg_.batch_size_per_level.find(level);
  if (bit == cfg_.batch_size_per_level.end())
    throw ConfigError("no batch size configured for level " + std::to_string(level));
  const int batch = std::min(bit->second, n);
  auto eit = cfg_.epochs_per_level.find(level);
  if (eit == cfg_.epochs_per_level.end())
    throw ConfigError("no epoch count configured for level " + std::to_string(level));
  const int epochs = eit->second;
  const int nbatches = n / batch;  // partial trailing batch is dropped

  if (!norm_constants_.count(level)) calibrate(train, level, batch, nbatches);

  const losses::LevelLossSpec base = losses::LevelLossSpec::for_level(level);
  losses::LevelLossSpec spec = base;
  for (auto& term : spec.terms) term.norm_constant = norm_constants_[level].at(kind_name(term.kind));

  LevelGraph lg;
  lg.raw_in = lg.g.input("raw");
  lg.tgt_in = lg.g.input("target");
  nn::NodeId out = model_.build_forward(lg.g, lg.raw_in, level, true);
  {
    // Target size for this level; probes one sample rather than trusting config.
    data::Sample s0 = train.load(0);
    const int ph = s0.raw.dim(0);
    const int pw = s0.raw.dim(1);
    if (ph < 32 || pw < 32 || ph % 16 != 0 || pw % 16 != 0)
      throw ContractError("packed patches must have sides >= 32 and multiples of 16");
    lg.oh = level == 0 ? 2 * ph : ph >> (level - 1);
    lg.ow = level == 0 ? 2 * pw : pw >> (level - 1);
  }
  lg.loss = losses::level_loss_node(lg.g, spec, out, lg.tgt_in, fx_, lg.oh, lg.ow, &lg.terms);
  for (const auto& term : spec.terms) lg.term_names.push_back(kind_name(term.kind));

  const std::int64_t done_at_start =
      static_cast<std::int64_t>(start_epoch) * nbatches + start_step;
  std::int64_t level_steps = done_at_start;

  for (int epoch = start_epoch; epoch < epochs; ++epoch) {
    if (cfg_.max_steps_per_level > 0 && level_steps >= cfg_.max_steps_per_level) break;
    const std::vector<int> order = epoch_order(n, level, epoch);
    const std::int64_t first = epoch == start_epoch ? start_step : 0;
    for (std::int64_t s = first; s < nbatches; ++s) {
      if (cfg_.max_steps_per_level > 0 && level_steps >= cfg_.max_steps_per_level) break;
      const double t0 = now_ms();
      auto [raw, tgt] = assemble_batch(train, order, static_cast<int>(s) * batch, batch, level);
      nn::Graph::GradResult res =
          lg.g.gradients(lg.loss, {{lg.raw_in, &raw}, {lg.tgt_in, &tgt}}, lg.terms);

      if (!std::isfinite(res.value)) {
        if (!cfg_.checkpoint_dir.empty()) {
          std::filesystem::create_directories(cfg_.checkpoint_dir);
          save((std::filesystem::path(cfg_.checkpoint_dir) /
                ("diag-nan-l" + std::to_string(level) + ".ckpt"))
                   .string());
        }
        throw Error("non-finite loss at level " + std::to_string(level) + ", epoch " +
                    std::to_string(epoch) + ", step " + std::to_string(s));
      }
      adam_step(lg.g, res.grads);

      ckpt::StepRecord rec;
      rec.level = level;
      rec.epoch = epoch;
      rec.step = next_step_++;
      rec.loss = res.value;
      for (std::size_t i = 0; i < lg.term_names.size(); ++i) rec.terms[lg.term_names[i]] = res.extra[i];
      rec.wall_ms = now_ms() - t0;
      history_.steps.push_back(std::move(rec));

      ++level_steps;
      if (s + 1 < nbatches) {
        progress_ = ckpt::Progress{level, epoch, s + 1};
      } else {
        progress_ = ckpt::Progress{level, epoch + 1, 0};
      }
      if (cfg_.checkpoint_every_steps > 0 && !cfg_.checkpoint_dir.empty() &&
          level_steps % cfg_.checkpoint_every_steps == 0) {
        std::filesystem::create_directories(cfg_.checkpoint_dir);
        save((std::filesystem::path(cfg_.checkpoint_dir) /
              ("ckpt-l" + std::to_string(level) + "-s" + std::to_string(level_steps) + ".ckpt"))
                 .string());
      }
    }
    if (val && val->size() > 0) validate_epoch(*val, level, epoch);
    if (!cfg_.checkpoint_dir.empty()) {
      std::filesystem::create_directories(cfg_.checkpoint_dir);
      save((std::filesystem::path(cfg_.checkpoint_dir) /
            ("ckpt-l" + std::to_string(level) + "-e" + std::to_string(epoch) + ".ckpt"))
               .string());
    }
    flush_csv();
  }
}

void Trainer::validate_epoch(const data::PairDataset& val, int level, int epoch) {
  const int n = cfg_.val_cap > 0 ? std::min(cfg_.val_cap, val.size()) : val.size();
  double psnr_sum = 0.0, ms_sum = 0.0;
  bool ms_ok = true;
  for (int i = 0; i < n; ++i) {
    data::Sample s = val.load(i);
    Tensor raw({1, s.raw.dim(0), s.raw.dim(1), 4}, std::vector<double>(s.raw.data(), s.raw.data() + s.raw.size()));
    nn::Graph g;
    nn::NodeId in = g.input("raw");
    nn::NodeId out = model_.build_forward(g, in, level, false);
    Tensor pred = std::move(g.eval({out}, {{in, &raw}}).front());
    Tensor tgt = level_target(s.rgb, level);
    Tensor pred01({pred.dim(1), pred.dim(2), 3});
    Tensor tgt01(pred01.shape());
    for (std::int64_t k = 0; k < pred01.size(); ++k) {
      pred01[k] = (pred[k] + 1.0) * 0.5;
      tgt01[k] = (tgt[k] + 1.0) * 0.5;
    }
    psnr_sum += losses::psnr(pred01, tgt01, 1.0);
    if (std::min(pred01.dim(0), pred01.dim(1)) >= 11) {
      ms_sum += losses::ms_ssim(pred01, tgt01, losses::SsimOptions{});
    } else {
      ms_ok = false;
    }
  }
  ckpt::ValRecord rec;
  rec.level = level;
  rec.epoch = epoch;
  rec.psnr = psnr_sum / n;
  rec.ms_ssim = ms_ok ? ms_sum / n : std::numeric_limits<double>::quiet_NaN();
  history_.vals.push_back(rec);
}

void Trainer::flush_csv() {
  if (cfg_.metrics_csv.empty()) return;
  history_.append_csv(cfg_.metrics_csv, csv_steps_, csv_vals_);
  csv_steps_ = history_.steps.size();
  csv_vals_ = history_.vals.size();
}

ckpt::Checkpoint Trainer::snapshot(bool with_opt) const {
  ckpt::Checkpoint c = ckpt::from_model(model_);
  c.norm_constants = norm_constants_;
  c.history = history_;
  c.progress = progress_;
  if (with_opt && progress_) c.opt = opt_;
  return c;
}

void Trainer::save(const std::string& path) const { ckpt::save_checkpoint(path, snapshot(true)); }

std::pair<model::PyNetModel, ckpt::TrainHistory> train_level(model::PyNetModel model,
                                                             const data::PairDataset& dataset,
                                                             int level, const TrainConfig& cfg,
                                                             const losses::FeatureExtractor* fx) {
  Trainer t(std::move(model), cfg, fx);
  t.train_level(dataset, nullptr, level);
  return {std::move(t.model()), t.history()};
}

model::PyNetModel train_progressive(model::PyNetModel model, const data::PairDataset& dataset,
                                    const TrainConfig& cfg, const losses::FeatureExtractor* fx) {
  Trainer t(std::move(model), cfg, fx);
  t.train_progressive(dataset, nullptr);
  return std::move(t.model());
}

}  // namespace pynet::trainer
