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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "pynet/checkpoint.hpp"
#include "pynet/common.hpp"
#include "pynet/dataset.hpp"
#include "pynet/losses.hpp"
#include "pynet/model.hpp"

namespace pynet::trainer {

struct TrainConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::map<int, int> batch_size_per_level = {{5, 50}, {4, 50}, {3, 32}, {2, 16}, {1, 10}, {0, 10}};
  std::map<int, int> epochs_per_level = {{5, 10}, {4, 10}, {3, 10}, {2, 10}, {1, 10}, {0, 10}};
  std::uint64_t seed = 0;
  std::string checkpoint_dir;       // empty: no checkpoints written
  int checkpoint_every_steps = 0;   // 0: epoch/level boundaries only
  int max_steps_per_level = 0;      // 0: uncapped
  int calibration_batches = 100;    // loss-normalization pass cap
  int val_cap = 0;                  // 0: score every validation pair
  std::string metrics_csv;          // optional append-only metrics log

  void validate() const;  // throws ConfigError
};

// Per-level targets from a [0,1] RGB tensor whose sides are multiples of
// 32: area-averaged to size/2^level (level 0 keeps full size), then mapped
// to [-1,1] as 2x-1 to match tanh outputs.
std::map<int, Tensor> make_level_targets(const Tensor& rgb01);

// Owns the model plus all mutable training state (optimizer moments, loss
// normalization constants, history, mid-level position), so a checkpoint
// of a Trainer restarts bit-identically.
class Trainer {
 public:
  Trainer(model::PyNetModel m, TrainConfig cfg, const losses::FeatureExtractor* fx = nullptr);
  static Trainer resume(const std::string& ckpt_path, TrainConfig cfg,
                        const losses::FeatureExtractor* fx = nullptr,
                        const model::PyNetConfig* expected = nullptr);

  model::PyNetModel& model() { return model_; }
  const model::PyNetModel& model() const { return model_; }
  const ckpt::TrainHistory& history() const { return history_; }
  const std::map<int, std::map<std::string, double>>& norm_constants() const {
    return norm_constants_;
  }

  // Trains one level to completion (precondition trained_level == level+1,
  // ScheduleError otherwise), or picks up a mid-level checkpoint position.
  void train_level(const data::PairDataset& train, const data::PairDataset* val, int level);

  // Runs levels 5..0, skipping the ones a resumed model already finished.
  void train_progressive(const data::PairDataset& train, const data::PairDataset* val);

  void save(const std::string& path) const;

 private:
  struct LevelGraph;

  void run_level(const data::PairDataset& train, const data::PairDataset* val, int level,
                 int start_epoch, std::int64_t start_step);
  void calibrate(const data::PairDataset& train, int level, int batch, int nbatches);
  void validate_epoch(const data::PairDataset& val, int level, int epoch);
  void adam_step(nn::Graph& g, const std::unordered_map<nn::NodeId, Tensor>& grads);
  void flush_csv();
  std::vector<int> epoch_order(int n, int level, int epoch) const;
  ckpt::Checkpoint snapshot(bool with_opt) const;

  model::PyNetModel model_;
  TrainConfig cfg_;
  const losses::FeatureExtractor* fx_ = nullptr;
  std::map<int, std::map<std::string, double>> norm_constants_;
  ckpt::OptimizerState opt_;
  ckpt::TrainHistory history_;
  std::optional<ckpt::Progress> progress_;
  std::int64_t next_step_ = 0;
  std::size_t csv_steps_ = 0;
  std::size_t csv_vals_ = 0;
};

// Spec-surface wrappers over Trainer.
std::pair<model::PyNetModel, ckpt::TrainHistory> train_level(
    model::PyNetModel model, const data::PairDataset& dataset, int level, const TrainConfig& cfg,
    const losses::FeatureExtractor* fx = nullptr);
model::PyNetModel train_progressive(model::PyNetModel model, const data::PairDataset& dataset,
                                    const TrainConfig& cfg,
                                    const losses::FeatureExtractor* fx = nullptr);

}  // namespace pynet::trainer
