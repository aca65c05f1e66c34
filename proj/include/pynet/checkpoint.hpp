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
#include <vector>

#include "pynet/common.hpp"
#include "pynet/model.hpp"

namespace pynet::ckpt {

// Adam moment estimates, kept in double precision across save/load.
struct OptimizerState {
  std::int64_t t = 0;  // completed Adam steps at the current level
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

// Position inside an unfinished level; absent once the level completes.
struct Progress {
  int level = 6;
  int epoch = 0;           // epochs completed at this level
  std::int64_t step = 0;   // steps completed inside the current epoch
};

struct StepRecord {
  int level = 0;
  int epoch = 0;
  std::int64_t step = 0;  // global step index, monotone across the run
  double loss = 0.0;
  std::map<std::string, double> terms;  // raw (unweighted) term values
  double wall_ms = 0.0;
};

struct ValRecord {
  int level = 0;
  int epoch = 0;
  double psnr = 0.0;
  double ms_ssim = 0.0;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<ValRecord> vals;

  // Appends rows past `steps_written`/`vals_written` to an append-only CSV,
  // creating it with a header when absent.
  void append_csv(const std::string& path, std::size_t steps_written,
                  std::size_t vals_written) const;
};

// Everything needed to restart training exactly where it stopped.
struct Checkpoint {
  model::PyNetConfig config;
  int trained_level = 6;
  std::map<int, std::map<std::string, double>> norm_constants;  // level -> term -> constant
  std::map<std::string, Tensor> params;
  std::optional<OptimizerState> opt;
  std::optional<Progress> progress;
  TrainHistory history;
};

inline constexpr const char* kCheckpointFormat = "pynet-ckpt-v1";

void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// Model <-> checkpoint conversion. to_model validates the parameter table
// against a fresh build of the stored config (FormatError on mismatch).
Checkpoint from_model(const model::PyNetModel& m);
model::PyNetModel to_model(const Checkpoint& c);

// Throws ConfigError when the stored config differs from `expected`.
void require_config(const Checkpoint& c, const model::PyNetConfig& expected);

// Spec-surface helpers.
void save_checkpoint(const model::PyNetModel& m, const TrainHistory& history,
                     const std::string& path);
std::pair<model::PyNetModel, TrainHistory> load_model_checkpoint(const std::string& path);

}  // namespace pynet::ckpt
