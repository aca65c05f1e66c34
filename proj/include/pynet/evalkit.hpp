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

#include <functional>
#include <string>
#include <vector>

#include "pynet/common.hpp"
#include "pynet/dataset.hpp"
#include "pynet/model.hpp"

namespace pynet::evalkit {

struct PerImage {
  std::string name;
  double psnr = 0.0;
  double ms_ssim = 0.0;
};

struct EvalResult {
  std::string model_name;
  double avg_psnr = 0.0;
  double avg_msssim = 0.0;
  int n_images = 0;
  std::vector<PerImage> per_image;
};

// Maps a packed RAW [h,w,4] to an RGB reconstruction [2h,2w,3] in [0,1].
using InferFn = std::function<Tensor(const Tensor&)>;

// Scores every pair: level-0 output mapped to [0,1] vs the RGB target.
// PSNR uses the +inf sentinel on exact matches and it propagates into the
// average. Throws ContractError on an untrained model or empty test set.
EvalResult evaluate(const model::PyNetModel& m, const data::PairDataset& test,
                    const std::string& model_name, int tile = 448, int overlap = 64);
EvalResult evaluate(const InferFn& infer, const data::PairDataset& test,
                    const std::string& model_name);

// Table-style text report, rows sorted by PSNR descending; +inf renders
// as "inf".
std::string report_table(const std::vector<EvalResult>& results);

void write_csv(const std::string& path, const EvalResult& r);
EvalResult read_csv(const std::string& path);

}  // namespace pynet::evalkit
