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
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pynet/common.hpp"
#include "pynet/nn.hpp"
#include "pynet/rawio.hpp"

namespace pynet::model {

// Five-scale inverted pyramid. Levels are numbered 1 (full packed
// resolution) to 5 (1/16); level 0 is the final 2x upsampling head above
// level 1.
struct PyNetConfig {
  std::vector<int> base_channels = {32, 64, 128, 256, 512};  // widths, levels 1..5
  std::vector<int> kernel_sizes = {3, 5, 7, 9};              // parallel branch kernels
  double leaky_slope = 0.2;
  std::set<int> instance_norm_levels = {2, 3, 4, 5};
  double instance_norm_epsilon = 1e-5;
  std::vector<int> blocks_per_level = {2, 2, 2, 3, 3};  // levels 1..5

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  static PyNetConfig from_json(const nlohmann::json& j);
  bool operator==(const PyNetConfig&) const = default;
};

struct PyramidOutput {
  int level = 0;
  Tensor image;  // [N,H,W,3], values strictly inside (-1,1)
};

// Per-channel statistics of one instance-norm site, captured from a
// calibration forward and replayed so every tile normalizes identically.
struct NormStats {
  std::vector<double> mean, var;
};
using NormCalibration = std::map<std::string, NormStats>;

// trained_level: 6 = fresh, then 5..0 as the progressive schedule runs.
class PyNetModel {
 public:
  PyNetModel() = default;
  static PyNetModel build(const PyNetConfig& config, std::uint64_t seed);

  const PyNetConfig& config() const { return config_; }
  int trained_level() const { return trained_level_; }
  void set_trained_level(int level);
  std::int64_t param_count() const;

  const std::vector<std::string>& param_names() const { return order_; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  // Names of parameters on the level-`level` output subgraph.
  std::vector<std::string> level_param_names(int level) const;

  // Appends the forward subgraph for `level` to g and returns the tanh
  // output node. Parameters are bound by pointer: this model must stay
  // alive and unmoved while g runs. `trainable` gates gradient flow into
  // the parameters. When `frozen` is given, each instance-norm site named
  // in it becomes a fixed per-channel affine using those statistics; when
  // `norm_taps` is given, every site's pre-norm node is recorded there so
  // callers can measure statistics on a calibration input.
  nn::NodeId build_forward(nn::Graph& g, nn::NodeId packed, int level, bool trainable = false,
                           const NormCalibration* frozen = nullptr,
                           std::vector<std::pair<std::string, nn::NodeId>>* norm_taps = nullptr) const;

  // packed_batch [N,h,w,4] with h,w multiples of 16 and >= 32 (size error
  // otherwise); output [N, h/2^(level-1), ..., 3], level 0 giving 2h x 2w.
  PyramidOutput forward(const Tensor& packed_batch, int level) const;

  // Instance-norm statistics for `raw`, measured on the frame itself or,
  // past a fixed pixel budget, on a mean-pooled view of it.
  NormCalibration calibrate_norms(const rawio::PackedRaw& raw) const;

  // Full-frame inference with overlapped tiles and linear cross-fade
  // blending; accepts arbitrary (odd included) packed sizes. tile/overlap
  // are in packed pixels. Requires trained_level == 0. Tiled runs freeze
  // instance-norm statistics from calibrate_norms and give each tile
  // `overlap` pixels of real context, cropped away after the forward pass.
  rawio::RgbImage infer_full(const rawio::PackedRaw& raw, int tile = 448, int overlap = 64) const;

 private:
  PyNetConfig config_;
  int trained_level_ = 6;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> params_;

  friend class ModelBuilder;
};

}  // namespace pynet::model
