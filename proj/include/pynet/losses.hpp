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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pynet/common.hpp"
#include "pynet/nn.hpp"

namespace pynet::losses {

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double max_value = 1.0;
};

// Frozen convolutional feature stack for perceptual distance. Layers are
// 3x3 same-padded convolutions with ReLU; pool_before inserts a 2x2 max
// pool ahead of the conv (skipped at evaluation time once the running
// spatial size drops below 4). Inputs in [0,1] are scaled by input_scale
// and mean-shifted before the first conv.
struct FeatureExtractor {
  struct Layer {
    std::string name;
    Tensor w;  // [3,3,Cin,Cout]
    Tensor b;  // [Cout]
    bool pool_before = false;
  };
  std::vector<Layer> layers;  // already truncated at the selected layer
  std::array<double, 3> mean = {123.68, 116.779, 103.939};
  double input_scale = 255.0;
  std::string tag = "relu5_4";

  // Small seeded stack (3->16->32->64) for tests and desk-scale training.
  static FeatureExtractor random_small(std::uint64_t seed);
  // Loads layers up to and including `layer` from a tensor archive.
  static FeatureExtractor load(const std::string& path, const std::string& layer = "relu5_4");
};

// Plain metric entry points. Images are [H,W,C] or [N,H,W,C] in [0,1]
// (mse accepts any matching shapes).
double mse_loss(const Tensor& pred, const Tensor& target);
// +infinity when MSE is exactly zero.
double psnr(const Tensor& pred, const Tensor& target, double max_value = 1.0);
double ssim(const Tensor& pred, const Tensor& target, const SsimOptions& opt = {});
double ms_ssim(const Tensor& pred, const Tensor& target, const SsimOptions& opt = {});
double perceptual_loss(const Tensor& pred, const Tensor& target, const FeatureExtractor& fx);
// Feature map of a [0,1] image at the extractor's selected layer.
Tensor extract_features(const FeatureExtractor& fx, const Tensor& image);

// Active scale count for an image: min(5, floor(log2(min_side/11)) + 1).
int ms_ssim_scales(int h, int w);

enum class LossKind { kMse, kPerceptual, kSsim };

struct LossTerm {
  LossKind kind;
  double weight = 1.0;
  double norm_constant = 1.0;
};

// Per-level objective composition:
//   levels 4-5: MSE;
//   levels 2-3: perceptual and MSE weighted 4:1;
//   levels 0-1: perceptual + 0.75*(1 - MS-SSIM) + 0.05*MSE.
// Combined value = sum(weight_i * raw_i / norm_constant_i).
struct LevelLossSpec {
  int level = 5;
  std::vector<LossTerm> terms;
  bool multiscale_ssim = true;  // single-scale SSIM term when false

  static LevelLossSpec for_level(int level);
  void validate() const;  // throws ContractError on level/term mismatch
};

// pred/target are network-convention images in (-1,1); every term is
// evaluated on the (x+1)/2 remap so SSIM and the extractor see [0,1].
double level_loss(const LevelLossSpec& spec, const Tensor& pred, const Tensor& target,
                  const FeatureExtractor* fx);
// Raw (unweighted, unnormalized) term values in spec.terms order.
std::vector<double> level_loss_terms(const LevelLossSpec& spec, const Tensor& pred,
                                     const Tensor& target, const FeatureExtractor* fx);

// Graph builders for training; spatial size must be known to fix the
// MS-SSIM scale count and extractor pooling at build time.
nn::NodeId mse_node(nn::Graph& g, nn::NodeId pred, nn::NodeId target);
nn::NodeId ssim_node(nn::Graph& g, nn::NodeId pred, nn::NodeId target, const SsimOptions& opt = {});
nn::NodeId ms_ssim_node(nn::Graph& g, nn::NodeId pred, nn::NodeId target, int h, int w,
                        const SsimOptions& opt = {});
nn::NodeId perceptual_node(nn::Graph& g, nn::NodeId pred, nn::NodeId target,
                           const FeatureExtractor& fx, int h, int w);
// pred/target in (-1,1); emits the combined loss and, if term_nodes is
// given, one raw-term scalar node per spec term.
nn::NodeId level_loss_node(nn::Graph& g, const LevelLossSpec& spec, nn::NodeId pred,
                           nn::NodeId target, const FeatureExtractor* fx, int h, int w,
                           std::vector<nn::NodeId>* term_nodes = nullptr);

}  // namespace pynet::losses
