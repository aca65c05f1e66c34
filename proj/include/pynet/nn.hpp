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

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pynet/common.hpp"

namespace pynet::nn {

using NodeId = int;

// Reverse-mode autodiff over a statically built tape. Activations are
// [N,H,W,C]; conv weights are [k,k,Cin,Cout]; everything is double.
// Parameters are bound by pointer, so the owning storage must outlive
// every eval()/gradients() call on the graph.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(Graph&&) noexcept;
  Graph& operator=(Graph&&) noexcept;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves. An input with with_grad=true shows up in gradients() like a
  // parameter does; used for d(loss)/d(prediction).
  NodeId input(std::string name, bool with_grad = false);
  NodeId param(std::string name, const Tensor* value, bool trainable = true);

  // Convolutions, stride 1, zero-padded to preserve spatial size.
  // x [N,H,W,Cin], w [k,k,Cin,Cout] (k odd), b [Cout] -> [N,H,W,Cout].
  NodeId conv2d(NodeId x, NodeId w, NodeId b);
  // Transposed convolution, stride 2, output exactly 2x per side.
  // x [N,H,W,Cin], w [k,k,Cin,Cout] (k odd), b [Cout] -> [N,2H,2W,Cout].
  NodeId conv2d_t(NodeId x, NodeId w, NodeId b);

  NodeId leaky_relu(NodeId x, double slope);
  NodeId relu(NodeId x);
  NodeId tanh_op(NodeId x);
  // Per-sample, per-channel standardization; gain/bias are [C].
  NodeId instance_norm(NodeId x, NodeId gain, NodeId bias, double eps);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId scale(NodeId x, double s);
  NodeId add_const(NodeId x, double c);
  // y[...,c] = x[...,c] + k[c]
  NodeId add_channel_const(NodeId x, std::vector<double> k);
  // y[...,c] = x[...,c] * k[c]
  NodeId mul_channel_const(NodeId x, std::vector<double> k);
  NodeId clamp_min(NodeId x, double m);
  NodeId pow_const(NodeId x, double p);

  NodeId concat_channels(std::vector<NodeId> xs);
  // 2x2/stride-2 pooling; odd trailing row/column pools over the cells
  // that exist (ceil output size).
  NodeId max_pool2(NodeId x);
  NodeId avg_pool2(NodeId x);
  // Depthwise valid convolution with the same 1-D taps along H then W.
  NodeId sep_filter_valid(NodeId x, std::vector<double> taps);
  // Scalar [1] mean over every element.
  NodeId mean_all(NodeId x);

  struct Feed {
    NodeId id;
    const Tensor* value;
  };

  std::vector<Tensor> eval(const std::vector<NodeId>& outs, const std::vector<Feed>& feeds);
  double eval_scalar(NodeId out, const std::vector<Feed>& feeds);

  struct GradResult {
    double value = 0.0;                        // the scalar loss
    std::vector<double> extra;                 // extra scalar outputs, same order as requested
    std::unordered_map<NodeId, Tensor> grads;  // trainable params + with_grad inputs on the path
  };
  // Backpropagates from a scalar node. Nodes absent from `grads` received
  // exactly zero gradient (not on the loss path).
  GradResult gradients(NodeId loss, const std::vector<Feed>& feeds,
                       const std::vector<NodeId>& extra_scalars = {});

  const std::string& node_name(NodeId id) const;
  std::vector<NodeId> param_nodes() const;
  int node_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pynet::nn
