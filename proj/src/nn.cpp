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

#include "pynet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "nn_internal.hpp"

namespace pynet::nn {
namespace {

enum class Op {
  kInput,
  kParam,
  kConv2d,
  kConv2dT,
  kLeakyRelu,
  kRelu,
  kTanh,
  kInstanceNorm,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddConst,
  kAddChannelConst,
  kMulChannelConst,
  kClampMin,
  kPowConst,
  kConcat,
  kMaxPool2,
  kAvgPool2,
  kSepFilterValid,
  kMeanAll,
};

struct Node {
  Op op;
  std::vector<NodeId> in;
  double a = 0.0;             // slope / scale / constant / eps / exponent
  std::vector<double> taps;   // filter taps or per-channel constants
  std::string name;           // leaves only
  const Tensor* bound = nullptr;
  bool trainable = false;     // params
  bool with_grad = false;     // inputs
  bool needs_grad = false;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractError(msg);
}

}  // namespace

struct Graph::Impl {
  std::vector<Node> nodes;

  NodeId push(Node n) {
    if (n.op != Op::kInput && n.op != Op::kParam) {
      for (NodeId i : n.in) {
        if (i < 0 || i >= static_cast<NodeId>(nodes.size())) {
          throw ContractError("graph op references unknown node");
        }
        n.needs_grad = n.needs_grad || nodes[static_cast<size_t>(i)].needs_grad;
      }
    }
    nodes.push_back(std::move(n));
    return static_cast<NodeId>(nodes.size()) - 1;
  }
};

Graph::Graph() : impl_(std::make_unique<Impl>()) {}
Graph::~Graph() = default;
Graph::Graph(Graph&&) noexcept = default;
Graph& Graph::operator=(Graph&&) noexcept = default;

NodeId Graph::input(std::string name, bool with_grad) {
  Node n;
  n.op = Op::kInput;
  n.name = std::move(name);
  n.with_grad = with_grad;
  n.needs_grad = with_grad;
  return impl_->push(std::move(n));
}

NodeId Graph::param(std::string name, const Tensor* value, bool trainable) {
  require(value != nullptr, "param bound to null tensor");
  Node n;
  n.op = Op::kParam;
  n.name = std::move(name);
  n.bound = value;
  n.trainable = trainable;
  n.needs_grad = trainable;
  return impl_->push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId b) {
  Node n;
  n.op = Op::kConv2d;
  n.in = {x, w, b};
  return impl_->push(std::move(n));
}

NodeId Graph::conv2d_t(NodeId x, NodeId w, NodeId b) {
  Node n;
  n.op = Op::kConv2dT;
  n.in = {x, w, b};
  return impl_->push(std::move(n));
}

NodeId Graph::leaky_relu(NodeId x, double slope) {
  Node n;
  n.op = Op::kLeakyRelu;
  n.in = {x};
  n.a = slope;
  return impl_->push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  Node n;
  n.op = Op::kRelu;
  n.in = {x};
  return impl_->push(std::move(n));
}

NodeId Graph::tanh_op(NodeId x) {
  Node n;
  n.op = Op::kTanh;
  n.in = {x};
  return impl_->push(std::move(n));
}

NodeId Graph::instance_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
  Node n;
  n.op = Op::kInstanceNorm;
  n.in = {x, gain, bias};
  n.a = eps;
  return impl_->push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b};
  return impl_->push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kSub;
  n.in = {a, b};
  return impl_->push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMul;
  n.in = {a, b};
  return impl_->push(std::move(n));
}

NodeId Graph::div(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kDiv;
  n.in = {a, b};
  return impl_->push(std::move(n));
}

NodeId Graph::scale(NodeId x, double s) {
  Node n;
  n.op = Op::kScale;
  n.in = {x};
  n.a = s;
  return impl_->push(std::move(n));
}

NodeId Graph::add_const(NodeId x, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.in = {x};
  n.a = c;
  return impl_->push(std::move(n));
}

NodeId Graph::add_channel_const(NodeId x, std::vector<double> k) {
  Node n;
  n.op = Op::kAddChannelConst;
  n.in = {x};
  n.taps = std::move(k);
  return impl_->push(std::move(n));
}

NodeId Graph::mul_channel_const(NodeId x, std::vector<double> k) {
  Node n;
  n.op = Op::kMulChannelConst;
  n.in = {x};
  n.taps = std::move(k);
  return impl_->push(std::move(n));
}

NodeId Graph::clamp_min(NodeId x, double m) {
  Node n;
  n.op = Op::kClampMin;
  n.in = {x};
  n.a = m;
  return impl_->push(std::move(n));
}

NodeId Graph::pow_const(NodeId x, double p) {
  Node n;
  n.op = Op::kPowConst;
  n.in = {x};
  n.a = p;
  return impl_->push(std::move(n));
}

NodeId Graph::concat_channels(std::vector<NodeId> xs) {
  require(!xs.empty(), "concat of zero tensors");
  Node n;
  n.op = Op::kConcat;
  n.in = std::move(xs);
  return impl_->push(std::move(n));
}

NodeId Graph::max_pool2(NodeId x) {
  Node n;
  n.op = Op::kMaxPool2;
  n.in = {x};
  return impl_->push(std::move(n));
}

NodeId Graph::avg_pool2(NodeId x) {
  Node n;
  n.op = Op::kAvgPool2;
  n.in = {x};
  return impl_->push(std::move(n));
}

NodeId Graph::sep_filter_valid(NodeId x, std::vector<double> taps) {
  require(!taps.empty(), "empty filter taps");
  Node n;
  n.op = Op::kSepFilterValid;
  n.in = {x};
  n.taps = std::move(taps);
  return impl_->push(std::move(n));
}

NodeId Graph::mean_all(NodeId x) {
  Node n;
  n.op = Op::kMeanAll;
  n.in = {x};
  return impl_->push(std::move(n));
}

const std::string& Graph::node_name(NodeId id) const {
  return impl_->nodes[static_cast<size_t>(id)].name;
}

std::vector<NodeId> Graph::param_nodes() const {
  std::vector<NodeId> out;
  for (size_t i = 0; i < impl_->nodes.size(); ++i) {
    if (impl_->nodes[i].op == Op::kParam) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

int Graph::node_count() const { return static_cast<int>(impl_->nodes.size()); }

namespace {

// Per-call execution state; leaf values are referenced, op values owned.
struct Run {
  std::vector<Tensor> own;
  std::vector<const Tensor*> val;
  std::vector<char> needed;
};

void mark_needed(const std::vector<Node>& nodes, NodeId id, std::vector<char>& needed) {
  if (needed[static_cast<size_t>(id)]) return;
  needed[static_cast<size_t>(id)] = 1;
  for (NodeId i : nodes[static_cast<size_t>(id)].in) mark_needed(nodes, i, needed);
}

void forward_node(const std::vector<Node>& nodes, NodeId id, Run& run) {
  const Node& nd = nodes[static_cast<size_t>(id)];
  const auto V = [&](int slot) -> const Tensor& { return *run.val[static_cast<size_t>(nd.in[static_cast<size_t>(slot)])]; };
  Tensor& out = run.own[static_cast<size_t>(id)];
  switch (nd.op) {
    case Op::kInput:
      require(run.val[static_cast<size_t>(id)] != nullptr, "input '" + nd.name + "' not fed");
      return;
    case Op::kParam:
      run.val[static_cast<size_t>(id)] = nd.bound;
      return;
    case Op::kConv2d:
      detail::conv2d_forward(V(0), V(1), V(2), out);
      break;
    case Op::kConv2dT:
      detail::conv2d_t_forward(V(0), V(1), V(2), out);
      break;
    case Op::kLeakyRelu: {
      const Tensor& x = V(0);
      out = Tensor(x.shape());
      for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : nd.a * x[i];
      break;
    }
    case Op::kRelu: {
      const Tensor& x = V(0);
      out = Tensor(x.shape());
      for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    }
    case Op::kTanh: {
      const Tensor& x = V(0);
      out = Tensor(x.shape());
      for (std::int64_t i = 0; i < x.size(); ++i) {
        double y = std::tanh(x[i]);
        // outputs are contractually strictly inside (-1, 1)
        if (y >= 1.0) y = std::nextafter(1.0, 0.0);
        if (y <= -1.0) y = std::nextafter(-1.0, 0.0);
        out[i] = y;
      }
      break;
    }
    case Op::kInstanceNorm: {
      const Tensor& x = V(0);
      const Tensor& g = V(1);
      const Tensor& b = V(2);
      require(x.rank() == 4, "instance_norm input must be rank 4, got " + x.shape_str());
      const int C = x.dim(3);
      require(g.rank() == 1 && g.dim(0) == C && b.rank() == 1 && b.dim(0) == C,
              "instance_norm gain/bias must be [C]");
      const int N = x.dim(0);
      const std::int64_t M = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
      out = Tensor(x.shape());
      std::vector<double> mu(static_cast<size_t>(C)), var(static_cast<size_t>(C));
      for (int n = 0; n < N; ++n) {
        const double* xs = x.data() + n * M * C;
        double* ys = out.data() + n * M * C;
        std::fill(mu.begin(), mu.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (std::int64_t i = 0; i < M; ++i) {
          for (int c = 0; c < C; ++c) mu[static_cast<size_t>(c)] += xs[i * C + c];
        }
        for (int c = 0; c < C; ++c) mu[static_cast<size_t>(c)] /= static_cast<double>(M);
        for (std::int64_t i = 0; i < M; ++i) {
          for (int c = 0; c < C; ++c) {
            const double d = xs[i * C + c] - mu[static_cast<size_t>(c)];
            var[static_cast<size_t>(c)] += d * d;
          }
        }
        for (int c = 0; c < C; ++c) {
          const double s = 1.0 / std::sqrt(var[static_cast<size_t>(c)] / static_cast<double>(M) + nd.a);
          const double gc = g[c] * s;
          const double bc = b[c] - gc * mu[static_cast<size_t>(c)];
          for (std::int64_t i = 0; i < M; ++i) ys[i * C + c] = gc * xs[i * C + c] + bc;
        }
      }
      break;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv: {
      const Tensor& a = V(0);
      const Tensor& b = V(1);
      require(a.same_shape(b), "elementwise shape mismatch " + a.shape_str() + " vs " + b.shape_str());
      out = Tensor(a.shape());
      switch (nd.op) {
        case Op::kAdd:
          for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
          break;
        case Op::kSub:
          for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
          break;
        case Op::kMul:
          for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
          break;
        default:
          for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] / b[i];
          break;
      }
      break;
    }
    case Op::kScale: {
      const Tensor& x = V(0);
      out = Tensor(x.shape());
      for (std::int64_t i = 0; i < x.size(); ++i) out[i] = nd.a * x[i];
      break;
    }
    case Op::kAddConst: {
      const Tensor& x = V(0);
      out = Tensor(x.shape());
      for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] + nd.a;
      break;
    }
    case Op::kAddChannelConst: {
      const Tensor& x = V(0);
      const int C = x.dim(x.rank() - 1);
      require(static_cast<int>(nd.taps.size()) == C, "channel constant count mismatch");
      out = Tensor(x.shape());
      const std::int64_t rows = x.size() / C;
      for (std::int64_t r = 0; r < rows; ++r) {
        for (int c = 0; c < C; ++c) out[r * C + c] = x[r * C + c] + nd.taps[static_cast<size_t>(c)];
      }
      break;
    }
    case Op::kMulChannelConst: {
      const Tensor& x = V(0);
      const int C = x.dim(x.rank() - 1);
      require(static_cast<int>(nd.taps.size()) == C, "channel constant count mismatch");
      out = Tensor(x.shape());
      const std::int64_t rows = x.size() / C;
      for (std::int64_t r = 0; r < rows; ++r) {
        for (int c = 0; c < C; ++c) out[r * C + c] = x[r * C + c] * nd.taps[static_cast<size_t>(c)];
      }
      break;
    }
    case Op::kClampMin: {
      const Tensor& x = V(0);
      out = Tensor(x.shape());
      for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] < nd.a ? nd.a : x[i];
      break;
    }
    case Op::kPowConst: {
      const Tensor& x = V(0);
      out = Tensor(x.shape());
      if (nd.a == 1.0) {
        for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i];
      } else {
        for (std::int64_t i = 0; i < x.size(); ++i) out[i] = std::pow(x[i], nd.a);
      }
      break;
    }
    case Op::kConcat: {
      const Tensor& first = V(0);
      require(first.rank() == 4, "concat expects rank-4 tensors");
      int Ctot = 0;
      for (size_t s = 0; s < nd.in.size(); ++s) {
        const Tensor& t = *run.val[static_cast<size_t>(nd.in[s])];
        require(t.rank() == 4 && t.dim(0) == first.dim(0) && t.dim(1) == first.dim(1) &&
                    t.dim(2) == first.dim(2),
                "concat spatial/batch mismatch");
        Ctot += t.dim(3);
      }
      out = Tensor({first.dim(0), first.dim(1), first.dim(2), Ctot});
      const std::int64_t rows = out.size() / Ctot;
      int coff = 0;
      for (size_t s = 0; s < nd.in.size(); ++s) {
        const Tensor& t = *run.val[static_cast<size_t>(nd.in[s])];
        const int c = t.dim(3);
        for (std::int64_t r = 0; r < rows; ++r) {
          std::memcpy(out.data() + r * Ctot + coff, t.data() + r * c,
                      sizeof(double) * static_cast<size_t>(c));
        }
        coff += c;
      }
      break;
    }
    case Op::kMaxPool2:
    case Op::kAvgPool2: {
      const Tensor& x = V(0);
      require(x.rank() == 4, "pool expects rank-4 input, got " + x.shape_str());
      const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
      const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
      out = Tensor({N, Ho, Wo, C});
      for (int n = 0; n < N; ++n) {
        for (int ho = 0; ho < Ho; ++ho) {
          for (int wo = 0; wo < Wo; ++wo) {
            const int h1 = std::min(H, 2 * ho + 2), w1 = std::min(W, 2 * wo + 2);
            for (int c = 0; c < C; ++c) {
              if (nd.op == Op::kMaxPool2) {
                double m = x.at(n, 2 * ho, 2 * wo, c);
                for (int h = 2 * ho; h < h1; ++h) {
                  for (int w = 2 * wo; w < w1; ++w) m = std::max(m, x.at(n, h, w, c));
                }
                out.at(n, ho, wo, c) = m;
              } else {
                double s = 0.0;
                for (int h = 2 * ho; h < h1; ++h) {
                  for (int w = 2 * wo; w < w1; ++w) s += x.at(n, h, w, c);
                }
                out.at(n, ho, wo, c) = s / static_cast<double>((h1 - 2 * ho) * (w1 - 2 * wo));
              }
            }
          }
        }
      }
      break;
    }
    case Op::kSepFilterValid: {
      const Tensor& x = V(0);
      require(x.rank() == 4, "sep_filter expects rank-4 input");
      const int T = static_cast<int>(nd.taps.size());
      const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
      require(H >= T && W >= T, "image smaller than filter window");
      const int Hm = H - T + 1, Wm = W - T + 1;
      Tensor tmp({N, Hm, W, C});
      for (int n = 0; n < N; ++n) {
        for (int h = 0; h < Hm; ++h) {
          for (int w = 0; w < W; ++w) {
            for (int c = 0; c < C; ++c) {
              double s = 0.0;
              for (int t = 0; t < T; ++t) s += nd.taps[static_cast<size_t>(t)] * x.at(n, h + t, w, c);
              tmp.at(n, h, w, c) = s;
            }
          }
        }
      }
      out = Tensor({N, Hm, Wm, C});
      for (int n = 0; n < N; ++n) {
        for (int h = 0; h < Hm; ++h) {
          for (int w = 0; w < Wm; ++w) {
            for (int c = 0; c < C; ++c) {
              double s = 0.0;
              for (int t = 0; t < T; ++t) s += nd.taps[static_cast<size_t>(t)] * tmp.at(n, h, w + t, c);
              out.at(n, h, w, c) = s;
            }
          }
        }
      }
      break;
    }
    case Op::kMeanAll: {
      const Tensor& x = V(0);
      require(x.size() > 0, "mean of empty tensor");
      double s = 0.0;
      for (std::int64_t i = 0; i < x.size(); ++i) s += x[i];
      out = Tensor({1}, std::vector<double>{s / static_cast<double>(x.size())});
      break;
    }
  }
  run.val[static_cast<size_t>(id)] = &out;
}

void backward_node(const std::vector<Node>& nodes, NodeId id, Run& run, std::vector<Tensor>& grad) {
  const Node& nd = nodes[static_cast<size_t>(id)];
  if (nd.op == Op::kInput || nd.op == Op::kParam) return;
  const Tensor& dy = grad[static_cast<size_t>(id)];
  const auto V = [&](int slot) -> const Tensor& { return *run.val[static_cast<size_t>(nd.in[static_cast<size_t>(slot)])]; };
  const auto wants = [&](int slot) {
    return nodes[static_cast<size_t>(nd.in[static_cast<size_t>(slot)])].needs_grad;
  };
  const auto G = [&](int slot) -> Tensor& {
    const auto i = static_cast<size_t>(nd.in[static_cast<size_t>(slot)]);
    if (grad[i].empty()) grad[i] = Tensor(run.val[i]->shape());
    return grad[i];
  };
  switch (nd.op) {
    case Op::kInput:
    case Op::kParam:
      return;
    case Op::kConv2d:
      detail::conv2d_backward(V(0), V(1), dy, wants(0) ? &G(0) : nullptr,
                              wants(1) ? &G(1) : nullptr, wants(2) ? &G(2) : nullptr);
      break;
    case Op::kConv2dT:
      detail::conv2d_t_backward(V(0), V(1), dy, wants(0) ? &G(0) : nullptr,
                                wants(1) ? &G(1) : nullptr, wants(2) ? &G(2) : nullptr);
      break;
    case Op::kLeakyRelu: {
      if (!wants(0)) break;
      const Tensor& x = V(0);
      Tensor& dx = G(0);
      for (std::int64_t i = 0; i < x.size(); ++i) dx[i] += dy[i] * (x[i] > 0.0 ? 1.0 : nd.a);
      break;
    }
    case Op::kRelu: {
      if (!wants(0)) break;
      const Tensor& x = V(0);
      Tensor& dx = G(0);
      for (std::int64_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) dx[i] += dy[i];
      }
      break;
    }
    case Op::kTanh: {
      if (!wants(0)) break;
      const Tensor& y = *run.val[static_cast<size_t>(id)];
      Tensor& dx = G(0);
      for (std::int64_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::kInstanceNorm: {
      const Tensor& x = V(0);
      const Tensor& g = V(1);
      const int N = x.dim(0), C = x.dim(3);
      const std::int64_t M = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
      std::vector<double> mu(static_cast<size_t>(C)), sinv(static_cast<size_t>(C));
      std::vector<double> sum_d(static_cast<size_t>(C)), sum_dx(static_cast<size_t>(C));
      for (int n = 0; n < N; ++n) {
        const double* xs = x.data() + n * M * C;
        const double* dys = dy.data() + n * M * C;
        std::fill(mu.begin(), mu.end(), 0.0);
        for (std::int64_t i = 0; i < M; ++i) {
          for (int c = 0; c < C; ++c) mu[static_cast<size_t>(c)] += xs[i * C + c];
        }
        for (int c = 0; c < C; ++c) mu[static_cast<size_t>(c)] /= static_cast<double>(M);
        std::fill(sinv.begin(), sinv.end(), 0.0);
        for (std::int64_t i = 0; i < M; ++i) {
          for (int c = 0; c < C; ++c) {
            const double d = xs[i * C + c] - mu[static_cast<size_t>(c)];
            sinv[static_cast<size_t>(c)] += d * d;
          }
        }
        for (int c = 0; c < C; ++c) {
          sinv[static_cast<size_t>(c)] =
              1.0 / std::sqrt(sinv[static_cast<size_t>(c)] / static_cast<double>(M) + nd.a);
        }
        // sum_d = sum(dy), sum_dx = sum(dy*xhat) per channel; then
        // dg = sum_dx, db = sum_d,
        // dx = sinv*g*(dy - sum_d/M - xhat*sum_dx/M).
        std::fill(sum_d.begin(), sum_d.end(), 0.0);
        std::fill(sum_dx.begin(), sum_dx.end(), 0.0);
        for (std::int64_t i = 0; i < M; ++i) {
          for (int c = 0; c < C; ++c) {
            const size_t cc = static_cast<size_t>(c);
            const double xhat = (xs[i * C + c] - mu[cc]) * sinv[cc];
            sum_d[cc] += dys[i * C + c];
            sum_dx[cc] += dys[i * C + c] * xhat;
          }
        }
        if (wants(1)) {
          Tensor& dg = G(1);
          for (int c = 0; c < C; ++c) dg[c] += sum_dx[static_cast<size_t>(c)];
        }
        if (wants(2)) {
          Tensor& db = G(2);
          for (int c = 0; c < C; ++c) db[c] += sum_d[static_cast<size_t>(c)];
        }
        if (wants(0)) {
          Tensor& dx = G(0);
          double* dxs = dx.data() + n * M * C;
          for (std::int64_t i = 0; i < M; ++i) {
            for (int c = 0; c < C; ++c) {
              const size_t cc = static_cast<size_t>(c);
              const double xhat = (xs[i * C + c] - mu[cc]) * sinv[cc];
              dxs[i * C + c] += sinv[cc] * g[c] *
                                (dys[i * C + c] - sum_d[cc] / static_cast<double>(M) -
                                 xhat * sum_dx[cc] / static_cast<double>(M));
            }
          }
        }
      }
      break;
    }
    case Op::kAdd:
      if (wants(0)) {
        Tensor& da = G(0);
        for (std::int64_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (wants(1)) {
        Tensor& db = G(1);
        for (std::int64_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
      break;
    case Op::kSub:
      if (wants(0)) {
        Tensor& da = G(0);
        for (std::int64_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (wants(1)) {
        Tensor& db = G(1);
        for (std::int64_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
      }
      break;
    case Op::kMul: {
      const Tensor& a = V(0);
      const Tensor& b = V(1);
      if (wants(0)) {
        Tensor& da = G(0);
        for (std::int64_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * b[i];
      }
      if (wants(1)) {
        Tensor& db = G(1);
        for (std::int64_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * a[i];
      }
      break;
    }
    case Op::kDiv: {
      const Tensor& a = V(0);
      const Tensor& b = V(1);
      if (wants(0)) {
        Tensor& da = G(0);
        for (std::int64_t i = 0; i < dy.size(); ++i) da[i] += dy[i] / b[i];
      }
      if (wants(1)) {
        Tensor& db = G(1);
        for (std::int64_t i = 0; i < dy.size(); ++i) db[i] -= dy[i] * a[i] / (b[i] * b[i]);
      }
      break;
    }
    case Op::kScale: {
      if (!wants(0)) break;
      Tensor& dx = G(0);
      for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] += nd.a * dy[i];
      break;
    }
    case Op::kAddConst:
    case Op::kAddChannelConst: {
      if (!wants(0)) break;
      Tensor& dx = G(0);
      for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      break;
    }
    case Op::kMulChannelConst: {
      if (!wants(0)) break;
      const int C = dy.dim(dy.rank() - 1);
      Tensor& dx = G(0);
      const std::int64_t rows = dy.size() / C;
      for (std::int64_t r = 0; r < rows; ++r) {
        for (int c = 0; c < C; ++c) dx[r * C + c] += dy[r * C + c] * nd.taps[static_cast<size_t>(c)];
      }
      break;
    }
    case Op::kClampMin: {
      if (!wants(0)) break;
      const Tensor& x = V(0);
      Tensor& dx = G(0);
      for (std::int64_t i = 0; i < dy.size(); ++i) {
        if (x[i] >= nd.a) dx[i] += dy[i];
      }
      break;
    }
    case Op::kPowConst: {
      if (!wants(0)) break;
      const Tensor& x = V(0);
      Tensor& dx = G(0);
      if (nd.a == 1.0) {
        for (std::int64_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
      } else {
        for (std::int64_t i = 0; i < dy.size(); ++i) {
          dx[i] += dy[i] * nd.a * std::pow(x[i], nd.a - 1.0);
        }
      }
      break;
    }
    case Op::kConcat: {
      const int Ctot = dy.dim(3);
      const std::int64_t rows = dy.size() / Ctot;
      int coff = 0;
      for (size_t s = 0; s < nd.in.size(); ++s) {
        const Tensor& t = *run.val[static_cast<size_t>(nd.in[s])];
        const int c = t.dim(3);
        if (nodes[static_cast<size_t>(nd.in[s])].needs_grad) {
          Tensor& dxs = G(static_cast<int>(s));
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* src = dy.data() + r * Ctot + coff;
            double* dst = dxs.data() + r * c;
            for (int j = 0; j < c; ++j) dst[j] += src[j];
          }
        }
        coff += c;
      }
      break;
    }
    case Op::kMaxPool2: {
      if (!wants(0)) break;
      const Tensor& x = V(0);
      Tensor& dx = G(0);
      const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
      const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
      for (int n = 0; n < N; ++n) {
        for (int ho = 0; ho < Ho; ++ho) {
          for (int wo = 0; wo < Wo; ++wo) {
            const int h1 = std::min(H, 2 * ho + 2), w1 = std::min(W, 2 * wo + 2);
            for (int c = 0; c < C; ++c) {
              int bh = 2 * ho, bw = 2 * wo;
              double m = x.at(n, bh, bw, c);
              for (int h = 2 * ho; h < h1; ++h) {
                for (int w = 2 * wo; w < w1; ++w) {
                  if (x.at(n, h, w, c) > m) {
                    m = x.at(n, h, w, c);
                    bh = h;
                    bw = w;
                  }
                }
              }
              dx.at(n, bh, bw, c) += dy.at(n, ho, wo, c);
            }
          }
        }
      }
      break;
    }
    case Op::kAvgPool2: {
      if (!wants(0)) break;
      const Tensor& x = V(0);
      Tensor& dx = G(0);
      const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
      const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
      for (int n = 0; n < N; ++n) {
        for (int ho = 0; ho < Ho; ++ho) {
          for (int wo = 0; wo < Wo; ++wo) {
            const int h1 = std::min(H, 2 * ho + 2), w1 = std::min(W, 2 * wo + 2);
            const double inv = 1.0 / static_cast<double>((h1 - 2 * ho) * (w1 - 2 * wo));
            for (int c = 0; c < C; ++c) {
              const double gv = dy.at(n, ho, wo, c) * inv;
              for (int h = 2 * ho; h < h1; ++h) {
                for (int w = 2 * wo; w < w1; ++w) dx.at(n, h, w, c) += gv;
              }
            }
          }
        }
      }
      break;
    }
    case Op::kSepFilterValid: {
      if (!wants(0)) break;
      const Tensor& x = V(0);
      Tensor& dx = G(0);
      const int T = static_cast<int>(nd.taps.size());
      const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
      const int Hm = H - T + 1, Wm = W - T + 1;
      Tensor dtmp({N, Hm, W, C});
      for (int n = 0; n < N; ++n) {
        for (int h = 0; h < Hm; ++h) {
          for (int w = 0; w < Wm; ++w) {
            for (int c = 0; c < C; ++c) {
              const double gv = dy.at(n, h, w, c);
              if (gv == 0.0) continue;
              for (int t = 0; t < T; ++t) {
                dtmp.at(n, h, w + t, c) += nd.taps[static_cast<size_t>(t)] * gv;
              }
            }
          }
        }
      }
      for (int n = 0; n < N; ++n) {
        for (int h = 0; h < Hm; ++h) {
          for (int w = 0; w < W; ++w) {
            for (int c = 0; c < C; ++c) {
              const double gv = dtmp.at(n, h, w, c);
              if (gv == 0.0) continue;
              for (int t = 0; t < T; ++t) {
                dx.at(n, h + t, w, c) += nd.taps[static_cast<size_t>(t)] * gv;
              }
            }
          }
        }
      }
      break;
    }
    case Op::kMeanAll: {
      if (!wants(0)) break;
      const Tensor& x = V(0);
      Tensor& dx = G(0);
      const double gv = dy[0] / static_cast<double>(x.size());
      for (std::int64_t i = 0; i < x.size(); ++i) dx[i] += gv;
      break;
    }
  }
}

Run prepare_run(const std::vector<Node>& nodes, const std::vector<NodeId>& outs,
                const std::vector<Graph::Feed>& feeds) {
  Run run;
  run.own.resize(nodes.size());
  run.val.assign(nodes.size(), nullptr);
  run.needed.assign(nodes.size(), 0);
  for (const auto& f : feeds) {
    if (f.id < 0 || f.id >= static_cast<NodeId>(nodes.size()) ||
        nodes[static_cast<size_t>(f.id)].op != Op::kInput) {
      throw ContractError("feed target is not an input node");
    }
    run.val[static_cast<size_t>(f.id)] = f.value;
  }
  for (NodeId o : outs) {
    if (o < 0 || o >= static_cast<NodeId>(nodes.size())) throw ContractError("unknown output node");
    mark_needed(nodes, o, run.needed);
  }
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (run.needed[i]) forward_node(nodes, static_cast<NodeId>(i), run);
  }
  return run;
}

}  // namespace

std::vector<Tensor> Graph::eval(const std::vector<NodeId>& outs, const std::vector<Feed>& feeds) {
  Run run = prepare_run(impl_->nodes, outs, feeds);
  std::vector<Tensor> result;
  result.reserve(outs.size());
  for (NodeId o : outs) result.push_back(*run.val[static_cast<size_t>(o)]);
  return result;
}

double Graph::eval_scalar(NodeId out, const std::vector<Feed>& feeds) {
  Run run = prepare_run(impl_->nodes, {out}, feeds);
  const Tensor& t = *run.val[static_cast<size_t>(out)];
  require(t.size() == 1, "eval_scalar on non-scalar node " + t.shape_str());
  return t[0];
}

Graph::GradResult Graph::gradients(NodeId loss, const std::vector<Feed>& feeds,
                                   const std::vector<NodeId>& extra_scalars) {
  std::vector<NodeId> outs = extra_scalars;
  outs.push_back(loss);
  Run run = prepare_run(impl_->nodes, outs, feeds);

  GradResult res;
  {
    const Tensor& lv = *run.val[static_cast<size_t>(loss)];
    require(lv.size() == 1, "backward from non-scalar node " + lv.shape_str());
    res.value = lv[0];
  }
  for (NodeId e : extra_scalars) {
    const Tensor& t = *run.val[static_cast<size_t>(e)];
    require(t.size() == 1, "extra output is not scalar");
    res.extra.push_back(t[0]);
  }

  const auto& nodes = impl_->nodes;
  std::vector<Tensor> grad(nodes.size());
  grad[static_cast<size_t>(loss)] = Tensor({1}, std::vector<double>{1.0});
  for (NodeId id = loss; id >= 0; --id) {
    const size_t i = static_cast<size_t>(id);
    if (!run.needed[i] || grad[i].empty() || !nodes[i].needs_grad) continue;
    backward_node(nodes, id, run, grad);
  }
  for (size_t i = 0; i < nodes.size(); ++i) {
    const Node& nd = nodes[i];
    const bool leaf_wants =
        (nd.op == Op::kParam && nd.trainable) || (nd.op == Op::kInput && nd.with_grad);
    if (leaf_wants && !grad[i].empty()) {
      res.grads.emplace(static_cast<NodeId>(i), std::move(grad[i]));
    }
  }
  return res;
}

}  // namespace pynet::nn
