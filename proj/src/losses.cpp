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

#include "pynet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "pynet/archive.hpp"

namespace pynet::losses {
namespace {

using nn::Graph;
using nn::NodeId;

constexpr double kMsWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kPowFloor = 1e-12;

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> taps(static_cast<size_t>(window));
  const double c = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    taps[static_cast<size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * sigma * sigma));
    sum += taps[static_cast<size_t>(i)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

Tensor as_nhwc(const Tensor& t) {
  if (t.rank() == 4) return t;
  if (t.rank() == 3) {
    return Tensor({1, t.dim(0), t.dim(1), t.dim(2)},
                  std::vector<double>(t.data(), t.data() + t.size()));
  }
  if (t.rank() == 2) {
    return Tensor({1, t.dim(0), t.dim(1), 1},
                  std::vector<double>(t.data(), t.data() + t.size()));
  }
  throw ContractError("image tensor must be rank 2..4, got " + t.shape_str());
}

// SSIM mean and contrast/structure mean for one scale.
struct SsimNodes {
  NodeId ssim;
  NodeId cs;
};

SsimNodes ssim_cs_nodes(Graph& g, NodeId x, NodeId y, const SsimOptions& opt) {
  const auto taps = gaussian_taps(opt.window, opt.sigma);
  const double c1 = opt.k1 * opt.max_value * opt.k1 * opt.max_value;
  const double c2 = opt.k2 * opt.max_value * opt.k2 * opt.max_value;
  NodeId mx = g.sep_filter_valid(x, taps);
  NodeId my = g.sep_filter_valid(y, taps);
  NodeId mxy = g.mul(mx, my);
  NodeId mxx = g.mul(mx, mx);
  NodeId myy = g.mul(my, my);
  NodeId sxx = g.sub(g.sep_filter_valid(g.mul(x, x), taps), mxx);
  NodeId syy = g.sub(g.sep_filter_valid(g.mul(y, y), taps), myy);
  NodeId sxy = g.sub(g.sep_filter_valid(g.mul(x, y), taps), mxy);
  NodeId l_num = g.add_const(g.scale(mxy, 2.0), c1);
  NodeId l_den = g.add_const(g.add(mxx, myy), c1);
  NodeId cs_num = g.add_const(g.scale(sxy, 2.0), c2);
  NodeId cs_den = g.add_const(g.add(sxx, syy), c2);
  NodeId cs_map = g.div(cs_num, cs_den);
  NodeId ssim_map = g.mul(g.div(l_num, l_den), cs_map);
  return {g.mean_all(ssim_map), g.mean_all(cs_map)};
}

struct ExtractorParams {
  std::vector<NodeId> w, b;
};

ExtractorParams bind_extractor(Graph& g, const FeatureExtractor& fx) {
  ExtractorParams p;
  for (const auto& layer : fx.layers) {
    p.w.push_back(g.param("fx." + layer.name + ".w", &layer.w, false));
    p.b.push_back(g.param("fx." + layer.name + ".b", &layer.b, false));
  }
  return p;
}

NodeId extractor_features_node(Graph& g, NodeId image01, const FeatureExtractor& fx,
                               const ExtractorParams& p, int h, int w) {
  std::vector<double> shift = {-fx.mean[0], -fx.mean[1], -fx.mean[2]};
  NodeId x = g.add_channel_const(g.scale(image01, fx.input_scale), shift);
  for (size_t i = 0; i < fx.layers.size(); ++i) {
    if (fx.layers[i].pool_before && std::min(h, w) >= 4) {
      x = g.max_pool2(x);
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    x = g.relu(g.conv2d(x, p.w[i], p.b[i]));
  }
  return x;
}

}  // namespace

int ms_ssim_scales(int h, int w) {
  const int side = std::min(h, w);
  if (side < 11) {
    throw ContractError("image side " + std::to_string(side) + " smaller than MS-SSIM window");
  }
  const int scales = static_cast<int>(std::floor(std::log2(side / 11.0))) + 1;
  return std::min(5, scales);
}

NodeId mse_node(Graph& g, NodeId pred, NodeId target) {
  NodeId d = g.sub(pred, target);
  return g.mean_all(g.mul(d, d));
}

NodeId ssim_node(Graph& g, NodeId pred, NodeId target, const SsimOptions& opt) {
  return ssim_cs_nodes(g, pred, target, opt).ssim;
}

NodeId ms_ssim_node(Graph& g, NodeId pred, NodeId target, int h, int w, const SsimOptions& opt) {
  const int scales = ms_ssim_scales(h, w);
  if (scales == 1) return ssim_node(g, pred, target, opt);
  double wsum = 0.0;
  for (int i = 0; i < scales; ++i) wsum += kMsWeights[i];
  NodeId x = pred, y = target;
  NodeId prod = -1;
  for (int i = 0; i < scales; ++i) {
    const double wi = kMsWeights[i] / wsum;
    SsimNodes s = ssim_cs_nodes(g, x, y, opt);
    NodeId base = (i == scales - 1) ? s.ssim : s.cs;
    NodeId term = g.pow_const(g.clamp_min(base, kPowFloor), wi);
    prod = (prod < 0) ? term : g.mul(prod, term);
    if (i != scales - 1) {
      x = g.avg_pool2(x);
      y = g.avg_pool2(y);
    }
  }
  return prod;
}

NodeId perceptual_node(Graph& g, NodeId pred, NodeId target, const FeatureExtractor& fx, int h,
                       int w) {
  if (fx.layers.empty()) throw ConfigError("feature extractor has no layers");
  ExtractorParams p = bind_extractor(g, fx);
  NodeId fa = extractor_features_node(g, pred, fx, p, h, w);
  NodeId fb = extractor_features_node(g, target, fx, p, h, w);
  return mse_node(g, fa, fb);
}

NodeId level_loss_node(Graph& g, const LevelLossSpec& spec, NodeId pred, NodeId target,
                       const FeatureExtractor* fx, int h, int w,
                       std::vector<NodeId>* term_nodes) {
  spec.validate();
  NodeId p01 = g.scale(g.add_const(pred, 1.0), 0.5);
  NodeId t01 = g.scale(g.add_const(target, 1.0), 0.5);
  NodeId total = -1;
  for (const LossTerm& term : spec.terms) {
    NodeId raw = -1;
    switch (term.kind) {
      case LossKind::kMse:
        raw = mse_node(g, p01, t01);
        break;
      case LossKind::kPerceptual:
        if (fx == nullptr) {
          throw ConfigError("level " + std::to_string(spec.level) +
                            " loss needs a feature extractor but none is configured");
        }
        raw = perceptual_node(g, p01, t01, *fx, h, w);
        break;
      case LossKind::kSsim: {
        NodeId s = spec.multiscale_ssim ? ms_ssim_node(g, p01, t01, h, w)
                                        : ssim_node(g, p01, t01);
        raw = g.add_const(g.scale(s, -1.0), 1.0);
        break;
      }
    }
    if (term_nodes) term_nodes->push_back(raw);
    NodeId weighted = g.scale(raw, term.weight / term.norm_constant);
    total = (total < 0) ? weighted : g.add(total, weighted);
  }
  return total;
}

double mse_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target)) {
    throw ContractError("mse shape mismatch " + pred.shape_str() + " vs " + target.shape_str());
  }
  double s = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double psnr(const Tensor& pred, const Tensor& target, double max_value) {
  const double mse = mse_loss(pred, target);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

namespace {

double eval_pair_metric(const Tensor& pred, const Tensor& target,
                        const std::function<NodeId(Graph&, NodeId, NodeId, int, int)>& build) {
  if (!pred.same_shape(target)) {
    throw ContractError("metric shape mismatch " + pred.shape_str() + " vs " +
                        target.shape_str());
  }
  const Tensor a = as_nhwc(pred);
  const Tensor b = as_nhwc(target);
  Graph g;
  NodeId pi = g.input("pred");
  NodeId ti = g.input("target");
  NodeId out = build(g, pi, ti, a.dim(1), a.dim(2));
  return g.eval_scalar(out, {{pi, &a}, {ti, &b}});
}

}  // namespace

double ssim(const Tensor& pred, const Tensor& target, const SsimOptions& opt) {
  return eval_pair_metric(pred, target, [&](Graph& g, NodeId p, NodeId t, int, int) {
    return ssim_node(g, p, t, opt);
  });
}

double ms_ssim(const Tensor& pred, const Tensor& target, const SsimOptions& opt) {
  return eval_pair_metric(pred, target, [&](Graph& g, NodeId p, NodeId t, int h, int w) {
    return ms_ssim_node(g, p, t, h, w, opt);
  });
}

double perceptual_loss(const Tensor& pred, const Tensor& target, const FeatureExtractor& fx) {
  return eval_pair_metric(pred, target, [&](Graph& g, NodeId p, NodeId t, int h, int w) {
    return perceptual_node(g, p, t, fx, h, w);
  });
}

Tensor extract_features(const FeatureExtractor& fx, const Tensor& image) {
  const Tensor a = as_nhwc(image);
  Graph g;
  NodeId in = g.input("image");
  ExtractorParams p = bind_extractor(g, fx);
  NodeId f = extractor_features_node(g, in, fx, p, a.dim(1), a.dim(2));
  return g.eval({f}, {{in, &a}})[0];
}

LevelLossSpec LevelLossSpec::for_level(int level) {
  if (level < 0 || level > 5) throw ContractError("level must be 0..5");
  LevelLossSpec spec;
  spec.level = level;
  if (level >= 4) {
    spec.terms = {{LossKind::kMse, 1.0, 1.0}};
  } else if (level >= 2) {
    spec.terms = {{LossKind::kPerceptual, 4.0, 1.0}, {LossKind::kMse, 1.0, 1.0}};
  } else {
    spec.terms = {{LossKind::kPerceptual, 1.0, 1.0},
                  {LossKind::kSsim, 0.75, 1.0},
                  {LossKind::kMse, 0.05, 1.0}};
  }
  return spec;
}

void LevelLossSpec::validate() const {
  const LevelLossSpec expect = for_level(level);
  bool ok = expect.terms.size() == terms.size();
  for (size_t i = 0; ok && i < terms.size(); ++i) {
    ok = terms[i].kind == expect.terms[i].kind && terms[i].weight == expect.terms[i].weight &&
         terms[i].norm_constant > 0.0;
  }
  if (!ok) {
    throw ContractError("loss terms do not match the level-" + std::to_string(level) +
                        " composition");
  }
}

double level_loss(const LevelLossSpec& spec, const Tensor& pred, const Tensor& target,
                  const FeatureExtractor* fx) {
  return eval_pair_metric(pred, target, [&](Graph& g, NodeId p, NodeId t, int h, int w) {
    return level_loss_node(g, spec, p, t, fx, h, w);
  });
}

std::vector<double> level_loss_terms(const LevelLossSpec& spec, const Tensor& pred,
                                     const Tensor& target, const FeatureExtractor* fx) {
  if (!pred.same_shape(target)) {
    throw ContractError("metric shape mismatch " + pred.shape_str() + " vs " +
                        target.shape_str());
  }
  const Tensor a = as_nhwc(pred);
  const Tensor b = as_nhwc(target);
  Graph g;
  NodeId pi = g.input("pred");
  NodeId ti = g.input("target");
  std::vector<NodeId> term_nodes;
  level_loss_node(g, spec, pi, ti, fx, a.dim(1), a.dim(2), &term_nodes);
  std::vector<Tensor> vals = g.eval(term_nodes, {{pi, &a}, {ti, &b}});
  std::vector<double> out;
  out.reserve(vals.size());
  for (const Tensor& v : vals) out.push_back(v[0]);
  return out;
}

FeatureExtractor FeatureExtractor::random_small(std::uint64_t seed) {
  FeatureExtractor fx;
  fx.tag = "rand3_3";
  Rng rng(seed);
  const int chans[4] = {3, 16, 32, 64};
  for (int li = 0; li < 3; ++li) {
    Layer layer;
    layer.name = "rand_conv" + std::to_string(li + 1);
    layer.pool_before = li > 0;
    const int cin = chans[li], cout = chans[li + 1];
    layer.w = Tensor({3, 3, cin, cout});
    const double stddev = std::sqrt(2.0 / (9.0 * cin));
    for (std::int64_t i = 0; i < layer.w.size(); ++i) layer.w[i] = rng.normal(0.0, stddev);
    layer.b = Tensor({cout});
    fx.layers.push_back(std::move(layer));
  }
  return fx;
}

FeatureExtractor FeatureExtractor::load(const std::string& path, const std::string& layer) {
  archive::Archive arc;
  try {
    arc = archive::read_archive(path, "PYNETFX1");
  } catch (const IoError& e) {
    throw ConfigError(std::string("feature extractor weights unavailable: ") + e.what());
  }
  if (arc.meta.value("format", "") != "pynet-fx-v1") {
    throw FormatError("not a feature-extractor archive: " + path);
  }
  FeatureExtractor fx;
  fx.tag = layer;
  if (arc.meta.contains("mean")) {
    auto m = arc.meta["mean"].get<std::vector<double>>();
    if (m.size() != 3) throw FormatError("extractor mean must have 3 entries");
    fx.mean = {m[0], m[1], m[2]};
  }
  fx.input_scale = arc.meta.value("input_scale", 255.0);
  // "reluX_Y" selects the activation of "convX_Y"
  std::string want = layer;
  if (want.rfind("relu", 0) == 0) want = "conv" + want.substr(4);
  bool found = false;
  for (const auto& le : arc.meta.value("layers", nlohmann::json::array())) {
    Layer l;
    l.name = le.at("name").get<std::string>();
    l.pool_before = le.value("pool_before", false);
    const auto wi = arc.tensors.find(l.name + ".w");
    const auto bi = arc.tensors.find(l.name + ".b");
    if (wi == arc.tensors.end() || bi == arc.tensors.end()) {
      throw FormatError("extractor archive missing tensors for layer " + l.name);
    }
    l.w = wi->second.data;
    l.b = bi->second.data;
    const bool is_selected = l.name == want;
    fx.layers.push_back(std::move(l));
    if (is_selected) {
      found = true;
      break;
    }
  }
  if (!found) throw ConfigError("extractor layer '" + layer + "' not present in " + path);
  return fx;
}

}  // namespace pynet::losses
