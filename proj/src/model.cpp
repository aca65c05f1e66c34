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

#include "pynet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

namespace pynet::model {
namespace {

constexpr int kLevels = 5;

int ceil_to(int v, int m) { return ((v + m - 1) / m) * m; }

// Reflected index without edge repetition, folded so any pad width is legal.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

}  // namespace

void PyNetConfig::validate() const {
  if (static_cast<int>(base_channels.size()) != kLevels)
    throw ConfigError("base_channels must list exactly five widths");
  if (static_cast<int>(blocks_per_level.size()) != kLevels)
    throw ConfigError("blocks_per_level must list exactly five counts");
  if (kernel_sizes.empty()) throw ConfigError("kernel_sizes must not be empty");
  for (int k : kernel_sizes) {
    if (k < 1 || k % 2 == 0) throw ConfigError("kernel sizes must be odd and positive");
  }
  const int branches = static_cast<int>(kernel_sizes.size());
  for (int l = 0; l < kLevels; ++l) {
    const int w = base_channels[l];
    if (w < 1) throw ConfigError("base_channels must be positive");
    if (w % branches != 0)
      throw ConfigError("width " + std::to_string(w) + " at level " + std::to_string(l + 1) +
                        " is not divisible by the kernel branch count");
    if (l > 0 && w < base_channels[l - 1])
      throw ConfigError("base_channels must be non-decreasing toward level 5");
    if (blocks_per_level[l] < 1) throw ConfigError("blocks_per_level entries must be >= 1");
  }
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
    throw ConfigError("leaky_slope must lie in (0, 1)");
  if (!(instance_norm_epsilon > 0.0)) throw ConfigError("instance_norm_epsilon must be positive");
  for (int l : instance_norm_levels) {
    if (l < 1 || l > kLevels) throw ConfigError("instance_norm_levels entries must be in 1..5");
  }
}

nlohmann::json PyNetConfig::to_json() const {
  nlohmann::json j;
  j["base_channels"] = base_channels;
  j["kernel_sizes"] = kernel_sizes;
  j["leaky_slope"] = leaky_slope;
  j["instance_norm_levels"] = std::vector<int>(instance_norm_levels.begin(), instance_norm_levels.end());
  j["instance_norm_epsilon"] = instance_norm_epsilon;
  j["blocks_per_level"] = blocks_per_level;
  return j;
}

PyNetConfig PyNetConfig::from_json(const nlohmann::json& j) {
  PyNetConfig c;
  try {
    c.base_channels = j.at("base_channels").get<std::vector<int>>();
    c.kernel_sizes = j.at("kernel_sizes").get<std::vector<int>>();
    c.leaky_slope = j.at("leaky_slope").get<double>();
    auto levels = j.at("instance_norm_levels").get<std::vector<int>>();
    c.instance_norm_levels = std::set<int>(levels.begin(), levels.end());
    c.instance_norm_epsilon = j.at("instance_norm_epsilon").get<double>();
    c.blocks_per_level = j.at("blocks_per_level").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

// Builder assembles the parameter table in a fixed creation order so a seed
// fully determines the initial weights.
class ModelBuilder {
 public:
  ModelBuilder(PyNetModel& m, std::uint64_t seed) : m_(m), rng_(seed) {}

  void conv(const std::string& name, int k, int cin, int cout) {
    const double fan_in = static_cast<double>(k) * k * cin;
    const double slope = m_.config_.leaky_slope;
    const double stddev = std::sqrt(2.0 / ((1.0 + slope * slope) * fan_in));
    Tensor w({k, k, cin, cout});
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng_.normal(0.0, stddev);
    add(name + ".w", std::move(w));
    add(name + ".b", Tensor::zeros({cout}));
  }

  void norm(const std::string& name, int channels) {
    add(name + ".norm.g", Tensor::full({channels}, 1.0));
    add(name + ".norm.b", Tensor::zeros({channels}));
  }

 private:
  void add(const std::string& name, Tensor t) {
    t.quantize_f32();
    m_.order_.push_back(name);
    m_.params_.emplace(name, std::move(t));
  }

  PyNetModel& m_;
  Rng rng_;
};

PyNetModel PyNetModel::build(const PyNetConfig& config, std::uint64_t seed) {
  config.validate();
  PyNetModel m;
  m.config_ = config;
  m.trained_level_ = 6;

  ModelBuilder b(m, seed);
  const auto& cfg = m.config_;
  auto width = [&](int level) { return cfg.base_channels[level - 1]; };
  const int branches = static_cast<int>(cfg.kernel_sizes.size());

  b.conv("stem", 3, 4, width(1));
  for (int l = 2; l <= kLevels; ++l) {
    b.conv("down" + std::to_string(l), 3, width(l - 1), width(l));
    if (cfg.instance_norm_levels.count(l)) b.norm("down" + std::to_string(l), width(l));
  }
  for (int l = 1; l <= kLevels; ++l) {
    const int bw = width(l) / branches;
    for (int i = 0; i < cfg.blocks_per_level[l - 1]; ++i) {
      for (int k : cfg.kernel_sizes) {
        const std::string base =
            "l" + std::to_string(l) + ".b" + std::to_string(i) + ".k" + std::to_string(k);
        b.conv(base, k, width(l), bw);
        if (cfg.instance_norm_levels.count(l)) b.norm(base, bw);
      }
    }
  }
  for (int l = 1; l <= kLevels - 1; ++l) {
    b.conv("up" + std::to_string(l), 3, width(l + 1), width(l));
    if (l >= 2 && cfg.instance_norm_levels.count(l)) b.norm("up" + std::to_string(l), width(l));
    b.conv("fuse" + std::to_string(l), 3, 2 * width(l), width(l));
    if (l >= 2 && cfg.instance_norm_levels.count(l)) b.norm("fuse" + std::to_string(l), width(l));
  }
  for (int l = 1; l <= kLevels; ++l) b.conv("head" + std::to_string(l), 3, width(l), 3);
  b.conv("out0", 3, width(1), 3);
  return m;
}

void PyNetModel::set_trained_level(int level) {
  if (level < 0 || level > 6) throw ContractError("trained_level must lie in 0..6");
  trained_level_ = level;
}

std::int64_t PyNetModel::param_count() const {
  std::int64_t n = 0;
  for (const auto& name : order_) n += params_.at(name).size();
  return n;
}

Tensor& PyNetModel::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Tensor& PyNetModel::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> PyNetModel::level_param_names(int level) const {
  if (level < 0 || level > kLevels) throw ContractError("level must lie in 0..5");
  std::vector<std::string> out;
  auto take = [&](const std::string& prefix) {
    for (const auto& name : order_) {
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    }
  };
  take("stem.");
  for (int l = 2; l <= kLevels; ++l) take("down" + std::to_string(l) + ".");
  const int deepest_needed = std::max(level, 1);
  for (int l = deepest_needed; l <= kLevels; ++l) take("l" + std::to_string(l) + ".");
  for (int l = deepest_needed; l <= kLevels - 1; ++l) {
    take("up" + std::to_string(l) + ".");
    take("fuse" + std::to_string(l) + ".");
  }
  if (level == 0) {
    take("out0.");
  } else {
    take("head" + std::to_string(level) + ".");
  }
  return out;
}

nn::NodeId PyNetModel::build_forward(nn::Graph& g, nn::NodeId packed, int level, bool trainable,
                                     const NormCalibration* frozen,
                                     std::vector<std::pair<std::string, nn::NodeId>>* norm_taps)
    const {
  if (level < 0 || level > kLevels) throw ContractError("level must lie in 0..5");
  const auto& cfg = config_;
  const double slope = cfg.leaky_slope;
  const double eps = cfg.instance_norm_epsilon;

  auto p = [&](const std::string& name) { return g.param(name, &params_.at(name), trainable); };
  auto conv = [&](nn::NodeId x, const std::string& name) {
    return g.conv2d(x, p(name + ".w"), p(name + ".b"));
  };
  auto conv_t = [&](nn::NodeId x, const std::string& name) {
    return g.conv2d_t(x, p(name + ".w"), p(name + ".b"));
  };
  auto norm = [&](nn::NodeId x, const std::string& name) {
    if (norm_taps) norm_taps->emplace_back(name, x);
    if (!frozen) return g.instance_norm(x, p(name + ".norm.g"), p(name + ".norm.b"), eps);
    const auto it = frozen->find(name);
    if (it == frozen->end())
      throw ContractError("calibration is missing instance-norm site " + name);
    const Tensor& gain = params_.at(name + ".norm.g");
    const Tensor& bias = params_.at(name + ".norm.b");
    const auto& st = it->second;
    const auto channels = static_cast<std::size_t>(gain.dim(0));
    if (st.mean.size() != channels || st.var.size() != channels)
      throw ContractError("calibration channel count mismatch at site " + name);
    std::vector<double> scale(channels), shift(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      scale[c] = gain[static_cast<std::int64_t>(c)] / std::sqrt(st.var[c] + eps);
      shift[c] = bias[static_cast<std::int64_t>(c)] - scale[c] * st.mean[c];
    }
    return g.add_channel_const(g.mul_channel_const(x, std::move(scale)), std::move(shift));
  };
  auto block = [&](nn::NodeId x, int l, int i) {
    std::vector<nn::NodeId> parts;
    for (int k : cfg.kernel_sizes) {
      const std::string base =
          "l" + std::to_string(l) + ".b" + std::to_string(i) + ".k" + std::to_string(k);
      nn::NodeId y = conv(x, base);
      if (cfg.instance_norm_levels.count(l)) y = norm(y, base);
      parts.push_back(g.leaky_relu(y, slope));
    }
    nn::NodeId merged = parts.size() == 1 ? parts[0] : g.concat_channels(parts);
    return g.add(x, merged);
  };

  // Contracting path: features at every scale.
  std::vector<nn::NodeId> f(kLevels + 1);
  f[1] = g.leaky_relu(conv(packed, "stem"), slope);
  for (int l = 2; l <= kLevels; ++l) {
    nn::NodeId x = conv(g.max_pool2(f[l - 1]), "down" + std::to_string(l));
    if (cfg.instance_norm_levels.count(l)) x = norm(x, "down" + std::to_string(l));
    f[l] = g.leaky_relu(x, slope);
  }

  nn::NodeId gx = f[kLevels];
  for (int i = 0; i < cfg.blocks_per_level[kLevels - 1]; ++i) gx = block(gx, kLevels, i);
  if (level == kLevels) return g.tanh_op(conv(gx, "head" + std::to_string(kLevels)));

  for (int l = kLevels - 1; l >= std::max(level, 1); --l) {
    nn::NodeId u = conv_t(gx, "up" + std::to_string(l));
    if (l >= 2 && cfg.instance_norm_levels.count(l)) u = norm(u, "up" + std::to_string(l));
    u = g.leaky_relu(u, slope);
    nn::NodeId x = conv(g.concat_channels({f[l], u}), "fuse" + std::to_string(l));
    if (l >= 2 && cfg.instance_norm_levels.count(l)) x = norm(x, "fuse" + std::to_string(l));
    x = g.leaky_relu(x, slope);
    for (int i = 0; i < cfg.blocks_per_level[l - 1]; ++i) x = block(x, l, i);
    gx = x;
    if (level == l) return g.tanh_op(conv(gx, "head" + std::to_string(l)));
  }
  return g.tanh_op(conv_t(gx, "out0"));
}

PyramidOutput PyNetModel::forward(const Tensor& packed_batch, int level) const {
  if (packed_batch.rank() != 4 || packed_batch.dim(3) != 4)
    throw ContractError("forward expects a packed batch shaped [N,h,w,4]");
  const int h = packed_batch.dim(1);
  const int w = packed_batch.dim(2);
  if (h < 32 || w < 32)
    throw ContractError("packed input must be at least 32 per side, got " +
                        packed_batch.shape_str());
  if (h % 16 != 0 || w % 16 != 0)
    throw ContractError("packed input sides must be multiples of 16, got " +
                        packed_batch.shape_str());

  nn::Graph g;
  nn::NodeId in = g.input("packed");
  nn::NodeId out = build_forward(g, in, level);
  Tensor image = std::move(g.eval({out}, {{in, &packed_batch}}).front());
  return PyramidOutput{level, std::move(image)};
}

namespace {

// Largest calibration input, in packed pixels. A 256x256 frame calibrates
// on itself exactly; larger frames are mean-pooled until they fit.
constexpr std::int64_t kCalibrationBudget = 256 * 256;

Tensor pool_packed2(const Tensor& in) {
  const int h = in.dim(0) / 2, w = in.dim(1) / 2;
  Tensor out({h, w, 4});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 4; ++c)
        out.at(y, x, c) = 0.25 * (in.at(2 * y, 2 * x, c) + in.at(2 * y, 2 * x + 1, c) +
                                  in.at(2 * y + 1, 2 * x, c) + in.at(2 * y + 1, 2 * x + 1, c));
  return out;
}

}  // namespace

NormCalibration PyNetModel::calibrate_norms(const rawio::PackedRaw& raw) const {
  Tensor small = raw.data;
  while (static_cast<std::int64_t>(small.dim(0)) * small.dim(1) > kCalibrationBudget &&
         small.dim(0) >= 64 && small.dim(1) >= 64)
    small = pool_packed2(small);
  const int ch = std::max(32, small.dim(0) / 16 * 16);
  const int cw = std::max(32, small.dim(1) / 16 * 16);
  if (small.dim(0) < 32 || small.dim(1) < 32)
    throw ContractError("frame too small to calibrate: " + raw.data.shape_str());
  Tensor calib({1, ch, cw, 4});
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int c = 0; c < 4; ++c) calib.at(0, y, x, c) = small.at(y, x, c);

  nn::Graph g;
  nn::NodeId in = g.input("packed");
  std::vector<std::pair<std::string, nn::NodeId>> taps;
  build_forward(g, in, 0, false, nullptr, &taps);
  NormCalibration out;
  if (taps.empty()) return out;
  std::vector<nn::NodeId> ids;
  ids.reserve(taps.size());
  for (const auto& [name, id] : taps) ids.push_back(id);
  const std::vector<Tensor> acts = g.eval(ids, {{in, &calib}});
  for (std::size_t t = 0; t < taps.size(); ++t) {
    const Tensor& a = acts[t];
    const int C = a.dim(3);
    const std::int64_t M = static_cast<std::int64_t>(a.dim(1)) * a.dim(2);
    NormStats st;
    st.mean.assign(static_cast<std::size_t>(C), 0.0);
    st.var.assign(static_cast<std::size_t>(C), 0.0);
    for (std::int64_t i = 0; i < M; ++i)
      for (int c = 0; c < C; ++c) st.mean[static_cast<std::size_t>(c)] += a[i * C + c];
    for (int c = 0; c < C; ++c) st.mean[static_cast<std::size_t>(c)] /= static_cast<double>(M);
    for (std::int64_t i = 0; i < M; ++i)
      for (int c = 0; c < C; ++c) {
        const double d = a[i * C + c] - st.mean[static_cast<std::size_t>(c)];
        st.var[static_cast<std::size_t>(c)] += d * d;
      }
    for (int c = 0; c < C; ++c) st.var[static_cast<std::size_t>(c)] /= static_cast<double>(M);
    out[taps[t].first] = std::move(st);
  }
  return out;
}

rawio::RgbImage PyNetModel::infer_full(const rawio::PackedRaw& raw, int tile, int overlap) const {
  if (trained_level_ != 0)
    throw ContractError("infer_full requires a model trained through level 0");
  if (raw.data.rank() != 3 || raw.data.dim(2) != 4)
    throw ContractError("infer_full expects packed data shaped [h,w,4]");
  if (tile < 32 || tile % 16 != 0) throw ContractError("tile must be a multiple of 16, >= 32");
  if (overlap < 0 || overlap >= tile) throw ContractError("overlap must lie in [0, tile)");

  const int H = raw.data.dim(0);
  const int W = raw.data.dim(1);
  if (H < 2 || W < 2) throw ContractError("packed frame too small: " + raw.data.shape_str());

  auto positions = [&](int size) {
    std::vector<int> pos;
    if (size <= tile) {
      pos.push_back(0);
      return pos;
    }
    const int step = tile - overlap;
    for (int p = 0; p + tile < size; p += step) pos.push_back(p);
    pos.push_back(size - tile);
    return pos;
  };
  const std::vector<int> ys = positions(H);
  const std::vector<int> xs = positions(W);

  // Instance-norm statistics depend on the normalized extent, so per-tile
  // normalization would tint each tile by its own content. When tiling,
  // statistics are measured once on a calibration view of the whole frame
  // and frozen for every tile.
  const bool tiled = ys.size() > 1 || xs.size() > 1;
  NormCalibration calib;
  if (tiled) calib = calibrate_norms(raw);

  Tensor acc = Tensor::zeros({2 * H, 2 * W, 3});
  Tensor wsum = Tensor::zeros({2 * H, 2 * W});

  // Linear cross-fade over the overlapped band; interior edges ramp from a
  // small positive weight so the normalizing sum never vanishes.
  auto ramp = [&](int i, int n, bool lead_interior, bool trail_interior) {
    const int band = 2 * overlap;
    double v = 1.0;
    if (lead_interior && i < band) v = std::min(v, (i + 1.0) / (band + 1.0));
    if (trail_interior && i >= n - band) v = std::min(v, (n - i) / (band + 1.0));
    return v;
  };

  for (int y0 : ys) {
    for (int x0 : xs) {
      const int th = std::min(tile, H - y0);
      const int tw = std::min(tile, W - x0);
      // Tiles read `overlap` extra pixels of real context on interior
      // sides; the context band is dropped after the forward pass so only
      // frame edges ever see padding.
      const int cy0 = tiled ? std::max(0, y0 - overlap) : y0;
      const int cx0 = tiled ? std::max(0, x0 - overlap) : x0;
      const int cy1 = tiled ? std::min(H, y0 + th + overlap) : y0 + th;
      const int cx1 = tiled ? std::min(W, x0 + tw + overlap) : x0 + tw;
      const int sh = cy1 - cy0;
      const int sw = cx1 - cx0;
      const int ph = std::max(32, ceil_to(sh, 16));
      const int pw = std::max(32, ceil_to(sw, 16));
      Tensor tile_in({1, ph, pw, 4});
      for (int y = 0; y < ph; ++y) {
        const int sy = cy0 + reflect_index(y, sh);
        for (int x = 0; x < pw; ++x) {
          const int sx = cx0 + reflect_index(x, sw);
          for (int c = 0; c < 4; ++c) tile_in.at(0, y, x, c) = raw.data.at(sy, sx, c);
        }
      }
      Tensor out;
      if (tiled) {
        nn::Graph g;
        nn::NodeId in = g.input("packed");
        nn::NodeId o = build_forward(g, in, 0, false, &calib);
        out = std::move(g.eval({o}, {{in, &tile_in}}).front());
      } else {
        out = forward(tile_in, 0).image;
      }
      const int oy = 2 * (y0 - cy0);
      const int ox = 2 * (x0 - cx0);
      const int oh = 2 * th;
      const int ow = 2 * tw;
      const bool lead_y = y0 > 0, trail_y = y0 + th < H;
      const bool lead_x = x0 > 0, trail_x = x0 + tw < W;
      for (int y = 0; y < oh; ++y) {
        const double wy = ramp(y, oh, lead_y, trail_y);
        for (int x = 0; x < ow; ++x) {
          const double wgt = wy * ramp(x, ow, lead_x, trail_x);
          wsum.at(2 * y0 + y, 2 * x0 + x) += wgt;
          for (int c = 0; c < 3; ++c)
            acc.at(2 * y0 + y, 2 * x0 + x, c) += wgt * out.at(0, oy + y, ox + x, c);
        }
      }
    }
  }

  rawio::RgbImage rgb;
  rgb.data = Tensor({2 * H, 2 * W, 3});
  for (int y = 0; y < 2 * H; ++y) {
    for (int x = 0; x < 2 * W; ++x) {
      const double wgt = wsum.at(y, x);
      for (int c = 0; c < 3; ++c) {
        const double v = (acc.at(y, x, c) / wgt + 1.0) * 0.5;
        rgb.data.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return rgb;
}

}  // namespace pynet::model
