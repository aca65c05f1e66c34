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

#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "pynet/nn.hpp"
#include "test_util.hpp"

using pynet::Rng;
using pynet::Tensor;
using pynet::nn::Graph;
using pynet::nn::NodeId;

namespace {

Tensor rand_t(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Central finite differences against the analytic gradient of every
// element of every leaf. Leaves enter either as trainable params or as
// with_grad inputs.
double fd_worst_rel(std::function<NodeId(Graph&, std::vector<NodeId>&)> build,
                    std::vector<Tensor*> leaves, bool as_params) {
  Graph g;
  std::vector<NodeId> ids;
  for (size_t i = 0; i < leaves.size(); ++i) {
    ids.push_back(as_params ? g.param("p" + std::to_string(i), leaves[i])
                            : g.input("x" + std::to_string(i), true));
  }
  NodeId loss = build(g, ids);
  std::vector<Graph::Feed> feeds;
  if (!as_params) {
    for (size_t i = 0; i < leaves.size(); ++i) feeds.push_back({ids[i], leaves[i]});
  }
  auto res = g.gradients(loss, feeds);
  double worst = 0.0;
  const double h = 1e-5;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor* t = leaves[li];
    REQUIRE(res.grads.count(ids[li]) == 1);
    const Tensor& an = res.grads.at(ids[li]);
    for (std::int64_t i = 0; i < t->size(); ++i) {
      const double orig = (*t)[i];
      (*t)[i] = orig + h;
      const double fp = g.eval_scalar(loss, feeds);
      (*t)[i] = orig - h;
      const double fm = g.eval_scalar(loss, feeds);
      (*t)[i] = orig;
      const double fd = (fp - fm) / (2 * h);
      const double scale = std::max({std::fabs(fd), std::fabs(an[i]), 1e-6});
      worst = std::max(worst, std::fabs(fd - an[i]) / scale);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("conv2d forward matches a brute-force loop") {
  Rng rng(31);
  Tensor x = rand_t({2, 5, 6, 3}, rng);
  Tensor w = rand_t({3, 3, 3, 4}, rng, -0.5, 0.5);
  Tensor b = rand_t({4}, rng, -0.2, 0.2);

  Graph g;
  NodeId xi = g.input("x");
  NodeId y = g.conv2d(xi, g.param("w", &w), g.param("b", &b));
  Tensor out = g.eval({y}, {{xi, &x}})[0];
  REQUIRE(out.shape() == std::vector<int>{2, 5, 6, 4});

  // Independent re-derivation: zero-padded stride-1 cross-correlation.
  const int k = 3, p = 1;
  double worst = 0.0;
  for (int n = 0; n < 2; ++n)
    for (int oy = 0; oy < 5; ++oy)
      for (int ox = 0; ox < 6; ++ox)
        for (int co = 0; co < 4; ++co) {
          double acc = b[co];
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx)
              for (int ci = 0; ci < 3; ++ci) {
                const int iy = oy + ky - p, ix = ox + kx - p;
                if (iy < 0 || iy >= 5 || ix < 0 || ix >= 6) continue;
                acc += x.at(n, iy, ix, ci) * w[((ky * k + kx) * 3 + ci) * 4 + co];
              }
          worst = std::max(worst, std::fabs(acc - out.at(n, oy, ox, co)));
        }
  REQUIRE(worst < 1e-12);
}

TEST_CASE("conv2d_t forward matches a brute-force scatter") {
  Rng rng(32);
  Tensor x = rand_t({1, 4, 5, 3}, rng);
  Tensor w = rand_t({3, 3, 3, 2}, rng, -0.5, 0.5);
  Tensor b = rand_t({2}, rng, -0.2, 0.2);

  Graph g;
  NodeId xi = g.input("x");
  NodeId y = g.conv2d_t(xi, g.param("w", &w), g.param("b", &b));
  Tensor out = g.eval({y}, {{xi, &x}})[0];
  REQUIRE(out.shape() == std::vector<int>{1, 8, 10, 2});

  // Fractionally strided scatter: y[2i+ky-p, 2j+kx-p] += x[i,j] * w[ky,kx].
  const int k = 3, p = 1;
  Tensor ref({1, 8, 10, 2}, 0.0);
  for (int oy = 0; oy < 8; ++oy)
    for (int ox = 0; ox < 10; ++ox)
      for (int co = 0; co < 2; ++co) ref.at(0, oy, ox, co) = b[co];
  for (int iy = 0; iy < 4; ++iy)
    for (int ix = 0; ix < 5; ++ix)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int oy = 2 * iy + ky - p, ox = 2 * ix + kx - p;
          if (oy < 0 || oy >= 8 || ox < 0 || ox >= 10) continue;
          for (int co = 0; co < 2; ++co)
            for (int ci = 0; ci < 3; ++ci)
              ref.at(0, oy, ox, co) += x.at(0, iy, ix, ci) * w[((ky * k + kx) * 3 + ci) * 2 + co];
        }
  REQUIRE(testutil::max_abs_diff(out, ref) < 1e-12);
}

TEST_CASE("pool semantics: 2x2 stride 2 with ceil edges") {
  // 3x3 single-channel map; trailing row/column pools over what exists.
  Tensor x({1, 3, 3, 1}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  Graph g;
  NodeId xi = g.input("x");
  NodeId mp = g.max_pool2(xi);
  NodeId ap = g.avg_pool2(xi);
  auto outs = g.eval({mp, ap}, {{xi, &x}});
  REQUIRE(outs[0].shape() == std::vector<int>{1, 2, 2, 1});
  REQUIRE(outs[0][0] == 5.0);  // max(1,2,4,5)
  REQUIRE(outs[0][1] == 6.0);  // max(3,6)
  REQUIRE(outs[0][2] == 8.0);  // max(7,8)
  REQUIRE(outs[0][3] == 9.0);  // max(9)
  REQUIRE(outs[1][0] == 3.0);  // mean(1,2,4,5)
  REQUIRE(outs[1][1] == 4.5);
  REQUIRE(outs[1][2] == 7.5);
  REQUIRE(outs[1][3] == 9.0);
}

TEST_CASE("concat_channels preserves order and values") {
  Rng rng(33);
  Tensor a = rand_t({1, 2, 2, 2}, rng);
  Tensor b = rand_t({1, 2, 2, 3}, rng);
  Graph g;
  NodeId ai = g.input("a"), bi = g.input("b");
  NodeId cat = g.concat_channels({ai, bi});
  Tensor out = g.eval({cat}, {{ai, &a}, {bi, &b}})[0];
  REQUIRE(out.shape() == std::vector<int>{1, 2, 2, 5});
  for (int h = 0; h < 2; ++h)
    for (int w = 0; w < 2; ++w) {
      for (int c = 0; c < 2; ++c) REQUIRE(out.at(0, h, w, c) == a.at(0, h, w, c));
      for (int c = 0; c < 3; ++c) REQUIRE(out.at(0, h, w, 2 + c) == b.at(0, h, w, c));
    }
}

TEST_CASE("instance_norm standardizes per sample and channel") {
  Rng rng(34);
  Tensor x = rand_t({2, 6, 5, 3}, rng, -2.0, 3.0);
  Tensor gain({3}, std::vector<double>{1.5, 0.5, 2.0});
  Tensor bias({3}, std::vector<double>{0.1, -0.2, 0.3});
  Graph g;
  NodeId xi = g.input("x");
  NodeId y = g.instance_norm(xi, g.param("g", &gain), g.param("b", &bias), 1e-5);
  Tensor out = g.eval({y}, {{xi, &x}})[0];

  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      // Direct oracle: standardize with biased variance, then affine.
      double mean = 0.0, var = 0.0;
      for (int h = 0; h < 6; ++h)
        for (int w = 0; w < 5; ++w) mean += x.at(n, h, w, c);
      mean /= 30.0;
      for (int h = 0; h < 6; ++h)
        for (int w = 0; w < 5; ++w) {
          const double d = x.at(n, h, w, c) - mean;
          var += d * d;
        }
      var /= 30.0;
      for (int h = 0; h < 6; ++h)
        for (int w = 0; w < 5; ++w) {
          const double want =
              gain[c] * (x.at(n, h, w, c) - mean) / std::sqrt(var + 1e-5) + bias[c];
          REQUIRE_THAT(out.at(n, h, w, c), Catch::Matchers::WithinAbs(want, 1e-12));
        }
    }
}

TEST_CASE("sep_filter_valid applies 1-D taps along H then W") {
  Tensor x({1, 3, 3, 1}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  Graph g;
  NodeId xi = g.input("x");
  NodeId y = g.sep_filter_valid(xi, {0.25, 0.5, 0.25});
  Tensor out = g.eval({y}, {{xi, &x}})[0];
  REQUIRE(out.shape() == std::vector<int>{1, 1, 1, 1});
  // Rows blur to (4,5,6); columns blur to 5.
  REQUIRE_THAT(out[0], Catch::Matchers::WithinAbs(5.0, 1e-12));
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(7);

  SECTION("conv2d") {
    Tensor x = rand_t({2, 5, 6, 3}, rng);
    Tensor w = rand_t({3, 3, 3, 4}, rng, -0.5, 0.5);
    Tensor b = rand_t({4}, rng, -0.2, 0.2);
    double worst = fd_worst_rel(
        [](Graph& g, std::vector<NodeId>& l) {
          NodeId y = g.conv2d(l[0], l[1], l[2]);
          return g.mean_all(g.mul(y, y));
        },
        {&x, &w, &b}, true);
    REQUIRE(worst < 1e-6);
  }
  SECTION("conv2d_t") {
    Tensor x = rand_t({2, 4, 5, 3}, rng);
    Tensor w = rand_t({3, 3, 3, 2}, rng, -0.5, 0.5);
    Tensor b = rand_t({2}, rng, -0.2, 0.2);
    double worst = fd_worst_rel(
        [](Graph& g, std::vector<NodeId>& l) {
          NodeId y = g.conv2d_t(l[0], l[1], l[2]);
          return g.mean_all(g.mul(y, y));
        },
        {&x, &w, &b}, true);
    REQUIRE(worst < 1e-6);
  }
  SECTION("instance_norm under tanh") {
    Tensor x = rand_t({1, 6, 6, 2}, rng);
    Tensor gn = rand_t({2}, rng, 0.5, 1.5);
    Tensor bn = rand_t({2}, rng, -0.3, 0.3);
    double worst = fd_worst_rel(
        [](Graph& g, std::vector<NodeId>& l) {
          NodeId y = g.instance_norm(l[0], l[1], l[2], 1e-5);
          NodeId t = g.tanh_op(y);
          return g.mean_all(g.mul(t, t));
        },
        {&x, &gn, &bn}, true);
    REQUIRE(worst < 1e-5);
  }
  SECTION("elementwise chain") {
    Tensor a = rand_t({1, 4, 4, 2}, rng);
    Tensor b = rand_t({1, 4, 4, 2}, rng, 0.5, 2.0);
    double worst = fd_worst_rel(
        [](Graph& g, std::vector<NodeId>& l) {
          NodeId d = g.div(g.add_const(g.mul(l[0], l[0]), 0.3), l[1]);
          NodeId s = g.sub(g.scale(d, 1.7), l[0]);
          NodeId c = g.clamp_min(s, -0.4);
          return g.mean_all(g.pow_const(g.clamp_min(g.add_const(c, 2.0), 0.1), 1.3));
        },
        {&a, &b}, false);
    REQUIRE(worst < 1e-5);
  }
  SECTION("pools and concat") {
    Tensor a = rand_t({1, 5, 7, 3}, rng);
    double worst = fd_worst_rel(
        [](Graph& g, std::vector<NodeId>& l) {
          NodeId cat = g.concat_channels({g.max_pool2(l[0]), g.avg_pool2(l[0])});
          NodeId lr = g.leaky_relu(cat, 0.2);
          return g.mean_all(g.mul(lr, lr));
        },
        {&a}, false);
    REQUIRE(worst < 1e-5);
  }
  SECTION("separable filter with relu and channel offsets") {
    Tensor a = rand_t({1, 8, 8, 2}, rng);
    double worst = fd_worst_rel(
        [](Graph& g, std::vector<NodeId>& l) {
          NodeId f = g.sep_filter_valid(l[0], {0.25, 0.5, 0.25});
          NodeId t = g.add_channel_const(g.relu(f), {0.1, -0.2});
          return g.mean_all(g.mul(t, t));
        },
        {&a}, false);
    REQUIRE(worst < 1e-5);
  }
  SECTION("ssim-like rational composite") {
    Tensor a = rand_t({1, 12, 12, 1}, rng, 0.1, 0.9);
    Tensor b = rand_t({1, 12, 12, 1}, rng, 0.1, 0.9);
    double worst = fd_worst_rel(
        [](Graph& g, std::vector<NodeId>& l) {
          std::vector<double> taps = {0.05, 0.25, 0.4, 0.25, 0.05};
          NodeId mx = g.sep_filter_valid(l[0], taps);
          NodeId my = g.sep_filter_valid(l[1], taps);
          NodeId mxy = g.mul(mx, my);
          NodeId sxy = g.sub(g.sep_filter_valid(g.mul(l[0], l[1]), taps), mxy);
          NodeId sxx = g.sub(g.sep_filter_valid(g.mul(l[0], l[0]), taps), g.mul(mx, mx));
          NodeId syy = g.sub(g.sep_filter_valid(g.mul(l[1], l[1]), taps), g.mul(my, my));
          NodeId num =
              g.mul(g.add_const(g.scale(mxy, 2.0), 1e-4), g.add_const(g.scale(sxy, 2.0), 9e-4));
          NodeId den = g.mul(g.add_const(g.add(g.mul(mx, mx), g.mul(my, my)), 1e-4),
                             g.add_const(g.add(sxx, syy), 9e-4));
          return g.mean_all(g.div(num, den));
        },
        {&a, &b}, false);
    REQUIRE(worst < 1e-5);
  }
}

TEST_CASE("frozen params and off-path leaves receive no gradient entry") {
  Rng rng(35);
  Tensor x = rand_t({1, 4, 4, 2}, rng);
  Tensor unused = rand_t({1, 4, 4, 2}, rng);
  Tensor w = rand_t({3, 3, 2, 2}, rng);
  Tensor b = rand_t({2}, rng);

  Graph g;
  NodeId xi = g.input("x", true);
  NodeId ui = g.input("unused", true);
  NodeId wi = g.param("w", &w, /*trainable=*/false);
  NodeId bi = g.param("b", &b, /*trainable=*/false);
  NodeId y = g.conv2d(xi, wi, bi);
  NodeId loss = g.mean_all(g.mul(y, y));

  auto res = g.gradients(loss, {{xi, &x}, {ui, &unused}});
  REQUIRE(res.grads.count(xi) == 1);
  REQUIRE(res.grads.count(wi) == 0);
  REQUIRE(res.grads.count(bi) == 0);
  REQUIRE(res.grads.count(ui) == 0);
  REQUIRE(std::isfinite(res.value));
}

TEST_CASE("extra scalar outputs ride along with gradients") {
  Tensor x({1, 2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  Graph g;
  NodeId xi = g.input("x", true);
  NodeId m = g.mean_all(xi);
  NodeId m2 = g.mean_all(g.mul(xi, xi));
  auto res = g.gradients(m2, {{xi, &x}}, {m});
  REQUIRE_THAT(res.value, Catch::Matchers::WithinAbs(7.5, 1e-12));  // mean of 1,4,9,16
  REQUIRE(res.extra.size() == 1);
  REQUIRE_THAT(res.extra[0], Catch::Matchers::WithinAbs(2.5, 1e-12));
}
