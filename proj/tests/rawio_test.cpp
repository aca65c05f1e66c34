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

#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <fstream>

#include "pynet/rawio.hpp"
#include "test_util.hpp"

using namespace pynet;
using namespace pynet::rawio;

namespace {

BayerFrame make_frame(int h, int w, CfaLayout cfa = CfaLayout::kRggb) {
  BayerFrame f;
  f.cfa = cfa;
  f.bit_depth = 10;
  f.black_level = 0.0;
  f.white_level = 1023.0;
  f.data = Tensor({h, w});
  return f;
}

BayerFrame random_counts(int h, int w, std::uint64_t seed, CfaLayout cfa = CfaLayout::kRggb) {
  BayerFrame f = make_frame(h, w, cfa);
  Rng rng(seed);
  for (std::int64_t i = 0; i < f.data.size(); ++i) {
    f.data[i] = std::floor(rng.uniform(0.0, 1023.999));
  }
  return f;
}

}  // namespace

TEST_CASE("normalize maps the black..white span onto [0,1]") {
  BayerFrame f = make_frame(2, 2);
  f.black_level = 64.0;
  f.white_level = 1023.0;
  f.data = Tensor({2, 2}, std::vector<double>{64.0, 1023.0, 543.5, 30.0});
  BayerFrame n = normalize(f);
  REQUIRE(n.normalized);
  REQUIRE(n.data.at(0, 0) == 0.0);
  REQUIRE(n.data.at(0, 1) == 1.0);
  // (543.5 - 64) / 959 is exactly one half.
  REQUIRE(n.data.at(1, 0) == 0.5);
  // Below-black values clamp instead of going negative.
  REQUIRE(n.data.at(1, 1) == 0.0);
  // The input frame is untouched.
  REQUIRE_FALSE(f.normalized);
  REQUIRE(f.data.at(0, 0) == 64.0);

  REQUIRE_THROWS_AS(normalize(n), ContractError);
}

TEST_CASE("pack_rggb on a single RGGB cell") {
  BayerFrame f = make_frame(2, 2);
  f.data = Tensor({2, 2}, std::vector<double>{0.1, 0.2, 0.4, 0.3});
  f.normalized = true;
  PackedRaw p = pack_rggb(f);
  REQUIRE(p.data.shape() == std::vector<int>{1, 1, 4});
  REQUIRE(p.data.at(0, 0, 0) == 0.1);  // R  at (0,0)
  REQUIRE(p.data.at(0, 0, 1) == 0.2);  // G1 at (0,1)
  REQUIRE(p.data.at(0, 0, 2) == 0.3);  // B  at (1,1)
  REQUIRE(p.data.at(0, 0, 3) == 0.4);  // G2 at (1,0)

  BayerFrame back = unpack_rggb(p);
  REQUIRE(testutil::max_abs_diff(back.data, f.data) == 0.0);
}

TEST_CASE("pack_rggb rejects unnormalized frames") {
  BayerFrame f = random_counts(4, 4, 5);
  REQUIRE_THROWS_AS(pack_rggb(f), ContractError);
}

TEST_CASE("pack/unpack are mutually inverse for every CFA layout") {
  for (CfaLayout cfa : {CfaLayout::kRggb, CfaLayout::kBggr, CfaLayout::kGrbg, CfaLayout::kGbrg}) {
    BayerFrame f = normalize(random_counts(6, 8, 17 + static_cast<int>(cfa), cfa));
    PackedRaw p = pack_rggb(f);
    REQUIRE(p.data.shape() == std::vector<int>{3, 4, 4});
    BayerFrame back = unpack_rggb(p, cfa);
    REQUIRE(testutil::max_abs_diff(back.data, f.data) == 0.0);

    // Value multiset is preserved: same sum and sum of squares.
    double s1 = 0, s2 = 0, t1 = 0, t2 = 0;
    for (std::int64_t i = 0; i < f.data.size(); ++i) {
      s1 += f.data[i];
      s2 += f.data[i] * f.data[i];
    }
    for (std::int64_t i = 0; i < p.data.size(); ++i) {
      t1 += p.data[i];
      t2 += p.data[i] * p.data[i];
    }
    REQUIRE_THAT(s1, Catch::Matchers::WithinAbs(t1, 1e-9));
    REQUIRE_THAT(s2, Catch::Matchers::WithinAbs(t2, 1e-9));
  }
}

TEST_CASE("cell_offsets agrees with the canonical layout definitions") {
  auto m = cell_offsets(CfaLayout::kRggb);
  REQUIRE((m.r[0] == 0 && m.r[1] == 0));
  REQUIRE((m.g1[0] == 0 && m.g1[1] == 1));
  REQUIRE((m.b[0] == 1 && m.b[1] == 1));
  REQUIRE((m.g2[0] == 1 && m.g2[1] == 0));
  for (CfaLayout cfa : {CfaLayout::kRggb, CfaLayout::kBggr, CfaLayout::kGrbg, CfaLayout::kGbrg}) {
    auto o = cell_offsets(cfa);
    // The four offsets tile the 2x2 cell; G1 shares its row with R.
    int mask = 0;
    for (auto* ch : {o.r, o.g1, o.b, o.g2}) mask |= 1 << (ch[0] * 2 + ch[1]);
    REQUIRE(mask == 0xF);
    REQUIRE(o.g1[0] == o.r[0]);
    REQUIRE(o.g2[0] == o.b[0]);
    REQUIRE(to_string(cfa) == to_string(cfa_from_string(to_string(cfa))));
  }
  REQUIRE_THROWS_AS(cfa_from_string("rgbw"), FormatError);
}

TEST_CASE("visualize_raw degenerate cases") {
  SECTION("uniform mosaic is gamma-encoded flat gray") {
    BayerFrame f = make_frame(8, 8);
    f.data = Tensor({8, 8}, 0.3);
    f.normalized = true;
    RgbImage img = visualize_raw(f);
    const double want = std::pow(0.3, 1.0 / 2.2);
    for (std::int64_t i = 0; i < img.data.size(); ++i) {
      REQUIRE_THAT(img.data[i], Catch::Matchers::WithinAbs(want, 1e-12));
    }
  }
  SECTION("all-zero frame stays all-zero") {
    BayerFrame f = make_frame(6, 6);
    f.data = Tensor({6, 6}, 0.0);
    f.normalized = true;
    RgbImage img = visualize_raw(f);
    REQUIRE(img.data.max() == 0.0);
  }
  SECTION("unnormalized input is rejected") {
    REQUIRE_THROWS_AS(visualize_raw(random_counts(4, 4, 2)), ContractError);
  }
}

TEST_CASE("visualize_raw matches a per-pixel reference on a random RGGB frame") {
  BayerFrame f = normalize(random_counts(10, 12, 99));
  RgbImage got = visualize_raw(f);
  const int H = 10, W = 12;

  // Straightforward reference: clamp-to-edge bilinear demosaic for RGGB,
  // gray-world gains, gamma 1/2.2. Written from the definition, not the
  // library code.
  auto px = [&](int y, int x) {
    y = std::clamp(y, 0, H - 1);
    x = std::clamp(x, 0, W - 1);
    return f.data.at(y, x);
  };
  Tensor ref({H, W, 3});
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const bool ey = (y % 2) == 0, ex = (x % 2) == 0;
      double r, g, b;
      if (ey && ex) {  // red site
        r = px(y, x);
        g = (px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1)) / 4.0;
        b = (px(y - 1, x - 1) + px(y - 1, x + 1) + px(y + 1, x - 1) + px(y + 1, x + 1)) / 4.0;
      } else if (!ey && !ex) {  // blue site
        b = px(y, x);
        g = (px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1)) / 4.0;
        r = (px(y - 1, x - 1) + px(y - 1, x + 1) + px(y + 1, x - 1) + px(y + 1, x + 1)) / 4.0;
      } else if (ey) {  // green on the red row
        g = px(y, x);
        r = (px(y, x - 1) + px(y, x + 1)) / 2.0;
        b = (px(y - 1, x) + px(y + 1, x)) / 2.0;
      } else {  // green on the blue row
        g = px(y, x);
        r = (px(y - 1, x) + px(y + 1, x)) / 2.0;
        b = (px(y, x - 1) + px(y, x + 1)) / 2.0;
      }
      ref.at(y, x, 0) = r;
      ref.at(y, x, 1) = g;
      ref.at(y, x, 2) = b;
    }
  }
  double sum[3] = {0, 0, 0};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) sum[c] += ref.at(y, x, c);
  const double gr = sum[1] / sum[0], gb = sum[1] / sum[2];
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      ref.at(y, x, 0) = std::pow(std::clamp(ref.at(y, x, 0) * gr, 0.0, 1.0), 1.0 / 2.2);
      ref.at(y, x, 1) = std::pow(std::clamp(ref.at(y, x, 1), 0.0, 1.0), 1.0 / 2.2);
      ref.at(y, x, 2) = std::pow(std::clamp(ref.at(y, x, 2) * gb, 0.0, 1.0), 1.0 / 2.2);
    }

  REQUIRE(testutil::max_abs_diff(got.data, ref) < 1e-6);
  REQUIRE(got.data.min() >= 0.0);
  REQUIRE(got.data.max() <= 1.0);
}

TEST_CASE("mosaic PNG round trip preserves counts and sidecar metadata") {
  testutil::TempDir tmp("rawio");
  BayerFrame f = random_counts(8, 6, 3, CfaLayout::kGbrg);
  f.bit_depth = 10;
  f.black_level = 16.0;
  f.white_level = 1000.0;
  const std::string path = tmp.str("shot.png");
  save_raw_mosaic(f, path);

  BayerFrame back = load_raw_mosaic(path);
  REQUIRE(back.cfa == CfaLayout::kGbrg);
  REQUIRE(back.bit_depth == 10);
  REQUIRE(back.black_level == 16.0);
  REQUIRE(back.white_level == 1000.0);
  REQUIRE_FALSE(back.normalized);
  REQUIRE(testutil::max_abs_diff(back.data, f.data) == 0.0);
}

TEST_CASE("load_raw_mosaic metadata priority: override > sidecar > default") {
  testutil::TempDir tmp("rawio-meta");
  BayerFrame f = random_counts(4, 4, 8);
  f.black_level = 10.0;
  const std::string path = tmp.str("m.png");
  save_raw_mosaic(f, path);  // sidecar says black_level 10

  SECTION("sidecar wins over defaults") {
    REQUIRE(load_raw_mosaic(path).black_level == 10.0);
  }
  SECTION("override wins over sidecar") {
    RawMeta ov;
    ov.black_level = 42.0;
    ov.cfa = CfaLayout::kBggr;
    BayerFrame b = load_raw_mosaic(path, ov);
    REQUIRE(b.black_level == 42.0);
    REQUIRE(b.cfa == CfaLayout::kBggr);
    REQUIRE(b.white_level == 1023.0);  // untouched sidecar field
  }
  SECTION("defaults apply without a sidecar") {
    std::filesystem::remove(tmp.str("m.json"));
    BayerFrame b = load_raw_mosaic(path);
    REQUIRE(b.cfa == CfaLayout::kRggb);
    REQUIRE(b.bit_depth == 10);
    REQUIRE(b.black_level == 0.0);
    REQUIRE(b.white_level == 1023.0);
  }
}

TEST_CASE("load_raw_mosaic rejects malformed inputs") {
  testutil::TempDir tmp("rawio-bad");

  SECTION("odd dimensions") {
    cv::Mat odd(5, 4, CV_16UC1, cv::Scalar(100));
    const std::string path = tmp.str("odd.png");
    REQUIRE(cv::imwrite(path, odd));
    REQUIRE_THROWS_AS(load_raw_mosaic(path), FormatError);
  }
  SECTION("counts above the declared bit depth") {
    cv::Mat hot(4, 4, CV_16UC1, cv::Scalar(1500));
    const std::string path = tmp.str("hot.png");
    REQUIRE(cv::imwrite(path, hot));
    REQUIRE_THROWS_AS(load_raw_mosaic(path), MetadataError);  // default depth is 10
  }
  SECTION("missing file") {
    REQUIRE_THROWS_AS(load_raw_mosaic(tmp.str("nope.png")), IoError);
  }
  SECTION("three-channel file where a mosaic is expected") {
    cv::Mat rgb(4, 4, CV_8UC3, cv::Scalar(1, 2, 3));
    const std::string path = tmp.str("rgb.png");
    REQUIRE(cv::imwrite(path, rgb));
    REQUIRE_THROWS_AS(load_raw_mosaic(path), FormatError);
  }
}

TEST_CASE("rgb PNG round trip at 8-bit precision") {
  testutil::TempDir tmp("rawio-rgb");
  RgbImage img;
  img.data = Tensor({4, 5, 3});
  Rng rng(21);
  // Values on the exact 8-bit grid survive the round trip bit-exactly.
  for (std::int64_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = std::floor(rng.uniform(0.0, 255.999)) / 255.0;
  }
  const std::string path = tmp.str("img.png");
  save_rgb(img, path);
  RgbImage back = load_rgb(path);
  REQUIRE(back.data.shape() == img.data.shape());
  REQUIRE(testutil::max_abs_diff(back.data, img.data) < 1e-12);
}
