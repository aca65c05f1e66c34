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

#include "pynet/rawio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace pynet::rawio {
namespace {

void check_frame(const BayerFrame& f) {
  if (f.data.rank() != 2) throw ContractError("mosaic must be 2-D, got " + f.data.shape_str());
  if (f.height() % 2 != 0 || f.width() % 2 != 0) {
    throw FormatError("mosaic dimensions must be even, got " + f.data.shape_str());
  }
  const double full = std::pow(2.0, f.bit_depth) - 1.0;
  if (!(f.black_level >= 0.0 && f.black_level < f.white_level && f.white_level <= full)) {
    throw MetadataError("inconsistent black/white levels for bit depth " +
                        std::to_string(f.bit_depth));
  }
}

std::string sidecar_path(const std::string& path) {
  std::filesystem::path p(path);
  p.replace_extension(".json");
  return p.string();
}

}  // namespace

CellOffsets cell_offsets(CfaLayout layout) {
  switch (layout) {
    case CfaLayout::kRggb:
      return {{0, 0}, {0, 1}, {1, 1}, {1, 0}};
    case CfaLayout::kBggr:
      return {{1, 1}, {1, 0}, {0, 0}, {0, 1}};
    case CfaLayout::kGrbg:
      return {{0, 1}, {0, 0}, {1, 0}, {1, 1}};
    case CfaLayout::kGbrg:
      return {{1, 0}, {1, 1}, {0, 1}, {0, 0}};
  }
  throw ContractError("bad CFA layout");
}

std::string to_string(CfaLayout layout) {
  switch (layout) {
    case CfaLayout::kRggb:
      return "RGGB";
    case CfaLayout::kBggr:
      return "BGGR";
    case CfaLayout::kGrbg:
      return "GRBG";
    case CfaLayout::kGbrg:
      return "GBRG";
  }
  throw ContractError("bad CFA layout");
}

CfaLayout cfa_from_string(const std::string& s) {
  if (s == "RGGB") return CfaLayout::kRggb;
  if (s == "BGGR") return CfaLayout::kBggr;
  if (s == "GRBG") return CfaLayout::kGrbg;
  if (s == "GBRG") return CfaLayout::kGbrg;
  throw FormatError("unknown CFA layout '" + s + "'");
}

BayerFrame load_raw_mosaic(const std::string& path, const RawMeta& override_meta) {
  cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (img.empty()) throw IoError("cannot read mosaic file: " + path);
  if (img.channels() != 1) {
    throw FormatError("mosaic must be single-channel, got " + std::to_string(img.channels()) +
                      " channels: " + path);
  }
  if (img.depth() != CV_16U && img.depth() != CV_8U) {
    throw FormatError("mosaic must be 8- or 16-bit integer: " + path);
  }

  BayerFrame f;
  // sidecar metadata, if present
  const std::string side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream in(side);
    if (!in) throw IoError("cannot read metadata sidecar: " + side);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad metadata sidecar " + side + ": " + e.what());
    }
    if (j.contains("cfa")) f.cfa = cfa_from_string(j["cfa"].get<std::string>());
    if (j.contains("bit_depth")) f.bit_depth = j["bit_depth"].get<int>();
    if (j.contains("black_level")) f.black_level = j["black_level"].get<double>();
    if (j.contains("white_level")) f.white_level = j["white_level"].get<double>();
  }
  if (override_meta.cfa) f.cfa = *override_meta.cfa;
  if (override_meta.bit_depth) f.bit_depth = *override_meta.bit_depth;
  if (override_meta.black_level) f.black_level = *override_meta.black_level;
  if (override_meta.white_level) f.white_level = *override_meta.white_level;

  f.data = Tensor({img.rows, img.cols});
  double maxv = 0.0;
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      const double v = img.depth() == CV_16U ? static_cast<double>(img.at<std::uint16_t>(y, x))
                                             : static_cast<double>(img.at<std::uint8_t>(y, x));
      f.data.at(y, x) = v;
      maxv = std::max(maxv, v);
    }
  }
  check_frame(f);
  const double full = std::pow(2.0, f.bit_depth) - 1.0;
  if (maxv > full) {
    throw MetadataError("mosaic " + path + " holds value " + std::to_string(maxv) +
                        " exceeding declared " + std::to_string(f.bit_depth) + "-bit range");
  }
  return f;
}

void save_raw_mosaic(const BayerFrame& frame, const std::string& path) {
  check_frame(frame);
  if (frame.normalized) throw ContractError("save_raw_mosaic expects raw counts, not [0,1] data");
  cv::Mat img(frame.height(), frame.width(), CV_16UC1);
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      const double v = std::clamp(frame.data.at(y, x), 0.0, 65535.0);
      img.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(std::lround(v));
    }
  }
  if (!cv::imwrite(path, img)) throw IoError("cannot write mosaic file: " + path);
  nlohmann::json j = {{"cfa", to_string(frame.cfa)},
                      {"bit_depth", frame.bit_depth},
                      {"black_level", frame.black_level},
                      {"white_level", frame.white_level}};
  std::ofstream out(sidecar_path(path));
  if (!out) throw IoError("cannot write metadata sidecar for: " + path);
  out << j.dump(2) << "\n";
}

BayerFrame normalize(const BayerFrame& frame) {
  check_frame(frame);
  if (frame.normalized) throw ContractError("frame already normalized");
  BayerFrame out = frame;
  const double span = frame.white_level - frame.black_level;
  for (std::int64_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::clamp((frame.data[i] - frame.black_level) / span, 0.0, 1.0);
  }
  out.normalized = true;
  return out;
}

PackedRaw pack_rggb(const BayerFrame& frame) {
  check_frame(frame);
  if (!frame.normalized || frame.data.max() > 1.0) {
    throw ContractError("pack_rggb requires a normalized frame");
  }
  const CellOffsets m = cell_offsets(frame.cfa);
  const int h = frame.height() / 2, w = frame.width() / 2;
  PackedRaw out;
  out.data = Tensor({h, w, 4});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      out.data.at(i, j, 0) = frame.data.at(2 * i + m.r[0], 2 * j + m.r[1]);
      out.data.at(i, j, 1) = frame.data.at(2 * i + m.g1[0], 2 * j + m.g1[1]);
      out.data.at(i, j, 2) = frame.data.at(2 * i + m.b[0], 2 * j + m.b[1]);
      out.data.at(i, j, 3) = frame.data.at(2 * i + m.g2[0], 2 * j + m.g2[1]);
    }
  }
  return out;
}

BayerFrame unpack_rggb(const PackedRaw& packed, CfaLayout layout) {
  if (packed.data.rank() != 3 || packed.data.dim(2) != 4) {
    throw ContractError("packed raw must be [H,W,4], got " + packed.data.shape_str());
  }
  const CellOffsets m = cell_offsets(layout);
  const int h = packed.height(), w = packed.width();
  BayerFrame out;
  out.cfa = layout;
  out.normalized = true;
  out.data = Tensor({2 * h, 2 * w});
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      out.data.at(2 * i + m.r[0], 2 * j + m.r[1]) = packed.data.at(i, j, 0);
      out.data.at(2 * i + m.g1[0], 2 * j + m.g1[1]) = packed.data.at(i, j, 1);
      out.data.at(2 * i + m.b[0], 2 * j + m.b[1]) = packed.data.at(i, j, 2);
      out.data.at(2 * i + m.g2[0], 2 * j + m.g2[1]) = packed.data.at(i, j, 3);
    }
  }
  return out;
}

RgbImage visualize_raw(const BayerFrame& frame) {
  check_frame(frame);
  if (!frame.normalized) throw ContractError("visualize_raw requires a normalized frame");
  const int H = frame.height(), W = frame.width();
  const CellOffsets m = cell_offsets(frame.cfa);
  const int red_row = m.r[0];  // G sites in this row have horizontal R neighbors
  const auto at = [&](int y, int x) {
    return frame.data.at(std::clamp(y, 0, H - 1), std::clamp(x, 0, W - 1));
  };
  // 0 = R site, 1 = G site, 2 = B site
  int site[2][2];
  site[m.r[0]][m.r[1]] = 0;
  site[m.g1[0]][m.g1[1]] = 1;
  site[m.g2[0]][m.g2[1]] = 1;
  site[m.b[0]][m.b[1]] = 2;

  RgbImage out;
  out.data = Tensor({H, W, 3});
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double v = frame.data.at(y, x);
      double r, g, b;
      switch (site[y & 1][x & 1]) {
        case 0:
          r = v;
          g = 0.25 * (at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1));
          b = 0.25 * (at(y - 1, x - 1) + at(y - 1, x + 1) + at(y + 1, x - 1) + at(y + 1, x + 1));
          break;
        case 2:
          b = v;
          g = 0.25 * (at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1));
          r = 0.25 * (at(y - 1, x - 1) + at(y - 1, x + 1) + at(y + 1, x - 1) + at(y + 1, x + 1));
          break;
        default:
          g = v;
          if ((y & 1) == red_row) {
            r = 0.5 * (at(y, x - 1) + at(y, x + 1));
            b = 0.5 * (at(y - 1, x) + at(y + 1, x));
          } else {
            r = 0.5 * (at(y - 1, x) + at(y + 1, x));
            b = 0.5 * (at(y, x - 1) + at(y, x + 1));
          }
          break;
      }
      out.data.at(y, x, 0) = r;
      out.data.at(y, x, 1) = g;
      out.data.at(y, x, 2) = b;
    }
  }

  // gray-world white balance; gains forced to 1 for an empty channel
  double sum[3] = {0, 0, 0};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < 3; ++c) sum[c] += out.data.at(y, x, c);
    }
  }
  const double gain_r = sum[0] > 0.0 ? sum[1] / sum[0] : 1.0;
  const double gain_b = sum[2] > 0.0 ? sum[1] / sum[2] : 1.0;
  const double inv_gamma = 1.0 / 2.2;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      out.data.at(y, x, 0) *= gain_r;
      out.data.at(y, x, 2) *= gain_b;
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(out.data.at(y, x, c), 0.0, 1.0);
        out.data.at(y, x, c) = std::pow(v, inv_gamma);
      }
    }
  }
  return out;
}

RgbImage load_rgb(const std::string& path) {
  cv::Mat img = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (img.empty()) throw IoError("cannot read image file: " + path);
  if (img.channels() != 3) {
    throw FormatError("expected 3-channel image, got " + std::to_string(img.channels()) + ": " +
                      path);
  }
  const double scale = img.depth() == CV_16U ? 65535.0 : 255.0;
  if (img.depth() != CV_16U && img.depth() != CV_8U) {
    throw FormatError("expected 8- or 16-bit image: " + path);
  }
  RgbImage out;
  out.data = Tensor({img.rows, img.cols, 3});
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      double b, g, r;
      if (img.depth() == CV_16U) {
        const auto& px = img.at<cv::Vec3w>(y, x);
        b = px[0];
        g = px[1];
        r = px[2];
      } else {
        const auto& px = img.at<cv::Vec3b>(y, x);
        b = px[0];
        g = px[1];
        r = px[2];
      }
      out.data.at(y, x, 0) = r / scale;
      out.data.at(y, x, 1) = g / scale;
      out.data.at(y, x, 2) = b / scale;
    }
  }
  return out;
}

void save_rgb(const RgbImage& image, const std::string& path) {
  if (image.data.rank() != 3 || image.data.dim(2) != 3) {
    throw ContractError("rgb image must be [H,W,3], got " + image.data.shape_str());
  }
  cv::Mat img(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      auto& px = img.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.data.at(y, x, c), 0.0, 1.0);
        px[2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path, img)) throw IoError("cannot write image file: " + path);
}

}  // namespace pynet::rawio
