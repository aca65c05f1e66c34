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

#include <optional>
#include <string>

#include "pynet/common.hpp"

namespace pynet::rawio {

enum class CfaLayout { kRggb, kBggr, kGrbg, kGbrg };

std::string to_string(CfaLayout layout);
CfaLayout cfa_from_string(const std::string& s);

// 2x2 cell offsets (dy, dx) of each canonical channel for a layout. g1 is
// the green sharing a row with red.
struct CellOffsets {
  int r[2], g1[2], b[2], g2[2];
};

CellOffsets cell_offsets(CfaLayout layout);

// A sensor mosaic. `data` holds raw counts until normalize(), then [0,1].
struct BayerFrame {
  Tensor data;  // [H,W]
  CfaLayout cfa = CfaLayout::kRggb;
  int bit_depth = 10;
  double black_level = 0.0;
  double white_level = 1023.0;
  bool normalized = false;

  int height() const { return data.dim(0); }
  int width() const { return data.dim(1); }
};

// Half-resolution 4-plane representation, channel order (R, G1, B, G2):
// G1 is the green sample sharing a row with R, G2 the one sharing a row
// with B. This order is part of the checkpoint/dataset contract.
struct PackedRaw {
  Tensor data;  // [H/2, W/2, 4], values in [0,1]

  int height() const { return data.dim(0); }
  int width() const { return data.dim(1); }
};

struct RgbImage {
  Tensor data;  // [H,W,3], values in [0,1]

  int height() const { return data.dim(0); }
  int width() const { return data.dim(1); }
};

// Optional per-field overrides applied on top of sidecar metadata.
struct RawMeta {
  std::optional<CfaLayout> cfa;
  std::optional<int> bit_depth;
  std::optional<double> black_level;
  std::optional<double> white_level;
};

// Reads a 8/16-bit single-channel PNG plus its optional `<stem>.json`
// sidecar. Metadata priority: override > sidecar > defaults (RGGB/10/0/1023).
BayerFrame load_raw_mosaic(const std::string& path, const RawMeta& override_meta = {});
// Writes counts as 16-bit PNG and the metadata sidecar next to it.
void save_raw_mosaic(const BayerFrame& frame, const std::string& path);

BayerFrame normalize(const BayerFrame& frame);

PackedRaw pack_rggb(const BayerFrame& frame);
BayerFrame unpack_rggb(const PackedRaw& packed, CfaLayout layout = CfaLayout::kRggb);

// Bilinear demosaic -> gray-world white balance -> gamma 1/2.2.
RgbImage visualize_raw(const BayerFrame& frame);

RgbImage load_rgb(const std::string& path);
void save_rgb(const RgbImage& image, const std::string& path);

}  // namespace pynet::rawio
