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
#include "pynet/rawio.hpp"

namespace pynet::align {

struct AlignmentConfig {
  int window = 448;               // mosaic pixels per side, even
  double accept_threshold = 0.9;  // minimum NCC for an admitted pair
  double max_shift = 8.0;         // full-resolution pixels
  double shift_step = 1.0;
  double max_rotation = 1.5;  // degrees
  double rotation_step = 0.5;
  int workers = 1;
  std::uint64_t seed = 0;  // robust-estimator seed

  void validate() const;  // throws ConfigError
};

struct PatchPair {
  rawio::BayerFrame raw_patch;  // verbatim mosaic crop, never resampled
  rawio::RgbImage rgb_patch;    // resampled at the refined pose
  double ncc_score = 0.0;
  double dx = 0.0;  // RGB sampling offset, full-resolution pixels
  double dy = 0.0;
  double rotation = 0.0;  // degrees
  std::string source_id;
};

struct GlobalAlignResult {
  std::array<std::array<double, 3>, 3> homography;  // moving -> fixed, normalized h22 = 1
  rawio::RgbImage warped;                           // moving resampled onto fixed's grid
  int inlier_count = 0;
};

// SIFT + ratio-test matching + RANSAC homography. Deterministic for a
// fixed seed. Throws RegistrationError when registration is impossible
// (too few keypoints, matches, or inliers).
GlobalAlignResult global_align(const rawio::RgbImage& moving, const rawio::RgbImage& fixed,
                               std::uint64_t seed = 0);

// Normalized cross-correlation of two same-shape patches; 0 when either
// has zero variance.
double ncc(const Tensor& a, const Tensor& b);

struct RefineResult {
  double dx = 0.0;  // full-resolution pixels
  double dy = 0.0;
  double rotation = 0.0;  // degrees
  double ncc = 0.0;
};

// Half-resolution margin required around the window so every searched pose
// samples inside the region.
int required_margin(const AlignmentConfig& cfg, int half_window);

// Texels of an extracted region that carry real image content, as the
// half-open rectangle [y0,y1) x [x0,x1) in region coordinates. Texels
// outside it are border clamps and must not influence pose scores.
struct RegionBounds {
  int y0 = 0, y1 = 0, x0 = 0, x1 = 0;
};

// Exhaustive grid search over shifts x rotations for the pose of
// rgb_region's central window that best matches raw_luma. raw_luma is
// [m,m]; rgb_region is [m+2*margin, m+2*margin] on the same half-
// resolution grid. Ties break toward smaller |shift|, then |rotation|,
// then scan order.
RefineResult refine_local(const Tensor& raw_luma, const Tensor& rgb_region,
                          const AlignmentConfig& cfg);

// Masked variant: samples falling outside `valid` are excluded from the
// correlation, so border clamps cannot bias the pose. A pose keeping fewer
// than half the window's samples inside `valid` scores -1.
RefineResult refine_local(const Tensor& raw_luma, const Tensor& rgb_region,
                          const AlignmentConfig& cfg, const RegionBounds& valid);

// Non-overlapping windows over a globally aligned mosaic/RGB pair. RAW
// windows are copied verbatim; each RGB window is re-posed by refine_local
// and resampled bilinearly; pairs under accept_threshold are dropped.
// Deterministic regardless of cfg.workers.
std::vector<PatchPair> extract_patch_pairs(const rawio::BayerFrame& raw,
                                           const rawio::RgbImage& rgb_warped,
                                           const AlignmentConfig& cfg,
                                           const std::string& source_id = "");

}  // namespace pynet::align
