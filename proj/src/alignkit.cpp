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

#include "pynet/alignkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <thread>
#include <utility>

#include <opencv2/calib3d.hpp>
#include <opencv2/core.hpp>
#include <opencv2/features2d.hpp>
#include <opencv2/imgproc.hpp>

namespace pynet::align {
namespace {

constexpr double kPi = 3.14159265358979323846;

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

cv::Mat rgb_to_mat32(const Tensor& t) {
  cv::Mat m(t.dim(0), t.dim(1), CV_32FC3);
  for (int y = 0; y < t.dim(0); ++y) {
    auto* row = m.ptr<cv::Vec3f>(y);
    for (int x = 0; x < t.dim(1); ++x)
      for (int c = 0; c < 3; ++c) row[x][c] = static_cast<float>(t.at(y, x, c));
  }
  return m;
}

Tensor mat32_to_rgb(const cv::Mat& m) {
  Tensor t({m.rows, m.cols, 3});
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3f>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) t.at(y, x, c) = row[x][c];
  }
  return t;
}

cv::Mat rgb_to_gray8(const Tensor& t) {
  cv::Mat m(t.dim(0), t.dim(1), CV_8UC1);
  for (int y = 0; y < t.dim(0); ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < t.dim(1); ++x) {
      const double v = luma(t.at(y, x, 0), t.at(y, x, 1), t.at(y, x, 2));
      row[x] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    }
  }
  return m;
}

double bilinear(const Tensor& img, double y, double x) {
  const int h = img.dim(0), w = img.dim(1);
  const double yc = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(yc);
  const int x0 = static_cast<int>(xc);
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const double fy = yc - y0, fx = xc - x0;
  return (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
         fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
}

struct GridAxis {
  std::vector<double> values;  // symmetric about 0, ascending
};

GridAxis make_axis(double max_value, double step) {
  GridAxis axis;
  const int n = static_cast<int>(std::floor(max_value / step + 1e-9));
  for (int k = -n; k <= n; ++k) axis.values.push_back(k * step);
  return axis;
}

}  // namespace

void AlignmentConfig::validate() const {
  if (window < 2 || window % 2 != 0) throw ConfigError("window must be even and positive");
  if (!(accept_threshold > 0.0 && accept_threshold <= 1.0))
    throw ConfigError("accept_threshold must lie in (0, 1]");
  if (!(shift_step > 0.0) || !(rotation_step > 0.0))
    throw ConfigError("search steps must be positive");
  if (max_shift < 0.0 || max_rotation < 0.0)
    throw ConfigError("search ranges must be non-negative");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

GlobalAlignResult global_align(const rawio::RgbImage& moving, const rawio::RgbImage& fixed,
                               std::uint64_t seed) {
  if (moving.data.empty() || fixed.data.empty())
    throw ContractError("global_align needs non-empty images");
  cv::setNumThreads(1);  // keypoint order must not depend on scheduling

  const cv::Mat gray_m = rgb_to_gray8(moving.data);
  const cv::Mat gray_f = rgb_to_gray8(fixed.data);
  cv::Ptr<cv::SIFT> sift = cv::SIFT::create();
  std::vector<cv::KeyPoint> kp_m, kp_f;
  cv::Mat desc_m, desc_f;
  sift->detectAndCompute(gray_m, cv::noArray(), kp_m, desc_m);
  sift->detectAndCompute(gray_f, cv::noArray(), kp_f, desc_f);
  if (kp_m.size() < 4 || kp_f.size() < 4)
    throw RegistrationError("too few keypoints for registration");

  cv::BFMatcher matcher(cv::NORM_L2);
  std::vector<std::vector<cv::DMatch>> knn;
  matcher.knnMatch(desc_m, desc_f, knn, 2);
  std::vector<cv::Point2f> pts_m, pts_f;
  for (const auto& pair : knn) {
    if (pair.size() < 2) continue;
    if (pair[0].distance < 0.75f * pair[1].distance) {
      pts_m.push_back(kp_m[pair[0].queryIdx].pt);
      pts_f.push_back(kp_f[pair[0].trainIdx].pt);
    }
  }
  if (pts_m.size() < 4) throw RegistrationError("fewer than 4 keypoint correspondences");

  cv::setRNGSeed(static_cast<int>(seed));
  cv::Mat mask;
  cv::Mat H = cv::findHomography(pts_m, pts_f, cv::RANSAC, 3.0, mask);
  if (H.empty()) throw RegistrationError("homography estimation failed");
  const int inliers = cv::countNonZero(mask);
  if (inliers < 4) throw RegistrationError("fewer than 4 RANSAC inliers");

  H.convertTo(H, CV_64F);
  const double h22 = H.at<double>(2, 2);
  if (h22 == 0.0) throw RegistrationError("degenerate homography");
  H /= h22;

  cv::Mat warped32;
  cv::warpPerspective(rgb_to_mat32(moving.data), warped32, H,
                      cv::Size(fixed.data.dim(1), fixed.data.dim(0)), cv::INTER_LINEAR,
                      cv::BORDER_REPLICATE);

  GlobalAlignResult res;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) res.homography[i][j] = H.at<double>(i, j);
  res.warped.data = mat32_to_rgb(warped32);
  res.inlier_count = inliers;
  return res;
}

double ncc(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ContractError("ncc shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  const std::int64_t n = a.size();
  if (n == 0) throw ContractError("ncc needs non-empty patches");
  double ma = 0.0, mb = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

int required_margin(const AlignmentConfig& cfg, int half_window) {
  const double rad = cfg.max_rotation * kPi / 180.0;
  const double radius = (half_window - 1) / 2.0 * std::sqrt(2.0);
  return static_cast<int>(std::ceil(cfg.max_shift / 2.0 + rad * radius)) + 1;
}

RefineResult refine_local(const Tensor& raw_luma, const Tensor& rgb_region,
                          const AlignmentConfig& cfg, const RegionBounds& valid) {
  cfg.validate();
  if (raw_luma.rank() != 2 || rgb_region.rank() != 2)
    throw ContractError("refine_local expects 2-D luma patches");
  const int mh = raw_luma.dim(0), mw = raw_luma.dim(1);
  const int rh = rgb_region.dim(0), rw = rgb_region.dim(1);
  if ((rh - mh) % 2 != 0 || (rw - mw) % 2 != 0 || rh < mh || rw < mw)
    throw ContractError("rgb_region must pad the window symmetrically");
  const int ph = (rh - mh) / 2;
  const int pw = (rw - mw) / 2;
  const int need = required_margin(cfg, std::max(mh, mw));
  if (ph < need || pw < need)
    throw ContractError("search margin too small: have " + std::to_string(std::min(ph, pw)) +
                        ", need " + std::to_string(need));
  if (valid.y0 < 0 || valid.x0 < 0 || valid.y1 > rh || valid.x1 > rw || valid.y0 >= valid.y1 ||
      valid.x0 >= valid.x1)
    throw ContractError("region bounds must be a non-empty rectangle inside the region");

  const std::int64_t n = raw_luma.size();
  // A sample point is usable when its bilinear support lies in valid texels;
  // at the exact upper edge the outside texel carries zero weight.
  const bool full = valid.y0 == 0 && valid.x0 == 0 && valid.y1 == rh && valid.x1 == rw;
  const double ylo = valid.y0, yhi = valid.y1 - 1;
  const double xlo = valid.x0, xhi = valid.x1 - 1;

  const GridAxis shifts = make_axis(cfg.max_shift, cfg.shift_step);
  const GridAxis rots = make_axis(cfg.max_rotation, cfg.rotation_step);
  const double cy = (mh - 1) / 2.0;
  const double cx = (mw - 1) / 2.0;

  RefineResult best;
  double best_score = -2.0;
  double best_shift2 = 0.0;
  for (double dy : shifts.values) {
    for (double dx : shifts.values) {
      for (double rot : rots.values) {
        const double c = std::cos(rot * kPi / 180.0);
        const double s = std::sin(rot * kPi / 180.0);
        double sr = 0.0, srr = 0.0, sw = 0.0, sww = 0.0, srw = 0.0;
        std::int64_t ne = 0;
        for (int y = 0; y < mh; ++y) {
          const double v = y - cy;
          for (int x = 0; x < mw; ++x) {
            const double u = x - cx;
            const double sx = pw + cx + c * u - s * v + dx * 0.5;
            const double sy = ph + cy + s * u + c * v + dy * 0.5;
            if (!full && (sy < ylo || sy > yhi || sx < xlo || sx > xhi)) continue;
            const double w = bilinear(rgb_region, sy, sx);
            const double r = raw_luma.at(y, x);
            ++ne;
            sr += r;
            srr += r * r;
            sw += w;
            sww += w * w;
            srw += r * w;
          }
        }
        double score;
        if (2 * ne < n) {
          score = -1.0;
        } else {
          const double va = srr - sr * sr / ne;
          const double vb = sww - sw * sw / ne;
          const double cov = srw - sr * sw / ne;
          score = (va <= 0.0 || vb <= 0.0) ? 0.0 : std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
        }
        const double shift2 = dx * dx + dy * dy;
        const bool wins =
            score > best_score ||
            (score == best_score &&
             (shift2 < best_shift2 ||
              (shift2 == best_shift2 && std::fabs(rot) < std::fabs(best.rotation))));
        if (wins) {
          best = RefineResult{dx, dy, rot, score};
          best_score = score;
          best_shift2 = shift2;
        }
      }
    }
  }
  return best;
}

RefineResult refine_local(const Tensor& raw_luma, const Tensor& rgb_region,
                          const AlignmentConfig& cfg) {
  if (rgb_region.rank() != 2) throw ContractError("refine_local expects 2-D luma patches");
  return refine_local(raw_luma, rgb_region, cfg,
                      RegionBounds{0, rgb_region.dim(0), 0, rgb_region.dim(1)});
}

std::vector<PatchPair> extract_patch_pairs(const rawio::BayerFrame& raw,
                                           const rawio::RgbImage& rgb_warped,
                                           const AlignmentConfig& cfg,
                                           const std::string& source_id) {
  cfg.validate();
  if (raw.data.rank() != 2) throw ContractError("mosaic must be 2-D");
  const int H = raw.height(), W = raw.width();
  if (rgb_warped.data.rank() != 3 || rgb_warped.data.dim(0) != H || rgb_warped.data.dim(1) != W)
    throw ContractError("RGB image must share the mosaic grid, got " +
                        rgb_warped.data.shape_str() + " vs " + raw.data.shape_str());

  const int win = cfg.window;
  const int ny = H / win;
  const int nx = W / win;
  if (ny == 0 || nx == 0) return {};

  // Half-resolution luma of the whole RGB image, edge lookups clamped.
  const int hh = H / 2, hw = W / 2;
  Tensor rgb_luma({hh, hw});
  for (int y = 0; y < hh; ++y) {
    for (int x = 0; x < hw; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx)
          acc += luma(rgb_warped.data.at(2 * y + dy, 2 * x + dx, 0),
                      rgb_warped.data.at(2 * y + dy, 2 * x + dx, 1),
                      rgb_warped.data.at(2 * y + dy, 2 * x + dx, 2));
      rgb_luma.at(y, x) = acc / 4.0;
    }
  }

  const rawio::CellOffsets cell = rawio::cell_offsets(raw.cfa);
  const int m = win / 2;
  const int margin = required_margin(cfg, m);
  const double cxf = (win - 1) / 2.0;

  std::vector<std::optional<PatchPair>> slots(static_cast<std::size_t>(ny) * nx);
  std::atomic<int> cursor{0};

  auto process = [&](int idx) {
    const int wy = idx / nx;
    const int wx = idx % nx;
    const int y0 = wy * win;
    const int x0 = wx * win;

    Tensor raw_luma({m, m});
    for (int y = 0; y < m; ++y) {
      for (int x = 0; x < m; ++x) {
        const double g1 = raw.data.at(y0 + 2 * y + cell.g1[0], x0 + 2 * x + cell.g1[1]);
        const double g2 = raw.data.at(y0 + 2 * y + cell.g2[0], x0 + 2 * x + cell.g2[1]);
        raw_luma.at(y, x) = 0.5 * (g1 + g2);
      }
    }
    const int hy0 = y0 / 2, hx0 = x0 / 2;
    const int side = m + 2 * margin;
    Tensor region({side, side});
    for (int y = 0; y < side; ++y) {
      const int sy = std::clamp(hy0 - margin + y, 0, hh - 1);
      for (int x = 0; x < side; ++x) {
        const int sx = std::clamp(hx0 - margin + x, 0, hw - 1);
        region.at(y, x) = rgb_luma.at(sy, sx);
      }
    }
    // Texels cloned by the edge clamp would bias the pose toward whatever
    // the duplicated rows happen to correlate with; mask them out instead.
    const RegionBounds valid{std::max(0, margin - hy0), std::min(side, hh - hy0 + margin),
                             std::max(0, margin - hx0), std::min(side, hw - hx0 + margin)};
    const RefineResult rr = refine_local(raw_luma, region, cfg, valid);
    if (rr.ncc < cfg.accept_threshold) return;

    PatchPair pair;
    pair.ncc_score = rr.ncc;
    pair.dx = rr.dx;
    pair.dy = rr.dy;
    pair.rotation = rr.rotation;
    pair.source_id = source_id;

    pair.raw_patch = raw;
    pair.raw_patch.data = Tensor({win, win});
    for (int y = 0; y < win; ++y)
      for (int x = 0; x < win; ++x) pair.raw_patch.data.at(y, x) = raw.data.at(y0 + y, x0 + x);

    const double c = std::cos(rr.rotation * kPi / 180.0);
    const double s = std::sin(rr.rotation * kPi / 180.0);
    pair.rgb_patch.data = Tensor({win, win, 3});
    for (int y = 0; y < win; ++y) {
      const double v = y - cxf;
      for (int x = 0; x < win; ++x) {
        const double u = x - cxf;
        const double sx = x0 + cxf + c * u - s * v + rr.dx;
        const double sy = y0 + cxf + s * u + c * v + rr.dy;
        const double syc = std::clamp(sy, 0.0, static_cast<double>(H - 1));
        const double sxc = std::clamp(sx, 0.0, static_cast<double>(W - 1));
        const int iy = static_cast<int>(syc);
        const int ix = static_cast<int>(sxc);
        const int iy1 = std::min(iy + 1, H - 1);
        const int ix1 = std::min(ix + 1, W - 1);
        const double fy = syc - iy, fx = sxc - ix;
        for (int ch = 0; ch < 3; ++ch) {
          const double val =
              (1 - fy) * ((1 - fx) * rgb_warped.data.at(iy, ix, ch) +
                          fx * rgb_warped.data.at(iy, ix1, ch)) +
              fy * ((1 - fx) * rgb_warped.data.at(iy1, ix, ch) +
                    fx * rgb_warped.data.at(iy1, ix1, ch));
          pair.rgb_patch.data.at(y, x, ch) = val;
        }
      }
    }
    slots[idx] = std::move(pair);
  };

  const int total = ny * nx;
  const int nthreads = std::min(cfg.workers, total);
  if (nthreads <= 1) {
    for (int i = 0; i < total; ++i) process(i);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) {
      pool.emplace_back([&] {
        for (int i = cursor.fetch_add(1); i < total; i = cursor.fetch_add(1)) process(i);
      });
    }
    for (auto& th : pool) th.join();
  }

  std::vector<PatchPair> out;
  for (auto& slot : slots) {
    if (slot) out.push_back(std::move(*slot));
  }
  return out;
}

}  // namespace pynet::align
