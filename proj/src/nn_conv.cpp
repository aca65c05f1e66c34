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

#include "nn_internal.hpp"

#include <cblas.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace pynet::nn::detail {
namespace {

// im2col scratch is kept below this many doubles per strip.
constexpr std::int64_t kStripBudget = 1 << 20;

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

int rows_per_strip(int h, int w, int patch) {
  std::int64_t per_row = static_cast<std::int64_t>(w) * patch;
  int rows = static_cast<int>(std::max<std::int64_t>(1, kStripBudget / std::max<std::int64_t>(1, per_row)));
  return std::min(rows, h);
}

void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4) throw ContractError("conv input must be rank 4, got " + x.shape_str());
  if (w.rank() != 4) throw ContractError("conv weights must be rank 4, got " + w.shape_str());
  if (w.dim(0) != w.dim(1) || w.dim(0) % 2 == 0) {
    throw ContractError("conv kernel must be square with odd size, got " + w.shape_str());
  }
  if (x.dim(3) != w.dim(2)) {
    throw ContractError("conv channel mismatch: input " + x.shape_str() + " vs weights " +
                        w.shape_str());
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(3)) {
    throw ContractError("conv bias must be [Cout], got " + b.shape_str());
  }
}

// Gathers a strip of zero-padded stride-1 patches:
// col[(h-h0)*W + w, (ky*k + kx)*Cin + c] = x[n, h+ky-p, w+kx-p, c].
void im2col_s1(const Tensor& x, int n, int h0, int h1, int k, double* col) {
  const int H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int p = k / 2;
  const int patch = k * k * C;
  const double* xn = x.data() + static_cast<std::int64_t>(n) * H * W * C;
  for (int h = h0; h < h1; ++h) {
    for (int ky = 0; ky < k; ++ky) {
      const int sy = h + ky - p;
      for (int w = 0; w < W; ++w) {
        double* dst = col + (static_cast<std::int64_t>(h - h0) * W + w) * patch + ky * k * C;
        if (sy < 0 || sy >= H) {
          std::memset(dst, 0, sizeof(double) * static_cast<size_t>(k) * C);
          continue;
        }
        const int x0 = w - p;
        const int kx_lo = std::max(0, -x0);
        const int kx_hi = std::min(k, W - x0);
        if (kx_lo > 0) std::memset(dst, 0, sizeof(double) * static_cast<size_t>(kx_lo) * C);
        if (kx_hi < k) {
          std::memset(dst + kx_hi * C, 0, sizeof(double) * static_cast<size_t>(k - kx_hi) * C);
        }
        if (kx_lo < kx_hi) {
          std::memcpy(dst + kx_lo * C,
                      xn + (static_cast<std::int64_t>(sy) * W + x0 + kx_lo) * C,
                      sizeof(double) * static_cast<size_t>(kx_hi - kx_lo) * C);
        }
      }
    }
  }
}

// Scatter-add inverse of im2col_s1.
void col2im_s1(const double* col, int n, int h0, int h1, int k, Tensor& dx) {
  const int H = dx.dim(1), W = dx.dim(2), C = dx.dim(3);
  const int p = k / 2;
  const int patch = k * k * C;
  double* xn = dx.data() + static_cast<std::int64_t>(n) * H * W * C;
  for (int h = h0; h < h1; ++h) {
    for (int ky = 0; ky < k; ++ky) {
      const int sy = h + ky - p;
      if (sy < 0 || sy >= H) continue;
      for (int w = 0; w < W; ++w) {
        const double* src = col + (static_cast<std::int64_t>(h - h0) * W + w) * patch + ky * k * C;
        const int x0 = w - p;
        const int kx_lo = std::max(0, -x0);
        const int kx_hi = std::min(k, W - x0);
        double* dst = xn + (static_cast<std::int64_t>(sy) * W + x0) * C;
        for (int kx = kx_lo; kx < kx_hi; ++kx) {
          const double* s = src + kx * C;
          double* d = dst + kx * C;
          for (int c = 0; c < C; ++c) d[c] += s[c];
        }
      }
    }
  }
}

// Stride-2 patch gather over the *large* map y (used by the transposed-conv
// backward pass): col[(h-h0)*w + x, (ky*k+kx)*C + c] = y[n, 2h+ky-p, 2x+kx-p, c].
void im2col_s2(const Tensor& y, int n, int h0, int h1, int wsmall, int k, double* col) {
  const int H = y.dim(1), W = y.dim(2), C = y.dim(3);
  const int p = k / 2;
  const int patch = k * k * C;
  const double* yn = y.data() + static_cast<std::int64_t>(n) * H * W * C;
  for (int h = h0; h < h1; ++h) {
    for (int ky = 0; ky < k; ++ky) {
      const int sy = 2 * h + ky - p;
      for (int w = 0; w < wsmall; ++w) {
        double* dst = col + (static_cast<std::int64_t>(h - h0) * wsmall + w) * patch + ky * k * C;
        if (sy < 0 || sy >= H) {
          std::memset(dst, 0, sizeof(double) * static_cast<size_t>(k) * C);
          continue;
        }
        for (int kx = 0; kx < k; ++kx) {
          const int sx = 2 * w + kx - p;
          if (sx < 0 || sx >= W) {
            std::memset(dst + kx * C, 0, sizeof(double) * static_cast<size_t>(C));
          } else {
            std::memcpy(dst + kx * C, yn + (static_cast<std::int64_t>(sy) * W + sx) * C,
                        sizeof(double) * static_cast<size_t>(C));
          }
        }
      }
    }
  }
}

// Scatter-add inverse of im2col_s2 (the transposed-conv forward scatter).
void col2im_s2(const double* col, int n, int h0, int h1, int wsmall, int k, Tensor& y) {
  const int H = y.dim(1), W = y.dim(2), C = y.dim(3);
  const int p = k / 2;
  const int patch = k * k * C;
  double* yn = y.data() + static_cast<std::int64_t>(n) * H * W * C;
  for (int h = h0; h < h1; ++h) {
    for (int ky = 0; ky < k; ++ky) {
      const int sy = 2 * h + ky - p;
      if (sy < 0 || sy >= H) continue;
      for (int w = 0; w < wsmall; ++w) {
        const double* src = col + (static_cast<std::int64_t>(h - h0) * wsmall + w) * patch + ky * k * C;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = 2 * w + kx - p;
          if (sx < 0 || sx >= W) continue;
          double* d = yn + (static_cast<std::int64_t>(sy) * W + sx) * C;
          const double* s = src + kx * C;
          for (int c = 0; c < C; ++c) d[c] += s[c];
        }
      }
    }
  }
}

void add_bias(Tensor& y, const Tensor& b) {
  const int C = y.dim(3);
  const std::int64_t rows = y.size() / C;
  double* p = y.data();
  for (std::int64_t r = 0; r < rows; ++r, p += C) {
    for (int c = 0; c < C; ++c) p[c] += b[c];
  }
}

void bias_grad(const Tensor& dy, Tensor& db) {
  const int C = dy.dim(3);
  const std::int64_t rows = dy.size() / C;
  const double* p = dy.data();
  for (std::int64_t r = 0; r < rows; ++r, p += C) {
    for (int c = 0; c < C; ++c) db[c] += p[c];
  }
}

}  // namespace

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  check_conv_args(x, w, b);
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
  const int k = w.dim(0), Cout = w.dim(3);
  y = Tensor({N, H, W, Cout});
  const int patch = k * k * Cin;
  const int strip = rows_per_strip(H, W, patch);
  std::vector<double> col(static_cast<size_t>(strip) * W * patch);
  for (int n = 0; n < N; ++n) {
    for (int h0 = 0; h0 < H; h0 += strip) {
      const int h1 = std::min(H, h0 + strip);
      const int m = (h1 - h0) * W;
      im2col_s1(x, n, h0, h1, k, col.data());
      gemm(false, false, m, Cout, patch, 1.0, col.data(), patch, w.data(), Cout, 0.0,
           y.data() + (static_cast<std::int64_t>(n) * H + h0) * W * Cout, Cout);
    }
  }
  add_bias(y, b);
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                     Tensor* db) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
  const int k = w.dim(0), Cout = w.dim(3);
  const int patch = k * k * Cin;
  const int strip = rows_per_strip(H, W, patch);
  std::vector<double> col(static_cast<size_t>(strip) * W * patch);
  std::vector<double> dcol;
  if (dx) dcol.resize(col.size());
  for (int n = 0; n < N; ++n) {
    for (int h0 = 0; h0 < H; h0 += strip) {
      const int h1 = std::min(H, h0 + strip);
      const int m = (h1 - h0) * W;
      const double* dyp = dy.data() + (static_cast<std::int64_t>(n) * H + h0) * W * Cout;
      if (dw || dx) im2col_s1(x, n, h0, h1, k, col.data());
      if (dw) {
        gemm(true, false, patch, Cout, m, 1.0, col.data(), patch, dyp, Cout, 1.0, dw->data(), Cout);
      }
      if (dx) {
        gemm(false, true, m, patch, Cout, 1.0, dyp, Cout, w.data(), Cout, 0.0, dcol.data(), patch);
        col2im_s1(dcol.data(), n, h0, h1, k, *dx);
      }
    }
  }
  if (db) bias_grad(dy, *db);
}

void conv2d_t_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  check_conv_args(x, w, b);
  const int N = x.dim(0), h = x.dim(1), ws = x.dim(2), Cin = x.dim(3);
  const int k = w.dim(0), Cout = w.dim(3);
  y = Tensor({N, 2 * h, 2 * ws, Cout});
  const int patch = k * k * Cout;
  const int strip = rows_per_strip(h, ws, patch);
  std::vector<double> col(static_cast<size_t>(strip) * ws * patch);
  // w viewed as [Cin, k*k*Cout] requires a transposed copy of [k,k,Cin,Cout].
  std::vector<double> wmat(static_cast<size_t>(Cin) * patch);
  for (int t = 0; t < k * k; ++t) {
    for (int ci = 0; ci < Cin; ++ci) {
      for (int co = 0; co < Cout; ++co) {
        wmat[static_cast<size_t>(ci) * patch + t * Cout + co] =
            w[(static_cast<std::int64_t>(t) * Cin + ci) * Cout + co];
      }
    }
  }
  for (int n = 0; n < N; ++n) {
    for (int h0 = 0; h0 < h; h0 += strip) {
      const int h1 = std::min(h, h0 + strip);
      const int m = (h1 - h0) * ws;
      gemm(false, false, m, patch, Cin, 1.0,
           x.data() + (static_cast<std::int64_t>(n) * h + h0) * ws * Cin, Cin, wmat.data(), patch,
           0.0, col.data(), patch);
      col2im_s2(col.data(), n, h0, h1, ws, k, y);
    }
  }
  add_bias(y, b);
}

void conv2d_t_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                       Tensor* db) {
  const int N = x.dim(0), h = x.dim(1), ws = x.dim(2), Cin = x.dim(3);
  const int k = w.dim(0), Cout = w.dim(3);
  const int patch = k * k * Cout;
  const int strip = rows_per_strip(h, ws, patch);
  std::vector<double> dcol(static_cast<size_t>(strip) * ws * patch);
  std::vector<double> wmat;
  std::vector<double> dwmat;
  if (dx) {
    wmat.resize(static_cast<size_t>(Cin) * patch);
    for (int t = 0; t < k * k; ++t) {
      for (int ci = 0; ci < Cin; ++ci) {
        for (int co = 0; co < Cout; ++co) {
          wmat[static_cast<size_t>(ci) * patch + t * Cout + co] =
              w[(static_cast<std::int64_t>(t) * Cin + ci) * Cout + co];
        }
      }
    }
  }
  if (dw) dwmat.assign(static_cast<size_t>(Cin) * patch, 0.0);
  for (int n = 0; n < N; ++n) {
    for (int h0 = 0; h0 < h; h0 += strip) {
      const int h1 = std::min(h, h0 + strip);
      const int m = (h1 - h0) * ws;
      im2col_s2(dy, n, h0, h1, ws, k, dcol.data());
      if (dx) {
        gemm(false, true, m, Cin, patch, 1.0, dcol.data(), patch, wmat.data(), patch, 1.0,
             dx->data() + (static_cast<std::int64_t>(n) * h + h0) * ws * Cin, Cin);
      }
      if (dw) {
        gemm(true, false, Cin, patch, m, 1.0,
             x.data() + (static_cast<std::int64_t>(n) * h + h0) * ws * Cin, Cin, dcol.data(),
             patch, 1.0, dwmat.data(), patch);
      }
    }
  }
  if (dw) {
    for (int t = 0; t < k * k; ++t) {
      for (int ci = 0; ci < Cin; ++ci) {
        for (int co = 0; co < Cout; ++co) {
          (*dw)[(static_cast<std::int64_t>(t) * Cin + ci) * Cout + co] +=
              dwmat[static_cast<size_t>(ci) * patch + t * Cout + co];
        }
      }
    }
  }
  if (db) bias_grad(dy, *db);
}

}  // namespace pynet::nn::detail
