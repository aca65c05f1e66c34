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

#include "pynet/common.hpp"

namespace pynet::nn::detail {

// Stride-1 zero-padded ("same") convolution kernels, NHWC / [k,k,Cin,Cout].
void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                     Tensor* db);

// Stride-2 transposed convolution, output exactly 2x per side.
void conv2d_t_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);
void conv2d_t_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                       Tensor* db);

}  // namespace pynet::nn::detail
