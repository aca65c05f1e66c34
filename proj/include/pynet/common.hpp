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

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pynet {

// Error taxonomy. The CLI maps usage problems to exit 1 and everything
// below to exit 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed files: odd mosaic dimensions, wrong channel count, bad
// checkpoint magic/version, truncated archives.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Declared sensor metadata contradicts the pixel data.
class MetadataError : public Error {
 public:
  using Error::Error;
};

// A caller violated a documented precondition (shape mismatch, missing
// normalization, insufficient search margin, untrained model, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Level-wise training attempted out of order.
class ScheduleError : public Error {
 public:
  using Error::Error;
};

// Global keypoint registration could not produce a homography.
class RegistrationError : public Error {
 public:
  using Error::Error;
};

// Dense row-major tensor of doubles. Layout conventions used throughout:
// images are [H,W] or [H,W,C]; network activations are [N,H,W,C] with the
// channel axis fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, double fill);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) { return Tensor(std::move(shape), v); }

  bool empty() const { return data_.empty(); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int h, int w) { return data_[static_cast<size_t>(h) * dim(1) + w]; }
  double at(int h, int w) const { return data_[static_cast<size_t>(h) * dim(1) + w]; }
  double& at(int h, int w, int c) {
    return data_[(static_cast<size_t>(h) * dim(1) + w) * dim(2) + c];
  }
  double at(int h, int w, int c) const {
    return data_[(static_cast<size_t>(h) * dim(1) + w) * dim(2) + c];
  }
  double& at(int n, int h, int w, int c) {
    return data_[((static_cast<size_t>(n) * dim(1) + h) * dim(2) + w) * dim(3) + c];
  }
  double at(int n, int h, int w, int c) const {
    return data_[((static_cast<size_t>(n) * dim(1) + h) * dim(2) + w) * dim(3) + c];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  double min() const;
  double max() const;

  // Snaps every element to the nearest float32-representable value.
  // Parameters live in this state so that f32 checkpoints round-trip
  // bit-identically.
  void quantize_f32();

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::int64_t shape_size(const std::vector<int>& shape);

// Deterministic normal/uniform draws (single stream per seed).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double normal(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(gen_);
  }
  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(gen_);
  }
  std::uint64_t next_u64() { return gen_(); }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

}  // namespace pynet
