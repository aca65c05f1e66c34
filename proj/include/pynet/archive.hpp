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

#include <map>
#include <string>

#include <json.hpp>

#include "pynet/common.hpp"

namespace pynet::archive {

// On-disk container: 8-byte magic, little-endian u64 header length, a JSON
// header, then raw little-endian tensor data. The header lists each
// tensor's name, dtype (f32/f64), shape, and byte offset into the data
// section, making the file self-describing.
struct TensorBlob {
  Tensor data;
  bool f32 = true;  // stored as float32 (values must already be f32-representable)
};

using TensorMap = std::map<std::string, TensorBlob>;

struct Archive {
  nlohmann::json meta;
  TensorMap tensors;
};

void write_archive(const std::string& path, const std::string& magic8,
                   const nlohmann::json& meta, const TensorMap& tensors);

// Throws FormatError on wrong magic, truncation, or malformed header.
Archive read_archive(const std::string& path, const std::string& magic8);

}  // namespace pynet::archive
