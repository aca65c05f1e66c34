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

#include "pynet/archive.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace pynet::archive {
namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw FormatError("archive truncated in header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_archive(const std::string& path, const std::string& magic8,
                   const nlohmann::json& meta, const TensorMap& tensors) {
  if (magic8.size() != 8) throw ContractError("archive magic must be 8 bytes");
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, blob] : tensors) {
    const std::uint64_t bytes =
        static_cast<std::uint64_t>(blob.data.size()) * (blob.f32 ? 4 : 8);
    header["tensors"].push_back({{"name", name},
                                 {"dtype", blob.f32 ? "f32" : "f64"},
                                 {"shape", blob.data.shape()},
                                 {"offset", offset},
                                 {"bytes", bytes}});
    offset += bytes;
  }
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open archive for writing: " + path);
  out.write(magic8.data(), 8);
  put_u64(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  std::vector<char> buf;
  for (const auto& [name, blob] : tensors) {
    (void)name;
    if (blob.f32) {
      buf.resize(static_cast<size_t>(blob.data.size()) * 4);
      auto* f = reinterpret_cast<float*>(buf.data());
      for (std::int64_t i = 0; i < blob.data.size(); ++i) f[i] = static_cast<float>(blob.data[i]);
    } else {
      buf.resize(static_cast<size_t>(blob.data.size()) * 8);
      std::memcpy(buf.data(), blob.data.data(), buf.size());
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("short write to archive: " + path);
}

Archive read_archive(const std::string& path, const std::string& magic8) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != magic8) {
    throw FormatError("bad archive magic in " + path);
  }
  const std::uint64_t hlen = get_u64(in);
  if (hlen > (1ull << 30)) throw FormatError("implausible archive header size in " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("archive truncated in header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad archive header in " + path + ": " + e.what());
  }

  Archive arc;
  arc.meta = header.value("meta", nlohmann::json::object());
  if (!header.contains("tensors") || !header["tensors"].is_array()) {
    throw FormatError("archive header lists no tensors: " + path);
  }
  const std::streampos data_start = in.tellg();
  std::vector<char> buf;
  for (const auto& e : header["tensors"]) {
    try {
      const std::string name = e.at("name").get<std::string>();
      const std::string dtype = e.at("dtype").get<std::string>();
      const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
      const std::uint64_t offset = e.at("offset").get<std::uint64_t>();
      const std::uint64_t bytes = e.at("bytes").get<std::uint64_t>();
      const bool f32 = dtype == "f32";
      if (!f32 && dtype != "f64") throw FormatError("unknown dtype '" + dtype + "' in " + path);
      const std::uint64_t want = static_cast<std::uint64_t>(shape_size(shape)) * (f32 ? 4 : 8);
      if (want != bytes) throw FormatError("tensor byte count mismatch for " + name);
      in.seekg(data_start + static_cast<std::streamoff>(offset));
      buf.resize(bytes);
      in.read(buf.data(), static_cast<std::streamsize>(bytes));
      if (!in) throw FormatError("archive truncated in tensor " + name + ": " + path);
      TensorBlob blob;
      blob.f32 = f32;
      blob.data = Tensor(shape);
      if (f32) {
        const auto* f = reinterpret_cast<const float*>(buf.data());
        for (std::int64_t i = 0; i < blob.data.size(); ++i) blob.data[i] = static_cast<double>(f[i]);
      } else {
        std::memcpy(blob.data.data(), buf.data(), bytes);
      }
      arc.tensors.emplace(name, std::move(blob));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("bad tensor entry in archive header: " + std::string(ex.what()));
    }
  }
  return arc;
}

}  // namespace pynet::archive
