/*
 * Copyright 2026 The rejuv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Container shared by checkpoints and dataset files:
//
//   8 bytes   magic "RJUVRAW\0"
//   u32 LE    format version
//   u64 LE    manifest length in bytes
//   ...       manifest, UTF-8 JSON; manifest["arrays"] lists every array as
//             {name, dtype ("f32le" | "i32le"), shape, offset, count}
//   ...       array blob, offsets relative to its start
//
// All numbers in the blob are little-endian.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rejuv {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kRawFormatVersion = 1;

struct RawArray {
  std::vector<std::int64_t> shape;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;
  bool is_int = false;

  std::int64_t count() const;
};

class RawBundle {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void add(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values);
  void add(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int32_t> values);

  bool contains(const std::string& name) const { return arrays_.count(name) != 0; }
  const RawArray& at(const std::string& name) const;
  const std::map<std::string, RawArray>& arrays() const { return arrays_; }

  std::string serialize() const;
  static RawBundle parse(std::string_view bytes);

  void write_file(const std::filesystem::path& path) const;
  static RawBundle read_file(const std::filesystem::path& path);

 private:
  std::map<std::string, RawArray> arrays_;
  std::vector<std::string> order_;
};

std::string read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace rejuv
