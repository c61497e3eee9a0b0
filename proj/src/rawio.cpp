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

#include "rejuv/rawio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rejuv {

namespace {

constexpr char kMagic[8] = {'R', 'J', 'U', 'V', 'R', 'A', 'W', '\0'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

template <typename T>
T get_le(std::string_view in, std::size_t at) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = sizeof(U); i-- > 0;) {
    bits = (bits << 8) | static_cast<unsigned char>(in[at + i]);
  }
  return std::bit_cast<T>(bits);
}

std::int64_t shape_count(const std::vector<std::int64_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

}  // namespace

std::int64_t RawArray::count() const { return shape_count(shape); }

void RawBundle::add(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values) {
  if (shape_count(shape) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("raw array '" + name + "': shape does not match value count");
  }
  if (!contains(name)) order_.push_back(name);
  arrays_[name] = RawArray{std::move(shape), {values.begin(), values.end()}, {}, false};
}

void RawBundle::add(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int32_t> values) {
  if (shape_count(shape) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("raw array '" + name + "': shape does not match value count");
  }
  if (!contains(name)) order_.push_back(name);
  arrays_[name] = RawArray{std::move(shape), {}, {values.begin(), values.end()}, true};
}

const RawArray& RawBundle::at(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw FormatError("raw bundle has no array '" + name + "'");
  return it->second;
}

std::string RawBundle::serialize() const {
  nlohmann::json manifest = meta;
  auto& listing = manifest["arrays"] = nlohmann::json::array();
  std::string blob;
  for (const auto& name : order_) {
    const auto& a = arrays_.at(name);
    listing.push_back({{"name", name},
                       {"dtype", a.is_int ? "i32le" : "f32le"},
                       {"shape", a.shape},
                       {"offset", blob.size()},
                       {"count", a.count()}});
    if (a.is_int) {
      for (const auto v : a.i32) put_le(blob, v);
    } else {
      for (const auto v : a.f32) put_le(blob, v);
    }
  }
  const std::string text = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_le(out, kRawFormatVersion);
  put_le(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += blob;
  return out;
}

RawBundle RawBundle::parse(std::string_view bytes) {
  constexpr std::size_t header = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < header || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a rejuv raw file (bad magic bytes)");
  }
  const auto version = get_le<std::uint32_t>(bytes, sizeof(kMagic));
  if (version != kRawFormatVersion) {
    throw FormatError("unsupported raw format version " + std::to_string(version));
  }
  const auto manifest_len = get_le<std::uint64_t>(bytes, sizeof(kMagic) + 4);
  if (manifest_len > bytes.size() - header) throw FormatError("truncated manifest");
  RawBundle b;
  try {
    b.meta = nlohmann::json::parse(bytes.substr(header, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt manifest: ") + e.what());
  }
  const std::string_view blob = bytes.substr(header + manifest_len);
  try {
    for (const auto& entry : b.meta.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto dtype = entry.at("dtype").get<std::string>();
      auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (static_cast<std::int64_t>(count) != shape_count(shape)) throw FormatError("array '" + name + "': bad count");
      if (offset > blob.size() || count * 4 > blob.size() - offset) {
        throw FormatError("array '" + name + "' runs past the end of the file");
      }
      if (dtype == "f32le") {
        std::vector<float> v(count);
        for (std::size_t k = 0; k < count; ++k) v[k] = get_le<float>(blob, offset + 4 * k);
        b.add(name, std::move(shape), std::span<const float>(v));
      } else if (dtype == "i32le") {
        std::vector<std::int32_t> v(count);
        for (std::size_t k = 0; k < count; ++k) v[k] = get_le<std::int32_t>(blob, offset + 4 * k);
        b.add(name, std::move(shape), std::span<const std::int32_t>(v));
      } else {
        throw FormatError("array '" + name + "': unknown dtype " + dtype);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed array listing: ") + e.what());
  }
  b.meta.erase("arrays");
  return b;
}

std::string read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_binary_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void RawBundle::write_file(const std::filesystem::path& path) const { write_binary_file(path, serialize()); }

RawBundle RawBundle::read_file(const std::filesystem::path& path) { return parse(read_binary_file(path)); }

}  // namespace rejuv
