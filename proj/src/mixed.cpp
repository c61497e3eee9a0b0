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

#include "rejuv/mixed.hpp"

#include <algorithm>
#include <stdexcept>

namespace rejuv {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::standard: return "standard";
    case Scheme::cross_removed: return "cross_removed";
    case Scheme::cross_attention: return "cross_attention";
  }
  return "standard";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "standard") return Scheme::standard;
  if (s == "cross_removed") return Scheme::cross_removed;
  if (s == "cross_attention") return Scheme::cross_attention;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

void SchemeConfig::validate() const {
  if (!(attention_gain > 0.0)) throw std::invalid_argument("attention_gain must be > 0");
}

ChannelPartition ChannelPartition::contiguous(Index in_s, Index in_r, Index out_s, Index out_r) {
  ChannelPartition p;
  auto fill = [](std::vector<Index>& v, Index begin, Index count) {
    v.resize(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) v[static_cast<std::size_t>(k)] = begin + k;
  };
  fill(p.in_s, 0, in_s);
  fill(p.in_r, in_s, in_r);
  fill(p.out_s, 0, out_s);
  fill(p.out_r, out_s, out_r);
  return p;
}

namespace {

void check_partition(const std::vector<Index>& s, const std::vector<Index>& r, Index n, const char* what) {
  std::vector<bool> seen(static_cast<std::size_t>(std::max<Index>(n, 0)), false);
  auto mark = [&](Index k) {
    if (k < 0 || k >= n || seen[static_cast<std::size_t>(k)]) {
      throw std::invalid_argument(std::string("channel partition: ") + what + " index sets do not partition [0, " +
                                  std::to_string(n) + ")");
    }
    seen[static_cast<std::size_t>(k)] = true;
  };
  std::for_each(s.begin(), s.end(), mark);
  std::for_each(r.begin(), r.end(), mark);
  if (static_cast<Index>(s.size() + r.size()) != n) {
    throw std::invalid_argument(std::string("channel partition: ") + what + " index sets do not cover [0, " +
                                std::to_string(n) + ")");
  }
}

}  // namespace

void ChannelPartition::validate(Index in_ch, Index out_ch) const {
  check_partition(in_s, in_r, in_ch, "input");
  check_partition(out_s, out_r, out_ch, "output");
}

Scheme scheme_select(const ChannelPartition* partition, const SchemeConfig& config) {
  return partition == nullptr ? Scheme::standard : config.scheme;
}

}  // namespace rejuv
