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

// Architecture descriptors for plain conv chains, their parameter / FLOP
// cost, and liveliness-mask feed-forwarding for the effective cost of the
// live sub-network.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rejuv/tensor.hpp"

namespace rejuv {

using Count = std::int64_t;

enum class CostMetric { params, flops };

std::string to_string(CostMetric m);
CostMetric cost_metric_from_string(const std::string& s);

struct Extent {
  Index h = 0;
  Index w = 0;
  bool operator==(const Extent&) const = default;
};

/// One batch-normalized convolution unit (conv -> BN -> ReLU [-> avg pool]).
struct LayerSpec {
  Index out_ch = 1;
  Index kernel_h = 3;
  Index kernel_w = 3;
  Index stride = 1;
  Index padding = 1;
  Index pool = 1;  ///< average-pool window applied after ReLU; 1 means none
  bool rejuvenable = true;
  bool penalized = true;

  // Filled by ArchSpec::resolve().
  Index in_ch = 0;
  Extent in_spatial;
  Extent out_spatial;  ///< convolution output, before pooling
};

struct ArchSpec {
  Index input_channels = 3;
  Extent input_spatial{8, 8};
  Index num_classes = 2;
  CostMetric cost_metric = CostMetric::params;
  /// Count BN gamma/beta (2 per live channel) in the params metric.
  bool count_bn_params = true;
  std::vector<LayerSpec> layers;

  /// Recomputes in_ch and spatial extents along the chain; throws ShapeError
  /// when a layer does not fit.
  ArchSpec& resolve();

  std::size_t depth() const { return layers.size(); }
  std::vector<Index> widths() const;
  /// Copy with new output widths, re-resolved.
  ArchSpec with_widths(std::span<const Index> widths) const;
  /// Spatial extent of the tensor entering the global pool.
  Extent final_spatial() const;
};

void to_json(nlohmann::json& j, const ArchSpec& a);
void from_json(const nlohmann::json& j, ArchSpec& a);

/// Weight parameters of one unit with the given live in/out channel counts:
/// in * out * kh * kw, plus 2 * out for gamma/beta when `with_bn`.
Count layer_param_cost(const LayerSpec& layer, Count in_alive, Count out_alive, bool with_bn = false);

/// Multiply-accumulates: in * out * kh * kw * oh * ow.
Count layer_flop_cost(const LayerSpec& layer, Count in_alive, Count out_alive);

/// Linear classifier after global pooling; it never loses outputs.
Count classifier_cost(const ArchSpec& arch, Count in_alive, CostMetric metric);

using ChannelMask = std::vector<bool>;

Count count_alive(const ChannelMask& m);

struct LivenessMask {
  std::vector<ChannelMask> out;  ///< per layer, length w_i
  std::vector<ChannelMask> in;   ///< per layer, the predecessor's out mask
};

/// Feeds masks forward along the chain. Non-rejuvenable layers are forced
/// fully alive; the first layer's inputs (image channels) are always alive.
LivenessMask propagate_masks(const ArchSpec& arch, std::vector<ChannelMask> out_masks);

LivenessMask all_alive(const ArchSpec& arch);

struct CostReport {
  CostMetric metric = CostMetric::params;
  /// Per conv layer, then one trailing entry for the classifier.
  std::vector<Count> effective;
  std::vector<Count> full;
  Count used = 0;
  Count total = 0;
  double ratio = 1.0;
};

CostReport utilization(const ArchSpec& arch, const LivenessMask& masks, CostMetric metric);

/// c(A) under a metric.
Count full_cost(const ArchSpec& arch, CostMetric metric);

}  // namespace rejuv
