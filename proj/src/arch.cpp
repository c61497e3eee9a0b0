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

#include "rejuv/arch.hpp"

#include <algorithm>
#include <stdexcept>

#include "rejuv/ops.hpp"

namespace rejuv {

std::string to_string(CostMetric m) { return m == CostMetric::params ? "params" : "flops"; }

CostMetric cost_metric_from_string(const std::string& s) {
  if (s == "params") return CostMetric::params;
  if (s == "flops") return CostMetric::flops;
  throw std::invalid_argument("unknown cost metric '" + s + "' (expected params or flops)");
}

ArchSpec& ArchSpec::resolve() {
  require_shape(input_channels >= 1, "arch: input_channels must be >= 1");
  require_shape(num_classes >= 1, "arch: num_classes must be >= 1");
  require_shape(!layers.empty(), "arch: at least one layer is required");
  Index channels = input_channels;
  Extent spatial = input_spatial;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    const std::string where = "arch layer " + std::to_string(i) + ": ";
    require_shape(l.out_ch >= 1, where + "width must be >= 1");
    require_shape(l.kernel_h >= 1 && l.kernel_w >= 1, where + "kernel must be >= 1");
    require_shape(l.pool >= 1, where + "pool window must be >= 1");
    l.in_ch = channels;
    l.in_spatial = spatial;
    l.out_spatial = {conv_output_size(spatial.h, l.kernel_h, l.stride, l.padding),
                     conv_output_size(spatial.w, l.kernel_w, l.stride, l.padding)};
    require_shape(l.out_spatial.h >= l.pool && l.out_spatial.w >= l.pool,
                  where + "pool window larger than feature map");
    spatial = {l.out_spatial.h / l.pool, l.out_spatial.w / l.pool};
    channels = l.out_ch;
  }
  return *this;
}

std::vector<Index> ArchSpec::widths() const {
  std::vector<Index> w;
  w.reserve(layers.size());
  for (const auto& l : layers) w.push_back(l.out_ch);
  return w;
}

ArchSpec ArchSpec::with_widths(std::span<const Index> widths) const {
  require_shape(widths.size() == layers.size(), "with_widths: width count mismatch");
  ArchSpec out = *this;
  for (std::size_t i = 0; i < widths.size(); ++i) out.layers[i].out_ch = widths[i];
  out.resolve();
  return out;
}

Extent ArchSpec::final_spatial() const {
  const auto& l = layers.back();
  return {l.out_spatial.h / l.pool, l.out_spatial.w / l.pool};
}

void to_json(nlohmann::json& j, const ArchSpec& a) {
  j = nlohmann::json{{"input_channels", a.input_channels},
                     {"input_size", {a.input_spatial.h, a.input_spatial.w}},
                     {"num_classes", a.num_classes},
                     {"cost_metric", to_string(a.cost_metric)},
                     {"count_bn_params", a.count_bn_params}};
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : a.layers) {
    layers.push_back({{"width", l.out_ch},
                      {"kernel", {l.kernel_h, l.kernel_w}},
                      {"stride", l.stride},
                      {"padding", l.padding},
                      {"pool", l.pool},
                      {"rejuvenable", l.rejuvenable},
                      {"penalized", l.penalized}});
  }
}

void from_json(const nlohmann::json& j, ArchSpec& a) {
  a = ArchSpec{};
  a.input_channels = j.value("input_channels", a.input_channels);
  if (j.contains("input_size")) {
    a.input_spatial = {j.at("input_size").at(0).get<Index>(), j.at("input_size").at(1).get<Index>()};
  }
  a.num_classes = j.value("num_classes", a.num_classes);
  a.cost_metric = cost_metric_from_string(j.value("cost_metric", std::string("params")));
  a.count_bn_params = j.value("count_bn_params", a.count_bn_params);
  for (const auto& lj : j.at("layers")) {
    LayerSpec l;
    l.out_ch = lj.at("width").get<Index>();
    if (lj.contains("kernel")) {
      const auto& k = lj.at("kernel");
      if (k.is_array()) {
        l.kernel_h = k.at(0).get<Index>();
        l.kernel_w = k.at(1).get<Index>();
      } else {
        l.kernel_h = l.kernel_w = k.get<Index>();
      }
    }
    l.stride = lj.value("stride", l.stride);
    l.padding = lj.value("padding", (l.kernel_h - 1) / 2);
    l.pool = lj.value("pool", l.pool);
    l.rejuvenable = lj.value("rejuvenable", l.rejuvenable);
    l.penalized = lj.value("penalized", l.penalized);
    a.layers.push_back(l);
  }
  a.resolve();
}

Count layer_param_cost(const LayerSpec& layer, Count in_alive, Count out_alive, bool with_bn) {
  if (in_alive < 0 || in_alive > layer.in_ch || out_alive < 0 || out_alive > layer.out_ch) {
    throw std::out_of_range("layer_param_cost: live counts outside layer widths");
  }
  const Count weights = in_alive * out_alive * layer.kernel_h * layer.kernel_w;
  return with_bn ? weights + 2 * out_alive : weights;
}

Count layer_flop_cost(const LayerSpec& layer, Count in_alive, Count out_alive) {
  return layer_param_cost(layer, in_alive, out_alive) * layer.out_spatial.h * layer.out_spatial.w;
}

Count classifier_cost(const ArchSpec& arch, Count in_alive, CostMetric) {
  // A 1x1 output, so both metrics agree.
  return in_alive * arch.num_classes;
}

Count count_alive(const ChannelMask& m) { return std::count(m.begin(), m.end(), true); }

LivenessMask propagate_masks(const ArchSpec& arch, std::vector<ChannelMask> out_masks) {
  require_shape(out_masks.size() == arch.depth(), "propagate_masks: one mask per layer required");
  LivenessMask lm;
  lm.out = std::move(out_masks);
  lm.in.resize(arch.depth());
  ChannelMask previous(static_cast<std::size_t>(arch.input_channels), true);
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    const auto& layer = arch.layers[i];
    auto& out = lm.out[i];
    require_shape(static_cast<Index>(out.size()) == layer.out_ch,
                  "propagate_masks: layer " + std::to_string(i) + " mask has " +
                      std::to_string(out.size()) + " entries for width " +
                      std::to_string(layer.out_ch));
    if (!layer.rejuvenable) std::fill(out.begin(), out.end(), true);
    lm.in[i] = previous;
    previous = out;
  }
  return lm;
}

LivenessMask all_alive(const ArchSpec& arch) {
  std::vector<ChannelMask> masks;
  for (const auto& l : arch.layers) masks.emplace_back(static_cast<std::size_t>(l.out_ch), true);
  return propagate_masks(arch, std::move(masks));
}

CostReport utilization(const ArchSpec& arch, const LivenessMask& masks, CostMetric metric) {
  require_shape(masks.out.size() == arch.depth() && masks.in.size() == arch.depth(),
                "utilization: mask depth does not match architecture");
  const bool bn = metric == CostMetric::params && arch.count_bn_params;
  auto cost = [&](const LayerSpec& l, Count in, Count out) {
    return metric == CostMetric::params ? layer_param_cost(l, in, out, bn)
                                        : layer_flop_cost(l, in, out);
  };
  CostReport r;
  r.metric = metric;
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    const auto& l = arch.layers[i];
    r.effective.push_back(cost(l, count_alive(masks.in[i]), count_alive(masks.out[i])));
    r.full.push_back(cost(l, l.in_ch, l.out_ch));
  }
  r.effective.push_back(classifier_cost(arch, count_alive(masks.out.back()), metric));
  r.full.push_back(classifier_cost(arch, arch.layers.back().out_ch, metric));
  for (std::size_t i = 0; i < r.full.size(); ++i) {
    r.used += r.effective[i];
    r.total += r.full[i];
  }
  r.ratio = r.total > 0 ? static_cast<double>(r.used) / static_cast<double>(r.total) : 1.0;
  return r;
}

Count full_cost(const ArchSpec& arch, CostMetric metric) {
  return utilization(arch, all_alive(arch), metric).total;
}

}  // namespace rejuv
