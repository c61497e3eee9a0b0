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

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "rejuv/arch.hpp"

using namespace rejuv;

namespace {

ArchSpec two_layer_chain() {
  ArchSpec a;
  a.input_channels = 3;
  a.input_spatial = {8, 8};
  a.num_classes = 5;
  a.count_bn_params = false;
  LayerSpec l;
  l.out_ch = 4;
  a.layers.push_back(l);
  l.out_ch = 6;
  a.layers.push_back(l);
  a.resolve();
  return a;
}

}  // namespace

TEST(Cost, LayerParameterCounts) {
  const auto a = two_layer_chain();
  EXPECT_EQ(layer_param_cost(a.layers[0], 3, 4), 108);
  EXPECT_EQ(layer_param_cost(a.layers[0], 3, 4, true), 116);
  EXPECT_EQ(layer_param_cost(a.layers[1], 3, 6), 162);
  EXPECT_THROW(layer_param_cost(a.layers[1], 5, 6), std::out_of_range);
}

TEST(Cost, LayerFlopCounts) {
  const auto a = two_layer_chain();
  EXPECT_EQ(layer_flop_cost(a.layers[0], 3, 4), 6912);
  EXPECT_EQ(layer_flop_cost(a.layers[1], 3, 6), 10368);
}

TEST(Cost, StridedLayerExtent) {
  ArchSpec a;
  LayerSpec l;
  l.stride = 2;
  a.layers.push_back(l);
  a.resolve();
  EXPECT_EQ(a.layers[0].out_spatial, (Extent{4, 4}));
}

TEST(Utilization, KilledChannelExample) {
  const auto a = two_layer_chain();
  const auto masks = propagate_masks(a, {{true, true, false, true}, ChannelMask(6, true)});
  EXPECT_EQ(masks.in[1], (ChannelMask{true, true, false, true}));
  const auto r = utilization(a, masks, CostMetric::params);
  ASSERT_EQ(r.effective.size(), 3u);
  EXPECT_EQ(r.effective[0], 81);
  EXPECT_EQ(r.effective[1], 162);
  EXPECT_EQ(r.full[0] + r.full[1], 324);
  EXPECT_DOUBLE_EQ(static_cast<double>(r.effective[0] + r.effective[1]) / 324.0, 0.75);
  // The classifier (6 inputs, 5 classes) is part of both totals.
  EXPECT_EQ(r.effective[2], 30);
  EXPECT_EQ(r.used, 243 + 30);
  EXPECT_EQ(r.total, 324 + 30);
  EXPECT_DOUBLE_EQ(r.ratio, 273.0 / 354.0);
}

TEST(Utilization, AllAliveIsOne) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto a = oracle::random_arch(rng);
    for (const auto m : {CostMetric::params, CostMetric::flops}) {
      const auto r = utilization(a, all_alive(a), m);
      EXPECT_EQ(r.used, r.total);
      EXPECT_EQ(r.total, full_cost(a, m));
      EXPECT_DOUBLE_EQ(r.ratio, 1.0);
    }
  }
}

TEST(Utilization, MatchesPhysicalPruning) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 30; ++k) {
    const auto a = oracle::random_arch(rng);
    const auto out = oracle::random_masks(a, rng);
    const auto masks = propagate_masks(a, out);
    const auto want = oracle::physical_count(a, out);
    EXPECT_EQ(utilization(a, masks, CostMetric::params).used, want.params);
    EXPECT_EQ(utilization(a, masks, CostMetric::flops).used, want.flops);
  }
}

TEST(Utilization, MonotoneInMasks) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 30; ++k) {
    const auto a = oracle::random_arch(rng);
    auto out = oracle::random_masks(a, rng);
    const auto before = utilization(a, propagate_masks(a, out), a.cost_metric).used;
    for (auto& m : out)
      for (auto&& b : m) b = false;
    const auto after = utilization(a, propagate_masks(a, out), a.cost_metric).used;
    EXPECT_LE(after, before);
  }
}

TEST(Masks, NonRejuvenableLayersStayAlive) {
  auto a = two_layer_chain();
  a.layers[0].rejuvenable = false;
  a.resolve();
  const auto masks = propagate_masks(a, {ChannelMask(4, false), ChannelMask(6, false)});
  EXPECT_EQ(count_alive(masks.out[0]), 4);
  EXPECT_EQ(count_alive(masks.in[1]), 4);
  EXPECT_EQ(count_alive(masks.out[1]), 0);
  EXPECT_EQ(count_alive(masks.in[0]), 3);
}

TEST(Masks, WrongLengthThrows) {
  const auto a = two_layer_chain();
  EXPECT_THROW(propagate_masks(a, {ChannelMask(3, true), ChannelMask(6, true)}), ShapeError);
  EXPECT_THROW(propagate_masks(a, {ChannelMask(4, true)}), ShapeError);
}

TEST(Arch, JsonRoundTrip) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 10; ++k) {
    const auto a = oracle::random_arch(rng);
    const nlohmann::json j = a;
    const auto b = j.get<ArchSpec>();
    EXPECT_EQ(nlohmann::json(b), j);
    EXPECT_EQ(full_cost(a, CostMetric::flops), full_cost(b, CostMetric::flops));
  }
}

TEST(Arch, JsonDefaultsAndScalarKernel) {
  const auto j = nlohmann::json::parse(R"({"input_channels": 1, "input_size": [5, 5], "num_classes": 3,
      "layers": [{"width": 2, "kernel": 5}, {"width": 3, "kernel": [1, 3]}]})");
  const auto a = j.get<ArchSpec>();
  EXPECT_EQ(a.layers[0].padding, 2);
  EXPECT_EQ(a.layers[1].kernel_w, 3);
  EXPECT_EQ(a.layers[1].padding, 0);
  EXPECT_EQ(a.layers[1].out_spatial, (Extent{5, 3}));
}

TEST(Arch, ResolveRejectsOversizedKernel) {
  ArchSpec a;
  a.input_spatial = {2, 2};
  LayerSpec l;
  l.kernel_h = l.kernel_w = 5;
  l.padding = 0;
  a.layers.push_back(l);
  EXPECT_THROW(a.resolve(), ShapeError);
}

TEST(Arch, WithWidthsReResolves) {
  const auto a = two_layer_chain();
  const std::vector<Index> w{7, 2};
  const auto b = a.with_widths(w);
  EXPECT_EQ(b.layers[1].in_ch, 7);
  EXPECT_EQ(b.widths(), w);
  EXPECT_EQ(cost_metric_from_string(to_string(CostMetric::flops)), CostMetric::flops);
  EXPECT_THROW(cost_metric_from_string("bytes"), std::invalid_argument);
}
