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

// Dead-neuron rejuvenation: prune dead channels, re-expand every layer by a
// shared rate under the resource constraint, rebuild the weights block by
// block, and optionally rescale small surviving scales.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "rejuv/arch.hpp"
#include "rejuv/mixed.hpp"
#include "rejuv/monitor.hpp"
#include "rejuv/network.hpp"

namespace rejuv {

/// Bound on exactly one metric; post-event cost under it never exceeds `target`.
struct ResourceConstraint {
  CostMetric metric = CostMetric::params;
  Count target = 0;
};

struct ExpansionResult {
  double alpha = 1.0;
  std::vector<Index> widths;
  Count cost = 0;
};

/// max(1, round_half_up(alpha * w')) on rejuvenable layers, original width elsewhere.
std::vector<Index> expanded_widths(std::span<const Index> pruned, const ArchSpec& arch, double alpha);

/// Largest shared expansion rate found by doubling then 60 bisection steps.
/// The returned widths are the highest-cost feasible candidate on the search
/// trace. Throws std::logic_error if alpha = 1 is already infeasible.
ExpansionResult solve_expansion(std::span<const Index> pruned, const ArchSpec& arch,
                                const ResourceConstraint& constraint);

/// New channel layout of one dimension: surviving old channels (in order)
/// followed by `fresh` new ones.
struct ChannelMap {
  std::vector<Index> survivors;
  Index fresh = 0;

  Index size() const { return static_cast<Index>(survivors.size()) + fresh; }
  static ChannelMap identity(Index n);
  void validate(Index old_size) const;
};

struct RescaleEntry {
  Index channel = 0;  ///< old channel index
  double old_gamma = 0.0;
  double new_gamma = 0.0;
  double ratio = 1.0;  ///< new_gamma / old_gamma
};

using RescaleRecord = std::vector<RescaleEntry>;

/// Whatever reads a layer's output channels: the next convolution (input
/// slices) or the classifier (columns).
template <typename Scalar>
struct Consumer {
  Tensor<Scalar>* conv = nullptr;
  Matrix<Scalar>* linear = nullptr;

  void divide_channel(Index c, Scalar s) const {
    if (conv != nullptr) {
      for (Index o = 0; o < conv->dim(0); ++o)
        for (Index y = 0; y < conv->dim(2); ++y)
          for (Index x = 0; x < conv->dim(3); ++x) (*conv)(o, c, y, x) /= s;
    }
    if (linear != nullptr) linear->col(c) /= s;
  }
};

/// |gamma'| = max(|gamma|, gamma0) with the sign kept, beta' = s*beta, and the
/// consumer's weights for the channel divided by s = gamma'/gamma. Positive
/// homogeneity of ReLU (and of average pooling) keeps the network function.
/// Channels with gamma == 0 are left untouched.
template <typename Scalar>
RescaleRecord rescale_survivors(LayerParams<Scalar>& layer, std::span<const Index> survivors,
                                const Consumer<Scalar>& consumer, Scalar gamma0) {
  if (!(gamma0 > Scalar(0))) throw std::invalid_argument("rescale_survivors: gamma0 must be > 0");
  RescaleRecord record;
  for (const Index c : survivors) {
    const Scalar g = layer.gamma[c];
    if (g == Scalar(0)) continue;  // only reachable through the all-zero liveness fallback
    const Scalar mag = std::max(std::abs(g), gamma0);
    const Scalar g_new = g > Scalar(0) ? mag : -mag;
    const Scalar s = g_new / g;
    record.push_back({c, static_cast<double>(g), static_cast<double>(g_new), static_cast<double>(s)});
    if (s == Scalar(1)) continue;
    layer.gamma[c] = g_new;
    layer.beta[c] *= s;
    consumer.divide_channel(c, s);
  }
  return record;
}

/// Rebuilds one unit for new in/out layouts: W_{S->S} gathered from `old`,
/// W_{R->S} = W_{S->R} = 0, W_{R->R} ~ N(0, 2/fan_in). R channels get
/// gamma0, beta 0 and identity running statistics; every momentum is zeroed.
template <typename Scalar, typename Rng>
LayerParams<Scalar> reinitialize_layer(const LayerParams<Scalar>& old, const ChannelMap& in, const ChannelMap& out,
                                       Rng& rng, Scalar gamma0) {
  in.validate(old.weight.dim(1));
  out.validate(old.weight.dim(0));
  const Index kh = old.weight.dim(2), kw = old.weight.dim(3);
  const Index in_s = static_cast<Index>(in.survivors.size());
  const Index out_s = static_cast<Index>(out.survivors.size());
  LayerParams<Scalar> p;
  p.eps = old.eps;
  p.weight = Tensor<Scalar>(out.size(), in.size(), kh, kw);
  for (Index o = 0; o < out_s; ++o)
    for (Index i = 0; i < in_s; ++i)
      for (Index y = 0; y < kh; ++y)
        for (Index x = 0; x < kw; ++x)
          p.weight(o, i, y, x) = old.weight(out.survivors[o], in.survivors[i], y, x);
  if (out.fresh > 0 && in.fresh > 0) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in.size() * kh * kw)));
    for (Index o = out_s; o < out.size(); ++o)
      for (Index i = in_s; i < in.size(); ++i)
        for (Index y = 0; y < kh; ++y)
          for (Index x = 0; x < kw; ++x) p.weight(o, i, y, x) = static_cast<Scalar>(dist(rng));
  }
  p.gamma = Vector<Scalar>::Constant(out.size(), gamma0);
  p.beta = Vector<Scalar>::Zero(out.size());
  p.running = BatchNormStats<Scalar>::identity(out.size());
  for (Index o = 0; o < out_s; ++o) {
    const Index src = out.survivors[o];
    p.gamma[o] = old.gamma[src];
    p.beta[o] = old.beta[src];
    p.running.mean[o] = old.running.mean[src];
    p.running.var[o] = old.running.var[src];
  }
  p.zero_momentum();
  return p;
}

/// Classifier columns follow the last layer's layout; R columns start at 0.
template <typename Scalar>
ClassifierParams<Scalar> reinitialize_classifier(const ClassifierParams<Scalar>& old, const ChannelMap& in) {
  in.validate(old.weight.cols());
  ClassifierParams<Scalar> c;
  c.weight = Matrix<Scalar>::Zero(old.weight.rows(), in.size());
  for (std::size_t k = 0; k < in.survivors.size(); ++k) {
    c.weight.col(static_cast<Index>(k)) = old.weight.col(in.survivors[k]);
  }
  c.momentum = Matrix<Scalar>::Zero(c.weight.rows(), c.weight.cols());
  return c;
}

struct LayerPlan {
  Index width = 0;     ///< w
  Index pruned = 0;    ///< w'
  Index expanded = 0;  ///< w''
  std::vector<Index> survivors;
};

struct RejuvenationPlan {
  std::vector<LayerPlan> layers;
  double alpha = 1.0;
  ResourceConstraint constraint;
  Count cost_before = 0;  ///< c(A) of the old architecture
  Count cost_pruned = 0;  ///< U, the cost of the live sub-network
  Count cost_after = 0;   ///< c(A'') of the new architecture
  double ratio_before = 1.0;
  double ratio_after = 1.0;
};

void to_json(nlohmann::json& j, const RejuvenationPlan& p);

struct RejuvenationOptions {
  ResourceConstraint constraint;
  bool rescale = false;       ///< neural rescaling of small surviving scales
  bool from_scratch = false;  ///< keep only the new widths, reinitialize everything
  double gamma0 = 0.5;
};

template <typename Scalar>
struct RejuvenationOutcome {
  ArchSpec arch;
  NetworkParams<Scalar> params;
  std::vector<std::optional<ChannelPartition>> partitions;
  RejuvenationPlan plan;
  std::vector<RescaleRecord> rescaled;
};

/// Liveness -> pruned widths -> shared expansion -> rescaling -> block
/// reinitialization. Channels of each new layer are laid out S first, R
/// after. The caller resets its lambda controller.
template <typename Scalar, typename Rng>
RejuvenationOutcome<Scalar> rejuvenate(const ArchSpec& arch, const NetworkParams<Scalar>& params,
                                       const RejuvenationOptions& options, Rng& rng) {
  check_consistent(params, arch);
  std::vector<bool> rejuvenable;
  for (const auto& l : arch.layers) rejuvenable.push_back(l.rejuvenable);
  const auto masks = propagate_masks(arch, liveness_from_gammas(params.gammas(), rejuvenable));
  const auto report = utilization(arch, masks, options.constraint.metric);

  RejuvenationOutcome<Scalar> out;
  auto& plan = out.plan;
  plan.constraint = options.constraint;
  plan.cost_before = report.total;
  plan.cost_pruned = report.used;
  plan.ratio_before = report.ratio;

  std::vector<Index> pruned;
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    LayerPlan lp;
    lp.width = arch.layers[i].out_ch;
    for (Index c = 0; c < lp.width; ++c) {
      if (masks.out[i][static_cast<std::size_t>(c)]) lp.survivors.push_back(c);
    }
    lp.pruned = static_cast<Index>(lp.survivors.size());
    pruned.push_back(lp.pruned);
    plan.layers.push_back(std::move(lp));
  }

  const auto expansion = solve_expansion(pruned, arch, options.constraint);
  plan.alpha = expansion.alpha;
  plan.cost_after = expansion.cost;
  for (std::size_t i = 0; i < arch.depth(); ++i) plan.layers[i].expanded = expansion.widths[i];
  out.arch = arch.with_widths(expansion.widths);
  auto finish = [&]() {
    const auto live = propagate_masks(out.arch, liveness_from_gammas(out.params.gammas(), rejuvenable));
    plan.ratio_after = utilization(out.arch, live, options.constraint.metric).ratio;
  };

  if (options.from_scratch) {
    out.params = init_network<Scalar>(out.arch, rng, static_cast<Scalar>(options.gamma0));
    out.partitions.assign(arch.depth(), std::nullopt);
    finish();
    return out;
  }

  NetworkParams<Scalar> old = params;
  if (options.rescale) {
    for (std::size_t i = 0; i < arch.depth(); ++i) {
      Consumer<Scalar> consumer;
      if (i + 1 < arch.depth()) {
        consumer.conv = &old.layers[i + 1].weight;
      } else {
        consumer.linear = &old.classifier.weight;
      }
      out.rescaled.push_back(rescale_survivors(old.layers[i], plan.layers[i].survivors, consumer,
                                               static_cast<Scalar>(options.gamma0)));
    }
  }

  ChannelMap in_map = ChannelMap::identity(arch.input_channels);
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    ChannelMap out_map{plan.layers[i].survivors, plan.layers[i].expanded - plan.layers[i].pruned};
    out.params.layers.push_back(
        reinitialize_layer(old.layers[i], in_map, out_map, rng, static_cast<Scalar>(options.gamma0)));
    if (in_map.fresh == 0 && out_map.fresh == 0) {
      out.partitions.emplace_back(std::nullopt);
    } else {
      out.partitions.emplace_back(ChannelPartition::contiguous(static_cast<Index>(in_map.survivors.size()),
                                                               in_map.fresh, plan.layers[i].pruned, out_map.fresh));
    }
    in_map = std::move(out_map);
  }
  out.params.classifier = reinitialize_classifier(old.classifier, in_map);
  finish();
  return out;
}

}  // namespace rejuv
