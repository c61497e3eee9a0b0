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

#include "rejuv/rejuvenation.hpp"

#include <limits>

namespace rejuv {

std::vector<Index> expanded_widths(std::span<const Index> pruned, const ArchSpec& arch, double alpha) {
  require_shape(pruned.size() == arch.depth(), "expanded_widths: one pruned width per layer required");
  std::vector<Index> w(pruned.size());
  for (std::size_t i = 0; i < pruned.size(); ++i) {
    if (!arch.layers[i].rejuvenable) {
      w[i] = arch.layers[i].out_ch;
      continue;
    }
    const double scaled = std::floor(alpha * static_cast<double>(pruned[i]) + 0.5);
    w[i] = std::max<Index>(1, static_cast<Index>(scaled));
  }
  return w;
}

ExpansionResult solve_expansion(std::span<const Index> pruned, const ArchSpec& arch,
                                const ResourceConstraint& constraint) {
  for (std::size_t i = 0; i < pruned.size(); ++i) {
    if (pruned[i] < 1) throw std::invalid_argument("solve_expansion: pruned width must be >= 1");
  }
  auto evaluate = [&](double alpha) {
    ExpansionResult r;
    r.alpha = alpha;
    r.widths = expanded_widths(pruned, arch, alpha);
    r.cost = full_cost(arch.with_widths(r.widths), constraint.metric);
    return r;
  };

  ExpansionResult best = evaluate(1.0);
  if (best.cost > constraint.target) {
    throw std::logic_error("solve_expansion: pruned architecture costs " + std::to_string(best.cost) +
                           ", above the constraint " + std::to_string(constraint.target));
  }
  auto consider = [&](const ExpansionResult& r) {
    if (r.cost <= constraint.target && (r.cost > best.cost || (r.cost == best.cost && r.alpha > best.alpha))) {
      best = r;
    }
  };

  // Widths are nondecreasing in alpha, so cost is monotone and feasibility is
  // a prefix of [1, inf).
  double lo = 1.0;
  double hi = 2.0;
  constexpr double kMaxAlpha = 1e9;
  for (;;) {
    auto r = evaluate(hi);
    if (r.cost > constraint.target) break;
    consider(r);
    lo = hi;
    if (hi >= kMaxAlpha) return best;  // nothing rejuvenable can grow
    hi *= 2.0;
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto r = evaluate(mid);
    if (r.cost <= constraint.target) {
      consider(r);
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return best;
}

ChannelMap ChannelMap::identity(Index n) {
  ChannelMap m;
  for (Index k = 0; k < n; ++k) m.survivors.push_back(k);
  return m;
}

void ChannelMap::validate(Index old_size) const {
  std::vector<bool> seen(static_cast<std::size_t>(old_size), false);
  for (const Index k : survivors) {
    if (k < 0 || k >= old_size || seen[static_cast<std::size_t>(k)]) {
      throw std::invalid_argument("channel map: surviving indices must be distinct old channels in [0, " +
                                  std::to_string(old_size) + ")");
    }
    seen[static_cast<std::size_t>(k)] = true;
  }
  if (fresh < 0) throw std::invalid_argument("channel map: negative fresh channel count");
}

void to_json(nlohmann::json& j, const RejuvenationPlan& p) {
  j = nlohmann::json{{"alpha", p.alpha},
                     {"metric", to_string(p.constraint.metric)},
                     {"target", p.constraint.target},
                     {"cost_before", p.cost_before},
                     {"cost_pruned", p.cost_pruned},
                     {"cost_after", p.cost_after},
                     {"ratio_before", p.ratio_before},
                     {"ratio_after", p.ratio_after}};
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"width", l.width}, {"alive", l.pruned}, {"expanded", l.expanded}});
  }
}

}  // namespace rejuv
