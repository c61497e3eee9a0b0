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

// Liveliness of channels from their BN scales, the adaptive sparsity
// coefficient, and the rejuvenation trigger.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "rejuv/arch.hpp"

namespace rejuv {

/// Relative threshold: a channel is dead when |gamma| < kDeadFraction * max|gamma|.
inline constexpr double kDeadFraction = 0.01;

/// Per-layer liveness. Comparisons use |gamma|, so a negative scale does not
/// by itself mark a channel dead. A layer whose scales are all zero keeps its
/// first channel alive. Layers with `rejuvenable[i] == false` are all alive.
template <typename GammaVector>
std::vector<ChannelMask> liveness_from_gammas(const std::vector<GammaVector>& gammas,
                                              const std::vector<bool>& rejuvenable = {}) {
  std::vector<ChannelMask> masks;
  masks.reserve(gammas.size());
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    const auto& g = gammas[i];
    const auto n = static_cast<std::size_t>(g.size());
    if (!rejuvenable.empty() && !rejuvenable[i]) {
      masks.emplace_back(n, true);
      continue;
    }
    double gmax = 0.0;
    std::size_t argmax = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double a = std::abs(static_cast<double>(g[static_cast<Index>(c)]));
      if (a > gmax) {
        gmax = a;
        argmax = c;
      }
    }
    ChannelMask m(n, false);
    const double threshold = kDeadFraction * gmax;
    for (std::size_t c = 0; c < n; ++c) {
      m[c] = std::abs(static_cast<double>(g[static_cast<Index>(c)])) >= threshold;
    }
    if (gmax == 0.0 && n > 0) {
      std::fill(m.begin(), m.end(), false);
      m[argmax] = true;
    }
    masks.push_back(std::move(m));
  }
  return masks;
}

/// Adaptive L1 coefficient. Every check compares the utilization ratio with
/// the one recorded at the previous check: a drop of more than delta_r keeps
/// lambda, anything else raises it by delta_lambda.
struct LambdaController {
  double lambda = 0.0;
  std::int64_t delta_t = 1;  ///< iterations between checks
  double delta_r = 0.01;
  double delta_lambda = 5e-5;
  std::optional<double> last_ratio;
  std::int64_t iterations_since_check = 0;

  /// Called at a rejuvenation event.
  void reset() {
    lambda = 0.0;
    last_ratio.reset();
    iterations_since_check = 0;
  }
};

LambdaController controller_update(LambdaController ctrl, double r_now);

void to_json(nlohmann::json& j, const LambdaController& c);
void from_json(const nlohmann::json& j, LambdaController& c);

struct TriggerConfig {
  double threshold = 0.5;                ///< T_r
  std::int64_t window_begin = 0;         ///< flag on for iterations in [begin, end)
  std::int64_t window_end = INT64_MAX;
  std::int64_t max_events = 1;

  void validate() const;
  bool flag_on(std::int64_t iteration, std::int64_t events_so_far) const {
    return iteration >= window_begin && iteration < window_end && events_so_far < max_events;
  }
};

bool should_rejuvenate(double r, const TriggerConfig& cfg, std::int64_t events_so_far, std::int64_t iteration);

}  // namespace rejuv
