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

#include "rejuv/monitor.hpp"

#include <stdexcept>

namespace rejuv {

LambdaController controller_update(LambdaController ctrl, double r_now) {
  if (ctrl.last_ratio && !(r_now < *ctrl.last_ratio - ctrl.delta_r)) {
    ctrl.lambda += ctrl.delta_lambda;
  }
  ctrl.last_ratio = r_now;
  ctrl.iterations_since_check = 0;
  return ctrl;
}

void to_json(nlohmann::json& j, const LambdaController& c) {
  j = nlohmann::json{{"lambda", c.lambda},
                     {"delta_t", c.delta_t},
                     {"delta_r", c.delta_r},
                     {"delta_lambda", c.delta_lambda},
                     {"last_ratio", c.last_ratio ? nlohmann::json(*c.last_ratio) : nlohmann::json(nullptr)},
                     {"iterations_since_check", c.iterations_since_check}};
}

void from_json(const nlohmann::json& j, LambdaController& c) {
  c.lambda = j.at("lambda").get<double>();
  c.delta_t = j.at("delta_t").get<std::int64_t>();
  c.delta_r = j.at("delta_r").get<double>();
  c.delta_lambda = j.at("delta_lambda").get<double>();
  const auto& last = j.at("last_ratio");
  c.last_ratio = last.is_null() ? std::nullopt : std::optional<double>(last.get<double>());
  c.iterations_since_check = j.at("iterations_since_check").get<std::int64_t>();
}

void TriggerConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("trigger threshold must lie in (0, 1)");
  if (max_events < 0) throw std::invalid_argument("max_events must be >= 0");
}

bool should_rejuvenate(double r, const TriggerConfig& cfg, std::int64_t events_so_far, std::int64_t iteration) {
  return cfg.flag_on(iteration, events_so_far) && r < cfg.threshold;
}

}  // namespace rejuv
