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

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rejuv/arch.hpp"
#include "rejuv/dataset.hpp"
#include "rejuv/mixed.hpp"

namespace rejuv {

struct LrSchedule {
  double initial = 0.1;
  std::vector<int> decay_epochs{30, 60, 90};  ///< 0-based epochs at which lr is multiplied by factor
  double factor = 0.1;

  double at_epoch(std::int64_t epoch) const;
};

/// Everything that determines a run. Defaults follow the large-scale
/// protocol; presets shrink it to the built-in synthetic task.
struct RunConfig {
  std::string preset = "custom";
  ArchSpec arch;
  DatasetSpec dataset;

  int epochs = 90;
  Index batch_size = 64;
  LrSchedule lr;
  double momentum = 0.9;

  // Adaptive lambda.
  bool adaptive_lambda = true;  ///< false pins lambda at 0
  std::int64_t delta_t = 0;     ///< iterations between utilization checks, 0 = one epoch
  double delta_r = 0.01;
  double delta_lambda = 5e-5;

  // Trigger.
  double threshold = 0.5;
  int window_epochs = 30;  ///< flag on for the first N epochs after each (re)start, 0 = always
  std::int64_t max_events = 1;

  // Rejuvenation.
  double target_multiplier = 1.0;  ///< constraint = multiplier * c(initial architecture)
  SchemeConfig scheme;
  bool rescale = false;
  bool from_scratch = false;
  bool reset_epochs_after_event = true;
  double gamma0 = 0.5;
  double dead_init_fraction = 0.0;  ///< fraction of each rejuvenable layer's gammas initialized to 0

  std::uint64_t seed = 1;
  bool deterministic = true;
  int checkpoint_every_epochs = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const LrSchedule& s);
void from_json(const nlohmann::json& j, LrSchedule& s);
void to_json(nlohmann::json& j, const RunConfig& c);
/// Fields missing from `j` keep the values already in `c`.
void merge_json(const nlohmann::json& j, RunConfig& c);

/// FNV-1a of the canonical JSON dump.
std::string config_hash(const RunConfig& c);

/// BL, NR, NR-CR, NR-CA, NR-BR, NR-CA-BR, NR-FS, compress-half, multi-round,
/// dead-at-birth.
RunConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// The VGG-style chain used by the presets.
ArchSpec desk_arch(double width_scale = 1.0);

}  // namespace rejuv
