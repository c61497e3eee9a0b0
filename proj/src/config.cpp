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

#include "rejuv/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace rejuv {

double LrSchedule::at_epoch(std::int64_t epoch) const {
  double lr = initial;
  for (const int e : decay_epochs) {
    if (epoch >= e) lr *= factor;
  }
  return lr;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("run config: " + what); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (dataset.kind == "synthetic" && batch_size > dataset.train_size) fail("batch_size exceeds the training set");
  if (!(lr.initial > 0)) fail("learning rate must be > 0");
  if (momentum < 0 || momentum >= 1) fail("momentum must lie in [0, 1)");
  if (delta_t < 0) fail("delta_t must be >= 0");
  if (!(delta_r > 0) || delta_lambda < 0) fail("delta_r must be > 0 and delta_lambda >= 0");
  if (!(threshold > 0 && threshold < 1)) fail("threshold must lie in (0, 1)");
  if (max_events < 0) fail("max_events must be >= 0");
  if (!(target_multiplier > 0 && target_multiplier <= 1)) fail("target_multiplier must lie in (0, 1]");
  if (threshold > target_multiplier) fail("threshold above target_multiplier can make the constraint unreachable");
  if (!(gamma0 > 0)) fail("gamma0 must be > 0");
  if (dead_init_fraction < 0 || dead_init_fraction >= 1) fail("dead_init_fraction must lie in [0, 1)");
  scheme.validate();
}

void to_json(nlohmann::json& j, const LrSchedule& s) {
  j = nlohmann::json{{"initial", s.initial}, {"decay_epochs", s.decay_epochs}, {"factor", s.factor}};
}

void from_json(const nlohmann::json& j, LrSchedule& s) {
  s.initial = j.value("initial", s.initial);
  s.decay_epochs = j.value("decay_epochs", s.decay_epochs);
  s.factor = j.value("factor", s.factor);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"preset", c.preset},
                     {"arch", c.arch},
                     {"dataset", c.dataset},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"momentum", c.momentum},
                     {"adaptive_lambda", c.adaptive_lambda},
                     {"delta_t", c.delta_t},
                     {"delta_r", c.delta_r},
                     {"delta_lambda", c.delta_lambda},
                     {"threshold", c.threshold},
                     {"window_epochs", c.window_epochs},
                     {"max_events", c.max_events},
                     {"target_multiplier", c.target_multiplier},
                     {"scheme", to_string(c.scheme.scheme)},
                     {"attention_gain", c.scheme.attention_gain},
                     {"rescale", c.rescale},
                     {"from_scratch", c.from_scratch},
                     {"reset_epochs_after_event", c.reset_epochs_after_event},
                     {"gamma0", c.gamma0},
                     {"dead_init_fraction", c.dead_init_fraction},
                     {"seed", c.seed},
                     {"deterministic", c.deterministic},
                     {"checkpoint_every_epochs", c.checkpoint_every_epochs}};
}

void merge_json(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("preset")) {
    const auto name = j.at("preset").get<std::string>();
    const auto known = preset_names();
    if (std::find(known.begin(), known.end(), name) != known.end()) {
      c = preset(name);
    } else {
      c.preset = name;
    }
  }
  if (j.contains("arch")) c.arch = j.at("arch").get<ArchSpec>();
  if (j.contains("dataset")) {
    DatasetSpec d = c.dataset;
    from_json(j.at("dataset"), d);
    c.dataset = d;
  }
  if (j.contains("lr")) {
    LrSchedule s = c.lr;
    from_json(j.at("lr"), s);
    c.lr = s;
  }
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.momentum = j.value("momentum", c.momentum);
  c.adaptive_lambda = j.value("adaptive_lambda", c.adaptive_lambda);
  c.delta_t = j.value("delta_t", c.delta_t);
  c.delta_r = j.value("delta_r", c.delta_r);
  c.delta_lambda = j.value("delta_lambda", c.delta_lambda);
  c.threshold = j.value("threshold", c.threshold);
  c.window_epochs = j.value("window_epochs", c.window_epochs);
  c.max_events = j.value("max_events", c.max_events);
  c.target_multiplier = j.value("target_multiplier", c.target_multiplier);
  if (j.contains("scheme")) c.scheme.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  c.scheme.attention_gain = j.value("attention_gain", c.scheme.attention_gain);
  c.rescale = j.value("rescale", c.rescale);
  c.from_scratch = j.value("from_scratch", c.from_scratch);
  c.reset_epochs_after_event = j.value("reset_epochs_after_event", c.reset_epochs_after_event);
  c.gamma0 = j.value("gamma0", c.gamma0);
  c.dead_init_fraction = j.value("dead_init_fraction", c.dead_init_fraction);
  c.seed = j.value("seed", c.seed);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.checkpoint_every_epochs = j.value("checkpoint_every_epochs", c.checkpoint_every_epochs);
}

std::string config_hash(const RunConfig& c) {
  const std::string text = nlohmann::json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ArchSpec desk_arch(double width_scale) {
  auto width = [width_scale](Index w) { return std::max<Index>(1, static_cast<Index>(std::lround(w * width_scale))); };
  ArchSpec a;
  a.input_channels = 3;
  a.input_spatial = {8, 8};
  a.num_classes = 4;
  a.cost_metric = CostMetric::params;
  a.count_bn_params = true;
  LayerSpec l;
  l.out_ch = width(16);
  a.layers.push_back(l);
  l.out_ch = width(32);
  l.pool = 2;
  a.layers.push_back(l);
  l.out_ch = width(32);
  l.pool = 1;
  a.layers.push_back(l);
  a.resolve();
  return a;
}

namespace {

// Desk-scale base: the synthetic task with a 32-iteration epoch.
RunConfig desk_base() {
  RunConfig c;
  c.arch = desk_arch();
  c.dataset = DatasetSpec{};
  c.epochs = 20;
  c.batch_size = 32;
  c.lr = LrSchedule{0.1, {10, 15}, 0.1};
  c.window_epochs = 10;
  // A 32-iteration epoch needs a far larger per-check increment than the
  // large-scale value to sparsify within the window.
  c.delta_lambda = 2e-3;
  return c;
}

}  // namespace

RunConfig preset(const std::string& name) {
  RunConfig c = desk_base();
  c.preset = name;
  if (name == "BL") {
    c.max_events = 0;
    c.adaptive_lambda = false;
  } else if (name == "NR") {
  } else if (name == "NR-CR") {
    c.scheme.scheme = Scheme::cross_removed;
  } else if (name == "NR-CA") {
    c.scheme.scheme = Scheme::cross_attention;
  } else if (name == "NR-BR") {
    c.rescale = true;
  } else if (name == "NR-CA-BR") {
    c.scheme.scheme = Scheme::cross_attention;
    c.rescale = true;
  } else if (name == "NR-FS") {
    c.from_scratch = true;
  } else if (name == "compress-half") {
    c.threshold = 0.25;
    c.target_multiplier = 0.5;
    // Faster ramp so the lower threshold is crossed before the first lr decay.
    c.delta_lambda = 2.4e-2;
  } else if (name == "multi-round") {
    c.max_events = 3;
    c.rescale = true;
    c.epochs = 6;
    c.window_epochs = 6;
    c.lr = LrSchedule{0.1, {4}, 0.1};
    c.delta_t = 8;
    c.delta_lambda = 5e-3;
  } else if (name == "dead-at-birth") {
    c.dead_init_fraction = 0.5;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return c;
}

std::vector<std::string> preset_names() {
  return {"BL", "NR", "NR-CR", "NR-CA", "NR-BR", "NR-CA-BR", "NR-FS", "compress-half", "multi-round", "dead-at-birth"};
}

}  // namespace rejuv
