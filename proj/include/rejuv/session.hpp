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

// One training run: minibatch SGD with the L1 penalty, periodic utilization
// checks that drive the lambda controller, and rejuvenation events.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "rejuv/arch.hpp"
#include "rejuv/config.hpp"
#include "rejuv/dataset.hpp"
#include "rejuv/monitor.hpp"
#include "rejuv/network.hpp"
#include "rejuv/rejuvenation.hpp"

namespace rejuv {

/// One line of metrics.csv. `kind` is "check" (utilization check), "event"
/// (state right after a rejuvenation), "epoch" (end of a pass over the
/// training data) or "final".
struct MetricsRow {
  std::int64_t iteration = 0;
  std::int64_t epoch = 0;
  std::string kind;
  double lambda = 0;
  double ratio = 1;
  double train_loss = 0;
  double train_acc = 0;
  std::optional<double> test_acc;
  Count params = 0;
  Count flops = 0;
  bool event = false;
};

inline constexpr const char* kMetricsHeader =
    "iteration,epoch,kind,lambda,ratio,train_loss,train_acc,test_acc,params,flops,event";

std::string format_row(const MetricsRow& row);

/// Effective cost of the live sub-network under both metrics, plus the ratio
/// under the constrained one.
struct LiveCost {
  CostReport params;
  CostReport flops;
  double ratio = 1;
};

LiveCost live_cost(const ArchSpec& arch, const NetworkParams<float>& params, CostMetric bound);

class Session {
 public:
  explicit Session(RunConfig config);

  /// Appends metrics.csv / events.jsonl rows under `dir` (created if needed);
  /// a metrics header is written only to a new file.
  void attach_output(const std::filesystem::path& dir);

  bool finished() const;
  void step();
  void run();
  /// Runs until `iteration() == target` or the run finishes.
  void run_until(std::int64_t target);

  std::string save_checkpoint() const;
  static Session load_checkpoint(std::string_view bytes);

  /// Eval-mode logits.
  Matrix<float> logits(const Tensor<float>& images) const;
  double accuracy(const Dataset& d) const;

  const RunConfig& config() const { return config_; }
  const ArchSpec& arch() const { return arch_; }
  const NetworkParams<float>& params() const { return params_; }
  NetworkParams<float>& mutable_params() { return params_; }
  const MixedState& mixing() const { return mixing_; }
  const LambdaController& controller() const { return controller_; }
  const DatasetSplit& data() const { return data_; }
  std::int64_t iteration() const { return global_iter_; }
  std::int64_t events() const { return events_; }
  Count constraint_target() const { return target_; }
  Count initial_cost() const { return initial_cost_; }
  std::int64_t iterations_per_epoch() const { return iters_per_epoch_; }

  const std::vector<MetricsRow>& rows() const { return rows_; }
  const std::vector<nlohmann::json>& event_log() const { return event_log_; }

  /// Immediate rejuvenation, bypassing the trigger.
  void force_rejuvenation();

  nlohmann::json summary() const;

 private:
  struct Uninitialized {};
  Session(RunConfig config, Uninitialized);

  void check_utilization();
  void rejuvenate_now(double ratio_before);
  void end_data_epoch();
  void emit(const MetricsRow& row);
  void emit_event(const nlohmann::json& record);
  MetricsRow make_row(const std::string& kind) const;
  std::vector<Index> batch_rows() const;

  RunConfig config_;
  DatasetSplit data_;
  ArchSpec arch_;
  NetworkParams<float> params_;
  MixedState mixing_;
  LambdaController controller_;
  TriggerConfig trigger_;
  std::mt19937_64 rng_;

  Count initial_cost_ = 0;
  Count target_ = 0;
  std::int64_t iters_per_epoch_ = 1;
  std::int64_t global_iter_ = 0;
  std::int64_t sched_iter_ = 0;  ///< restarts at events when configured
  std::int64_t data_epoch_ = 0;
  std::int64_t cursor_ = 0;      ///< batch index within data_epoch_
  std::int64_t events_ = 0;
  double epoch_loss_ = 0;
  double epoch_correct_ = 0;
  double epoch_seen_ = 0;
  double last_loss_ = 0;
  double last_acc_ = 0;

  bool finalized_ = false;
  std::filesystem::path out_dir_;

  std::vector<MetricsRow> rows_;
  std::vector<nlohmann::json> event_log_;
  std::shared_ptr<std::ofstream> metrics_out_;
  std::shared_ptr<std::ofstream> events_out_;
};

struct RunResult {
  nlohmann::json summary;
  std::vector<MetricsRow> rows;
  std::vector<nlohmann::json> events;
};

/// Runs `config` to completion, writing metrics.csv, events.jsonl,
/// checkpoint.bin and summary.json under `out_dir` (skipped when empty).
RunResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir = {});

}  // namespace rejuv
