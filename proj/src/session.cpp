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

#include "rejuv/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "rejuv/rawio.hpp"

namespace rejuv {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr Index kEvalChunk = 256;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<bool> rejuvenable_layers(const ArchSpec& arch) {
  std::vector<bool> v;
  for (const auto& l : arch.layers) v.push_back(l.rejuvenable);
  return v;
}

std::int64_t argmax_row(const Matrix<float>& m, Index row) {
  Index best = 0;
  m.row(row).maxCoeff(&best);
  return best;
}

}  // namespace

std::string format_row(const MetricsRow& r) {
  std::ostringstream os;
  os << r.iteration << ',' << r.epoch << ',' << r.kind << ',' << fmt_double(r.lambda) << ','
     << fmt_double(r.ratio) << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.train_acc) << ','
     << (r.test_acc ? fmt_double(*r.test_acc) : std::string()) << ',' << r.params << ',' << r.flops << ','
     << (r.event ? 1 : 0);
  return os.str();
}

LiveCost live_cost(const ArchSpec& arch, const NetworkParams<float>& params, CostMetric bound) {
  const auto masks = propagate_masks(arch, liveness_from_gammas(params.gammas(), rejuvenable_layers(arch)));
  LiveCost c{utilization(arch, masks, CostMetric::params), utilization(arch, masks, CostMetric::flops), 1.0};
  c.ratio = bound == CostMetric::params ? c.params.ratio : c.flops.ratio;
  return c;
}

Session::Session(RunConfig config, Uninitialized) : config_(std::move(config)) {
  config_.validate();
  config_.arch.resolve();
  data_ = make_dataset(config_.dataset, config_.arch.input_channels, config_.arch.input_spatial.h,
                       config_.arch.input_spatial.w, config_.arch.num_classes);
  require_shape(data_.train.size() >= config_.batch_size, "training set smaller than one batch");
  iters_per_epoch_ = std::max<std::int64_t>(1, data_.train.size() / config_.batch_size);
  initial_cost_ = full_cost(config_.arch, config_.arch.cost_metric);
  target_ = static_cast<Count>(std::floor(config_.target_multiplier * static_cast<double>(initial_cost_)));
  trigger_.threshold = config_.threshold;
  trigger_.window_begin = 0;
  trigger_.window_end = config_.window_epochs > 0 ? config_.window_epochs * iters_per_epoch_ : INT64_MAX;
  trigger_.max_events = config_.max_events;
  trigger_.validate();
  controller_.delta_t = config_.delta_t > 0 ? config_.delta_t : iters_per_epoch_;
  controller_.delta_r = config_.delta_r;
  controller_.delta_lambda = config_.delta_lambda;
  mixing_.scheme = config_.scheme;
  mixing_.partitions.assign(config_.arch.depth(), std::nullopt);
  arch_ = config_.arch;
}

Session::Session(RunConfig config) : Session(std::move(config), Uninitialized{}) {
  rng_.seed(config_.seed);
  params_ = init_network<float>(arch_, rng_, static_cast<float>(config_.gamma0));
  if (config_.dead_init_fraction > 0) {
    for (std::size_t i = 0; i < arch_.depth(); ++i) {
      if (!arch_.layers[i].rejuvenable) continue;
      auto& gamma = params_.layers[i].gamma;
      std::vector<Index> order(static_cast<std::size_t>(gamma.size()));
      std::iota(order.begin(), order.end(), Index{0});
      std::shuffle(order.begin(), order.end(), rng_);
      const auto dead = static_cast<std::size_t>(std::floor(config_.dead_init_fraction * gamma.size()));
      for (std::size_t k = 0; k < dead; ++k) gamma[order[k]] = 0.0f;
    }
  }
}

void Session::attach_output(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  out_dir_ = dir;
  const auto metrics = dir / "metrics.csv";
  const bool fresh = !std::filesystem::exists(metrics) || std::filesystem::file_size(metrics) == 0;
  metrics_out_ = std::make_shared<std::ofstream>(metrics, std::ios::app);
  if (fresh) *metrics_out_ << kMetricsHeader << '\n';
  events_out_ = std::make_shared<std::ofstream>(dir / "events.jsonl", std::ios::app);
}

bool Session::finished() const { return sched_iter_ >= static_cast<std::int64_t>(config_.epochs) * iters_per_epoch_; }

std::vector<Index> Session::batch_rows() const {
  std::vector<Index> order(static_cast<std::size_t>(data_.train.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 shuffle_rng(config_.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(data_epoch_) + 1);
  std::shuffle(order.begin(), order.end(), shuffle_rng);
  const auto begin = order.begin() + cursor_ * config_.batch_size;
  return {begin, begin + config_.batch_size};
}

void Session::step() {
  const auto rows = batch_rows();
  const auto x = data_.train.gather(rows);
  const auto y = data_.train.gather_labels(rows);
  const auto cache = network_forward(params_, arch_, x, Mode::training, &mixing_);
  const auto back = network_backward(params_, arch_, cache, y, &mixing_);

  std::int64_t correct = 0;
  for (Index n = 0; n < cache.logits.rows(); ++n) correct += argmax_row(cache.logits, n) == y[static_cast<std::size_t>(n)];
  epoch_loss_ += static_cast<double>(back.loss) * static_cast<double>(y.size());
  epoch_correct_ += static_cast<double>(correct);
  epoch_seen_ += static_cast<double>(y.size());

  const auto lr = static_cast<float>(config_.lr.at_epoch(sched_iter_ / iters_per_epoch_));
  const auto lambda = static_cast<float>(config_.adaptive_lambda ? controller_.lambda : 0.0);
  sgd_step(params_, back.grads, lr, static_cast<float>(config_.momentum), lambda, penalized_layers(arch_));
  commit_running_stats(params_, cache);

  ++global_iter_;
  ++sched_iter_;
  ++cursor_;
  ++controller_.iterations_since_check;
  if (controller_.iterations_since_check >= controller_.delta_t) check_utilization();
  if (cursor_ >= iters_per_epoch_) end_data_epoch();
}

void Session::check_utilization() {
  const double r = live_cost(arch_, params_, arch_.cost_metric).ratio;
  const std::int64_t completed = sched_iter_ - 1;
  if (config_.adaptive_lambda && trigger_.flag_on(completed, events_)) {
    controller_ = controller_update(controller_, r);
  }
  controller_.iterations_since_check = 0;
  const bool fire = should_rejuvenate(r, trigger_, events_, completed);
  MetricsRow row = make_row("check");
  row.event = fire;
  emit(row);
  if (fire) rejuvenate_now(r);
}

void Session::force_rejuvenation() {
  rejuvenate_now(live_cost(arch_, params_, arch_.cost_metric).ratio);
}

void Session::rejuvenate_now(double ratio_before) {
  RejuvenationOptions options;
  options.constraint = {arch_.cost_metric, target_};
  options.rescale = config_.rescale;
  options.from_scratch = config_.from_scratch;
  options.gamma0 = config_.gamma0;
  const auto widths_before = arch_.widths();
  const double lambda_before = controller_.lambda;
  auto outcome = rejuvenate(arch_, params_, options, rng_);
  arch_ = std::move(outcome.arch);
  params_ = std::move(outcome.params);
  mixing_.partitions = std::move(outcome.partitions);
  controller_.reset();
  ++events_;

  const auto after = live_cost(arch_, params_, arch_.cost_metric);
  nlohmann::json record = {{"event", events_},
                           {"iteration", global_iter_},
                           {"epoch", sched_iter_ / iters_per_epoch_},
                           {"lambda_before", lambda_before},
                           {"ratio_before", ratio_before},
                           {"ratio_after", after.ratio},
                           {"threshold", config_.threshold},
                           {"widths_before", widths_before},
                           {"widths_after", arch_.widths()},
                           {"scheme", to_string(config_.scheme.scheme)},
                           {"rescale", config_.rescale},
                           {"from_scratch", config_.from_scratch},
                           {"plan", outcome.plan}};
  emit_event(record);
  if (config_.reset_epochs_after_event) sched_iter_ = 0;
  MetricsRow row = make_row("event");
  row.event = true;
  emit(row);
}

void Session::end_data_epoch() {
  last_loss_ = epoch_seen_ > 0 ? epoch_loss_ / epoch_seen_ : 0.0;
  last_acc_ = epoch_seen_ > 0 ? epoch_correct_ / epoch_seen_ : 0.0;
  MetricsRow row = make_row("epoch");
  row.test_acc = accuracy(data_.test);
  emit(row);
  epoch_loss_ = epoch_correct_ = epoch_seen_ = 0;
  ++data_epoch_;
  cursor_ = 0;
  if (config_.checkpoint_every_epochs > 0 && !out_dir_.empty() && data_epoch_ % config_.checkpoint_every_epochs == 0) {
    write_binary_file(out_dir_ / ("checkpoint_epoch" + std::to_string(data_epoch_) + ".bin"), save_checkpoint());
  }
}

MetricsRow Session::make_row(const std::string& kind) const {
  const auto cost = live_cost(arch_, params_, arch_.cost_metric);
  MetricsRow row;
  row.iteration = global_iter_;
  row.epoch = sched_iter_ / iters_per_epoch_;
  row.kind = kind;
  row.lambda = config_.adaptive_lambda ? controller_.lambda : 0.0;
  row.ratio = cost.ratio;
  row.train_loss = epoch_seen_ > 0 ? epoch_loss_ / epoch_seen_ : last_loss_;
  row.train_acc = epoch_seen_ > 0 ? epoch_correct_ / epoch_seen_ : last_acc_;
  row.params = cost.params.used;
  row.flops = cost.flops.used;
  return row;
}

void Session::emit(const MetricsRow& row) {
  rows_.push_back(row);
  if (metrics_out_) *metrics_out_ << format_row(row) << '\n' << std::flush;
}

void Session::emit_event(const nlohmann::json& record) {
  event_log_.push_back(record);
  if (events_out_) *events_out_ << record.dump() << '\n' << std::flush;
}

void Session::run_until(std::int64_t target) {
  while (!finished() && global_iter_ < target) step();
}

void Session::run() {
  while (!finished()) step();
  if (!finalized_) {
    MetricsRow row = make_row("final");
    row.test_acc = accuracy(data_.test);
    emit(row);
    finalized_ = true;
  }
}

Matrix<float> Session::logits(const Tensor<float>& images) const {
  return network_forward(params_, arch_, images, Mode::eval, &mixing_).logits;
}

double Session::accuracy(const Dataset& d) const {
  std::int64_t correct = 0;
  for (Index start = 0; start < d.size(); start += kEvalChunk) {
    std::vector<Index> rows(static_cast<std::size_t>(std::min(kEvalChunk, d.size() - start)));
    std::iota(rows.begin(), rows.end(), start);
    const auto out = logits(d.gather(rows));
    for (Index n = 0; n < out.rows(); ++n) correct += argmax_row(out, n) == d.labels[static_cast<std::size_t>(start + n)];
  }
  return d.size() > 0 ? static_cast<double>(correct) / static_cast<double>(d.size()) : 0.0;
}

nlohmann::json Session::summary() const {
  const auto cost = live_cost(arch_, params_, arch_.cost_metric);
  return {{"preset", config_.preset},
          {"seed", config_.seed},
          {"config_hash", config_hash(config_)},
          {"iterations", global_iter_},
          {"events", events_},
          {"scheme", to_string(config_.scheme.scheme)},
          {"widths", arch_.widths()},
          {"test_acc", accuracy(data_.test)},
          {"train_acc", last_acc_},
          {"ratio", cost.ratio},
          {"lambda", controller_.lambda},
          {"cost_metric", to_string(arch_.cost_metric)},
          {"arch_cost", full_cost(arch_, arch_.cost_metric)},
          {"initial_cost", initial_cost_},
          {"target", target_},
          {"live_params", cost.params.used},
          {"live_flops", cost.flops.used}};
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::vector<std::int64_t> dims(const Shape4& s) { return {s[0], s[1], s[2], s[3]}; }

template <typename Derived>
std::span<const float> values(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

Tensor<float> tensor_from(const RawArray& a) {
  if (a.is_int || a.shape.size() != 4) throw FormatError("checkpoint tensor has the wrong dtype or rank");
  Tensor<float> t(a.shape[0], a.shape[1], a.shape[2], a.shape[3]);
  t.data() = Eigen::Map<const Vector<float>>(a.f32.data(), static_cast<Index>(a.f32.size()));
  return t;
}

Vector<float> vector_from(const RawArray& a) {
  if (a.is_int || a.shape.size() != 1) throw FormatError("checkpoint vector has the wrong dtype or rank");
  return Eigen::Map<const Vector<float>>(a.f32.data(), static_cast<Index>(a.f32.size()));
}

Matrix<float> matrix_from(const RawArray& a) {
  if (a.is_int || a.shape.size() != 2) throw FormatError("checkpoint matrix has the wrong dtype or rank");
  return Eigen::Map<const RowMatrix<float>>(a.f32.data(), a.shape[0], a.shape[1]);
}

nlohmann::json partition_json(const std::optional<ChannelPartition>& p) {
  if (!p) return nullptr;
  return {{"in_s", p->in_s}, {"in_r", p->in_r}, {"out_s", p->out_s}, {"out_r", p->out_r}};
}

std::optional<ChannelPartition> partition_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  ChannelPartition p;
  p.in_s = j.at("in_s").get<std::vector<Index>>();
  p.in_r = j.at("in_r").get<std::vector<Index>>();
  p.out_s = j.at("out_s").get<std::vector<Index>>();
  p.out_r = j.at("out_r").get<std::vector<Index>>();
  return p;
}

}  // namespace

std::string Session::save_checkpoint() const {
  RawBundle b;
  std::ostringstream rng_state;
  rng_state << rng_;
  nlohmann::json partitions = nlohmann::json::array();
  for (const auto& p : mixing_.partitions) partitions.push_back(partition_json(p));
  b.meta = {{"format", "rejuv-checkpoint"},
            {"checkpoint_version", kCheckpointVersion},
            {"config", config_},
            {"config_hash", config_hash(config_)},
            {"arch", arch_},
            {"partitions", partitions},
            {"controller", controller_},
            {"rng", rng_state.str()},
            {"counters",
             {{"global_iter", global_iter_},
              {"sched_iter", sched_iter_},
              {"data_epoch", data_epoch_},
              {"cursor", cursor_},
              {"events", events_},
              {"finalized", finalized_}}},
            {"accumulators",
             {{"epoch_loss", epoch_loss_},
              {"epoch_correct", epoch_correct_},
              {"epoch_seen", epoch_seen_},
              {"last_loss", last_loss_},
              {"last_acc", last_acc_}}}};
  for (std::size_t i = 0; i < params_.layers.size(); ++i) {
    const auto& l = params_.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    b.add(p + "weight", dims(l.weight.shape()), values(l.weight.data()));
    b.add(p + "gamma", {l.gamma.size()}, values(l.gamma));
    b.add(p + "beta", {l.beta.size()}, values(l.beta));
    b.add(p + "running_mean", {l.running.mean.size()}, values(l.running.mean));
    b.add(p + "running_var", {l.running.var.size()}, values(l.running.var));
    b.add(p + "momentum_weight", dims(l.momentum_weight.shape()), values(l.momentum_weight.data()));
    b.add(p + "momentum_gamma", {l.momentum_gamma.size()}, values(l.momentum_gamma));
    b.add(p + "momentum_beta", {l.momentum_beta.size()}, values(l.momentum_beta));
  }
  const RowMatrix<float> cw = params_.classifier.weight;
  const RowMatrix<float> cm = params_.classifier.momentum;
  b.add("classifier.weight", {cw.rows(), cw.cols()}, values(cw));
  b.add("classifier.momentum", {cm.rows(), cm.cols()}, values(cm));
  return b.serialize();
}

Session Session::load_checkpoint(std::string_view bytes) {
  const RawBundle b = RawBundle::parse(bytes);
  if (b.meta.value("format", std::string()) != "rejuv-checkpoint") throw FormatError("raw file is not a checkpoint");
  const int version = b.meta.value("checkpoint_version", 0);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  try {
    RunConfig config;
    merge_json(b.meta.at("config"), config);
    if (config_hash(config) != b.meta.at("config_hash").get<std::string>()) {
      throw FormatError("checkpoint config hash mismatch");
    }
    Session s(std::move(config), Uninitialized{});
    s.arch_ = b.meta.at("arch").get<ArchSpec>();
    s.mixing_.partitions.clear();
    for (const auto& p : b.meta.at("partitions")) s.mixing_.partitions.push_back(partition_from(p));
    s.controller_ = b.meta.at("controller").get<LambdaController>();
    std::istringstream rng_state(b.meta.at("rng").get<std::string>());
    rng_state >> s.rng_;
    if (!rng_state) throw FormatError("corrupt rng state");
    const auto& c = b.meta.at("counters");
    s.global_iter_ = c.at("global_iter").get<std::int64_t>();
    s.sched_iter_ = c.at("sched_iter").get<std::int64_t>();
    s.data_epoch_ = c.at("data_epoch").get<std::int64_t>();
    s.cursor_ = c.at("cursor").get<std::int64_t>();
    s.events_ = c.at("events").get<std::int64_t>();
    s.finalized_ = c.at("finalized").get<bool>();
    const auto& a = b.meta.at("accumulators");
    s.epoch_loss_ = a.at("epoch_loss").get<double>();
    s.epoch_correct_ = a.at("epoch_correct").get<double>();
    s.epoch_seen_ = a.at("epoch_seen").get<double>();
    s.last_loss_ = a.at("last_loss").get<double>();
    s.last_acc_ = a.at("last_acc").get<double>();

    s.params_.layers.resize(s.arch_.depth());
    for (std::size_t i = 0; i < s.arch_.depth(); ++i) {
      auto& l = s.params_.layers[i];
      const std::string p = "layers." + std::to_string(i) + ".";
      l.weight = tensor_from(b.at(p + "weight"));
      l.gamma = vector_from(b.at(p + "gamma"));
      l.beta = vector_from(b.at(p + "beta"));
      l.running.mean = vector_from(b.at(p + "running_mean"));
      l.running.var = vector_from(b.at(p + "running_var"));
      l.momentum_weight = tensor_from(b.at(p + "momentum_weight"));
      l.momentum_gamma = vector_from(b.at(p + "momentum_gamma"));
      l.momentum_beta = vector_from(b.at(p + "momentum_beta"));
    }
    s.params_.classifier.weight = matrix_from(b.at("classifier.weight"));
    s.params_.classifier.momentum = matrix_from(b.at("classifier.momentum"));
    check_consistent(s.params_, s.arch_);
    for (std::size_t i = 0; i < s.arch_.depth(); ++i) {
      if (const auto* p = s.mixing_.partition(i)) p->validate(s.arch_.layers[i].in_ch, s.arch_.layers[i].out_ch);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

RunResult run_experiment(const RunConfig& config, const std::filesystem::path& out_dir) {
  Session session(config);
  if (!out_dir.empty()) session.attach_output(out_dir);
  session.run();
  RunResult result{session.summary(), session.rows(), session.event_log()};
  if (!out_dir.empty()) {
    write_binary_file(out_dir / "checkpoint.bin", session.save_checkpoint());
    std::ofstream(out_dir / "summary.json") << result.summary.dump(2) << '\n';
  }
  return result;
}

}  // namespace rejuv
