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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rejuv/session.hpp"

using namespace rejuv;

namespace {

RunConfig quick(const std::string& name, std::uint64_t seed = 1) {
  RunConfig c = preset(name);
  c.dataset.train_size = 128;
  c.dataset.test_size = 64;
  c.epochs = 4;
  c.window_epochs = 3;
  c.lr.decay_epochs = {3};
  c.seed = seed;
  return c;
}

std::string csv(const std::vector<MetricsRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += format_row(r) + "\n";
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Session, SameSeedSameTrace) {
  const auto a = run_experiment(quick("NR", 4));
  const auto b = run_experiment(quick("NR", 4));
  EXPECT_EQ(csv(a.rows), csv(b.rows));
  EXPECT_NE(csv(a.rows), csv(run_experiment(quick("NR", 5)).rows));
}

TEST(Session, ResumeReproducesLogitsExactly) {
  auto config = quick("NR-CA-BR", 2);
  config.dead_init_fraction = 0.5;  // forces an event early on
  Session full(config);
  full.run();

  Session first(config);
  first.run_until(7);
  const auto bytes = first.save_checkpoint();
  auto resumed = Session::load_checkpoint(bytes);
  EXPECT_EQ(resumed.save_checkpoint(), bytes);
  resumed.run();

  EXPECT_GE(full.events(), 1);
  EXPECT_EQ(resumed.iteration(), full.iteration());
  const auto& x = full.data().test.images;
  const Matrix<float> a = full.logits(x), b = resumed.logits(x);
  ASSERT_EQ(a.rows(), b.rows());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())), 0);
}

TEST(Session, DeadAtBirthFiresOnceAndRefills) {
  auto config = quick("dead-at-birth", 3);
  const auto r = run_experiment(config);
  ASSERT_EQ(r.events.size(), 1u);
  EXPECT_LT(r.events[0]["ratio_before"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(r.events[0]["ratio_after"].get<double>(), 1.0);
  EXPECT_LE(r.events[0]["plan"]["cost_after"].get<Count>(), r.summary["target"].get<Count>());
}

TEST(Session, BaselineKeepsDeadChannelsDead) {
  auto config = quick("BL", 3);
  config.dead_init_fraction = 0.5;
  Session s(config);
  s.run();
  EXPECT_EQ(s.events(), 0);
  for (const auto& row : s.rows()) EXPECT_EQ(row.lambda, 0.0);
  for (const auto& l : s.params().layers) {
    Index zeros = 0;
    for (Index c = 0; c < l.gamma.size(); ++c) zeros += l.gamma[c] == 0.0f;
    EXPECT_EQ(zeros, l.gamma.size() / 2);
  }
  EXPECT_LT(s.rows().back().ratio, 0.6);
}

TEST(Session, LambdaMonotoneBetweenEventsAndZeroAfter) {
  auto config = quick("multi-round", 6);
  const auto r = run_experiment(config);
  double last = 0.0;
  for (const auto& row : r.rows) {
    if (row.kind == "event") {
      EXPECT_EQ(row.lambda, 0.0);
      last = 0.0;
      continue;
    }
    EXPECT_GE(row.lambda, last);
    last = row.lambda;
  }
}

TEST(Session, OutputFilesMirrorRows) {
  const auto dir = std::filesystem::temp_directory_path() / "rejuv_session_out";
  std::filesystem::remove_all(dir);
  auto config = quick("NR", 8);
  config.dead_init_fraction = 0.5;
  const auto r = run_experiment(config, dir);
  EXPECT_EQ(slurp(dir / "metrics.csv"), std::string(kMetricsHeader) + "\n" + csv(r.rows));
  const auto events = slurp(dir / "events.jsonl");
  EXPECT_EQ(static_cast<std::size_t>(std::count(events.begin(), events.end(), '\n')), r.events.size());
  const auto ckpt = Session::load_checkpoint(read_binary_file(dir / "checkpoint.bin"));
  EXPECT_TRUE(ckpt.finished());
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "summary.json")), r.summary);
  std::filesystem::remove_all(dir);
}

TEST(Session, CheckpointRejectsTampering) {
  Session s(quick("NR"));
  s.run_until(3);
  auto bundle = RawBundle::parse(s.save_checkpoint());
  bundle.meta["config"]["epochs"] = 99;
  EXPECT_THROW(Session::load_checkpoint(bundle.serialize()), FormatError);

  auto other = RawBundle::parse(s.save_checkpoint());
  other.meta["format"] = "rejuv-dataset";
  EXPECT_THROW(Session::load_checkpoint(other.serialize()), FormatError);

  auto version = RawBundle::parse(s.save_checkpoint());
  version.meta["checkpoint_version"] = 2;
  EXPECT_THROW(Session::load_checkpoint(version.serialize()), FormatError);
}

TEST(Session, ForcedEventRespectsConstraint) {
  auto config = quick("NR-BR", 9);
  Session s(config);
  s.run_until(10);
  for (auto& l : s.mutable_params().layers) l.gamma.tail(l.gamma.size() / 3).setZero();
  s.force_rejuvenation();
  EXPECT_EQ(s.events(), 1);
  EXPECT_LE(full_cost(s.arch(), CostMetric::params), s.constraint_target());
  EXPECT_EQ(s.controller().lambda, 0.0);
  s.run();
  EXPECT_TRUE(s.finished());
}

TEST(Session, LiveCostBothMetrics) {
  Session s(quick("NR"));
  const auto c = live_cost(s.arch(), s.params(), CostMetric::flops);
  EXPECT_EQ(c.params.used, c.params.total);
  EXPECT_EQ(c.flops.total, full_cost(s.arch(), CostMetric::flops));
  EXPECT_DOUBLE_EQ(c.ratio, 1.0);
}
