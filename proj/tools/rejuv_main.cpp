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

// Command-line front end: run presets or JSON configs, inspect checkpoints,
// export the synthetic dataset.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "rejuv/config.hpp"
#include "rejuv/dataset.hpp"
#include "rejuv/rawio.hpp"
#include "rejuv/session.hpp"

namespace {

using nlohmann::json;

rejuv::RunConfig build_config(const std::string& preset_name, const std::string& config_path) {
  rejuv::RunConfig config = rejuv::preset(preset_name.empty() ? "NR" : preset_name);
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config " + config_path);
    rejuv::merge_json(json::parse(in), config);
  }
  return config;
}

json inspect_checkpoint(const std::string& path, const std::string& metric) {
  const auto session = rejuv::Session::load_checkpoint(rejuv::read_binary_file(path));
  const auto bound = metric.empty() ? session.arch().cost_metric : rejuv::cost_metric_from_string(metric);
  const auto cost = rejuv::live_cost(session.arch(), session.params(), bound);
  const auto& report = bound == rejuv::CostMetric::params ? cost.params : cost.flops;
  json layers = json::array();
  const auto masks = rejuv::propagate_masks(
      session.arch(), rejuv::liveness_from_gammas(session.params().gammas()));
  for (std::size_t i = 0; i < session.arch().depth(); ++i) {
    layers.push_back({{"width", session.arch().layers[i].out_ch},
                      {"alive", rejuv::count_alive(masks.out[i])},
                      {"effective", report.effective[i]},
                      {"full", report.full[i]}});
  }
  return {{"preset", session.config().preset},
          {"iteration", session.iteration()},
          {"events", session.events()},
          {"metric", rejuv::to_string(bound)},
          {"used", report.used},
          {"total", report.total},
          {"ratio", report.ratio},
          {"lambda", session.controller().lambda},
          {"layers", layers}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dead-channel rejuvenation for batch-normalized conv nets"};
  app.require_subcommand(1);

  std::string preset_name, config_path, out_dir, resume_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool deterministic = true;
  auto* run = app.add_subcommand("run", "Train one configuration");
  run->add_option("--preset", preset_name, "Named preset (see `presets`)");
  run->add_option("--config", config_path, "JSON file overriding preset fields");
  run->add_option("--seed", seed, "Run seed");
  run->add_option("--epochs", epochs, "Override the epoch count");
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--resume", resume_path, "Continue from a checkpoint file");
  run->add_flag("--deterministic,!--no-deterministic", deterministic, "Deterministic execution (default on)");

  std::string ckpt_path, metric;
  bool as_json = false;
  auto* inspect = app.add_subcommand("inspect", "Print per-layer liveness and cost of a checkpoint");
  inspect->add_option("checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  inspect->add_option("--metric", metric, "params or flops");
  inspect->add_flag("--json", as_json);

  std::string export_path;
  auto* exp = app.add_subcommand("export-dataset", "Write a preset's dataset as a raw bundle");
  exp->add_option("--preset", preset_name);
  exp->add_option("--config", config_path);
  exp->add_option("--out", export_path)->required();

  app.add_subcommand("presets", "List preset names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (!resume_path.empty()) {
        auto session = rejuv::Session::load_checkpoint(rejuv::read_binary_file(resume_path));
        session.attach_output(out_dir);
        session.run();
        rejuv::write_binary_file(std::filesystem::path(out_dir) / "checkpoint.bin", session.save_checkpoint());
        std::ofstream(std::filesystem::path(out_dir) / "summary.json") << session.summary().dump(2) << '\n';
        std::cout << session.summary().dump(2) << '\n';
        return 0;
      }
      auto config = build_config(preset_name, config_path);
      if (seed) config.seed = *seed;
      if (epochs) config.epochs = *epochs;
      config.deterministic = deterministic;
      std::cout << rejuv::run_experiment(config, out_dir).summary.dump(2) << '\n';
    } else if (*inspect) {
      const auto info = inspect_checkpoint(ckpt_path, metric);
      if (as_json) {
        std::cout << info.dump(2) << '\n';
      } else {
        std::printf("%s  iteration %lld  events %lld  lambda %.3g\n", info["preset"].get<std::string>().c_str(),
                    info["iteration"].get<long long>(), info["events"].get<long long>(),
                    info["lambda"].get<double>());
        std::printf("%-6s %6s %6s %12s %12s\n", "layer", "width", "alive", "effective", "full");
        for (std::size_t i = 0; i < info["layers"].size(); ++i) {
          const auto& l = info["layers"][i];
          std::printf("%-6zu %6lld %6lld %12lld %12lld\n", i, l["width"].get<long long>(),
                      l["alive"].get<long long>(), l["effective"].get<long long>(), l["full"].get<long long>());
        }
        std::printf("%s used %lld / %lld  ratio %.4f\n", info["metric"].get<std::string>().c_str(),
                    info["used"].get<long long>(), info["total"].get<long long>(), info["ratio"].get<double>());
      }
    } else if (*exp) {
      const auto config = build_config(preset_name, config_path);
      const auto split = rejuv::make_dataset(config.dataset, config.arch.input_channels,
                                             config.arch.input_spatial.h, config.arch.input_spatial.w,
                                             config.arch.num_classes);
      rejuv::export_dataset(split, export_path);
    } else {
      for (const auto& name : rejuv::preset_names()) std::cout << name << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
