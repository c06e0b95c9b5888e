// Copyright 2026 The mixq Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mixq/commands.hpp"
#include "mixq/config.hpp"

namespace {

struct Overrides {
  std::optional<std::string> output_dir;
  std::optional<int> threads;
  std::optional<std::uint64_t> model_seed;
  std::optional<std::uint64_t> calib_seed;
  std::optional<std::string> mode;
  std::optional<std::string> method;
  std::optional<std::string> kind;
  std::optional<double> ear_target;
  std::optional<double> recovery_target;
  std::optional<double> b_cal;
  std::optional<double> tau;
  std::optional<double> gamma_target;
  std::optional<long> calib_positions;
  std::optional<Eigen::Index> group_size;
  std::optional<int> top_k;
};

void apply(const Overrides& o, mixq::RunConfig& cfg) {
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.threads) cfg.threads = *o.threads;
  if (o.model_seed) cfg.model.seed = *o.model_seed;
  if (o.calib_seed) cfg.calib.seed = *o.calib_seed;
  if (o.mode) cfg.quantizer.mode = mixq::quant_mode_from_string(*o.mode);
  if (o.method) cfg.sensitivity.method = *o.method;
  if (o.kind) cfg.search.kind = *o.kind;
  if (o.ear_target) cfg.search.ear_target = *o.ear_target;
  if (o.recovery_target) cfg.search.recovery_target = *o.recovery_target;
  if (o.b_cal) cfg.search.b_cal = *o.b_cal;
  if (o.tau) cfg.search.tau = *o.tau;
  if (o.gamma_target) cfg.model.gamma_target = *o.gamma_target;
  if (o.calib_positions) cfg.calib.positions = *o.calib_positions;
  if (o.group_size) cfg.quantizer.group_size = *o.group_size;
  if (o.top_k) cfg.metrics.top_k = *o.top_k;
  cfg.validate();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixq: group-wise quantization search over a synthetic layered model"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  app.add_option("-c,--config", config_path, "JSON config file (defaults apply when absent)");
  app.add_option("-o,--output-dir", overrides.output_dir,
                 "output directory (default: $MIXQ_OUT_DIR or ./out)");
  app.add_option("--threads", overrides.threads, "worker threads; never changes results");
  app.add_option("--seed", overrides.model_seed, "model build seed");
  app.add_option("--calib-seed", overrides.calib_seed, "calibration sampling seed");
  app.add_option("--calib-positions", overrides.calib_positions, "calibration positions");
  app.add_option("--mode", overrides.mode, "quantizer mode: asym|sym");
  app.add_option("--group-size", overrides.group_size, "quantization group size");
  app.add_option("--method", overrides.method, "sensitivity method: shapley|linear");
  app.add_option("--kind", overrides.kind, "search kind: dl|tl|evo");
  app.add_option("--ear-target", overrides.ear_target, "DL search EAR target");
  app.add_option("--recovery-target", overrides.recovery_target, "TL recovery target");
  app.add_option("--b-cal", overrides.b_cal, "TL calibration budget");
  app.add_option("--tau", overrides.tau, "evolutionary search KL threshold");
  app.add_option("--gamma-target", overrides.gamma_target, "model skew target");
  app.add_option("--top-k", overrides.top_k, "top-K support size for metrics");

  for (auto* sub :
       {app.add_subcommand("build", "build the synthetic model checkpoint"),
        app.add_subcommand("sensitivity", "estimate the per-group, per-bitwidth cost database"),
        app.add_subcommand("search", "allocate bitwidths (dl, tl or evo)"),
        app.add_subcommand("validate-gamma", "Monte Carlo check of the gamma^2 error ratio"),
        app.add_subcommand("report", "aggregate run outputs into plot-ready files")}) {
    sub->fallthrough();  // global options may follow the subcommand
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mixq::kExitOk : mixq::kExitConfig;
  }

  mixq::RunConfig config;
  try {
    if (!config_path.empty()) {
      config = mixq::RunConfig::load(config_path);
    }
    if (!overrides.output_dir && !config.output_dir_from_config) {
      if (const char* env_dir = std::getenv("MIXQ_OUT_DIR")) {
        config.output_dir = env_dir;
      }
    }
    apply(overrides, config);
  } catch (const mixq::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return mixq::kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return mixq::kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  return mixq::run_command(command, config, std::cout, std::cerr);
}
