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

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixq/model.hpp"
#include "mixq/types.hpp"

namespace mixq {

// Full pipeline configuration. JSON file fields mirror the struct; unknown
// keys are rejected. Command-line flags override file values.
struct RunConfig {
  ModelConfig model;  // model.seed doubles as the build seed

  struct Calib {
    long positions = 256;
    std::uint64_t seed = 101;
  } calib;

  struct Quantizer {
    QuantMode mode = QuantMode::Asymmetric;
    Index group_size = 4;
    std::vector<int> bits = {2, 3, 4, 5, 6, 7, 8};
  } quantizer;

  struct Metrics {
    int top_k = 10;
  } metrics;

  struct Partition {
    PartitionRule rule = PartitionRule::PerLayer;
    std::vector<std::string> exclude;
  } partition;

  struct Sensitivity {
    std::string method = "shapley";
    int permutations = 8;
    bool exhaustive = false;
    int trials = 3;
    double noise_scale = 0.12;
    std::uint64_t seed = 2024;
  } sensitivity;

  struct Search {
    std::string kind = "dl";  // dl | tl | evo
    double ear_target = 0.99;
    double recovery_target = 0.99;
    double b_cal = 4.0;
    // Optional externally measured benchmark scores for TL calibration;
    // when absent the argmax-agreement proxy from the calibration pass is
    // used (baseline agreement is 1 by construction).
    std::optional<double> benchmark_baseline;
    std::optional<double> benchmark_calibrated;
    double epsilon = 0.01;
    std::optional<std::vector<int>> allowed_bits;  // restrict allocation
    double tau = 0.01;
    int lambda = 8;
    int max_generations = 200;
    int stall_threshold = 10;
    double penalty = 1000.0;
    std::uint64_t seed = 4242;
  } search;

  struct GammaSweep {
    std::vector<double> gammas = {1.0, 1.2, 1.5, 2.0};
    std::vector<int> bits = {4, 6, 8};
    long samples = 100000;
    std::uint64_t seed = 99;
  } gamma;

  std::filesystem::path output_dir = "out";
  // True once a config file set output_dir; the CLI falls back to
  // $MIXQ_OUT_DIR only when neither a flag nor the file chose one.
  bool output_dir_from_config = false;
  int threads = 1;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;  // throws ConfigError
};

}  // namespace mixq
