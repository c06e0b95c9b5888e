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

#include "mixq/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace mixq {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::string& section,
                         const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (allowed.find(key) == allowed.end()) {
      throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("invalid value for config key '") + key + "'");
  }
}

}  // namespace

json RunConfig::to_json() const {
  json j;
  j["model"] = {{"hidden", model.hidden},
                {"vocab", model.vocab},
                {"depth", model.depth},
                {"gamma_target", model.gamma_target},
                {"temperature", model.temperature},
                {"activation", std::string(to_string(model.activation))},
                {"seed", model.seed}};
  j["calib"] = {{"positions", calib.positions}, {"seed", calib.seed}};
  j["quantizer"] = {{"mode", std::string(to_string(quantizer.mode))},
                    {"group_size", quantizer.group_size},
                    {"bits", quantizer.bits}};
  j["metrics"] = {{"top_k", metrics.top_k}};
  j["partition"] = {{"rule", std::string(to_string(partition.rule))},
                    {"exclude", partition.exclude}};
  j["sensitivity"] = {{"method", sensitivity.method},
                      {"permutations", sensitivity.permutations},
                      {"exhaustive", sensitivity.exhaustive},
                      {"trials", sensitivity.trials},
                      {"noise_scale", sensitivity.noise_scale},
                      {"seed", sensitivity.seed}};
  json search_json = {{"kind", search.kind},
                      {"ear_target", search.ear_target},
                      {"recovery_target", search.recovery_target},
                      {"b_cal", search.b_cal},
                      {"epsilon", search.epsilon},
                      {"tau", search.tau},
                      {"lambda", search.lambda},
                      {"max_generations", search.max_generations},
                      {"stall_threshold", search.stall_threshold},
                      {"penalty", search.penalty},
                      {"seed", search.seed}};
  if (search.benchmark_baseline) search_json["benchmark_baseline"] = *search.benchmark_baseline;
  if (search.benchmark_calibrated) {
    search_json["benchmark_calibrated"] = *search.benchmark_calibrated;
  }
  if (search.allowed_bits) search_json["allowed_bits"] = *search.allowed_bits;
  j["search"] = std::move(search_json);
  j["gamma"] = {{"gammas", gamma.gammas},
                {"bits", gamma.bits},
                {"samples", gamma.samples},
                {"seed", gamma.seed}};
  j["output_dir"] = output_dir.string();
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  reject_unknown_keys(j, "", {"model", "calib", "quantizer", "metrics", "partition",
                              "sensitivity", "search", "gamma", "output_dir", "threads"});
  if (auto it = j.find("model"); it != j.end()) {
    reject_unknown_keys(*it, "model", {"hidden", "vocab", "depth", "gamma_target",
                                       "temperature", "activation", "seed"});
    read_field(*it, "hidden", cfg.model.hidden);
    read_field(*it, "vocab", cfg.model.vocab);
    read_field(*it, "depth", cfg.model.depth);
    read_field(*it, "gamma_target", cfg.model.gamma_target);
    read_field(*it, "temperature", cfg.model.temperature);
    read_field(*it, "seed", cfg.model.seed);
    if (it->contains("activation")) {
      try {
        cfg.model.activation = activation_from_string(it->at("activation").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (auto it = j.find("calib"); it != j.end()) {
    reject_unknown_keys(*it, "calib", {"positions", "seed"});
    read_field(*it, "positions", cfg.calib.positions);
    read_field(*it, "seed", cfg.calib.seed);
  }
  if (auto it = j.find("quantizer"); it != j.end()) {
    reject_unknown_keys(*it, "quantizer", {"mode", "group_size", "bits"});
    read_field(*it, "group_size", cfg.quantizer.group_size);
    read_field(*it, "bits", cfg.quantizer.bits);
    if (it->contains("mode")) {
      try {
        cfg.quantizer.mode = quant_mode_from_string(it->at("mode").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (auto it = j.find("metrics"); it != j.end()) {
    reject_unknown_keys(*it, "metrics", {"top_k"});
    read_field(*it, "top_k", cfg.metrics.top_k);
  }
  if (auto it = j.find("partition"); it != j.end()) {
    reject_unknown_keys(*it, "partition", {"rule", "exclude"});
    read_field(*it, "exclude", cfg.partition.exclude);
    if (it->contains("rule")) {
      try {
        cfg.partition.rule = partition_rule_from_string(it->at("rule").get<std::string>());
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
  }
  if (auto it = j.find("sensitivity"); it != j.end()) {
    reject_unknown_keys(*it, "sensitivity", {"method", "permutations", "exhaustive", "trials",
                                             "noise_scale", "seed"});
    read_field(*it, "method", cfg.sensitivity.method);
    read_field(*it, "permutations", cfg.sensitivity.permutations);
    read_field(*it, "exhaustive", cfg.sensitivity.exhaustive);
    read_field(*it, "trials", cfg.sensitivity.trials);
    read_field(*it, "noise_scale", cfg.sensitivity.noise_scale);
    read_field(*it, "seed", cfg.sensitivity.seed);
  }
  if (auto it = j.find("search"); it != j.end()) {
    reject_unknown_keys(*it, "search",
                        {"kind", "ear_target", "recovery_target", "b_cal",
                         "benchmark_baseline", "benchmark_calibrated", "epsilon",
                         "allowed_bits", "tau", "lambda", "max_generations",
                         "stall_threshold", "penalty", "seed"});
    read_field(*it, "kind", cfg.search.kind);
    read_field(*it, "ear_target", cfg.search.ear_target);
    read_field(*it, "recovery_target", cfg.search.recovery_target);
    read_field(*it, "b_cal", cfg.search.b_cal);
    read_field(*it, "epsilon", cfg.search.epsilon);
    read_field(*it, "tau", cfg.search.tau);
    read_field(*it, "lambda", cfg.search.lambda);
    read_field(*it, "max_generations", cfg.search.max_generations);
    read_field(*it, "stall_threshold", cfg.search.stall_threshold);
    read_field(*it, "penalty", cfg.search.penalty);
    read_field(*it, "seed", cfg.search.seed);
    if (it->contains("benchmark_baseline")) {
      cfg.search.benchmark_baseline = it->at("benchmark_baseline").get<double>();
    }
    if (it->contains("benchmark_calibrated")) {
      cfg.search.benchmark_calibrated = it->at("benchmark_calibrated").get<double>();
    }
    if (it->contains("allowed_bits")) {
      cfg.search.allowed_bits = it->at("allowed_bits").get<std::vector<int>>();
    }
  }
  if (auto it = j.find("gamma"); it != j.end()) {
    reject_unknown_keys(*it, "gamma", {"gammas", "bits", "samples", "seed"});
    read_field(*it, "gammas", cfg.gamma.gammas);
    read_field(*it, "bits", cfg.gamma.bits);
    read_field(*it, "samples", cfg.gamma.samples);
    read_field(*it, "seed", cfg.gamma.seed);
  }
  if (auto it = j.find("output_dir"); it != j.end()) {
    cfg.output_dir = it->get<std::string>();
    cfg.output_dir_from_config = true;
  }
  read_field(j, "threads", cfg.threads);
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  if (model.hidden < 1 || model.vocab < 1 || model.depth < 1) {
    throw ConfigError("model dimensions must be at least 1");
  }
  if (model.gamma_target < 1.0) throw ConfigError("gamma_target must be at least 1");
  if (model.temperature <= 0.0) throw ConfigError("temperature must be positive");
  if (calib.positions < 1) throw ConfigError("calib.positions must be at least 1");
  if (quantizer.group_size < 1) throw ConfigError("quantizer.group_size must be positive");
  if (quantizer.bits.empty()) throw ConfigError("quantizer.bits must be non-empty");
  for (int b : quantizer.bits) {
    if (b < 2 || b > 8) throw ConfigError("quantizer.bits entries must lie in [2, 8]");
  }
  if (metrics.top_k < 2) throw ConfigError("metrics.top_k must be at least 2");
  if (metrics.top_k > model.vocab) throw ConfigError("metrics.top_k must not exceed vocab");
  if (sensitivity.method != "linear" && sensitivity.method != "shapley") {
    throw ConfigError("sensitivity.method must be 'linear' or 'shapley'");
  }
  if (sensitivity.permutations < 1) throw ConfigError("sensitivity.permutations must be >= 1");
  if (sensitivity.trials < 1) throw ConfigError("sensitivity.trials must be >= 1");
  if (sensitivity.noise_scale <= 0.0) throw ConfigError("sensitivity.noise_scale must be > 0");
  if (search.kind != "dl" && search.kind != "tl" && search.kind != "evo") {
    throw ConfigError("search.kind must be 'dl', 'tl' or 'evo'");
  }
  if (search.epsilon <= 0.0) throw ConfigError("search.epsilon must be positive");
  if (search.tau <= 0.0) throw ConfigError("search.tau must be positive");
  if (search.lambda < 1) throw ConfigError("search.lambda must be >= 1");
  if (search.max_generations < 1) throw ConfigError("search.max_generations must be >= 1");
  if (search.stall_threshold < 1) throw ConfigError("search.stall_threshold must be >= 1");
  if (search.allowed_bits) {
    for (int b : *search.allowed_bits) {
      if (std::find(quantizer.bits.begin(), quantizer.bits.end(), b) == quantizer.bits.end()) {
        throw ConfigError("search.allowed_bits must be a subset of quantizer.bits");
      }
    }
    if (search.allowed_bits->empty()) throw ConfigError("search.allowed_bits must be non-empty");
  }
  if (gamma.samples < 1) throw ConfigError("gamma.samples must be >= 1");
  for (double g : gamma.gammas) {
    if (g < 1.0) throw ConfigError("gamma sweep values must be at least 1");
  }
  for (int b : gamma.bits) {
    if (b < 2 || b > 8) throw ConfigError("gamma sweep bits must lie in [2, 8]");
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

}  // namespace mixq
