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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mixq/quantize.hpp"
#include "mixq/types.hpp"

namespace mixq {

enum class Activation : std::uint8_t { Identity = 0, Tanh = 1 };

const char* to_string(Activation act);
Activation activation_from_string(const std::string& s);

struct ModelConfig {
  int hidden = 32;             // d
  int vocab = 32;              // V
  int depth = 2;               // number of blocks before the head
  double gamma_target = 1.5;   // per-layer centering inefficiency
  double temperature = 0.06;   // softmax temperature on the head logits
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 2;
};

struct Layer {
  std::string name;
  Matd weight;
  Activation act = Activation::Identity;
};

// Deterministic stand-in for a language model: a stack of square blocks
// followed by a vocab projection head. Weights are f32-representable so
// checkpoints round-trip bit-exactly.
class SyntheticModel {
 public:
  static SyntheticModel build(const ModelConfig& config);
  // Assembles a model from explicit layers; the head must be last and named
  // "head". Used by tests that need hand-crafted weight structure.
  static SyntheticModel from_layers(ModelConfig config, std::vector<Layer> layers);

  const ModelConfig& config() const { return config_; }
  // Blocks in order, then the head; all of them are quantizable.
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(const std::string& name) const;
  int num_layers() const { return static_cast<int>(layers_.size()); }
  std::vector<std::string> layer_names() const;
  long total_parameters() const;

 private:
  ModelConfig config_;
  std::vector<Layer> layers_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CalibrationSet {
  Matd inputs;  // N x d, one position per row
  std::uint64_t seed = 0;
  Index size() const { return inputs.rows(); }
};

CalibrationSet generate_calibration(int hidden, Index positions, std::uint64_t seed);

// One forward pass worth of per-position distribution state. `ids` always
// holds the top-K token ids of the *reference* model so that reference and
// quantized snapshots share a support.
struct DistributionSnapshot {
  int K = 0;
  int vocab = 0;
  Mati32 ids;      // N x K
  Matd probs;      // N x K, this model's probabilities at `ids`
  Vecd entropy;    // N, full-distribution entropy in nats
  Veci32 argmax;   // N, this model's full-vocab argmax (ties to lowest id)
  Index positions() const { return ids.rows(); }
};

// Per-layer weight substitutions for a forward pass (fake quantization or
// noise injection). Layers not present run at full precision.
using WeightOverrides = std::unordered_map<std::string, Matd>;

// support == nullptr: reference pass, ids are the model's own top-K (sorted
// by descending probability, ties to lowest id). Otherwise probabilities are
// gathered on the support snapshot's ids.
DistributionSnapshot forward_snapshot(const SyntheticModel& model,
                                      const CalibrationSet& calib,
                                      const WeightOverrides& overrides, int K,
                                      const DistributionSnapshot* support,
                                      int threads = 1);

struct WeightGroup {
  int id = 0;
  std::vector<std::string> members;
  long parameter_count = 0;
};

enum class PartitionRule : std::uint8_t { PerLayer = 0, FusedPairs = 1 };

const char* to_string(PartitionRule rule);
PartitionRule partition_rule_from_string(const std::string& s);

// Partitions the quantizable layers (all of them minus `exclude`) into
// bitwidth-sharing groups. FusedPairs joins adjacent blocks pairwise; the
// head always forms its own group.
std::vector<WeightGroup> partition_groups(const SyntheticModel& model, PartitionRule rule,
                                          const std::vector<std::string>& exclude = {});

// One bitwidth per group; the search output.
struct QuantSpec {
  std::vector<int> bits;      // indexed by group id
  QuantMode mode = QuantMode::Asymmetric;
  Index group_size = 4;
};

double average_bitwidth(const QuantSpec& spec, const std::vector<WeightGroup>& groups);
// Size-weighted mean of effective (overhead-inclusive) bits per parameter.
double average_effective_bits(const QuantSpec& spec, const std::vector<WeightGroup>& groups);

// Reference distributions when spec is absent, fake-quantized otherwise.
DistributionSnapshot forward_distributions(const SyntheticModel& model,
                                           const CalibrationSet& calib,
                                           const std::optional<QuantSpec>& spec,
                                           const std::vector<WeightGroup>& groups, int K,
                                           int threads = 1);

// Checkpoint layout: <dir>/manifest.json plus one SLQW raw tensor per layer
// under <dir>/weights/. Hashes in the manifest guard integrity.
void save_model(const SyntheticModel& model, const std::filesystem::path& dir);
SyntheticModel load_model(const std::filesystem::path& dir);

}  // namespace mixq
