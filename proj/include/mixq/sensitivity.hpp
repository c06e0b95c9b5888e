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

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixq/eval.hpp"
#include "mixq/model.hpp"
#include "mixq/types.hpp"

namespace mixq {

enum class SensitivityMethod : std::uint8_t { Linear = 0, Shapley = 1 };

const char* to_string(SensitivityMethod m);
SensitivityMethod sensitivity_method_from_string(const std::string& s);

struct SensitivityMetadata {
  SensitivityMethod method = SensitivityMethod::Shapley;
  int permutations = 0;        // P (Shapley)
  bool exhaustive = false;     // enumerate all M! permutations per game
  int trials = 0;              // T (linear)
  double noise_scale = 0.0;    // linear
  std::uint64_t seed = 0;
  long calib_positions = 0;
  int top_k = 0;
  QuantMode mode = QuantMode::Asymmetric;
  Index group_size = 0;
  std::vector<int> bitwidths;  // ascending; costs relative to the largest
  long forward_passes = 0;
};

// Per-group, per-bitwidth predicted metric degradation. `cost_*` are the
// finalized solver tables: non-negative, zero at b_max and non-increasing
// in bits (clamped cumulative transitions of the raw estimates). Raw
// estimates are kept for provenance.
struct SensitivityDatabase {
  SensitivityMetadata meta;
  std::vector<std::string> group_names;  // member layers joined with '+'
  std::vector<long> group_sizes;         // |W_m|
  Matd cost_kl;                          // M x |bitwidths|
  Matd cost_ear;
  Matd raw_kl;                           // Shapley phi or linear alpha*e
  Matd raw_ear;
  Vecd alpha_kl;                         // linear only (empty otherwise)
  Vecd alpha_ear;
  Matd recon_error;                      // linear only: e_m^(b)
  std::vector<bool> degenerate_group;    // linear: zero-variance groups

  int num_groups() const { return static_cast<int>(group_sizes.size()); }
  int bit_column(int bits) const;  // throws on a missing cell
  int b_max() const { return meta.bitwidths.back(); }

  nlohmann::json to_json() const;
  static SensitivityDatabase from_json(const nlohmann::json& j);
};

struct PredictedMetrics {
  double kl_hat = 0.0;
  double ear_hat = 1.0;
};

// KL_hat = sum of KL costs; EAR_hat = 1 - sum of EAR costs, clamped to [0,1].
PredictedMetrics predict_metrics(const SensitivityDatabase& db, const QuantSpec& spec);
PredictedMetrics predict_metrics(const SensitivityDatabase& db, const std::vector<int>& bits);

// Clamped cumulative transitions from b_max downward; the identity map for
// raw tables that are already non-negative and non-increasing in bits.
Matd finalize_costs(const Matd& raw, const std::vector<int>& bits);

// One multi-bitwidth Shapley run over an arbitrary assignment-metric
// callback, so games can be driven by the model or by synthetic landscapes.
struct ShapleyRaw {
  Matd phi_kl;   // M x |bitwidths|; b_max column identically zero
  Matd phi_ear;
};

using AssignmentEval = std::function<EvalMetrics(const std::vector<int>& bits_per_group)>;

ShapleyRaw run_shapley_games(int num_groups, const std::vector<int>& bits, int permutations,
                             std::uint64_t seed, bool exhaustive, const AssignmentEval& eval);

// Alg.-style sensitivity estimation against the synthetic model.
SensitivityDatabase estimate_shapley(QuantEvaluator& eval, const std::vector<int>& bits,
                                     int permutations, std::uint64_t seed,
                                     bool exhaustive = false);

// Noise-injection linear estimation: per-group uniform noise scaled by the
// group's weight standard deviation, slope fit through the origin against
// injected relative error energy.
SensitivityDatabase estimate_linear(QuantEvaluator& eval, const std::vector<int>& bits,
                                    int trials, double noise_scale, std::uint64_t seed);

// Expected forward-pass counts for the estimators.
long shapley_pass_count(int num_groups, int num_bits, int permutations);
long linear_pass_count(int num_groups, int trials);

// Rebuilds the allocation-facing group list from a standalone database, so
// bitwidth search can run without the model checkpoint.
std::vector<WeightGroup> groups_from_database(const SensitivityDatabase& db);

}  // namespace mixq
