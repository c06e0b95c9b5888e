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

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixq/eval.hpp"
#include "mixq/metrics.hpp"
#include "mixq/sensitivity.hpp"
#include "mixq/types.hpp"

namespace mixq {

// Multiple-choice knapsack: one bitwidth per group, minimize total cost
// subject to a size-weighted average-bits budget.
struct AllocationProblem {
  Matd costs;               // M x |bits|
  std::vector<long> sizes;  // |W_m| > 0
  std::vector<int> bits;    // ascending, one column per entry
  double budget = 0.0;      // maximum average bits
};

// Exact optimum via dynamic programming over the integer capacity
// sum_m b_m * |W_m| <= floor(budget * total). Ties break toward lower total
// bits, then lexicographically by group id.
std::vector<int> solve_mckp(const AllocationProblem& problem);

struct Constraint {
  enum class Kind { EarAtLeast, KlAtMost };
  Kind kind = Kind::EarAtLeast;
  double threshold = 0.0;
  double rho = 1.0;  // calibration ratio applied to predicted KL

  bool satisfied_by(const PredictedMetrics& pred) const {
    return kind == Kind::EarAtLeast ? pred.ear_hat >= threshold
                                    : rho * pred.kl_hat <= threshold;
  }
};

struct TraceEntry {
  double probe_budget = 0.0;
  double achieved_budget = 0.0;
  double kl_hat = 0.0;
  double ear_hat = 1.0;
  bool feasible = false;
};

// Single-point calibration state for the task-lossless search.
struct TlCalibration {
  double alpha_rec = 0.0;     // recovery-vs-KL slope
  double rho = 1.0;           // measured / predicted KL at the calibration spec
  double kl_actual = 0.0;
  double kl_predicted = 0.0;
  double recovery_cal = 0.0;
  double b_cal = 0.0;
  QuantSpec spec_cal;

  double threshold_for(double target_recovery) const {
    return (1.0 - target_recovery) / alpha_rec;
  }
};

struct EvoTraceEntry {
  int generation = 0;
  std::string event;  // "init", "accept" or "curation"
  double avg_bits = 0.0;
  double kl = 0.0;
};

struct SearchResult {
  std::string kind;  // "dl", "tl", "evo" or "budget"
  QuantSpec spec;
  double achieved_budget = 0.0;
  double effective_bpp = 0.0;
  PredictedMetrics predicted;
  std::vector<TraceEntry> trace;
  std::optional<TlCalibration> tl;
  std::vector<EvoTraceEntry> evo_trace;
  long forward_passes = 0;  // consumed while searching (0 for dl/tl)

  nlohmann::json to_json() const;
};

inline constexpr double kDefaultBudgetEps = 0.01;

// Halve [min bits, max bits] until the bracket is narrower than eps; each
// probe solves the MCKP at the midpoint budget and checks the predicted
// metrics. No model evaluations are involved.
SearchResult search_budget(const SensitivityDatabase& db,
                           const std::vector<WeightGroup>& groups, const Constraint& constraint,
                           double eps = kDefaultBudgetEps,
                           const std::optional<std::vector<int>>& allowed_bits = std::nullopt,
                           const TlCalibration* calibration = nullptr);

// Distribution-lossless: minimum budget with predicted EAR >= ear_target.
SearchResult search_dl(const SensitivityDatabase& db, const std::vector<WeightGroup>& groups,
                       double ear_target, double eps = kDefaultBudgetEps,
                       const std::optional<std::vector<int>>& allowed_bits = std::nullopt);

// Pure calibration arithmetic: slope alpha = (1 - recovery) / measured KL
// (the intercept is pinned at recovery 1 for KL 0) and rho = measured KL /
// predicted KL. Throws when the calibration point shows no degradation.
TlCalibration make_tl_calibration(double recovery_cal, double kl_actual, double kl_predicted,
                                  double b_cal, QuantSpec spec_cal);

// One measured configuration anchors the linear recovery model
// (recovery ~= 1 - alpha * KL with a known intercept at KL = 0) and the
// calibration ratio rho. Costs exactly one forward pass.
TlCalibration calibrate_tl(const SensitivityDatabase& db,
                           const std::vector<WeightGroup>& groups, QuantEvaluator& eval,
                           double b_cal, double benchmark_baseline,
                           double benchmark_calibrated);

// TL calibration without external benchmark scores: recovery is proxied by
// the teacher-forced argmax agreement rate (1 - flip rate) of the
// calibration spec, measured on the same single forward pass as the KL.
TlCalibration calibrate_tl_agreement_proxy(const SensitivityDatabase& db,
                                           const std::vector<WeightGroup>& groups,
                                           QuantEvaluator& eval, double b_cal);

// Task-lossless: budget search under rho * KL_hat <= (1 - r*) / alpha.
// Pure database arithmetic; performs zero forward passes.
SearchResult search_tl(const SensitivityDatabase& db, const std::vector<WeightGroup>& groups,
                       const TlCalibration& calibration, double target_recovery,
                       double eps = kDefaultBudgetEps,
                       const std::optional<std::vector<int>>& allowed_bits = std::nullopt);

struct EvoParams {
  double tau = 0.01;          // measured-KL quality threshold
  int lambda = 8;             // offspring per generation
  std::uint64_t seed = 0;
  int max_generations = 200;
  int stall_threshold = 10;
  double penalty = 1000.0;    // fitness penalty coefficient above tau
  std::array<double, 3> stage_fractions = {0.1, 0.3, 1.0};
  std::vector<int> bits = {2, 3, 4, 5, 6, 7, 8};
};

// Fitness of an offspring that reduces average bits by delta_bits > 0.
// Lower is better; offspring that do not reduce bits rank as +infinity.
double evo_fitness(double kl, double delta_bits, double tau, double penalty);

// Constraint-based evolutionary search: start at uniform b_max, accept only
// mutations that keep measured KL below tau while strictly reducing average
// bits; on stall, reallocate capacity with bitwidth-neutral swaps between
// equal-sized groups.
SearchResult evo_search(QuantEvaluator& eval, const EvoParams& params);

// Writes the deployment manifest: one row per group with member layers and
// the assigned bitwidth.
std::string quant_spec_csv(const QuantSpec& spec, const std::vector<WeightGroup>& groups);

}  // namespace mixq
