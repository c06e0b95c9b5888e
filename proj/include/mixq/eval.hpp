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

#include <map>
#include <string>
#include <vector>

#include "mixq/metrics.hpp"
#include "mixq/model.hpp"
#include "mixq/types.hpp"

namespace mixq {

struct EvalMetrics {
  double kl = 0.0;
  double ear = 1.0;
};

// Owns the reference snapshot and a fake-quantized weight cache; every
// quantized or perturbed model evaluation goes through here so forward
// passes can be counted against the estimator cost formulas. Building the
// reference substrate is not counted.
class QuantEvaluator {
 public:
  QuantEvaluator(const SyntheticModel& model, const CalibrationSet& calib,
                 std::vector<WeightGroup> groups, int K, QuantMode mode,
                 Index group_size, int threads = 1);

  const SyntheticModel& model() const { return model_; }
  const CalibrationSet& calibration() const { return calib_; }
  const std::vector<WeightGroup>& groups() const { return groups_; }
  const DistributionSnapshot& reference() const { return reference_; }
  int num_groups() const { return static_cast<int>(groups_.size()); }
  int top_k() const { return k_; }
  QuantMode mode() const { return mode_; }
  Index group_size() const { return group_size_; }
  int threads() const { return threads_; }

  // bits_per_group[m] in {2..8}, or 0 to keep group m at full precision.
  EvalMetrics evaluate(const std::vector<int>& bits_per_group);
  // Same, on the first `positions` calibration positions only.
  EvalMetrics evaluate_subset(const std::vector<int>& bits_per_group, Index positions);
  EvalMetrics evaluate(const QuantSpec& spec);
  // KL/EAR against the reference for explicitly substituted weights.
  EvalMetrics evaluate_overrides(const WeightOverrides& overrides);

  // Full snapshot for report generation; counts as one forward pass.
  DistributionSnapshot snapshot(const QuantSpec& spec);

  // Dequantized weights for (layer, bits); quantized once and memoized.
  const Matd& fake_quant_weight(const std::string& layer, int bits);

  long forward_passes() const { return forward_passes_; }

 private:
  EvalMetrics metrics_on_prefix(const DistributionSnapshot& snap, Index positions) const;
  WeightOverrides overrides_for(const std::vector<int>& bits_per_group);

  const SyntheticModel& model_;
  const CalibrationSet& calib_;
  std::vector<WeightGroup> groups_;
  int k_;
  QuantMode mode_;
  Index group_size_;
  int threads_;
  DistributionSnapshot reference_;
  std::map<std::pair<std::string, int>, Matd> cache_;
  long forward_passes_ = 0;
};

}  // namespace mixq
