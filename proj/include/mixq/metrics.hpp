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
#include <vector>

#include "mixq/model.hpp"
#include "mixq/types.hpp"

namespace mixq {

// Entropy bins for decision-flip statistics, in nats:
// [0, 0.5), [0.5, 1), [1, 2), [2, 4), [4, inf).
struct EntropyBins {
  static constexpr int kCount = 5;
  static constexpr std::array<double, 4> kEdges = {0.5, 1.0, 2.0, 4.0};
  static int bin(double entropy_nats);
  static double lower_edge(int bin);
  static double upper_edge(int bin);  // +inf for the last bin
};

// Probability floor applied to q inside the KL log; EAR needs none.
inline constexpr double kKlFloor = 1e-10;

struct BinStats {
  long positions = 0;
  long flips = 0;
  double flip_rate = 0.0;  // 0 when the bin is empty
};

struct FlipStats {
  double flip_rate = 0.0;
  long flips = 0;
  double margin_at_disagreement = 0.0;  // reference top-1/top-2 gap on flips
  bool margin_empty = false;            // no flipped positions
  std::array<BinStats, EntropyBins::kCount> by_entropy_bin{};
};

struct FidelityReport {
  double ear = 1.0;
  double kl = 0.0;
  double margin_at_disagreement = 0.0;
  double flip_rate = 0.0;
  double ppl_ratio = 1.0;
  long positions = 0;
  long flips = 0;
  bool margin_empty = false;
  long kl_floor_hits = 0;  // (position, token) pairs where q was floored
  std::array<BinStats, EntropyBins::kCount> flips_by_entropy_bin{};
};

// Mean over positions of sum_k min(p_k, q_k) on the shared top-K support.
// Equals 1 - total-variation distance when K spans the full vocabulary.
double ear(const DistributionSnapshot& p, const DistributionSnapshot& q, int K);

struct KlValue {
  double kl = 0.0;
  long floor_hits = 0;
};

// Mean per-position KL on the restricted, unrenormalized top-K masses; q is
// floored at kKlFloor inside the log.
KlValue kl_topk(const DistributionSnapshot& p, const DistributionSnapshot& q, int K);

// A flip is a position where the full-vocab argmax changes.
FlipStats flip_stats(const DistributionSnapshot& p, const DistributionSnapshot& q);

// exp(mean log q(argmax p) - mean log p(argmax p)): 1.0 is parity, values
// below 1 mean the quantized model lost probability on the reference's
// argmax tokens.
double ppl_ratio(const DistributionSnapshot& p, const DistributionSnapshot& q);

// Everything above from one snapshot pair, single pass over positions.
FidelityReport compute_report(const DistributionSnapshot& p, const DistributionSnapshot& q,
                              int K);

// EAR after quantizing only the first j groups (j = 0..M), remaining layers
// at full precision. Element 0 is always 1.0.
std::vector<double> layer_cumulative_ear(const SyntheticModel& model,
                                         const CalibrationSet& calib, const QuantSpec& spec,
                                         const std::vector<WeightGroup>& groups, int K,
                                         int threads = 1);

}  // namespace mixq
