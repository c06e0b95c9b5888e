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

#include "mixq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mixq {

constexpr std::array<double, 4> EntropyBins::kEdges;

int EntropyBins::bin(double entropy_nats) {
  for (int i = 0; i < static_cast<int>(kEdges.size()); ++i) {
    if (entropy_nats < kEdges[i]) return i;
  }
  return kCount - 1;
}

double EntropyBins::lower_edge(int bin) { return bin == 0 ? 0.0 : kEdges[bin - 1]; }

double EntropyBins::upper_edge(int bin) {
  return bin == kCount - 1 ? std::numeric_limits<double>::infinity() : kEdges[bin];
}

namespace {

void check_shared_support(const DistributionSnapshot& p, const DistributionSnapshot& q,
                          int K) {
  if (K < 1) throw std::invalid_argument("K must be positive");
  if (p.positions() != q.positions()) {
    throw std::invalid_argument("mismatched supports: position counts differ");
  }
  if (K > p.K || K > q.K) {
    throw std::invalid_argument("mismatched supports: K exceeds snapshot support");
  }
  for (Index i = 0; i < p.positions(); ++i) {
    for (int k = 0; k < K; ++k) {
      if (p.ids(i, k) != q.ids(i, k)) {
        throw std::invalid_argument("mismatched supports: token ids differ");
      }
    }
  }
}

}  // namespace

double ear(const DistributionSnapshot& p, const DistributionSnapshot& q, int K) {
  check_shared_support(p, q, K);
  double total = 0.0;
  for (Index i = 0; i < p.positions(); ++i) {
    double overlap = 0.0;
    for (int k = 0; k < K; ++k) overlap += std::min(p.probs(i, k), q.probs(i, k));
    total += overlap;
  }
  return total / static_cast<double>(p.positions());
}

KlValue kl_topk(const DistributionSnapshot& p, const DistributionSnapshot& q, int K) {
  check_shared_support(p, q, K);
  KlValue out;
  double total = 0.0;
  for (Index i = 0; i < p.positions(); ++i) {
    double kl_i = 0.0;
    for (int k = 0; k < K; ++k) {
      const double pk = p.probs(i, k);
      if (pk <= 0.0) continue;
      double qk = q.probs(i, k);
      if (qk < kKlFloor) {
        qk = kKlFloor;
        ++out.floor_hits;
      }
      kl_i += pk * std::log(pk / qk);
    }
    total += kl_i;
  }
  out.kl = total / static_cast<double>(p.positions());
  return out;
}

FlipStats flip_stats(const DistributionSnapshot& p, const DistributionSnapshot& q) {
  if (p.positions() != q.positions()) {
    throw std::invalid_argument("mismatched supports: position counts differ");
  }
  if (p.K < 2) throw std::invalid_argument("flip margin needs K >= 2");
  FlipStats stats;
  double margin_sum = 0.0;
  for (Index i = 0; i < p.positions(); ++i) {
    const int bin = EntropyBins::bin(p.entropy[i]);
    ++stats.by_entropy_bin[bin].positions;
    if (p.argmax[i] != q.argmax[i]) {
      ++stats.flips;
      ++stats.by_entropy_bin[bin].flips;
      margin_sum += p.probs(i, 0) - p.probs(i, 1);
    }
  }
  stats.flip_rate = static_cast<double>(stats.flips) / static_cast<double>(p.positions());
  for (auto& bin : stats.by_entropy_bin) {
    bin.flip_rate = bin.positions == 0
                        ? 0.0
                        : static_cast<double>(bin.flips) / static_cast<double>(bin.positions);
  }
  if (stats.flips == 0) {
    stats.margin_empty = true;
    stats.margin_at_disagreement = 0.0;
  } else {
    stats.margin_at_disagreement = margin_sum / static_cast<double>(stats.flips);
  }
  return stats;
}

double ppl_ratio(const DistributionSnapshot& p, const DistributionSnapshot& q) {
  if (p.positions() != q.positions()) {
    throw std::invalid_argument("mismatched supports: position counts differ");
  }
  double log_ratio = 0.0;
  for (Index i = 0; i < p.positions(); ++i) {
    // Column 0 holds the reference argmax probability for both snapshots
    // because ids are the reference's descending top-K.
    const double pk = std::max(p.probs(i, 0), kKlFloor);
    const double qk = std::max(q.probs(i, 0), kKlFloor);
    log_ratio += std::log(qk) - std::log(pk);
  }
  return std::exp(log_ratio / static_cast<double>(p.positions()));
}

FidelityReport compute_report(const DistributionSnapshot& p, const DistributionSnapshot& q,
                              int K) {
  FidelityReport report;
  report.positions = p.positions();
  report.ear = ear(p, q, K);
  const KlValue kl = kl_topk(p, q, K);
  report.kl = kl.kl;
  report.kl_floor_hits = kl.floor_hits;
  const FlipStats flips = flip_stats(p, q);
  report.flip_rate = flips.flip_rate;
  report.flips = flips.flips;
  report.margin_at_disagreement = flips.margin_at_disagreement;
  report.margin_empty = flips.margin_empty;
  report.flips_by_entropy_bin = flips.by_entropy_bin;
  report.ppl_ratio = ppl_ratio(p, q);
  return report;
}

std::vector<double> layer_cumulative_ear(const SyntheticModel& model,
                                         const CalibrationSet& calib, const QuantSpec& spec,
                                         const std::vector<WeightGroup>& groups, int K,
                                         int threads) {
  if (spec.bits.size() != groups.size()) {
    throw std::invalid_argument("spec does not cover all groups");
  }
  const DistributionSnapshot reference =
      forward_snapshot(model, calib, {}, K, nullptr, threads);
  std::vector<double> curve;
  curve.reserve(groups.size() + 1);
  curve.push_back(1.0);
  WeightOverrides overrides;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    for (const auto& name : groups[j].members) {
      const Matd& w = model.layer(name).weight;
      overrides[name] =
          dequantize(group_quantize(w, spec.bits[j], spec.group_size, spec.mode));
    }
    const DistributionSnapshot snap =
        forward_snapshot(model, calib, overrides, K, &reference, threads);
    curve.push_back(ear(reference, snap, K));
  }
  return curve;
}

}  // namespace mixq
