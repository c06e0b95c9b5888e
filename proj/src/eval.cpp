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

#include "mixq/eval.hpp"

#include <stdexcept>

namespace mixq {

namespace {

DistributionSnapshot snapshot_prefix(const DistributionSnapshot& snap, Index n) {
  DistributionSnapshot out;
  out.K = snap.K;
  out.vocab = snap.vocab;
  out.ids = snap.ids.topRows(n);
  out.probs = snap.probs.topRows(n);
  out.entropy = snap.entropy.head(n);
  out.argmax = snap.argmax.head(n);
  return out;
}

CalibrationSet calib_prefix(const CalibrationSet& calib, Index n) {
  CalibrationSet out;
  out.seed = calib.seed;
  out.inputs = calib.inputs.topRows(n);
  return out;
}

}  // namespace

QuantEvaluator::QuantEvaluator(const SyntheticModel& model, const CalibrationSet& calib,
                               std::vector<WeightGroup> groups, int K, QuantMode mode,
                               Index group_size, int threads)
    : model_(model),
      calib_(calib),
      groups_(std::move(groups)),
      k_(K),
      mode_(mode),
      group_size_(group_size),
      threads_(threads),
      reference_(forward_snapshot(model, calib, {}, K, nullptr, threads)) {}

const Matd& QuantEvaluator::fake_quant_weight(const std::string& layer, int bits) {
  const auto key = std::make_pair(layer, bits);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    const Matd& w = model_.layer(layer).weight;
    it = cache_.emplace(key, dequantize(group_quantize(w, bits, group_size_, mode_))).first;
  }
  return it->second;
}

WeightOverrides QuantEvaluator::overrides_for(const std::vector<int>& bits_per_group) {
  if (bits_per_group.size() != groups_.size()) {
    throw std::invalid_argument("assignment does not cover all groups");
  }
  WeightOverrides overrides;
  for (const auto& g : groups_) {
    const int bits = bits_per_group[g.id];
    if (bits == 0) continue;  // full precision
    for (const auto& name : g.members) {
      overrides.emplace(name, fake_quant_weight(name, bits));
    }
  }
  return overrides;
}

EvalMetrics QuantEvaluator::metrics_on_prefix(const DistributionSnapshot& snap,
                                              Index positions) const {
  const DistributionSnapshot p = snapshot_prefix(reference_, positions);
  EvalMetrics out;
  out.kl = kl_topk(p, snap, k_).kl;
  out.ear = ear(p, snap, k_);
  return out;
}

EvalMetrics QuantEvaluator::evaluate(const std::vector<int>& bits_per_group) {
  return evaluate_subset(bits_per_group, calib_.size());
}

EvalMetrics QuantEvaluator::evaluate_subset(const std::vector<int>& bits_per_group,
                                            Index positions) {
  if (positions < 1 || positions > calib_.size()) {
    throw std::invalid_argument("invalid calibration subset size");
  }
  const WeightOverrides overrides = overrides_for(bits_per_group);
  const DistributionSnapshot support = snapshot_prefix(reference_, positions);
  const CalibrationSet calib = calib_prefix(calib_, positions);
  const DistributionSnapshot snap =
      forward_snapshot(model_, calib, overrides, k_, &support, threads_);
  ++forward_passes_;
  return metrics_on_prefix(snap, positions);
}

EvalMetrics QuantEvaluator::evaluate(const QuantSpec& spec) {
  if (spec.mode != mode_ || spec.group_size != group_size_) {
    throw std::invalid_argument("spec quantizer settings do not match evaluator");
  }
  return evaluate(spec.bits);
}

EvalMetrics QuantEvaluator::evaluate_overrides(const WeightOverrides& overrides) {
  const DistributionSnapshot snap =
      forward_snapshot(model_, calib_, overrides, k_, &reference_, threads_);
  ++forward_passes_;
  return metrics_on_prefix(snap, calib_.size());
}

DistributionSnapshot QuantEvaluator::snapshot(const QuantSpec& spec) {
  if (spec.mode != mode_ || spec.group_size != group_size_) {
    throw std::invalid_argument("spec quantizer settings do not match evaluator");
  }
  const WeightOverrides overrides = overrides_for(spec.bits);
  ++forward_passes_;
  return forward_snapshot(model_, calib_, overrides, k_, &reference_, threads_);
}

}  // namespace mixq
