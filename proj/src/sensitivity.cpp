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

#include "mixq/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mixq/rng.hpp"

namespace mixq {

using nlohmann::json;

const char* to_string(SensitivityMethod m) {
  return m == SensitivityMethod::Linear ? "linear" : "shapley";
}

SensitivityMethod sensitivity_method_from_string(const std::string& s) {
  if (s == "linear") return SensitivityMethod::Linear;
  if (s == "shapley") return SensitivityMethod::Shapley;
  throw std::invalid_argument("unknown sensitivity method: " + s);
}

int SensitivityDatabase::bit_column(int bits) const {
  const auto& bw = meta.bitwidths;
  const auto it = std::find(bw.begin(), bw.end(), bits);
  if (it == bw.end()) {
    throw std::invalid_argument("missing cell: bitwidth " + std::to_string(bits) +
                                " not in database");
  }
  return static_cast<int>(it - bw.begin());
}

Matd finalize_costs(const Matd& raw, const std::vector<int>& bits) {
  const int num_bits = static_cast<int>(bits.size());
  Matd cost = Matd::Zero(raw.rows(), raw.cols());
  for (Index m = 0; m < raw.rows(); ++m) {
    double acc = 0.0;
    double prev_raw = 0.0;  // raw cost at b_max is zero by construction
    for (int c = num_bits - 2; c >= 0; --c) {
      acc += std::max(0.0, raw(m, c) - prev_raw);
      prev_raw = raw(m, c);
      cost(m, c) = acc;
    }
  }
  return cost;
}

PredictedMetrics predict_metrics(const SensitivityDatabase& db, const std::vector<int>& bits) {
  if (static_cast<int>(bits.size()) != db.num_groups()) {
    throw std::invalid_argument("spec does not cover all groups");
  }
  PredictedMetrics out;
  double ear_cost = 0.0;
  for (int m = 0; m < db.num_groups(); ++m) {
    const int c = db.bit_column(bits[m]);
    out.kl_hat += db.cost_kl(m, c);
    ear_cost += db.cost_ear(m, c);
  }
  out.ear_hat = std::clamp(1.0 - ear_cost, 0.0, 1.0);
  return out;
}

PredictedMetrics predict_metrics(const SensitivityDatabase& db, const QuantSpec& spec) {
  return predict_metrics(db, spec.bits);
}

namespace {

std::vector<int> sorted_bits(std::vector<int> bits) {
  if (bits.empty()) throw std::invalid_argument("empty bitwidth set");
  std::sort(bits.begin(), bits.end());
  bits.erase(std::unique(bits.begin(), bits.end()), bits.end());
  for (int b : bits) {
    if (b < 2 || b > 8) throw std::invalid_argument("bits out of range [2, 8]");
  }
  return bits;
}

}  // namespace

ShapleyRaw run_shapley_games(int num_groups, const std::vector<int>& bits, int permutations,
                             std::uint64_t seed, bool exhaustive, const AssignmentEval& eval) {
  if (num_groups < 1) throw std::invalid_argument("need at least one group");
  if (!exhaustive && permutations < 1) {
    throw std::invalid_argument("need at least one permutation");
  }
  const std::vector<int> bw = sorted_bits(bits);
  const int num_bits = static_cast<int>(bw.size());
  const int b_max = bw.back();

  ShapleyRaw out;
  out.phi_kl = Matd::Zero(num_groups, num_bits);
  out.phi_ear = Matd::Zero(num_groups, num_bits);

  std::vector<int> identity(num_groups);
  std::iota(identity.begin(), identity.end(), 0);

  for (int c = 0; c < num_bits - 1; ++c) {
    const int b_star = bw[c];
    // Enumerate or sample the game's permutations up front so marginals are
    // reduced in a fixed order regardless of evaluation scheduling.
    std::vector<std::vector<int>> perms;
    if (exhaustive) {
      std::vector<int> perm = identity;
      do {
        perms.push_back(perm);
      } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
      for (int p = 0; p < permutations; ++p) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(b_star),
                         static_cast<std::uint64_t>(p)));
        std::vector<int> perm = identity;
        rng.shuffle(perm);
        perms.push_back(std::move(perm));
      }
    }

    for (const auto& perm : perms) {
      std::vector<int> assignment(num_groups, b_max);
      EvalMetrics prev = eval(assignment);  // per-permutation baseline
      for (int j = 0; j < num_groups; ++j) {
        assignment[perm[j]] = b_star;
        const EvalMetrics cur = eval(assignment);
        out.phi_kl(perm[j], c) += cur.kl - prev.kl;
        out.phi_ear(perm[j], c) += prev.ear - cur.ear;
        prev = cur;
      }
    }
    const double inv = 1.0 / static_cast<double>(perms.size());
    out.phi_kl.col(c) *= inv;
    out.phi_ear.col(c) *= inv;
  }
  return out;
}

namespace {

SensitivityDatabase make_database(const QuantEvaluator& eval, const std::vector<int>& bits) {
  SensitivityDatabase db;
  db.meta.mode = eval.mode();
  db.meta.group_size = eval.group_size();
  db.meta.top_k = eval.top_k();
  db.meta.calib_positions = eval.calibration().size();
  db.meta.bitwidths = bits;
  for (const auto& g : eval.groups()) {
    std::string name;
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      if (i > 0) name += "+";
      name += g.members[i];
    }
    db.group_names.push_back(std::move(name));
    db.group_sizes.push_back(g.parameter_count);
  }
  return db;
}

}  // namespace

long shapley_pass_count(int num_groups, int num_bits, int permutations) {
  return static_cast<long>(permutations) * (num_bits - 1) * (num_groups + 1);
}

std::vector<WeightGroup> groups_from_database(const SensitivityDatabase& db) {
  std::vector<WeightGroup> groups;
  for (int m = 0; m < db.num_groups(); ++m) {
    WeightGroup g;
    g.id = m;
    g.parameter_count = db.group_sizes[m];
    std::stringstream names(db.group_names[m]);
    std::string name;
    while (std::getline(names, name, '+')) g.members.push_back(name);
    groups.push_back(std::move(g));
  }
  return groups;
}

long linear_pass_count(int num_groups, int trials) {
  return static_cast<long>(trials) * num_groups;
}

SensitivityDatabase estimate_shapley(QuantEvaluator& eval, const std::vector<int>& bits,
                                     int permutations, std::uint64_t seed, bool exhaustive) {
  const std::vector<int> bw = sorted_bits(bits);
  SensitivityDatabase db = make_database(eval, bw);
  db.meta.method = SensitivityMethod::Shapley;
  db.meta.permutations = permutations;
  db.meta.exhaustive = exhaustive;
  db.meta.seed = seed;

  const long passes_before = eval.forward_passes();
  const ShapleyRaw raw = run_shapley_games(
      eval.num_groups(), bw, permutations, seed, exhaustive,
      [&eval](const std::vector<int>& assignment) { return eval.evaluate(assignment); });
  db.raw_kl = raw.phi_kl;
  db.raw_ear = raw.phi_ear;
  db.cost_kl = finalize_costs(db.raw_kl, bw);
  db.cost_ear = finalize_costs(db.raw_ear, bw);
  db.meta.forward_passes = eval.forward_passes() - passes_before;
  return db;
}

SensitivityDatabase estimate_linear(QuantEvaluator& eval, const std::vector<int>& bits,
                                    int trials, double noise_scale, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("need at least one trial");
  if (noise_scale == 0.0) throw std::invalid_argument("zero perturbation");
  if (noise_scale < 0.0) throw std::invalid_argument("negative noise scale");
  const std::vector<int> bw = sorted_bits(bits);
  SensitivityDatabase db = make_database(eval, bw);
  db.meta.method = SensitivityMethod::Linear;
  db.meta.trials = trials;
  db.meta.noise_scale = noise_scale;
  db.meta.seed = seed;

  const int num_groups = eval.num_groups();
  const int num_bits = static_cast<int>(bw.size());
  db.alpha_kl = Vecd::Zero(num_groups);
  db.alpha_ear = Vecd::Zero(num_groups);
  db.recon_error = Matd::Zero(num_groups, num_bits);
  db.degenerate_group.assign(num_groups, false);

  const long passes_before = eval.forward_passes();
  for (const auto& g : eval.groups()) {
    // Pooled population standard deviation over the group's weights,
    // two-pass so constant groups register as degenerate.
    double sum = 0.0, max_abs = 0.0;
    long count = 0;
    for (const auto& name : g.members) {
      const Matd& w = eval.model().layer(name).weight;
      sum += w.sum();
      max_abs = std::max(max_abs, w.cwiseAbs().maxCoeff());
      count += static_cast<long>(w.size());
    }
    const double mean = sum / static_cast<double>(count);
    double sq_dev = 0.0;
    for (const auto& name : g.members) {
      const Matd& w = eval.model().layer(name).weight;
      sq_dev += (w.array() - mean).matrix().squaredNorm();
    }
    const double sigma = std::sqrt(sq_dev / static_cast<double>(count));
    if (sigma <= 1e-9 * std::max(1.0, max_abs)) {
      db.degenerate_group[g.id] = true;  // alpha stays 0
      continue;
    }

    double sxx_kl = 0.0, sxy_kl = 0.0, sxy_ear = 0.0;
    for (int t = 1; t <= trials; ++t) {
      const double amp = noise_scale * sigma * static_cast<double>(t) /
                         static_cast<double>(trials);
      Rng rng(mix_seed(seed, static_cast<std::uint64_t>(g.id), static_cast<std::uint64_t>(t)));
      WeightOverrides overrides;
      double energy = 0.0;  // mean relative noise energy over member layers
      for (const auto& name : g.members) {
        const Matd& w = eval.model().layer(name).weight;
        Matd noisy = w;
        double noise_sq = 0.0;
        for (Index r = 0; r < w.rows(); ++r) {
          for (Index c = 0; c < w.cols(); ++c) {
            const double n = rng.uniform(-amp, amp);
            noisy(r, c) += n;
            noise_sq += n * n;
          }
        }
        energy += noise_sq / w.squaredNorm();
        overrides.emplace(name, std::move(noisy));
      }
      energy /= static_cast<double>(g.members.size());
      const EvalMetrics m = eval.evaluate_overrides(overrides);
      sxx_kl += energy * energy;
      sxy_kl += energy * m.kl;
      sxy_ear += energy * (1.0 - m.ear);
    }
    db.alpha_kl[g.id] = std::max(0.0, sxy_kl / sxx_kl);
    db.alpha_ear[g.id] = std::max(0.0, sxy_ear / sxx_kl);
  }

  for (const auto& g : eval.groups()) {
    for (int c = 0; c < num_bits; ++c) {
      double err = 0.0;
      for (const auto& name : g.members) {
        err += reconstruction_error(eval.model().layer(name).weight,
                                    eval.fake_quant_weight(name, bw[c]));
      }
      db.recon_error(g.id, c) = err / static_cast<double>(g.members.size());
    }
  }

  db.raw_kl = db.alpha_kl.asDiagonal() * db.recon_error;
  db.raw_ear = db.alpha_ear.asDiagonal() * db.recon_error;
  db.cost_kl = finalize_costs(db.raw_kl, bw);
  db.cost_ear = finalize_costs(db.raw_ear, bw);
  db.meta.forward_passes = eval.forward_passes() - passes_before;
  return db;
}

namespace {

json matrix_to_json(const Matd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matd matrix_from_json(const json& j, Index cols_expected) {
  const Index rows = static_cast<Index>(j.size());
  Matd m(rows, rows == 0 ? cols_expected : static_cast<Index>(j.at(0).size()));
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j.at(r);
    if (static_cast<Index>(row.size()) != m.cols()) {
      throw ParseError("ragged cost table in database");
    }
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = row.at(c).get<double>();
  }
  return m;
}

json vector_to_json(const Vecd& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vecd vector_from_json(const json& j) {
  Vecd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

}  // namespace

json SensitivityDatabase::to_json() const {
  json meta_json = {{"method", std::string(to_string(meta.method))},
                    {"permutations", meta.permutations},
                    {"exhaustive", meta.exhaustive},
                    {"trials", meta.trials},
                    {"noise_scale", meta.noise_scale},
                    {"seed", meta.seed},
                    {"calib_positions", meta.calib_positions},
                    {"top_k", meta.top_k},
                    {"mode", std::string(to_string(meta.mode))},
                    {"group_size", meta.group_size},
                    {"bitwidths", meta.bitwidths},
                    {"forward_passes", meta.forward_passes}};
  json j = {{"format_version", 1},
            {"metadata", std::move(meta_json)},
            {"group_names", group_names},
            {"group_sizes", group_sizes},
            {"cost_kl", matrix_to_json(cost_kl)},
            {"cost_ear", matrix_to_json(cost_ear)},
            {"raw_kl", matrix_to_json(raw_kl)},
            {"raw_ear", matrix_to_json(raw_ear)}};
  if (meta.method == SensitivityMethod::Linear) {
    j["alpha_kl"] = vector_to_json(alpha_kl);
    j["alpha_ear"] = vector_to_json(alpha_ear);
    j["recon_error"] = matrix_to_json(recon_error);
    j["degenerate_group"] = degenerate_group;
  }
  return j;
}

SensitivityDatabase SensitivityDatabase::from_json(const json& j) {
  SensitivityDatabase db;
  try {
    const auto& meta = j.at("metadata");
    db.meta.method = sensitivity_method_from_string(meta.at("method").get<std::string>());
    db.meta.permutations = meta.at("permutations").get<int>();
    db.meta.exhaustive = meta.at("exhaustive").get<bool>();
    db.meta.trials = meta.at("trials").get<int>();
    db.meta.noise_scale = meta.at("noise_scale").get<double>();
    db.meta.seed = meta.at("seed").get<std::uint64_t>();
    db.meta.calib_positions = meta.at("calib_positions").get<long>();
    db.meta.top_k = meta.at("top_k").get<int>();
    db.meta.mode = quant_mode_from_string(meta.at("mode").get<std::string>());
    db.meta.group_size = meta.at("group_size").get<Index>();
    db.meta.bitwidths = meta.at("bitwidths").get<std::vector<int>>();
    db.meta.forward_passes = meta.at("forward_passes").get<long>();
    db.group_names = j.at("group_names").get<std::vector<std::string>>();
    db.group_sizes = j.at("group_sizes").get<std::vector<long>>();
    const Index cols = static_cast<Index>(db.meta.bitwidths.size());
    db.cost_kl = matrix_from_json(j.at("cost_kl"), cols);
    db.cost_ear = matrix_from_json(j.at("cost_ear"), cols);
    db.raw_kl = matrix_from_json(j.at("raw_kl"), cols);
    db.raw_ear = matrix_from_json(j.at("raw_ear"), cols);
    if (db.meta.method == SensitivityMethod::Linear) {
      db.alpha_kl = vector_from_json(j.at("alpha_kl"));
      db.alpha_ear = vector_from_json(j.at("alpha_ear"));
      db.recon_error = matrix_from_json(j.at("recon_error"), cols);
      db.degenerate_group = j.at("degenerate_group").get<std::vector<bool>>();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid sensitivity database: ") + e.what());
  }
  if (static_cast<Index>(db.group_names.size()) != db.cost_kl.rows() ||
      static_cast<Index>(db.group_sizes.size()) != db.cost_kl.rows()) {
    throw ParseError("inconsistent group count in database");
  }
  return db;
}

}  // namespace mixq
