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

#include "mixq/allocate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "mixq/rng.hpp"

namespace mixq {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

long vector_gcd(const std::vector<long>& sizes) {
  long g = 0;
  for (long s : sizes) g = std::gcd(g, s);
  return g == 0 ? 1 : g;
}

struct DpCell {
  double cost = kInf;
  long total_bits = 0;  // in reduced size units

  bool better_than(const DpCell& other) const {
    if (cost != other.cost) return cost < other.cost;
    return total_bits < other.total_bits;
  }
};

// Exact MCKP over integer capacity in reduced size units.
std::vector<int> solve_capacity(const Matd& costs, const std::vector<long>& units,
                                const std::vector<int>& bits, long capacity) {
  const int num_groups = static_cast<int>(units.size());
  const int num_bits = static_cast<int>(bits.size());
  long min_units = 0;
  for (long u : units) min_units += u * bits.front();
  if (min_units > capacity) {
    throw InfeasibleError("budget below minimum bitwidth");
  }

  // Suffix DP so reconstruction walks groups in id order and can pick the
  // lexicographically smallest assignment among ties.
  const long width = capacity + 1;
  std::vector<DpCell> dp(static_cast<std::size_t>(num_groups + 1) * width);
  auto cell = [&](int m, long c) -> DpCell& {
    return dp[static_cast<std::size_t>(m) * width + c];
  };
  for (long c = 0; c <= capacity; ++c) cell(num_groups, c) = {0.0, 0};
  for (int m = num_groups - 1; m >= 0; --m) {
    for (long c = 0; c <= capacity; ++c) {
      DpCell best;
      for (int b = 0; b < num_bits; ++b) {
        const long w = units[m] * bits[b];
        if (w > c) break;  // bits ascending, later options only heavier
        const DpCell& tail = cell(m + 1, c - w);
        if (tail.cost == kInf) continue;
        const DpCell cand{costs(m, b) + tail.cost, w + tail.total_bits};
        if (cand.better_than(best)) best = cand;
      }
      cell(m, c) = best;
    }
  }

  std::vector<int> assignment(num_groups);
  long c = capacity;
  for (int m = 0; m < num_groups; ++m) {
    const DpCell& target = cell(m, c);
    bool found = false;
    for (int b = 0; b < num_bits; ++b) {
      const long w = units[m] * bits[b];
      if (w > c) break;
      const DpCell& tail = cell(m + 1, c - w);
      if (tail.cost == kInf) continue;
      if (costs(m, b) + tail.cost == target.cost && w + tail.total_bits == target.total_bits) {
        assignment[m] = bits[b];
        c -= w;
        found = true;
        break;
      }
    }
    if (!found) throw std::logic_error("mckp reconstruction failed");
  }
  return assignment;
}

void check_problem(const AllocationProblem& p) {
  if (p.sizes.empty()) throw std::invalid_argument("no groups");
  if (p.bits.empty()) throw std::invalid_argument("empty bitwidth set");
  if (!std::is_sorted(p.bits.begin(), p.bits.end()) ||
      std::adjacent_find(p.bits.begin(), p.bits.end()) != p.bits.end()) {
    throw std::invalid_argument("bitwidths must be strictly ascending");
  }
  if (p.costs.rows() != static_cast<Index>(p.sizes.size()) ||
      p.costs.cols() != static_cast<Index>(p.bits.size())) {
    throw std::invalid_argument("cost table shape mismatch");
  }
  for (long s : p.sizes) {
    if (s <= 0) throw std::invalid_argument("group sizes must be positive");
  }
}

}  // namespace

std::vector<int> solve_mckp(const AllocationProblem& problem) {
  check_problem(problem);
  const long g = vector_gcd(problem.sizes);
  std::vector<long> units(problem.sizes.size());
  long total_units = 0;
  for (std::size_t i = 0; i < problem.sizes.size(); ++i) {
    units[i] = problem.sizes[i] / g;
    total_units += units[i];
  }
  const long capacity = static_cast<long>(
      std::floor(problem.budget * static_cast<double>(total_units) + 1e-9));
  return solve_capacity(problem.costs, units, problem.bits, capacity);
}

namespace {

struct SolverContext {
  Matd cost_primary;   // table minimized by the solver (constraint metric)
  std::vector<long> sizes;
  std::vector<int> bits;
  long total_units = 0;  // sum of gcd-reduced group sizes
  const SensitivityDatabase* db = nullptr;

  QuantSpec make_spec(std::vector<int> assignment) const {
    QuantSpec spec;
    spec.bits = std::move(assignment);
    spec.mode = db->meta.mode;
    spec.group_size = db->meta.group_size;
    return spec;
  }

  double achieved(const std::vector<int>& assignment) const {
    double bit_sum = 0.0, size_sum = 0.0;
    for (std::size_t m = 0; m < sizes.size(); ++m) {
      bit_sum += static_cast<double>(assignment[m]) * static_cast<double>(sizes[m]);
      size_sum += static_cast<double>(sizes[m]);
    }
    return bit_sum / size_sum;
  }

  std::vector<int> solve(double budget) const {
    AllocationProblem p;
    p.costs = cost_primary;
    p.sizes = sizes;
    p.bits = bits;
    p.budget = budget;
    return solve_mckp(p);
  }

  // Probe budgets snap to the nearest representable size-weighted average
  // before solving.
  double snap_to_lattice(double budget) const {
    return static_cast<double>(std::llround(budget * static_cast<double>(total_units))) /
           static_cast<double>(total_units);
  }
};

SolverContext make_context(const SensitivityDatabase& db,
                           const std::vector<WeightGroup>& groups,
                           const Constraint& constraint,
                           const std::optional<std::vector<int>>& allowed_bits) {
  if (static_cast<int>(groups.size()) != db.num_groups()) {
    throw std::invalid_argument("groups do not match database");
  }
  SolverContext ctx;
  ctx.db = &db;
  ctx.bits = allowed_bits.value_or(db.meta.bitwidths);
  std::sort(ctx.bits.begin(), ctx.bits.end());
  ctx.bits.erase(std::unique(ctx.bits.begin(), ctx.bits.end()), ctx.bits.end());
  if (ctx.bits.empty()) throw std::invalid_argument("empty bitwidth set");

  const Matd& table =
      constraint.kind == Constraint::Kind::EarAtLeast ? db.cost_ear : db.cost_kl;
  ctx.cost_primary.resize(db.num_groups(), static_cast<Index>(ctx.bits.size()));
  for (int c = 0; c < static_cast<int>(ctx.bits.size()); ++c) {
    ctx.cost_primary.col(c) = table.col(db.bit_column(ctx.bits[c]));
  }
  long gcd = 0;
  for (const auto& g : groups) {
    ctx.sizes.push_back(g.parameter_count);
    gcd = std::gcd(gcd, g.parameter_count);
  }
  for (long s : ctx.sizes) ctx.total_units += s / std::max(gcd, 1L);
  return ctx;
}

std::string infeasible_diagnostic(const Constraint& constraint, const PredictedMetrics& at_max) {
  json diag = {{"error", "constraint unsatisfiable at maximum bitwidth"},
               {"constraint",
                {{"kind", constraint.kind == Constraint::Kind::EarAtLeast ? "ear_at_least"
                                                                          : "kl_at_most"},
                 {"threshold", constraint.threshold},
                 {"rho", constraint.rho}}},
               {"prediction_at_b_max", {{"kl_hat", at_max.kl_hat}, {"ear_hat", at_max.ear_hat}}}};
  return diag.dump(2);
}

}  // namespace

SearchResult search_budget(const SensitivityDatabase& db,
                           const std::vector<WeightGroup>& groups, const Constraint& constraint,
                           double eps, const std::optional<std::vector<int>>& allowed_bits,
                           const TlCalibration* calibration) {
  if (eps <= 0.0) throw std::invalid_argument("eps must be positive");
  const SolverContext ctx = make_context(db, groups, constraint, allowed_bits);

  SearchResult result;
  result.kind = "budget";

  auto probe = [&](double budget) {
    std::vector<int> assignment = ctx.solve(ctx.snap_to_lattice(budget));
    PredictedMetrics pred = predict_metrics(db, assignment);
    TraceEntry entry{budget, ctx.achieved(assignment), pred.kl_hat, pred.ear_hat,
                     constraint.satisfied_by(pred)};
    result.trace.push_back(entry);
    return std::make_pair(std::move(assignment), entry);
  };

  double lo = static_cast<double>(ctx.bits.front());
  double hi = static_cast<double>(ctx.bits.back());

  // The all-b_max spec must satisfy the constraint or nothing does.
  auto [best, top] = probe(hi);
  if (!top.feasible) {
    throw InfeasibleError("constraint unsatisfiable at maximum bitwidth",
                          infeasible_diagnostic(constraint, {top.kl_hat, top.ear_hat}));
  }
  double best_achieved = top.achieved_budget;
  PredictedMetrics best_pred{top.kl_hat, top.ear_hat};

  // The calibration spec is feasible by construction when the target equals
  // the calibrated recovery; seed it so the result never exceeds b_cal.
  if (calibration != nullptr) {
    const bool representable = std::all_of(
        calibration->spec_cal.bits.begin(), calibration->spec_cal.bits.end(), [&](int b) {
          return std::find(ctx.bits.begin(), ctx.bits.end(), b) != ctx.bits.end();
        });
    PredictedMetrics pred = predict_metrics(db, calibration->spec_cal);
    const bool feasible =
        representable &&
        (constraint.kind == Constraint::Kind::KlAtMost
             ? constraint.rho * pred.kl_hat <= constraint.threshold * (1.0 + 1e-12) + 1e-30
             : constraint.satisfied_by(pred));
    if (feasible && calibration->b_cal < hi) {
      best = calibration->spec_cal.bits;
      best_achieved = ctx.achieved(best);
      best_pred = pred;
      hi = calibration->b_cal;
    }
  }

  auto [low_spec, bottom] = probe(lo);
  if (bottom.feasible) {
    result.spec = ctx.make_spec(std::move(low_spec));
    result.achieved_budget = bottom.achieved_budget;
    result.predicted = {bottom.kl_hat, bottom.ear_hat};
    return result;
  }

  while (hi - lo > eps) {
    const double mid = (lo + hi) / 2.0;
    auto [assignment, entry] = probe(mid);
    if (entry.feasible) {
      hi = mid;
      best = std::move(assignment);
      best_achieved = entry.achieved_budget;
      best_pred = {entry.kl_hat, entry.ear_hat};
    } else {
      lo = mid;
    }
  }

  result.spec = ctx.make_spec(std::move(best));
  result.achieved_budget = best_achieved;
  result.predicted = best_pred;
  return result;
}

SearchResult search_dl(const SensitivityDatabase& db, const std::vector<WeightGroup>& groups,
                       double ear_target, double eps,
                       const std::optional<std::vector<int>>& allowed_bits) {
  Constraint c;
  c.kind = Constraint::Kind::EarAtLeast;
  c.threshold = ear_target;
  SearchResult result = search_budget(db, groups, c, eps, allowed_bits);
  result.kind = "dl";
  return result;
}

namespace {

QuantSpec solve_calibration_spec(const SensitivityDatabase& db,
                                 const std::vector<WeightGroup>& groups, double b_cal) {
  Constraint kl_constraint;
  kl_constraint.kind = Constraint::Kind::KlAtMost;
  const SolverContext ctx = make_context(db, groups, kl_constraint, std::nullopt);
  return ctx.make_spec(ctx.solve(b_cal));
}

}  // namespace

TlCalibration make_tl_calibration(double recovery_cal, double kl_actual, double kl_predicted,
                                  double b_cal, QuantSpec spec_cal) {
  if (recovery_cal >= 1.0) {
    throw std::invalid_argument(
        "no measurable degradation at calibration point; choose lower b_cal");
  }
  if (recovery_cal <= 0.0) {
    throw std::invalid_argument("calibration recovery must be positive");
  }
  if (kl_actual <= 0.0) {
    throw std::invalid_argument("no measurable KL at calibration point; choose lower b_cal");
  }
  if (kl_predicted <= 0.0) {
    throw std::invalid_argument("calibration spec has zero predicted KL; choose lower b_cal");
  }
  TlCalibration cal;
  cal.recovery_cal = recovery_cal;
  cal.kl_actual = kl_actual;
  cal.kl_predicted = kl_predicted;
  cal.b_cal = b_cal;
  cal.spec_cal = std::move(spec_cal);
  cal.rho = kl_actual / kl_predicted;
  cal.alpha_rec = (1.0 - recovery_cal) / kl_actual;
  return cal;
}

TlCalibration calibrate_tl(const SensitivityDatabase& db,
                           const std::vector<WeightGroup>& groups, QuantEvaluator& eval,
                           double b_cal, double benchmark_baseline,
                           double benchmark_calibrated) {
  if (benchmark_baseline <= 0.0) throw std::invalid_argument("baseline score must be positive");
  QuantSpec spec = solve_calibration_spec(db, groups, b_cal);
  const double kl_actual = eval.evaluate(spec).kl;  // the single forward pass
  const double kl_predicted = predict_metrics(db, spec).kl_hat;
  return make_tl_calibration(benchmark_calibrated / benchmark_baseline, kl_actual,
                             kl_predicted, b_cal, std::move(spec));
}

TlCalibration calibrate_tl_agreement_proxy(const SensitivityDatabase& db,
                                           const std::vector<WeightGroup>& groups,
                                           QuantEvaluator& eval, double b_cal) {
  QuantSpec spec = solve_calibration_spec(db, groups, b_cal);
  const DistributionSnapshot snap = eval.snapshot(spec);  // one pass
  const double kl_actual = kl_topk(eval.reference(), snap, eval.top_k()).kl;
  const double recovery = 1.0 - flip_stats(eval.reference(), snap).flip_rate;
  const double kl_predicted = predict_metrics(db, spec).kl_hat;
  return make_tl_calibration(recovery, kl_actual, kl_predicted, b_cal, std::move(spec));
}

SearchResult search_tl(const SensitivityDatabase& db, const std::vector<WeightGroup>& groups,
                       const TlCalibration& calibration, double target_recovery, double eps,
                       const std::optional<std::vector<int>>& allowed_bits) {
  Constraint c;
  c.kind = Constraint::Kind::KlAtMost;
  c.threshold = calibration.threshold_for(target_recovery);
  c.rho = calibration.rho;
  SearchResult result = search_budget(db, groups, c, eps, allowed_bits, &calibration);
  result.kind = "tl";
  result.tl = calibration;
  return result;
}

double evo_fitness(double kl, double delta_bits, double tau, double penalty) {
  if (delta_bits <= 0.0) return kInf;
  const double base = kl / delta_bits;
  return kl <= tau ? base : base * penalty * (kl - tau);
}

namespace {

double avg_bits_of(const std::vector<int>& assignment, const std::vector<long>& sizes) {
  double bit_sum = 0.0, size_sum = 0.0;
  for (std::size_t m = 0; m < sizes.size(); ++m) {
    bit_sum += static_cast<double>(assignment[m]) * static_cast<double>(sizes[m]);
    size_sum += static_cast<double>(sizes[m]);
  }
  return bit_sum / size_sum;
}

}  // namespace

SearchResult evo_search(QuantEvaluator& eval, const EvoParams& params) {
  if (params.lambda < 1) throw std::invalid_argument("lambda must be at least 1");
  if (!(params.tau > 0.0)) throw std::invalid_argument("tau must be positive");
  std::vector<int> bits = params.bits;
  std::sort(bits.begin(), bits.end());
  bits.erase(std::unique(bits.begin(), bits.end()), bits.end());
  if (bits.size() < 2) throw std::invalid_argument("need at least two bitwidth levels");

  const int num_groups = eval.num_groups();
  std::vector<long> sizes;
  for (const auto& g : eval.groups()) sizes.push_back(g.parameter_count);
  const Index calib_n = eval.calibration().size();
  const long passes_before = eval.forward_passes();

  SearchResult result;
  result.kind = "evo";

  std::vector<int> parent(num_groups, bits.back());
  double parent_kl = eval.evaluate(parent).kl;
  double parent_avg = avg_bits_of(parent, sizes);
  result.evo_trace.push_back({0, "init", parent_avg, parent_kl});

  Rng rng(mix_seed(params.seed, 0x65766fULL));
  int stall = 0;

  for (int gen = 1; gen <= params.max_generations; ++gen) {
    if (parent_avg <= static_cast<double>(bits.front())) break;

    // Level-switch mutation: one random group jumps to a random other level.
    std::vector<std::vector<int>> offspring;
    offspring.reserve(params.lambda);
    for (int o = 0; o < params.lambda; ++o) {
      std::vector<int> child = parent;
      const int g = static_cast<int>(rng.uniform_index(num_groups));
      int level;
      do {
        level = bits[rng.uniform_index(bits.size())];
      } while (level == child[g]);
      child[g] = level;
      offspring.push_back(std::move(child));
    }

    // Multi-stage filtering on growing calibration prefixes.
    std::vector<int> alive(offspring.size());
    std::iota(alive.begin(), alive.end(), 0);
    std::vector<double> full_kl(offspring.size(), kInf);
    for (int stage = 0; stage < 3 && !alive.empty(); ++stage) {
      const Index positions = std::max<Index>(
          1, static_cast<Index>(std::ceil(params.stage_fractions[stage] * calib_n)));
      std::vector<std::pair<double, int>> ranked;
      ranked.reserve(alive.size());
      for (int idx : alive) {
        const double kl = eval.evaluate_subset(offspring[idx], positions).kl;
        const double db = parent_avg - avg_bits_of(offspring[idx], sizes);
        ranked.emplace_back(evo_fitness(kl, db, params.tau, params.penalty), idx);
        if (stage == 2) full_kl[idx] = kl;
      }
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      std::size_t keep = ranked.size();
      if (stage == 0) keep = std::max<std::size_t>(1, ranked.size() / 4);
      if (stage == 1) keep = std::max<std::size_t>(1, ranked.size() / 2);
      alive.clear();
      for (std::size_t i = 0; i < keep; ++i) alive.push_back(ranked[i].second);
    }

    // Final-stage winner; the parent participates implicitly since any
    // non-reducing candidate ranks at +infinity.
    int best_idx = alive.front();
    const std::vector<int>& best = offspring[best_idx];
    const double best_kl = full_kl[best_idx];
    const double best_avg = avg_bits_of(best, sizes);

    if (best_kl < params.tau && best_avg < parent_avg) {
      parent = best;
      parent_kl = best_kl;
      parent_avg = best_avg;
      stall = 0;
      result.evo_trace.push_back({gen, "accept", parent_avg, parent_kl});
      continue;
    }
    ++stall;

    if (stall >= params.stall_threshold) {
      // Curation: bitwidth-neutral swap between equal-sized groups, chosen
      // to minimize measured KL. Average bits are unchanged exactly.
      std::vector<int> best_swap = parent;
      double best_swap_kl = parent_kl;
      for (int i = 0; i < num_groups; ++i) {
        for (int j = i + 1; j < num_groups; ++j) {
          if (sizes[i] != sizes[j] || parent[i] == parent[j]) continue;
          std::vector<int> candidate = parent;
          std::swap(candidate[i], candidate[j]);
          const double kl = eval.evaluate(candidate).kl;
          if (kl < best_swap_kl) {
            best_swap_kl = kl;
            best_swap = std::move(candidate);
          }
        }
      }
      if (best_swap != parent) {
        parent = std::move(best_swap);
        parent_kl = best_swap_kl;
      }
      result.evo_trace.push_back({gen, "curation", parent_avg, parent_kl});
      stall = 0;
    }
  }

  result.spec.bits = parent;
  result.spec.mode = eval.mode();
  result.spec.group_size = eval.group_size();
  result.achieved_budget = parent_avg;
  const EvalMetrics final_metrics = eval.evaluate(parent);
  result.predicted = {final_metrics.kl, final_metrics.ear};  // measured; no database involved
  result.forward_passes = eval.forward_passes() - passes_before;
  return result;
}

std::string quant_spec_csv(const QuantSpec& spec, const std::vector<WeightGroup>& groups) {
  std::ostringstream os;
  os << "group,layers,bits\n";
  for (const auto& g : groups) {
    os << g.id << ",";
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      if (i > 0) os << ";";
      os << g.members[i];
    }
    os << "," << spec.bits[g.id] << "\n";
  }
  return os.str();
}

json SearchResult::to_json() const {
  json spec_json = {{"bits", spec.bits},
                    {"mode", std::string(to_string(spec.mode))},
                    {"group_size", spec.group_size}};
  json j = {{"kind", kind},
            {"spec", std::move(spec_json)},
            {"achieved_budget", achieved_budget},
            {"effective_bpp", effective_bpp},
            {"predicted", {{"kl_hat", predicted.kl_hat}, {"ear_hat", predicted.ear_hat}}},
            {"forward_passes_during_search", forward_passes}};
  json trace_json = json::array();
  for (const auto& t : trace) {
    trace_json.push_back({{"probe_budget", t.probe_budget},
                          {"achieved_budget", t.achieved_budget},
                          {"kl_hat", t.kl_hat},
                          {"ear_hat", t.ear_hat},
                          {"feasible", t.feasible}});
  }
  j["trace"] = std::move(trace_json);
  if (tl.has_value()) {
    j["tl"] = {{"alpha_rec", tl->alpha_rec},
               {"rho", tl->rho},
               {"kl_actual", tl->kl_actual},
               {"kl_predicted", tl->kl_predicted},
               {"recovery_cal", tl->recovery_cal},
               {"b_cal", tl->b_cal},
               {"spec_cal_bits", tl->spec_cal.bits}};
  }
  if (!evo_trace.empty()) {
    json evo_json = json::array();
    for (const auto& e : evo_trace) {
      evo_json.push_back({{"generation", e.generation},
                          {"event", e.event},
                          {"avg_bits", e.avg_bits},
                          {"kl", e.kl}});
    }
    j["evo_trace"] = std::move(evo_json);
  }
  return j;
}

}  // namespace mixq
