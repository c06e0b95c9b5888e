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

// End-to-end acceptance suite. Each criterion prints exactly one PASS/FAIL
// line; the process exits non-zero if any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mixq/allocate.hpp"
#include "mixq/commands.hpp"
#include "mixq/config.hpp"
#include "mixq/container.hpp"
#include "mixq/eval.hpp"
#include "mixq/metrics.hpp"
#include "mixq/sensitivity.hpp"
#include "support/oracles.hpp"

using namespace mixq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Check {
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void within(double value, double target, double tol, const std::string& what) {
    if (!(std::abs(value - target) <= tol)) {
      std::ostringstream os;
      os << what << ": got " << value << ", want " << target << " +- " << tol;
      failures.push_back(os.str());
    }
  }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("mixq_acceptance_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// ---------------------------------------------------------------------------
// Shared ten-seed study for criteria 7 and 8: skewed models, Shapley
// databases in both quantizer modes, DL searches and 4-bit flip statistics.

struct SeedOutcome {
  double full_budget = 0.0;
  double binary_budget = 0.0;
  double asym_budget = 0.0;
  double sym_budget = 0.0;
  std::array<long, EntropyBins::kCount> positions{};
  std::array<long, EntropyBins::kCount> asym_flips{};
  std::array<long, EntropyBins::kCount> sym_flips{};
};

const std::vector<SeedOutcome>& seed_study() {
  static const std::vector<SeedOutcome> study = [] {
    std::vector<SeedOutcome> outcomes;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      ModelConfig mc;
      mc.hidden = 32;
      mc.vocab = 32;
      mc.depth = 3;
      mc.gamma_target = 1.5;
      mc.temperature = 0.05;
      mc.seed = seed;
      const SyntheticModel model = SyntheticModel::build(mc);
      const CalibrationSet calib = generate_calibration(mc.hidden, 256, 1000 + seed);
      const auto groups = partition_groups(model, PartitionRule::PerLayer);
      const std::vector<int> bits{2, 3, 4, 5, 6, 7, 8};

      QuantEvaluator asym(model, calib, groups, 10, QuantMode::Asymmetric, 8);
      const SensitivityDatabase db_asym = estimate_shapley(asym, bits, 8, 500 + seed);
      QuantEvaluator sym(model, calib, groups, 10, QuantMode::Symmetric, 8);
      const SensitivityDatabase db_sym = estimate_shapley(sym, bits, 8, 500 + seed);

      SeedOutcome out;
      out.full_budget =
          search_dl(db_asym, groups, 0.99, 0.01, std::vector<int>{4, 5, 6, 7, 8})
              .achieved_budget;
      out.binary_budget =
          search_dl(db_asym, groups, 0.99, 0.01, std::vector<int>{4, 8}).achieved_budget;
      out.asym_budget = search_dl(db_asym, groups, 0.99, 0.01).achieved_budget;
      out.sym_budget = search_dl(db_sym, groups, 0.99, 0.01).achieved_budget;

      const std::vector<int> four(groups.size(), 4);
      const FlipStats fa = flip_stats(
          asym.reference(), asym.snapshot(QuantSpec{four, QuantMode::Asymmetric, 8}));
      const FlipStats fs_ = flip_stats(
          sym.reference(), sym.snapshot(QuantSpec{four, QuantMode::Symmetric, 8}));
      for (int b = 0; b < EntropyBins::kCount; ++b) {
        out.positions[b] = fa.by_entropy_bin[b].positions;
        out.asym_flips[b] = fa.by_entropy_bin[b].flips;
        out.sym_flips[b] = fs_.by_entropy_bin[b].flips;
      }
      outcomes.push_back(out);
    }
    return outcomes;
  }();
  return study;
}

// ---------------------------------------------------------------------------

void criterion_1_gamma_squared_law(Check& check) {
  TempDir dir("gamma");
  RunConfig cfg;
  cfg.output_dir = dir.path;
  cfg.gamma.gammas = {1.2, 1.5, 2.0};
  cfg.gamma.bits = {6, 8};
  cfg.gamma.samples = 100000;
  std::ostringstream sink;
  cmd_validate_gamma(cfg, sink);

  std::ifstream is(dir.path / "gamma_validation.csv");
  check.require(is.good(), "gamma_validation.csv missing");
  std::string line;
  std::getline(is, line);  // header
  int rows = 0;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const double gamma = std::stod(cells.at(0));
    const double ratio = std::stod(cells.at(5));
    check.within(ratio, gamma * gamma, 0.10 * gamma * gamma,
                 "sym/asym MSE ratio at gamma " + cells.at(0) + " bits " + cells.at(1));
    if (gamma == 1.2) {
      check.within(ratio, 1.44, 0.144, "gamma 1.2 ratio vs 1.44");
    }
    ++rows;
  }
  check.require(rows == 6, "expected 6 sweep rows");
}

void criterion_2_step_size_exactness(Check& check) {
  Rng rng(42);
  int violations = 0;
  for (int i = 0; i < 1000; ++i) {
    const double lo = rng.uniform(-5.0, 4.0);
    const double hi = lo + rng.uniform(1e-3, 6.0);
    const int levels = 2 + static_cast<int>(rng.uniform_index(255));
    const double gamma = centering_inefficiency(lo, hi);
    const double ratio = step_size({lo, hi, levels, QuantMode::Symmetric}) /
                         step_size({lo, hi, levels, QuantMode::Asymmetric});
    if (std::abs(ratio - gamma) > 1e-12 * std::max(1.0, gamma)) ++violations;
  }
  check.require(violations == 0,
                "step-size ratio deviated from gamma on " + std::to_string(violations) +
                    "/1000 grids");
}

void criterion_3_bit_accounting(Check& check) {
  const std::map<std::pair<int, char>, double> table = {
      {{4, 'a'}, 4.15625}, {{5, 'a'}, 5.15625}, {{6, 'a'}, 6.15625},
      {{7, 'a'}, 7.15625}, {{8, 'a'}, 8.15625}, {{4, 's'}, 4.125},
      {{5, 's'}, 5.125},   {{6, 's'}, 6.125},   {{7, 's'}, 7.125},
      {{8, 's'}, 8.125}};
  for (const auto& [key, expected] : table) {
    const QuantMode mode = key.second == 'a' ? QuantMode::Asymmetric : QuantMode::Symmetric;
    const BitAccount acc = effective_bits(key.first, 128, mode);
    check.require(acc.effective_bits == expected,
                  "effective bits cell nominal " + std::to_string(key.first) + " mode " +
                      key.second);
  }
}

void criterion_4_metric_oracles(Check& check) {
  Rng rng(2024);
  int ear_miss = 0, kl_miss = 0, tv_miss = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int vocab = 2 + static_cast<int>(rng.uniform_index(4));
    const int k = 1 + static_cast<int>(rng.uniform_index(vocab));
    const auto p = test::random_distribution(vocab, rng, 1.5);
    const auto q = test::random_distribution(vocab, rng, 1.5);
    const auto pair = test::make_snapshot_pair({p}, {q}, vocab);
    if (std::abs(ear(pair.p, pair.q, k) - test::naive_ear(p, q, k)) > 1e-12) ++ear_miss;
    if (std::abs(kl_topk(pair.p, pair.q, k).kl - test::naive_kl(p, q, k, kKlFloor)) > 1e-12) {
      ++kl_miss;
    }
    if (std::abs(ear(pair.p, pair.q, vocab) -
                 (1.0 - test::naive_total_variation(p, q))) > 1e-12) {
      ++tv_miss;
    }
  }
  check.require(ear_miss == 0, std::to_string(ear_miss) + "/1000 EAR oracle mismatches");
  check.require(kl_miss == 0, std::to_string(kl_miss) + "/1000 KL oracle mismatches");
  check.require(tv_miss == 0, std::to_string(tv_miss) + "/1000 EAR/TV duality mismatches");
}

void criterion_5_mckp_exactness(Check& check) {
  Rng rng(1234);
  int mismatches = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const AllocationProblem p = test::random_mckp_instance(rng);
    std::vector<int> fast;
    bool infeasible = false;
    try {
      fast = solve_mckp(p);
    } catch (const InfeasibleError&) {
      infeasible = true;
    }
    const std::vector<int> slow = test::brute_force_mckp(p);
    if (infeasible ? !slow.empty() : fast != slow) ++mismatches;
  }
  check.require(mismatches == 0,
                std::to_string(mismatches) + "/100 solver-vs-enumeration mismatches");
}

void criterion_6_shapley_correctness(Check& check) {
  ModelConfig mc;
  mc.hidden = 16;
  mc.vocab = 32;
  mc.depth = 3;
  mc.gamma_target = 1.5;
  mc.temperature = 0.04;
  mc.seed = 7;
  const SyntheticModel model = SyntheticModel::build(mc);
  const CalibrationSet calib = generate_calibration(mc.hidden, 32, 9);
  const auto groups = partition_groups(model, PartitionRule::PerLayer);

  // one-player game: phi equals the measured full-model delta
  {
    std::vector<WeightGroup> merged{{0, model.layer_names(), model.total_parameters()}};
    QuantEvaluator eval(model, calib, merged, 10, QuantMode::Asymmetric, 8);
    const EvalMetrics base = eval.evaluate(std::vector<int>{8});
    const EvalMetrics at4 = eval.evaluate(std::vector<int>{4});
    const SensitivityDatabase db = estimate_shapley(eval, {4, 8}, 3, 77);
    check.within(db.raw_kl(0, 0), at4.kl - base.kl, 1e-12, "one-player KL phi");
    check.within(db.raw_ear(0, 0), base.ear - at4.ear, 1e-12, "one-player EAR phi");
  }

  // two-player additive game with deltas 0.03 / 0.01 (joint 0.04)
  {
    const auto game = [](const std::vector<int>& bits) {
      EvalMetrics m;
      if (bits[0] != 8) m.kl += 0.03;
      if (bits[1] != 8) m.kl += 0.01;
      m.ear = 1.0 - m.kl;
      return m;
    };
    const ShapleyRaw raw = run_shapley_games(2, {4, 8}, 2, 1, true, game);
    check.within(raw.phi_kl(0, 0), 0.03, 1e-12, "additive game phi_1");
    check.within(raw.phi_kl(1, 0), 0.01, 1e-12, "additive game phi_2");
  }

  // exhaustive permutations match the subset-formula value, M = 4
  {
    QuantEvaluator eval(model, calib, groups, 10, QuantMode::Asymmetric, 8);
    std::map<unsigned, EvalMetrics> memo;
    auto value = [&](unsigned mask) {
      auto it = memo.find(mask);
      if (it == memo.end()) {
        std::vector<int> bits(groups.size(), 8);
        for (std::size_t g = 0; g < groups.size(); ++g) {
          if (mask & (1u << g)) bits[g] = 4;
        }
        it = memo.emplace(mask, eval.evaluate(bits)).first;
      }
      return it->second;
    };
    const auto oracle =
        test::subset_shapley(4, [&](unsigned mask) { return value(mask).kl; });
    const ShapleyRaw raw = run_shapley_games(
        4, {4, 8}, 1, 0, true,
        [&](const std::vector<int>& bits) { return eval.evaluate(bits); });
    for (int m = 0; m < 4; ++m) {
      check.within(raw.phi_kl(m, 0), oracle[m], 1e-12,
                   "exhaustive-vs-subset phi for group " + std::to_string(m));
    }

    // efficiency: the per-game phis telescope to the all-at-target delta
    const double total = raw.phi_kl.col(0).sum();
    check.within(total, value((1u << 4) - 1).kl - value(0).kl, 1e-12,
                 "efficiency identity");
  }

  // dummy player: exactly representable diagonal layer
  {
    ModelConfig dc = mc;
    dc.depth = 2;
    const SyntheticModel base = SyntheticModel::build(dc);
    Vecd diag(dc.hidden);
    Rng rng(5);
    for (Index i = 0; i < diag.size(); ++i) diag[i] = rng.uniform(0.5, 1.5);
    std::vector<Layer> layers;
    layers.push_back({"layer_0", Matd(diag.asDiagonal()), dc.activation});
    layers.push_back({"layer_1", base.layer("layer_1").weight, dc.activation});
    layers.push_back({"head", base.layer("head").weight, Activation::Identity});
    const SyntheticModel dummy_model = SyntheticModel::from_layers(dc, std::move(layers));
    const auto dummy_groups = partition_groups(dummy_model, PartitionRule::PerLayer);
    QuantEvaluator eval(dummy_model, calib, dummy_groups, 10, QuantMode::Asymmetric, 8);
    const SensitivityDatabase db = estimate_shapley(eval, {2, 4, 8}, 1, 11, true);
    for (int c = 0; c < 3; ++c) {
      check.require(std::abs(db.raw_kl(0, c)) <= 1e-9,
                    "dummy player phi_KL nonzero at column " + std::to_string(c));
      check.require(std::abs(db.raw_ear(0, c)) <= 1e-9,
                    "dummy player phi_EAR nonzero at column " + std::to_string(c));
    }
  }
}

void criterion_7_bitwidth_range_ablation(Check& check) {
  const auto& study = seed_study();
  int strict = 0;
  for (std::size_t i = 0; i < study.size(); ++i) {
    check.require(study[i].full_budget <= study[i].binary_budget + 1e-12,
                  "full-range budget above the {4,8} budget on seed " + std::to_string(i + 1));
    if (study[i].full_budget < study[i].binary_budget - 1e-12) ++strict;
  }
  check.require(strict >= 7, "strictly lower full-range budget on only " +
                                 std::to_string(strict) + "/10 seeds");
}

void criterion_8_asym_sym_gap(Check& check) {
  const auto& study = seed_study();
  for (std::size_t i = 0; i < study.size(); ++i) {
    check.require(study[i].sym_budget > study[i].asym_budget + 1e-12,
                  "symmetric DL budget not above asymmetric on seed " + std::to_string(i + 1));
  }

  // flip statistics pooled over the ten seeds at uniform 4 bits
  std::array<long, EntropyBins::kCount> asym{}, sym{};
  for (const auto& s : study) {
    for (int b = 0; b < EntropyBins::kCount; ++b) {
      asym[b] += s.asym_flips[b];
      sym[b] += s.sym_flips[b];
    }
  }
  for (int b = 0; b < EntropyBins::kCount; ++b) {
    check.require(sym[b] >= asym[b],
                  "symmetric flips below asymmetric in entropy bin " + std::to_string(b));
  }
  // the lowest-entropy bin has the largest sym/asym ratio among bins where
  // the ratio is defined
  int lowest = -1;
  double lowest_ratio = 0.0;
  for (int b = 0; b < EntropyBins::kCount; ++b) {
    if (asym[b] > 0) {
      lowest = b;
      lowest_ratio = static_cast<double>(sym[b]) / static_cast<double>(asym[b]);
      break;
    }
  }
  check.require(lowest >= 0, "no entropy bin with asymmetric flips");
  for (int b = lowest + 1; b < EntropyBins::kCount; ++b) {
    if (asym[b] == 0) continue;
    const double ratio = static_cast<double>(sym[b]) / static_cast<double>(asym[b]);
    check.require(ratio <= lowest_ratio + 1e-12,
                  "flip ratio in bin " + std::to_string(b) +
                      " exceeds the lowest-entropy bin's ratio");
  }
}

void criterion_9_tl_contract(Check& check) {
  // hand arithmetic from the calibration algorithm
  QuantSpec spec{{4, 4, 4}, QuantMode::Asymmetric, 8};
  const TlCalibration hand = make_tl_calibration(0.98, 0.02, 0.016, 4.0, spec);
  check.within(hand.alpha_rec, 1.0, 1e-12, "slope from recovery 0.98 at KL 0.02");
  check.within(hand.threshold_for(0.99), 0.01, 1e-12, "threshold at target 0.99");
  check.within(hand.rho, 1.25, 1e-12, "calibration ratio 0.02/0.016");

  // live contract: zero passes during the search, budget at most b_cal
  ModelConfig mc;
  mc.hidden = 16;
  mc.vocab = 32;
  mc.depth = 3;
  mc.gamma_target = 1.5;
  mc.temperature = 0.04;
  mc.seed = 7;
  const SyntheticModel model = SyntheticModel::build(mc);
  const CalibrationSet calib = generate_calibration(mc.hidden, 64, 21);
  const auto groups = partition_groups(model, PartitionRule::PerLayer);
  QuantEvaluator eval(model, calib, groups, 10, QuantMode::Asymmetric, 8);
  const SensitivityDatabase db = estimate_shapley(eval, {2, 3, 4, 5, 6, 7, 8}, 4, 33);

  const TlCalibration cal = calibrate_tl_agreement_proxy(db, groups, eval, 4.0);
  const long passes_before = eval.forward_passes();
  const SearchResult result = search_tl(db, groups, cal, cal.recovery_cal, 0.01);
  check.require(eval.forward_passes() - passes_before == 0,
                "search_tl performed forward passes");
  check.require(result.achieved_budget <= cal.b_cal + 1e-12,
                "returned budget above b_cal at target = calibrated recovery");
}

void criterion_10_evo_invariants(Check& check) {
  ModelConfig mc;  // five groups: four blocks plus the head
  mc.hidden = 32;
  mc.vocab = 32;
  mc.depth = 4;
  mc.gamma_target = 1.5;
  mc.temperature = 0.06;
  mc.seed = 3;
  const SyntheticModel model = SyntheticModel::build(mc);
  const CalibrationSet calib = generate_calibration(mc.hidden, 128, 77);
  const auto groups = partition_groups(model, PartitionRule::PerLayer);
  check.require(groups.size() == 5, "expected a 5-group model");
  QuantEvaluator eval(model, calib, groups, 10, QuantMode::Asymmetric, 4);

  EvoParams params;
  params.tau = 0.05;
  params.lambda = 8;
  params.seed = 17;
  params.max_generations = 80;
  params.stall_threshold = 5;
  const SearchResult result = evo_search(eval, params);

  int accepts = 0;
  double prev_bits = std::numeric_limits<double>::infinity();
  double last_bits = 0.0;
  for (const auto& e : result.evo_trace) {
    if (e.event == "accept" || e.event == "init") {
      check.require(e.kl < params.tau, "accepted iterate with KL at or above tau");
      if (e.event == "accept") {
        check.require(e.avg_bits < prev_bits, "accepted iterate without a bit reduction");
        ++accepts;
      }
      prev_bits = e.avg_bits;
      last_bits = e.avg_bits;
    } else {
      check.require(std::abs(e.avg_bits - last_bits) <= 1e-12,
                    "curation changed the average bitwidth");
    }
  }
  check.require(accepts >= 3, "evo search accepted fewer than 3 reductions");
  check.require(eval.evaluate(result.spec).kl < params.tau,
                "final spec violates the KL threshold");
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MIXQ_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

void criterion_11_determinism(Check& check) {
  TempDir dir("determinism");
  RunConfig cfg;
  cfg.calib.positions = 128;
  cfg.gamma.samples = 20000;
  cfg.output_dir = dir.path / "placeholder";
  {
    std::ofstream os(dir.path / "config.json");
    json j = cfg.to_json();
    j.erase("output_dir");
    j.erase("threads");
    os << j.dump(2);
  }

  const std::vector<std::string> stages = {"build", "sensitivity", "search",
                                           "validate-gamma", "report"};
  for (const auto& [run, threads] :
       {std::pair{std::string("a"), 1}, std::pair{std::string("b"), 4}}) {
    for (const auto& stage : stages) {
      const int code = run_cli(stage + " -c " + (dir.path / "config.json").string() + " -o " +
                               (dir.path / run).string() + " --threads " +
                               std::to_string(threads));
      check.require(code == 0, "stage " + stage + " failed in run " + run);
    }
  }

  const std::vector<std::string> artifacts = {
      "model/manifest.json", "model/weights/layer_0.slqw", "model/weights/layer_1.slqw",
      "model/weights/head.slqw", "sensitivity.json", "search_result.json", "spec.csv",
      "gamma_validation.csv", "report.json", "flips_by_entropy.csv", "layer_ear.csv",
      "positions.csv", "trace.csv"};
  for (const auto& artifact : artifacts) {
    const fs::path a = dir.path / "a" / artifact;
    const fs::path b = dir.path / "b" / artifact;
    if (!fs::exists(a) || !fs::exists(b)) {
      check.require(false, "missing artifact " + artifact);
      continue;
    }
    check.require(io::read_file_bytes(a) == io::read_file_bytes(b),
                  "artifact differs across thread counts: " + artifact);
  }
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    double max_seconds;  // 0 = no stated runtime bound
    std::function<void(Check&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "gamma^2 law: Monte Carlo sym/asym error ratio within 10%", 30.0,
       criterion_1_gamma_squared_law},
      {2, "step-size exactness: sym/asym ratio equals gamma to 1e-12", 0.0,
       criterion_2_step_size_exactness},
      {3, "bit accounting: all ten INT overhead cells exact", 0.0, criterion_3_bit_accounting},
      {4, "EAR/KL oracles: naive equivalence and EAR = 1 - TV to 1e-12", 0.0,
       criterion_4_metric_oracles},
      {5, "MCKP exactness: 100 random instances vs enumeration", 10.0,
       criterion_5_mckp_exactness},
      {6, "Shapley correctness: games, exhaustive equality, dummy, efficiency", 60.0,
       criterion_6_shapley_correctness},
      {7, "ablation: full bitwidth range beats {4,8} at equal EAR target", 0.0,
       criterion_7_bitwidth_range_ablation},
      {8, "asym-vs-sym: higher sym DL budgets and flip rates by entropy bin", 0.0,
       criterion_8_asym_sym_gap},
      {9, "TL contract: calibration arithmetic, zero-pass search, budget bound", 0.0,
       criterion_9_tl_contract},
      {10, "evo invariants: decreasing budget, KL below tau, neutral curation", 300.0,
       criterion_10_evo_invariants},
      {11, "determinism: byte-identical artifacts across thread counts", 0.0,
       criterion_11_determinism},
  };

  int failed = 0;
  for (const auto& criterion : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.fn(check);
    } catch (const std::exception& e) {
      check.failures.push_back(std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criterion.max_seconds > 0.0 && seconds > criterion.max_seconds) {
      check.failures.push_back("runtime " + std::to_string(seconds) +
                               "s exceeds the stated bound of " +
                               std::to_string(criterion.max_seconds) + "s");
    }
    if (check.failures.empty()) {
      std::printf("[PASS] criterion %2d: %s (%.1fs)\n", criterion.id, criterion.title,
                  seconds);
    } else {
      ++failed;
      std::printf("[FAIL] criterion %2d: %s (%.1fs)\n", criterion.id, criterion.title,
                  seconds);
      for (const auto& failure : check.failures) {
        std::printf("       - %s\n", failure.c_str());
      }
    }
  }
  if (failed > 0) {
    std::printf("%d/%zu criteria failed\n", failed, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
