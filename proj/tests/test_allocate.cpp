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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixq/allocate.hpp"
#include "mixq/eval.hpp"
#include "support/oracles.hpp"
#include "support/test_rng.hpp"

using namespace mixq;

namespace {

using test::brute_force_mckp;

ModelConfig small_config(std::uint64_t seed = 7) {
  ModelConfig cfg;
  cfg.hidden = 16;
  cfg.vocab = 32;
  cfg.depth = 3;
  cfg.gamma_target = 1.5;
  cfg.temperature = 0.04;
  cfg.seed = seed;
  return cfg;
}

struct PipelineFixture {
  SyntheticModel model;
  CalibrationSet calib;
  std::vector<WeightGroup> groups;
  QuantEvaluator eval;
  SensitivityDatabase db;

  explicit PipelineFixture(std::uint64_t seed = 7, QuantMode mode = QuantMode::Asymmetric,
                           const std::vector<int>& bits = {2, 3, 4, 5, 6, 7, 8})
      : model(SyntheticModel::build(small_config(seed))),
        calib(generate_calibration(16, 64, seed ^ 0x9e37)),
        groups(partition_groups(model, PartitionRule::PerLayer)),
        eval(model, calib, groups, 10, mode, 8),
        db(estimate_shapley(eval, bits, 4, seed + 1)) {}
};

}  // namespace

TEST_CASE("mckp: two-group hand instance") {
  AllocationProblem p;
  p.sizes = {100, 100};
  p.bits = {4, 8};
  p.costs.resize(2, 2);
  p.costs << 0.10, 0.01, 0.02, 0.005;
  p.budget = 6.0;
  const std::vector<int> spec = solve_mckp(p);
  CHECK(spec == std::vector<int>{8, 4});
  CHECK(spec == brute_force_mckp(p));

  p.budget = 8.0;  // unconstrained: the cheapest column everywhere
  CHECK(solve_mckp(p) == std::vector<int>{8, 8});

  p.budget = 3.0;  // below the minimum bitwidth
  CHECK_THROWS_WITH_AS(solve_mckp(p), "budget below minimum bitwidth", InfeasibleError);
}

TEST_CASE("mckp: matches exhaustive enumeration on random instances") {
  Rng rng(1234);
  for (int seed = 0; seed < 100; ++seed) {
    const AllocationProblem p = test::random_mckp_instance(rng);
    std::vector<int> fast;
    try {
      fast = solve_mckp(p);
    } catch (const InfeasibleError&) {
      // oracle must agree that nothing fits
      CHECK(brute_force_mckp(p).empty());
      continue;
    }
    CHECK(fast == brute_force_mckp(p));
  }
}

TEST_CASE("search_budget: trace and feasibility behavior") {
  PipelineFixture fx;
  Constraint c{Constraint::Kind::EarAtLeast, 0.97, 1.0};
  const SearchResult r = search_budget(fx.db, fx.groups, c, 0.01);
  CHECK(r.predicted.ear_hat >= 0.97);
  CHECK(r.achieved_budget >= 2.0);
  CHECK(r.achieved_budget <= 8.0);
  CHECK(predict_metrics(fx.db, r.spec).ear_hat == r.predicted.ear_hat);

  // predicted KL along the trace is non-increasing in probe budget
  std::vector<TraceEntry> by_budget = r.trace;
  std::sort(by_budget.begin(), by_budget.end(),
            [](const TraceEntry& a, const TraceEntry& b) {
              return a.probe_budget < b.probe_budget;
            });
  for (std::size_t i = 1; i < by_budget.size(); ++i) {
    CHECK(by_budget[i].kl_hat <= by_budget[i - 1].kl_hat + 1e-12);
  }

  // the bracket shrinks strictly
  for (std::size_t i = 3; i < r.trace.size(); ++i) {
    CHECK(std::abs(r.trace[i].probe_budget - r.trace[i - 1].probe_budget) <
          (8.0 - 2.0) / static_cast<double>(1 << (i - 3)) + 1e-12);
  }
}

TEST_CASE("search_dl: boundary targets") {
  PipelineFixture fx;
  // a zero target is satisfied by the all-min-bits spec
  const SearchResult zero = search_dl(fx.db, fx.groups, 0.0);
  CHECK(zero.achieved_budget == doctest::Approx(2.0).epsilon(1e-12));
  for (int b : zero.spec.bits) CHECK(b == 2);

  // an unattainable target fails with the b_max prediction attached
  try {
    search_dl(fx.db, fx.groups, 1.0 + 1e-9);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(!e.diagnostic.empty());
    const auto diag = nlohmann::json::parse(e.diagnostic);
    CHECK(diag.at("prediction_at_b_max").at("ear_hat").get<double>() == 1.0);
  }
}

TEST_CASE("search_dl: full bitwidth range never loses to the binary range") {
  for (std::uint64_t seed : {11, 12, 13}) {
    PipelineFixture fx(seed);
    const SearchResult full =
        search_dl(fx.db, fx.groups, 0.985, 0.01, std::vector<int>{4, 5, 6, 7, 8});
    const SearchResult binary =
        search_dl(fx.db, fx.groups, 0.985, 0.01, std::vector<int>{4, 8});
    CHECK(full.achieved_budget <= binary.achieved_budget + 1e-12);
  }
}

TEST_CASE("tl calibration arithmetic reproduces the hand example") {
  QuantSpec spec{{4, 4}, QuantMode::Asymmetric, 8};
  const TlCalibration cal = make_tl_calibration(0.98, 0.02, 0.016, 4.0, spec);
  CHECK(cal.alpha_rec == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cal.threshold_for(0.99) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(cal.rho == doctest::Approx(1.25).epsilon(1e-12));
  // rho applied to the prediction reproduces the measured KL exactly
  CHECK(cal.rho * cal.kl_predicted == doctest::Approx(cal.kl_actual).epsilon(1e-15));

  CHECK_THROWS_WITH_AS(make_tl_calibration(1.0, 0.02, 0.016, 4.0, spec),
                       "no measurable degradation at calibration point; choose lower b_cal",
                       std::invalid_argument);
  CHECK_THROWS_AS(make_tl_calibration(0.98, 0.0, 0.016, 4.0, spec), std::invalid_argument);
}

TEST_CASE("tl search on the synthetic model") {
  PipelineFixture fx;
  const TlCalibration cal = calibrate_tl_agreement_proxy(fx.db, fx.groups, fx.eval, 4.0);
  CHECK(cal.recovery_cal > 0.0);
  CHECK(cal.recovery_cal < 1.0);
  CHECK(cal.rho > 0.0);

  const long passes_before = fx.eval.forward_passes();
  const SearchResult r = search_tl(fx.db, fx.groups, cal, cal.recovery_cal, 0.01);
  CHECK(fx.eval.forward_passes() == passes_before);  // zero passes during search
  CHECK(r.achieved_budget <= cal.b_cal + 1e-12);
  REQUIRE(r.tl.has_value());
  CHECK(r.tl->alpha_rec == cal.alpha_rec);

  // recovery target of 1 forces the all-b_max spec
  const SearchResult strict = search_tl(fx.db, fx.groups, cal, 1.0, 0.01);
  for (int b : strict.spec.bits) CHECK(b == 8);
  CHECK(strict.predicted.kl_hat == 0.0);
}

TEST_CASE("prediction vs measurement stays in the calibration-ratio regime") {
  // At a mid-budget spec the measured/predicted KL ratio must stay within
  // the same order of magnitude (|rho - 1| < 1).
  for (std::uint64_t seed : {7, 19, 23}) {
    PipelineFixture fx(seed);
    AllocationProblem p;
    p.costs = fx.db.cost_kl;
    p.sizes = fx.db.group_sizes;
    p.bits = fx.db.meta.bitwidths;
    p.budget = 5.0;
    QuantSpec spec{solve_mckp(p), QuantMode::Asymmetric, 8};
    const double predicted = predict_metrics(fx.db, spec).kl_hat;
    const double measured = fx.eval.evaluate(spec).kl;
    REQUIRE(predicted > 0.0);
    const double rho = measured / predicted;
    CHECK(std::abs(rho - 1.0) < 1.0);
  }
}

TEST_CASE("evo fitness formula") {
  CHECK(evo_fitness(0.008, 0.5, 0.01, 1000.0) == doctest::Approx(0.016).epsilon(1e-12));
  // penalty branch: kl above tau scales by penalty * excess
  CHECK(evo_fitness(0.02, 0.5, 0.01, 1000.0) ==
        doctest::Approx((0.02 / 0.5) * 1000.0 * 0.01).epsilon(1e-12));
  CHECK(std::isinf(evo_fitness(0.001, 0.0, 0.01, 1000.0)));
  CHECK(std::isinf(evo_fitness(0.001, -0.25, 0.01, 1000.0)));
}

TEST_CASE("evo search: unconstrained threshold reaches the minimum bits") {
  PipelineFixture fx;
  EvoParams params;
  params.tau = 1e9;
  params.lambda = 6;
  params.seed = 3;
  params.max_generations = 400;
  params.bits = {2, 3, 4, 5, 6, 7, 8};
  const SearchResult r = evo_search(fx.eval, params);
  CHECK(r.achieved_budget == doctest::Approx(2.0).epsilon(1e-12));
  for (int b : r.spec.bits) CHECK(b == 2);
}

TEST_CASE("evo search: acceptance invariants and determinism") {
  PipelineFixture fx;
  EvoParams params;
  params.tau = 0.05;
  params.lambda = 8;
  params.seed = 9;
  params.max_generations = 60;
  params.stall_threshold = 5;
  params.bits = {2, 3, 4, 5, 6, 7, 8};
  const SearchResult r = evo_search(fx.eval, params);

  double prev_bits = std::numeric_limits<double>::infinity();
  double last_bits = 0.0;
  for (const auto& e : r.evo_trace) {
    if (e.event == "accept" || e.event == "init") {
      CHECK(e.kl < params.tau);
      if (e.event == "accept") CHECK(e.avg_bits < prev_bits);
      prev_bits = e.avg_bits;
      last_bits = e.avg_bits;
    } else {
      CHECK(e.event == "curation");
      CHECK(e.avg_bits == doctest::Approx(last_bits).epsilon(1e-12));
    }
  }
  CHECK(fx.eval.evaluate(r.spec).kl < params.tau);

  // identical seeds give identical traces; a different seed diverges
  PipelineFixture fx2;
  const SearchResult r2 = evo_search(fx2.eval, params);
  CHECK(r2.spec.bits == r.spec.bits);
  REQUIRE(r2.evo_trace.size() == r.evo_trace.size());
  for (std::size_t i = 0; i < r.evo_trace.size(); ++i) {
    CHECK(r2.evo_trace[i].avg_bits == r.evo_trace[i].avg_bits);
    CHECK(r2.evo_trace[i].kl == r.evo_trace[i].kl);
  }
}

TEST_CASE("evo search: curation preserves average bits exactly") {
  // Equal-sized groups with a threshold that stalls quickly force curation.
  PipelineFixture fx;
  EvoParams params;
  params.tau = 0.02;
  params.lambda = 4;
  params.seed = 21;
  params.max_generations = 80;
  params.stall_threshold = 3;
  params.bits = {4, 5, 6, 7, 8};
  const SearchResult r = evo_search(fx.eval, params);
  bool saw_curation = false;
  double last_bits = 0.0;
  for (const auto& e : r.evo_trace) {
    if (e.event == "curation") {
      saw_curation = true;
      CHECK(e.avg_bits == doctest::Approx(last_bits).epsilon(1e-12));
    } else {
      last_bits = e.avg_bits;
    }
  }
  CHECK(saw_curation);
}

TEST_CASE("quant spec csv") {
  std::vector<WeightGroup> groups{{0, {"layer_0", "layer_1"}, 512}, {1, {"head"}, 512}};
  QuantSpec spec{{4, 8}, QuantMode::Asymmetric, 16};
  CHECK(quant_spec_csv(spec, groups) ==
        "group,layers,bits\n0,layer_0;layer_1,4\n1,head,8\n");
}
