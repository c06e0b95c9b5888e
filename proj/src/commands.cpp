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

#include "mixq/commands.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "mixq/allocate.hpp"
#include "mixq/container.hpp"
#include "mixq/eval.hpp"
#include "mixq/rng.hpp"
#include "mixq/sensitivity.hpp"

namespace mixq {

using nlohmann::json;

namespace {

namespace fs = std::filesystem;

// Shortest-round-trip decimal for CSV cells; bit-identical inputs format
// identically, which the determinism contract relies on.
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  if (back == v) {
    for (int prec = 1; prec <= 16; ++prec) {
      char shorter[32];
      std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
      std::sscanf(shorter, "%lf", &back);
      if (back == v) return shorter;
    }
  }
  return buf;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << text;
  if (!os.flush()) throw IoError("write failed: " + path.string());
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  try {
    json j;
    is >> j;
    return j;
  } catch (const json::exception& e) {
    throw ParseError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void ensure_output_dir(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + config.output_dir.string());
}

SyntheticModel load_pipeline_model(const RunConfig& config) {
  const fs::path dir = config.output_dir / "model";
  if (!fs::exists(dir / "manifest.json")) {
    throw IoError("missing model checkpoint: " + (dir / "manifest.json").string() +
                  " (run the build command first)");
  }
  return load_model(dir);
}

struct Pipeline {
  SyntheticModel model;
  CalibrationSet calib;
  std::vector<WeightGroup> groups;
};

Pipeline load_pipeline(const RunConfig& config) {
  Pipeline p{load_pipeline_model(config), {}, {}};
  p.calib = generate_calibration(p.model.config().hidden, config.calib.positions,
                                 config.calib.seed);
  p.groups = partition_groups(p.model, config.partition.rule, config.partition.exclude);
  return p;
}

SensitivityDatabase load_database(const RunConfig& config, const Pipeline& p) {
  const fs::path path = config.output_dir / "sensitivity.json";
  if (!fs::exists(path)) {
    throw IoError("missing sensitivity database: " + path.string() +
                  " (run the sensitivity command first)");
  }
  SensitivityDatabase db = SensitivityDatabase::from_json(read_json_file(path));
  if (db.num_groups() != static_cast<int>(p.groups.size())) {
    throw ConfigError("sensitivity database group count does not match partition config");
  }
  for (const auto& g : p.groups) {
    if (db.group_sizes[g.id] != g.parameter_count) {
      throw ConfigError("sensitivity database group sizes do not match partition config");
    }
  }
  return db;
}

}  // namespace

json fidelity_to_json(const FidelityReport& report) {
  json bins = json::array();
  for (int b = 0; b < EntropyBins::kCount; ++b) {
    const BinStats& s = report.flips_by_entropy_bin[b];
    bins.push_back({{"bin", b},
                    {"entropy_lo", EntropyBins::lower_edge(b)},
                    {"entropy_hi", b == EntropyBins::kCount - 1
                                       ? json()
                                       : json(EntropyBins::upper_edge(b))},
                    {"positions", s.positions},
                    {"flips", s.flips},
                    {"flip_rate", s.flip_rate}});
  }
  return {{"ear", report.ear},
          {"kl", report.kl},
          {"margin_at_disagreement", report.margin_at_disagreement},
          {"margin_empty", report.margin_empty},
          {"flip_rate", report.flip_rate},
          {"flips", report.flips},
          {"ppl_ratio", report.ppl_ratio},
          {"positions", report.positions},
          {"kl_floor_hits", report.kl_floor_hits},
          {"flips_by_entropy_bin", std::move(bins)}};
}

void cmd_build(const RunConfig& config, std::ostream& out) {
  ensure_output_dir(config);
  const SyntheticModel model = SyntheticModel::build(config.model);
  const fs::path dir = config.output_dir / "model";
  save_model(model, dir);
  out << "built model: d=" << config.model.hidden << " V=" << config.model.vocab
      << " depth=" << config.model.depth << " gamma_target=" << config.model.gamma_target
      << " seed=" << config.model.seed << "\n";
  out << "checkpoint: " << dir.string() << " (" << model.total_parameters()
      << " parameters)\n";
}

void cmd_sensitivity(const RunConfig& config, std::ostream& out) {
  ensure_output_dir(config);
  Pipeline p = load_pipeline(config);
  QuantEvaluator eval(p.model, p.calib, p.groups, config.metrics.top_k,
                      config.quantizer.mode, config.quantizer.group_size, config.threads);

  SensitivityDatabase db;
  long expected = 0;
  if (config.sensitivity.method == "shapley") {
    db = estimate_shapley(eval, config.quantizer.bits, config.sensitivity.permutations,
                          config.sensitivity.seed, config.sensitivity.exhaustive);
    if (!config.sensitivity.exhaustive) {
      expected = shapley_pass_count(static_cast<int>(p.groups.size()),
                                    static_cast<int>(config.quantizer.bits.size()),
                                    config.sensitivity.permutations);
    } else {
      expected = db.meta.forward_passes;
    }
  } else {
    db = estimate_linear(eval, config.quantizer.bits, config.sensitivity.trials,
                         config.sensitivity.noise_scale, config.sensitivity.seed);
    int active = 0;
    for (bool degenerate : db.degenerate_group) active += degenerate ? 0 : 1;
    expected = linear_pass_count(active, config.sensitivity.trials);
  }
  if (db.meta.forward_passes != expected) {
    throw std::logic_error("forward-pass accounting mismatch: counted " +
                           std::to_string(db.meta.forward_passes) + ", expected " +
                           std::to_string(expected));
  }
  write_json_file(config.output_dir / "sensitivity.json", db.to_json());
  out << "sensitivity method=" << config.sensitivity.method
      << " groups=" << p.groups.size() << " bitwidths=" << config.quantizer.bits.size()
      << "\n";
  out << "forward passes: " << db.meta.forward_passes << "\n";
  out << "database: " << (config.output_dir / "sensitivity.json").string() << "\n";
}

namespace {

void print_summary(std::ostream& out, const SearchResult& result,
                   const FidelityReport& measured) {
  out << "kind        budget  eff_bpp  pred_kl     pred_ear  meas_kl     meas_ear  flip_rate\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s  %6.3f  %7.4f  %10.6f  %8.5f  %10.6f  %8.5f  %9.6f\n",
                result.kind.c_str(), result.achieved_budget, result.effective_bpp,
                result.predicted.kl_hat, result.predicted.ear_hat, measured.kl, measured.ear,
                measured.flip_rate);
  out << line;
}

}  // namespace

void cmd_search(const RunConfig& config, std::ostream& out) {
  ensure_output_dir(config);
  Pipeline p = load_pipeline(config);
  QuantEvaluator eval(p.model, p.calib, p.groups, config.metrics.top_k,
                      config.quantizer.mode, config.quantizer.group_size, config.threads);

  SearchResult result;
  if (config.search.kind == "dl") {
    const SensitivityDatabase db = load_database(config, p);
    result = search_dl(db, p.groups, config.search.ear_target, config.search.epsilon,
                       config.search.allowed_bits);
  } else if (config.search.kind == "tl") {
    const SensitivityDatabase db = load_database(config, p);
    TlCalibration cal;
    if (config.search.benchmark_baseline && config.search.benchmark_calibrated) {
      cal = calibrate_tl(db, p.groups, eval, config.search.b_cal,
                         *config.search.benchmark_baseline,
                         *config.search.benchmark_calibrated);
    } else {
      cal = calibrate_tl_agreement_proxy(db, p.groups, eval, config.search.b_cal);
    }
    const long passes_before = eval.forward_passes();
    result = search_tl(db, p.groups, cal, config.search.recovery_target,
                       config.search.epsilon, config.search.allowed_bits);
    result.forward_passes = eval.forward_passes() - passes_before;  // must stay 0
  } else {
    EvoParams params;
    params.tau = config.search.tau;
    params.lambda = config.search.lambda;
    params.seed = config.search.seed;
    params.max_generations = config.search.max_generations;
    params.stall_threshold = config.search.stall_threshold;
    params.penalty = config.search.penalty;
    params.bits = config.search.allowed_bits.value_or(config.quantizer.bits);
    result = evo_search(eval, params);
  }

  result.effective_bpp = average_effective_bits(result.spec, p.groups);
  const DistributionSnapshot measured_snap = eval.snapshot(result.spec);
  const FidelityReport measured =
      compute_report(eval.reference(), measured_snap, config.metrics.top_k);

  json result_json = result.to_json();
  result_json["measured"] = fidelity_to_json(measured);
  write_json_file(config.output_dir / "search_result.json", result_json);
  write_text_file(config.output_dir / "spec.csv", quant_spec_csv(result.spec, p.groups));

  print_summary(out, result, measured);
  if (result.tl.has_value()) {
    out << "tl: alpha_rec=" << result.tl->alpha_rec << " rho=" << result.tl->rho
        << " threshold=" << result.tl->threshold_for(config.search.recovery_target)
        << " search_forward_passes=" << result.forward_passes << "\n";
  }
  out << "result: " << (config.output_dir / "search_result.json").string() << "\n";
  out << "manifest: " << (config.output_dir / "spec.csv").string() << "\n";
}

void cmd_validate_gamma(const RunConfig& config, std::ostream& out) {
  ensure_output_dir(config);
  std::ostringstream csv;
  csv << "gamma,bits,samples,mse_asym,mse_sym,measured_ratio,predicted_gamma_sq\n";
  for (std::size_t gi = 0; gi < config.gamma.gammas.size(); ++gi) {
    const double gamma = config.gamma.gammas[gi];
    // R = 2 and M = gamma give exactly the requested centering inefficiency
    // for gamma in [1, 2]; gamma > 2 shifts the interval entirely positive.
    const double upper = gamma;
    const double lower = gamma - 2.0;
    for (int bits : config.gamma.bits) {
      const int levels = 1 << bits;
      GridParams asym{lower, upper, levels, QuantMode::Asymmetric};
      GridParams sym{lower, upper, levels, QuantMode::Symmetric};
      Rng rng(mix_seed(config.gamma.seed, gi, static_cast<std::uint64_t>(bits)));
      double se_asym = 0.0, se_sym = 0.0;
      for (long s = 0; s < config.gamma.samples; ++s) {
        const double w = rng.uniform(lower, upper);
        const double ea = quantize_value(w, asym) - w;
        const double es = quantize_value(w, sym) - w;
        se_asym += ea * ea;
        se_sym += es * es;
      }
      const double mse_asym = se_asym / static_cast<double>(config.gamma.samples);
      const double mse_sym = se_sym / static_cast<double>(config.gamma.samples);
      csv << fmt(gamma) << "," << bits << "," << config.gamma.samples << ","
          << fmt(mse_asym) << "," << fmt(mse_sym) << "," << fmt(mse_sym / mse_asym) << ","
          << fmt(gamma * gamma) << "\n";
    }
  }
  write_text_file(config.output_dir / "gamma_validation.csv", csv.str());
  out << "gamma sweep: " << config.gamma.gammas.size() << " gammas x "
      << config.gamma.bits.size() << " bitwidths, " << config.gamma.samples
      << " samples each\n";
  out << "csv: " << (config.output_dir / "gamma_validation.csv").string() << "\n";
}

void cmd_report(const RunConfig& config, std::ostream& out) {
  const fs::path model_manifest = config.output_dir / "model" / "manifest.json";
  const fs::path search_path = config.output_dir / "search_result.json";
  std::vector<std::string> missing;
  if (!fs::exists(model_manifest)) missing.push_back(model_manifest.string());
  if (!fs::exists(search_path)) missing.push_back(search_path.string());
  if (!missing.empty()) {
    std::string msg = "missing report inputs:";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }

  Pipeline p = load_pipeline(config);
  const json search_json = read_json_file(search_path);
  QuantSpec spec;
  try {
    spec.bits = search_json.at("spec").at("bits").get<std::vector<int>>();
    spec.mode = quant_mode_from_string(search_json.at("spec").at("mode").get<std::string>());
    spec.group_size = search_json.at("spec").at("group_size").get<Index>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid search result: ") + e.what());
  }
  if (spec.bits.size() != p.groups.size()) {
    throw ConfigError("search result group count does not match partition config");
  }

  QuantEvaluator eval(p.model, p.calib, p.groups, config.metrics.top_k, spec.mode,
                      spec.group_size, config.threads);
  const DistributionSnapshot snap = eval.snapshot(spec);
  const FidelityReport report = compute_report(eval.reference(), snap, config.metrics.top_k);
  const std::vector<double> curve = layer_cumulative_ear(p.model, p.calib, spec, p.groups,
                                                         config.metrics.top_k, config.threads);

  std::ostringstream flips_csv;
  flips_csv << "bin,entropy_lo,entropy_hi,positions,flips,flip_rate\n";
  for (int b = 0; b < EntropyBins::kCount; ++b) {
    const BinStats& s = report.flips_by_entropy_bin[b];
    flips_csv << b << "," << fmt(EntropyBins::lower_edge(b)) << ",";
    if (b == EntropyBins::kCount - 1) {
      flips_csv << "inf";
    } else {
      flips_csv << fmt(EntropyBins::upper_edge(b));
    }
    flips_csv << "," << s.positions << "," << s.flips << "," << fmt(s.flip_rate) << "\n";
  }
  write_text_file(config.output_dir / "flips_by_entropy.csv", flips_csv.str());

  std::ostringstream layer_csv;
  layer_csv << "prefix_groups,ear\n";
  for (std::size_t j = 0; j < curve.size(); ++j) {
    layer_csv << j << "," << fmt(curve[j]) << "\n";
  }
  write_text_file(config.output_dir / "layer_ear.csv", layer_csv.str());

  std::ostringstream pos_csv;
  pos_csv << "position,entropy,ref_top1_prob,ref_margin,quant_top1_prob,flipped\n";
  const DistributionSnapshot& ref = eval.reference();
  for (Index i = 0; i < ref.positions(); ++i) {
    pos_csv << i << "," << fmt(ref.entropy[i]) << "," << fmt(ref.probs(i, 0)) << ","
            << fmt(ref.probs(i, 0) - ref.probs(i, 1)) << "," << fmt(snap.probs(i, 0)) << ","
            << (ref.argmax[i] != snap.argmax[i] ? 1 : 0) << "\n";
  }
  write_text_file(config.output_dir / "positions.csv", pos_csv.str());

  std::ostringstream trace_csv;
  if (search_json.contains("evo_trace")) {
    trace_csv << "generation,event,avg_bits,kl\n";
    for (const auto& t : search_json.at("evo_trace")) {
      trace_csv << t.at("generation").get<int>() << "," << t.at("event").get<std::string>()
                << "," << fmt(t.at("avg_bits").get<double>()) << ","
                << fmt(t.at("kl").get<double>()) << "\n";
    }
  } else {
    trace_csv << "probe_budget,achieved_budget,kl_hat,ear_hat,feasible\n";
    for (const auto& t : search_json.at("trace")) {
      trace_csv << fmt(t.at("probe_budget").get<double>()) << ","
                << fmt(t.at("achieved_budget").get<double>()) << ","
                << fmt(t.at("kl_hat").get<double>()) << ","
                << fmt(t.at("ear_hat").get<double>()) << ","
                << (t.at("feasible").get<bool>() ? 1 : 0) << "\n";
    }
  }
  write_text_file(config.output_dir / "trace.csv", trace_csv.str());

  json layer_curve = json::array();
  for (std::size_t j = 0; j < curve.size(); ++j) {
    layer_curve.push_back({{"prefix_groups", j}, {"ear", curve[j]}});
  }
  const json report_json = {
      {"model",
       {{"hidden", p.model.config().hidden},
        {"vocab", p.model.config().vocab},
        {"depth", p.model.config().depth},
        {"gamma_target", p.model.config().gamma_target},
        {"seed", p.model.config().seed},
        {"parameters", p.model.total_parameters()}}},
      {"search", search_json},
      {"fidelity", fidelity_to_json(report)},
      {"layer_cumulative_ear", std::move(layer_curve)},
      {"files",
       {{"flips_by_entropy", "flips_by_entropy.csv"},
        {"layer_ear", "layer_ear.csv"},
        {"positions", "positions.csv"},
        {"trace", "trace.csv"}}}};
  write_json_file(config.output_dir / "report.json", report_json);
  out << "report: " << (config.output_dir / "report.json").string() << "\n";
}

int run_command(const std::string& name, const RunConfig& config, std::ostream& out,
                std::ostream& err) {
  try {
    if (name == "build") {
      cmd_build(config, out);
    } else if (name == "sensitivity") {
      cmd_sensitivity(config, out);
    } else if (name == "search") {
      cmd_search(config, out);
    } else if (name == "validate-gamma") {
      cmd_validate_gamma(config, out);
    } else if (name == "report") {
      cmd_report(config, out);
    } else {
      err << "unknown command: " << name << "\n";
      return kExitConfig;
    }
    return kExitOk;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    if (!e.diagnostic.empty()) {
      try {
        write_text_file(config.output_dir / "search_error.json", e.diagnostic + "\n");
        err << "diagnostic: " << (config.output_dir / "search_error.json").string() << "\n";
      } catch (const std::exception&) {
        err << e.diagnostic << "\n";
      }
    }
    return kExitInfeasible;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace mixq
