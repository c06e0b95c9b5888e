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

#include <iosfwd>

#include <nlohmann/json.hpp>

#include "mixq/config.hpp"
#include "mixq/metrics.hpp"

namespace mixq {

// Exit codes shared by the CLI and tests.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitIo = 3;

nlohmann::json fidelity_to_json(const FidelityReport& report);

// Pipeline stages. Each writes its artifacts under config.output_dir and
// logs a short summary to `out`. Errors are reported via the exception
// taxonomy in types.hpp.
void cmd_build(const RunConfig& config, std::ostream& out);
void cmd_sensitivity(const RunConfig& config, std::ostream& out);
void cmd_search(const RunConfig& config, std::ostream& out);
void cmd_validate_gamma(const RunConfig& config, std::ostream& out);
void cmd_report(const RunConfig& config, std::ostream& out);

// Runs one command by name, mapping exceptions to exit codes (and writing
// the diagnostic JSON for infeasible searches).
int run_command(const std::string& name, const RunConfig& config, std::ostream& out,
                std::ostream& err);

}  // namespace mixq
