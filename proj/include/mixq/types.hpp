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

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mixq {

// Row-major so that contiguous quantization groups along the input
// dimension of a weight matrix are contiguous in memory.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matd = Mat<double>;
using Vecd = Vec<double>;
using Matu8 = Mat<std::uint8_t>;
using Mati32 = Mat<std::int32_t>;
using Veci32 = Vec<std::int32_t>;
using Index = Eigen::Index;

enum class QuantMode : std::uint8_t { Asymmetric = 0, Symmetric = 1 };

inline const char* to_string(QuantMode mode) {
  return mode == QuantMode::Asymmetric ? "asym" : "sym";
}

inline QuantMode quant_mode_from_string(const std::string& s) {
  if (s == "asym" || s == "asymmetric") return QuantMode::Asymmetric;
  if (s == "sym" || s == "symmetric") return QuantMode::Symmetric;
  throw std::invalid_argument("unknown quantization mode: " + s);
}

// Error taxonomy shared by the CLI exit-code contract:
//   ConfigError -> 1, InfeasibleError -> 2, IoError/ParseError -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& what, std::string diag = {})
      : std::runtime_error(what), diagnostic(std::move(diag)) {}
  std::string diagnostic;  // JSON text describing the failure, may be empty
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : IoError {
  using IoError::IoError;
};

}  // namespace mixq
