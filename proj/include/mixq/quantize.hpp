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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "mixq/types.hpp"

namespace mixq {

// Uniform scalar quantization grid over [lower, upper] (asymmetric) or over
// the zero-anchored interval [-max_abs, max_abs] (symmetric).
struct GridParams {
  double lower = 0.0;       // L
  double upper = 0.0;       // U
  int levels = 0;           // n
  QuantMode mode = QuantMode::Asymmetric;

  double range() const { return upper - lower; }                       // R
  double max_abs() const { return std::max(std::abs(lower), std::abs(upper)); }  // M
};

// gamma = 2M/R: how much of a zero-anchored grid a skewed value range wastes.
inline double centering_inefficiency(double lower, double upper) {
  if (lower == upper) throw std::invalid_argument("zero dynamic range");
  if (lower > upper) throw std::invalid_argument("invalid range: lower > upper");
  const double max_abs = std::max(std::abs(lower), std::abs(upper));
  return 2.0 * max_abs / (upper - lower);
}

// Distance between adjacent grid levels. The symmetric/asymmetric ratio
// equals the centering inefficiency exactly.
inline double step_size(const GridParams& grid) {
  if (grid.levels < 2) throw std::invalid_argument("fewer than two levels");
  if (grid.lower >= grid.upper) {
    if (grid.lower == grid.upper) throw std::invalid_argument("zero dynamic range");
    throw std::invalid_argument("invalid range: lower > upper");
  }
  const double denom = static_cast<double>(grid.levels - 1);
  return grid.mode == QuantMode::Asymmetric ? grid.range() / denom
                                            : 2.0 * grid.max_abs() / denom;
}

// High-rate quantization noise variance, sigma^2 = step^2 / 12.
inline double noise_variance(double step) {
  if (step < 0.0) throw std::invalid_argument("negative step size");
  return step * step / 12.0;
}

// Round-half-to-even on the code lattice. nearbyint honors the default
// FE_TONEAREST mode, i.e. ties to even.
inline double round_code(double x) { return std::nearbyint(x); }

// Nearest grid level to w; identical rounding to group_quantize.
inline double quantize_value(double w, const GridParams& grid) {
  const double step = step_size(grid);
  if (grid.mode == QuantMode::Asymmetric) {
    const double zp = round_code(-grid.lower / step);
    const double hi = static_cast<double>(grid.levels - 1);
    const double code = std::clamp(round_code(w / step) + zp, 0.0, hi);
    return step * (code - zp);
  }
  const double mid = static_cast<double>(grid.levels - 1) / 2.0;
  const double code = std::clamp(round_code(w / step + mid), 0.0,
                                 static_cast<double>(grid.levels - 1));
  return step * (code - mid);
}

// Group-quantized weight matrix. Groups are contiguous runs of group_size
// entries along the input (column) dimension of each row; a short remainder
// group at the end of a row keeps its own statistics.
struct QuantizedGroupTensor {
  Index rows = 0;
  Index cols = 0;
  int bits = 0;               // in {2..8}; levels = 2^bits
  QuantMode mode = QuantMode::Asymmetric;
  Index group_size = 0;
  Matu8 codes;                // rows x cols, each in [0, levels-1]
  Vecd scales;                // one per group, row-major group order
  Veci32 zeropoints;          // one per group; empty in symmetric mode

  int levels() const { return 1 << bits; }
  Index groups_per_row() const { return (cols + group_size - 1) / group_size; }
  Index num_groups() const { return rows * groups_per_row(); }
  // Symmetric grids place their zero reference at the (half-integer) grid
  // midpoint instead of a stored zeropoint.
  double symmetric_midpoint() const { return (levels() - 1) / 2.0; }
};

namespace detail {

struct GroupQuantScratch {
  double scale = 0.0;
  std::int32_t zeropoint = 0;
};

// Quantizes one contiguous group in place into `codes`.
template <typename SrcSeg, typename CodeSeg>
GroupQuantScratch quantize_group(const SrcSeg& src, CodeSeg&& codes, int levels,
                                 QuantMode mode) {
  const double hi_code = static_cast<double>(levels - 1);
  GroupQuantScratch out;
  if (mode == QuantMode::Asymmetric) {
    double lo = src.minCoeff();
    double hi = src.maxCoeff();
    if (lo == hi) {
      // Constant group: anchor the interval at zero so the value stays
      // exactly representable. An all-zero group degenerates to scale 0.
      lo = std::min(lo, 0.0);
      hi = std::max(hi, 0.0);
    }
    if (lo == hi) {
      out.scale = 0.0;
      out.zeropoint = 0;
      codes.setZero();
      return out;
    }
    const double step = (hi - lo) / hi_code;
    const double zp = round_code(-lo / step);
    out.scale = step;
    out.zeropoint = static_cast<std::int32_t>(zp);
    for (Index k = 0; k < src.size(); ++k) {
      const double code = std::clamp(round_code(src(k) / step) + zp, 0.0, hi_code);
      codes(k) = static_cast<std::uint8_t>(code);
    }
    return out;
  }
  const double max_abs = src.cwiseAbs().maxCoeff();
  const double mid = hi_code / 2.0;
  if (max_abs == 0.0) {
    out.scale = 0.0;
    const auto canonical = static_cast<std::uint8_t>(round_code(mid));
    codes.setConstant(canonical);
    return out;
  }
  const double step = 2.0 * max_abs / hi_code;
  out.scale = step;
  for (Index k = 0; k < src.size(); ++k) {
    const double code = std::clamp(round_code(src(k) / step + mid), 0.0, hi_code);
    codes(k) = static_cast<std::uint8_t>(code);
  }
  return out;
}

}  // namespace detail

template <typename Derived>
QuantizedGroupTensor group_quantize(const Eigen::MatrixBase<Derived>& weights,
                                    int bits, Index group_size, QuantMode mode) {
  if (bits < 2 || bits > 8) throw std::invalid_argument("bits out of range [2, 8]");
  if (group_size < 1) throw std::invalid_argument("group_size must be positive");
  if (!weights.allFinite()) throw std::invalid_argument("non-finite input");

  QuantizedGroupTensor q;
  q.rows = weights.rows();
  q.cols = weights.cols();
  q.bits = bits;
  q.mode = mode;
  q.group_size = group_size;
  q.codes.resize(q.rows, q.cols);
  q.scales.resize(q.num_groups());
  if (mode == QuantMode::Asymmetric) {
    q.zeropoints.resize(q.num_groups());
  }

  const Index gpr = q.groups_per_row();
  const int levels = q.levels();
  for (Index r = 0; r < q.rows; ++r) {
    for (Index g = 0; g < gpr; ++g) {
      const Index c0 = g * group_size;
      const Index len = std::min(group_size, q.cols - c0);
      const Index gi = r * gpr + g;
      const auto scratch = detail::quantize_group(
          weights.derived().row(r).segment(c0, len).template cast<double>().eval(),
          q.codes.row(r).segment(c0, len), levels, mode);
      q.scales[gi] = scratch.scale;
      if (mode == QuantMode::Asymmetric) q.zeropoints[gi] = scratch.zeropoint;
    }
  }
  return q;
}

// value = scale * (code - zeropoint); symmetric grids use the half-integer
// grid midpoint as the zero reference.
inline Matd dequantize(const QuantizedGroupTensor& q) {
  Matd out(q.rows, q.cols);
  const Index gpr = q.groups_per_row();
  const double mid = q.symmetric_midpoint();
  for (Index r = 0; r < q.rows; ++r) {
    for (Index g = 0; g < gpr; ++g) {
      const Index c0 = g * q.group_size;
      const Index len = std::min(q.group_size, q.cols - c0);
      const Index gi = r * gpr + g;
      const double scale = q.scales[gi];
      const double zp = q.mode == QuantMode::Asymmetric
                            ? static_cast<double>(q.zeropoints[gi])
                            : mid;
      for (Index k = 0; k < len; ++k) {
        out(r, c0 + k) = scale * (static_cast<double>(q.codes(r, c0 + k)) - zp);
      }
    }
  }
  return out;
}

// Normalized squared Frobenius error ||W - What||_F^2 / ||W||_F^2.
template <typename DerivedA, typename DerivedB>
double reconstruction_error(const Eigen::MatrixBase<DerivedA>& w,
                            const Eigen::MatrixBase<DerivedB>& w_hat) {
  if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols()) {
    throw std::invalid_argument("shape mismatch");
  }
  const double denom = w.derived().template cast<double>().squaredNorm();
  if (denom == 0.0) throw std::invalid_argument("undefined relative error");
  const double num = (w.derived().template cast<double>() -
                      w_hat.derived().template cast<double>())
                         .squaredNorm();
  return num / denom;
}

// Storage cost per parameter once per-group metadata is included: a 16-bit
// scale always, plus a 4-bit zeropoint allowance in asymmetric mode.
struct BitAccount {
  int nominal_bits = 0;
  double overhead_bits_per_param = 0.0;
  double effective_bits = 0.0;
};

inline BitAccount effective_bits(int bits, Index group_size, QuantMode mode) {
  if (bits < 2 || bits > 8) throw std::invalid_argument("bits out of range [2, 8]");
  if (group_size < 1) throw std::invalid_argument("group_size must be positive");
  BitAccount acc;
  acc.nominal_bits = bits;
  const double meta_bits = mode == QuantMode::Asymmetric ? 20.0 : 16.0;
  acc.overhead_bits_per_param = meta_bits / static_cast<double>(group_size);
  acc.effective_bits = bits + acc.overhead_bits_per_param;
  return acc;
}

}  // namespace mixq
