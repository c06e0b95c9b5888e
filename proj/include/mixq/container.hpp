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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mixq/quantize.hpp"
#include "mixq/types.hpp"

namespace mixq::io {

// SLQW tensor container, little-endian:
//   magic "SLQW" | version u32 | rows u32 | cols u32 | bits u8 | mode u8 |
//   group_size u32 | payload
// payload, quantized modes (0 = asym, 1 = sym):
//   scales f32[G] | zeropoints i32[G] (asym only) | codes u8[rows*cols]
// payload, raw mode (2): values f32[rows*cols]; bits = 32, group_size = 0.
// Raw records hold full-precision checkpoint tensors; their values are
// f32-representable by construction so the round trip is bit-exact.
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint8_t kModeRaw = 2;

void write_quantized(std::ostream& os, const QuantizedGroupTensor& q);
QuantizedGroupTensor read_quantized(std::istream& is);

void write_raw(std::ostream& os, const Matd& values);
Matd read_raw(std::istream& is);

void write_quantized_file(const std::filesystem::path& path, const QuantizedGroupTensor& q);
QuantizedGroupTensor read_quantized_file(const std::filesystem::path& path);
void write_raw_file(const std::filesystem::path& path, const Matd& values);
Matd read_raw_file(const std::filesystem::path& path);

// FNV-1a 64-bit, hex-encoded; used for checkpoint integrity checks.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string fnv1a64_hex(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

}  // namespace mixq::io
