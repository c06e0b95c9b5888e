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

#include "mixq/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace mixq::io {
namespace {

constexpr char kMagic[4] = {'S', 'L', 'Q', 'W'};

void put_bytes(std::ostream& os, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) throw IoError("write failed");
}

void get_bytes(std::istream& is, void* data, std::size_t n) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw ParseError("truncated file");
}

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  put_bytes(os, b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  get_bytes(is, b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_u8(std::ostream& os, std::uint8_t v) { put_bytes(os, &v, 1); }

std::uint8_t get_u8(std::istream& is) {
  std::uint8_t v;
  get_bytes(is, &v, 1);
  return v;
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

void put_i32(std::ostream& os, std::int32_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
}

std::int32_t get_i32(std::istream& is) { return static_cast<std::int32_t>(get_u32(is)); }

struct Header {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint8_t bits = 0;
  std::uint8_t mode = 0;
  std::uint32_t group_size = 0;
};

void write_header(std::ostream& os, const Header& h) {
  put_bytes(os, kMagic, 4);
  put_u32(os, kContainerVersion);
  put_u32(os, h.rows);
  put_u32(os, h.cols);
  put_u8(os, h.bits);
  put_u8(os, h.mode);
  put_u32(os, h.group_size);
}

Header read_header(std::istream& is) {
  char magic[4];
  get_bytes(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError("bad magic");
  const std::uint32_t version = get_u32(is);
  if (version != kContainerVersion) {
    throw ParseError("unsupported container version " + std::to_string(version));
  }
  Header h;
  h.rows = get_u32(is);
  h.cols = get_u32(is);
  h.bits = get_u8(is);
  h.mode = get_u8(is);
  h.group_size = get_u32(is);
  return h;
}

void check_tail(std::istream& is) {
  if (is.peek() != std::char_traits<char>::eof()) {
    throw ParseError("trailing bytes after tensor payload");
  }
}

}  // namespace

void write_quantized(std::ostream& os, const QuantizedGroupTensor& q) {
  Header h;
  h.rows = static_cast<std::uint32_t>(q.rows);
  h.cols = static_cast<std::uint32_t>(q.cols);
  h.bits = static_cast<std::uint8_t>(q.bits);
  h.mode = static_cast<std::uint8_t>(q.mode);
  h.group_size = static_cast<std::uint32_t>(q.group_size);
  write_header(os, h);
  for (Index i = 0; i < q.scales.size(); ++i) put_f32(os, static_cast<float>(q.scales[i]));
  if (q.mode == QuantMode::Asymmetric) {
    for (Index i = 0; i < q.zeropoints.size(); ++i) put_i32(os, q.zeropoints[i]);
  }
  put_bytes(os, q.codes.data(), static_cast<std::size_t>(q.rows) * static_cast<std::size_t>(q.cols));
}

QuantizedGroupTensor read_quantized(std::istream& is) {
  const Header h = read_header(is);
  if (h.mode > 1) throw ParseError("expected quantized tensor record");
  if (h.bits < 2 || h.bits > 8) throw ParseError("invalid bit width in header");
  if (h.group_size == 0) throw ParseError("invalid group size in header");
  QuantizedGroupTensor q;
  q.rows = h.rows;
  q.cols = h.cols;
  q.bits = h.bits;
  q.mode = static_cast<QuantMode>(h.mode);
  q.group_size = h.group_size;
  const Index groups = q.num_groups();
  q.scales.resize(groups);
  for (Index i = 0; i < groups; ++i) q.scales[i] = static_cast<double>(get_f32(is));
  if (q.mode == QuantMode::Asymmetric) {
    q.zeropoints.resize(groups);
    for (Index i = 0; i < groups; ++i) q.zeropoints[i] = get_i32(is);
  }
  q.codes.resize(q.rows, q.cols);
  get_bytes(is, q.codes.data(), static_cast<std::size_t>(q.rows) * static_cast<std::size_t>(q.cols));
  const int max_code = q.levels() - 1;
  for (Index r = 0; r < q.rows; ++r) {
    for (Index c = 0; c < q.cols; ++c) {
      if (q.codes(r, c) > max_code) throw ParseError("code out of range for bit width");
    }
  }
  check_tail(is);
  return q;
}

void write_raw(std::ostream& os, const Matd& values) {
  Header h;
  h.rows = static_cast<std::uint32_t>(values.rows());
  h.cols = static_cast<std::uint32_t>(values.cols());
  h.bits = 32;
  h.mode = kModeRaw;
  h.group_size = 0;
  write_header(os, h);
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      put_f32(os, static_cast<float>(values(r, c)));
    }
  }
}

Matd read_raw(std::istream& is) {
  const Header h = read_header(is);
  if (h.mode != kModeRaw) throw ParseError("expected raw tensor record");
  if (h.bits != 32) throw ParseError("invalid bit width for raw record");
  Matd out(h.rows, h.cols);
  for (Index r = 0; r < out.rows(); ++r) {
    for (Index c = 0; c < out.cols(); ++c) {
      out(r, c) = static_cast<double>(get_f32(is));
    }
  }
  check_tail(is);
  return out;
}

namespace {

template <typename Fn>
void with_output_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  fn(os);
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

template <typename Fn>
auto with_input_file(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return fn(is);
}

}  // namespace

void write_quantized_file(const std::filesystem::path& path, const QuantizedGroupTensor& q) {
  with_output_file(path, [&](std::ostream& os) { write_quantized(os, q); });
}

QuantizedGroupTensor read_quantized_file(const std::filesystem::path& path) {
  return with_input_file(path, [](std::istream& is) { return read_quantized(is); });
}

void write_raw_file(const std::filesystem::path& path, const Matd& values) {
  with_output_file(path, [&](std::ostream& os) { write_raw(os, values); });
}

Matd read_raw_file(const std::filesystem::path& path) {
  return with_input_file(path, [](std::istream& is) { return read_raw(is); });
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a64_hex(const std::vector<unsigned char>& bytes) {
  const std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 0; i < 16; ++i) out[15 - i] = digits[(h >> (4 * i)) & 0xf];
  return out;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace mixq::io
