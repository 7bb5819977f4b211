// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Golden vector file, little-endian:
//   "GLD1" | u32 version (1) | u32 records | u32 input_len | u32 output_len
//   then per record: input bytes | output bytes | u32 predicted class

#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "tinybatt/engine_int.hpp"
#include "tinybatt/error.hpp"
#include "tinybatt/numeric.hpp"

namespace tinybatt {

inline constexpr std::array<char, 4> kGoldenMagic{'G', 'L', 'D', '1'};
inline constexpr std::uint32_t kGoldenVersion = 1;

struct GoldenRecord {
  std::vector<std::int8_t> input;
  std::vector<std::int8_t> output;
  std::uint32_t predicted = 0;
};

struct GoldenFile {
  std::uint32_t input_length = 0;
  std::uint32_t output_length = 0;
  std::vector<GoldenRecord> records;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DecodeError("golden file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_golden(const GoldenFile& g) {
  std::vector<std::uint8_t> out(kGoldenMagic.begin(), kGoldenMagic.end());
  detail::put_u32(out, kGoldenVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(g.records.size()));
  detail::put_u32(out, g.input_length);
  detail::put_u32(out, g.output_length);
  for (const auto& r : g.records) {
    if (r.input.size() != g.input_length || r.output.size() != g.output_length)
      throw ParameterError("golden record length does not match the header");
    for (auto v : r.input) out.push_back(static_cast<std::uint8_t>(v));
    for (auto v : r.output) out.push_back(static_cast<std::uint8_t>(v));
    detail::put_u32(out, r.predicted);
  }
  return out;
}

inline GoldenFile parse_golden(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kGoldenMagic.data(), 4) != 0)
    throw DecodeError("golden file has a bad magic (expected GLD1)");
  std::size_t pos = 4;
  if (detail::get_u32(bytes, pos) != kGoldenVersion) throw DecodeError("unsupported golden file version");
  GoldenFile g;
  const std::uint32_t count = detail::get_u32(bytes, pos);
  g.input_length = detail::get_u32(bytes, pos);
  g.output_length = detail::get_u32(bytes, pos);
  const std::size_t record_bytes = std::size_t{g.input_length} + g.output_length + 4;
  if (bytes.size() - pos != record_bytes * count) throw DecodeError("golden file length does not match its header");
  g.records.resize(count);
  for (auto& r : g.records) {
    r.input.resize(g.input_length);
    r.output.resize(g.output_length);
    std::memcpy(r.input.data(), bytes.data() + pos, g.input_length);
    pos += g.input_length;
    std::memcpy(r.output.data(), bytes.data() + pos, g.output_length);
    pos += g.output_length;
    r.predicted = detail::get_u32(bytes, pos);
  }
  return g;
}

// n seeded uniform int8 inputs (one Rng byte per element) and the integer
// engine's logits and prediction for each.
inline GoldenFile make_golden(const QuantizedModel& qm, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ParameterError("golden vector count must be at least 1");
  const auto& in_spec = qm.graph.tensor(qm.graph.input);
  GoldenFile g;
  g.input_length = static_cast<std::uint32_t>(in_spec.shape.elements());
  g.output_length = static_cast<std::uint32_t>(qm.graph.tensor(qm.graph.logits_tensor()).shape.elements());
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    GoldenRecord r;
    r.input.resize(g.input_length);
    for (auto& v : r.input) v = rng.int8();
    const auto result = run_int(qm, IntTensor{in_spec.shape, r.input, qm.params(qm.graph.input)});
    r.output = result.logits.data;
    r.predicted = static_cast<std::uint32_t>(result.predicted);
    g.records.push_back(std::move(r));
  }
  return g;
}

inline std::vector<std::uint8_t> emit_golden_vectors(const QuantizedModel& qm, std::size_t n, std::uint64_t seed) {
  return serialize_golden(make_golden(qm, n, seed));
}

}  // namespace tinybatt
