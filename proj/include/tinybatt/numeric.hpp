// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace tinybatt {

// Round half away from zero. std::round already has these semantics; the
// wrapper exists so every quantization point names the rule it relies on.
inline double round_half_away(double x) { return std::round(x); }

// Integer division of a signed numerator by a positive denominator, rounded
// half away from zero.
constexpr std::int64_t div_round_half_away(std::int64_t num, std::int64_t den) {
  if (num >= 0) return (2 * num + den) / (2 * den);
  return -((-2 * num + den) / (2 * den));
}

// Arithmetic right shift by `shift` bits with round-half-away-from-zero,
// written only in terms of non-negative shifts.
constexpr std::int64_t shift_round_half_away(std::int64_t value, int shift) {
  if (shift == 0) return value;
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (value >= 0) return (value + half) >> shift;
  return -((-value + half) >> shift);
}

template <typename T>
constexpr T clamp_to(std::int64_t v, std::int64_t lo, std::int64_t hi) {
  return static_cast<T>(v < lo ? lo : (v > hi ? hi : v));
}

// Seeded generator used everywhere randomness is needed (weights, fixture
// scenes, golden inputs, path sampling). Engine and every derived draw are
// defined bit-for-bit so another implementation can reproduce the streams:
//   engine: std::mt19937_64 seeded with the 64-bit seed
//   uniform(): (next >> 11) * 2^-53
//   below(n): rejection sampling on the top bits
//   shuffle: Fisher-Yates from the back using below()
class Rng {
 public:
  static constexpr std::string_view kName = "mt19937_64/v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  std::int8_t int8() { return static_cast<std::int8_t>(static_cast<std::uint8_t>(next() >> 56)); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a 64-bit, used for content digests embedded in emitted sources.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(std::span<const std::uint8_t>(
                     reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
                 h);
}

}  // namespace tinybatt
