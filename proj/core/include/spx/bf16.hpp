// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>

namespace spx {

// Brain float: the upper 16 bits of an IEEE binary32.
struct bf16 {
  std::uint16_t bits = 0;

  static constexpr bf16 from_bits(std::uint16_t raw) {
    bf16 v;
    v.bits = raw;
    return v;
  }

  // Round to nearest, ties to even. NaNs stay quiet NaNs.
  static constexpr bf16 from_float(float value) {
    std::uint32_t u = std::bit_cast<std::uint32_t>(value);
    if ((u & 0x7fffffffu) > 0x7f800000u) {
      return from_bits(static_cast<std::uint16_t>((u >> 16) | 0x0040u));
    }
    u += 0x7fffu + ((u >> 16) & 1u);
    return from_bits(static_cast<std::uint16_t>(u >> 16));
  }

  constexpr float to_float() const {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
  }

  constexpr bool is_zero() const { return (bits & 0x7fffu) == 0; }

  friend constexpr bool operator==(bf16, bf16) = default;
};

static_assert(sizeof(bf16) == 2);

inline constexpr float to_float(bf16 v) { return v.to_float(); }
inline constexpr float to_float(float v) { return v; }
inline constexpr float to_float(std::int8_t v) { return static_cast<float>(v); }

}  // namespace spx
