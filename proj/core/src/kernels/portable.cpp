// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>

#include "kernels/backends.hpp"
#include "spx/kernel.hpp"

namespace spx {

Lane16 prefix_sum16(const Lane16& v) noexcept {
  Lane16 acc = v;
  for (std::size_t shift = 1; shift < acc.size(); shift *= 2) {
    Lane16 shifted{};
    for (std::size_t i = shift; i < acc.size(); ++i) shifted[i] = acc[i - shift];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += shifted[i];
  }
  return acc;
}

Lane16 row_popcounts(std::span<const std::uint32_t, 16> metadata) noexcept {
  Lane16 out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint32_t>(std::popcount(metadata[i]));
  return out;
}

namespace detail {

std::size_t tile_popcount(const std::uint32_t* meta, std::size_t words) noexcept {
  std::size_t total = 0;
  for (std::size_t i = 0; i < words; ++i) total += static_cast<std::size_t>(std::popcount(meta[i]));
  return total;
}

namespace {

// Expands 16-word groups; word w covers output elements [32w, 32w + 32).
template <class T>
std::size_t expand_groups(const std::uint32_t* meta, std::size_t groups, const T* values, T* out) noexcept {
  std::size_t base = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    Lane16 words{};
    std::memcpy(words.data(), meta + 16 * g, sizeof(words));
    const Lane16 counts = row_popcounts(words);
    const Lane16 inclusive = prefix_sum16(counts);
    for (std::size_t i = 0; i < 16; ++i) {
      const T* src = values + base + inclusive[i] - counts[i];
      T* dst = out + 32 * (16 * g + i);
      const std::uint32_t word = words[i];
      std::size_t used = 0;
      for (std::size_t p = 0; p < 32; ++p) {
        if ((word >> p) & 1u) {
          dst[p] = src[used++];
        } else {
          dst[p] = T{};
        }
      }
    }
    base += inclusive[15];
  }
  return base;
}

}  // namespace

std::size_t expand_bf16_portable(const std::uint32_t* meta, const bf16* values, bf16* out) noexcept {
  return expand_groups(meta, 1, values, out);
}

std::size_t expand_int8_portable(const std::uint32_t* meta, const std::int8_t* values, std::int8_t* out) noexcept {
  return expand_groups(meta, 2, values, out);
}

void madd_bf16_portable(float* acc, const bf16* in, std::size_t stride, std::size_t rows, const bf16* w0,
                        const bf16* w1) noexcept {
  const bf16* tiles[2] = {w0, w1};
  const std::size_t strips = w1 != nullptr ? 2 : 1;
  for (std::size_t m = 0; m < rows; ++m) {
    const bf16* x = in + m * stride;
    for (std::size_t s = 0; s < strips; ++s) {
      float* a = acc + m * kAccStride + 16 * s;
      for (std::size_t r = 0; r < 16; ++r) {
        const float x0 = x[2 * r].to_float();
        const float x1 = x[2 * r + 1].to_float();
        const bf16* row = tiles[s] + 32 * r;
        for (std::size_t n = 0; n < 16; ++n) {
          a[n] += x0 * row[2 * n].to_float();
          a[n] += x1 * row[2 * n + 1].to_float();
        }
      }
    }
  }
}

void madd_int8_portable(std::int32_t* acc, const std::int8_t* in, std::size_t stride, std::size_t rows,
                        const std::int8_t* w0, const std::int8_t* w1) noexcept {
  const std::int8_t* tiles[2] = {w0, w1};
  const std::size_t strips = w1 != nullptr ? 2 : 1;
  for (std::size_t m = 0; m < rows; ++m) {
    const std::int8_t* x = in + m * stride;
    for (std::size_t s = 0; s < strips; ++s) {
      std::int32_t* a = acc + m * kAccStride + 16 * s;
      for (std::size_t r = 0; r < 16; ++r) {
        const std::int8_t* row = tiles[s] + 64 * r;
        for (std::size_t n = 0; n < 16; ++n) {
          std::int32_t sum = 0;
          for (std::size_t j = 0; j < 4; ++j) sum += std::int32_t{x[4 * r + j]} * std::int32_t{row[4 * n + j]};
          a[n] += sum;
        }
      }
    }
  }
}

void vector_row_portable(const bf16* in, std::size_t padded_k, const std::uint32_t* const* meta,
                         const bf16* values, const std::size_t* cursor, std::size_t groups,
                         float* out) noexcept {
  std::size_t pos[8];
  float acc[8][16] = {};
  for (std::size_t g = 0; g < groups; ++g) pos[g] = cursor[g];
  bf16 lanes[32];
  for (std::size_t q = 0; q < padded_k / 2; ++q) {
    const float x0 = in[2 * q].to_float();
    const float x1 = in[2 * q + 1].to_float();
    for (std::size_t g = 0; g < groups; ++g) {
      const std::uint32_t word = meta[g][q];
      for (std::size_t p = 0; p < 32; ++p) lanes[p] = ((word >> p) & 1u) ? values[pos[g]++] : bf16{};
      for (std::size_t n = 0; n < 16; ++n) {
        acc[g][n] += x0 * lanes[2 * n].to_float();
        acc[g][n] += x1 * lanes[2 * n + 1].to_float();
      }
    }
  }
  for (std::size_t g = 0; g < groups; ++g) std::memcpy(out + 16 * g, acc[g], sizeof(acc[g]));
}

}  // namespace detail
}  // namespace spx
