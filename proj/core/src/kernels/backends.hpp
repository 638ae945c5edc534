// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

// Per-backend primitives behind the GEMM drivers. Everything here works on
// raw pointers; the drivers own validation.
//
// Accumulator blocks are 32 rows x 32 columns, row stride 32. A k-step
// consumes one weight tile per strip of the current column block (one or
// two strips) against `rows` input rows starting at the step's first
// inner element.

#pragma once

#include <cstddef>
#include <cstdint>

#include "spx/bf16.hpp"

namespace spx::detail {

inline constexpr std::size_t kAccStride = 32;

struct CpuFeatures {
  bool avx512 = false;  // F, BW, VL, VBMI2, VNNI, VPOPCNTDQ with OS support
  bool amx = false;     // TILE, BF16, INT8 with the tile-data permission granted
};

const CpuFeatures& cpu_features() noexcept;

// Decompress: `words` metadata words (16 or 32), one tile of output. The
// caller guarantees the value range is in bounds. Return the tile popcount.
std::size_t tile_popcount(const std::uint32_t* meta, std::size_t words) noexcept;

std::size_t expand_bf16_portable(const std::uint32_t* meta, const bf16* values, bf16* out) noexcept;
std::size_t expand_int8_portable(const std::uint32_t* meta, const std::int8_t* values, std::int8_t* out) noexcept;
void madd_bf16_portable(float* acc, const bf16* in, std::size_t stride, std::size_t rows, const bf16* w0,
                        const bf16* w1) noexcept;
void madd_int8_portable(std::int32_t* acc, const std::int8_t* in, std::size_t stride, std::size_t rows,
                        const std::int8_t* w0, const std::int8_t* w1) noexcept;
// One input row against `groups` vector-order strips; meta[g] points at
// the strip's first metadata word and cursor[g] at its first value.
void vector_row_portable(const bf16* in, std::size_t padded_k, const std::uint32_t* const* meta,
                         const bf16* values, const std::size_t* cursor, std::size_t groups,
                         float* out) noexcept;

std::size_t expand_bf16_avx512(const std::uint32_t* meta, const bf16* values, bf16* out) noexcept;
std::size_t expand_int8_avx512(const std::uint32_t* meta, const std::int8_t* values, std::int8_t* out) noexcept;
void madd_bf16_avx512(float* acc, const bf16* in, std::size_t stride, std::size_t rows, const bf16* w0,
                      const bf16* w1) noexcept;
void madd_int8_avx512(std::int32_t* acc, const std::int8_t* in, std::size_t stride, std::size_t rows,
                      const std::int8_t* w0, const std::int8_t* w1) noexcept;
void vector_row_avx512(const bf16* in, std::size_t padded_k, const std::uint32_t* const* meta,
                       const bf16* values, const std::size_t* cursor, std::size_t groups,
                       float* out) noexcept;

// AMX keeps the four accumulator tiles in registers across k-steps of one
// block: configure, zero, step..., store. Tile registers are not touched by
// any other code on the thread in between.
void amx_configure(std::size_t rows) noexcept;  // rows of the block, 1..32
void amx_zero() noexcept;
void amx_step_bf16(const bf16* in, std::size_t stride, std::size_t rows, const bf16* w0,
                   const bf16* w1) noexcept;
void amx_step_int8(const std::int8_t* in, std::size_t stride, std::size_t rows, const std::int8_t* w0,
                   const std::int8_t* w1) noexcept;
void amx_store_f32(float* acc, std::size_t rows, bool two_strips) noexcept;
void amx_store_i32(std::int32_t* acc, std::size_t rows, bool two_strips) noexcept;
void amx_release() noexcept;

}  // namespace spx::detail
