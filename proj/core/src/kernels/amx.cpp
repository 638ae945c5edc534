// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

// Tile register assignment for one 32x32 accumulator block:
//   tmm0 C[rows 0-15, strip 0]   tmm1 C[rows 0-15, strip 1]
//   tmm2 C[rows 16-31, strip 0]  tmm3 C[rows 16-31, strip 1]
//   tmm4 A[rows 0-15]            tmm5 A[rows 16-31]
//   tmm6 B[strip 0]              tmm7 B[strip 1]

#include <cstdlib>
#include <cstring>

#include "kernels/backends.hpp"

#if defined(__x86_64__)
#include <immintrin.h>

#define SPX_AMX __attribute__((target("amx-tile,amx-bf16,amx-int8")))

namespace spx::detail {
namespace {

struct alignas(64) TileConfig {
  std::uint8_t palette = 1;
  std::uint8_t start_row = 0;
  std::uint8_t reserved0[14] = {};
  std::uint16_t colsb[16] = {};
  std::uint8_t rows[16] = {};
};
static_assert(sizeof(TileConfig) == 64);

thread_local std::size_t configured_rows = 0;

constexpr std::size_t kRowBytes = 64;

}  // namespace

SPX_AMX void amx_configure(std::size_t rows) noexcept {
  if (rows == configured_rows) return;
  const auto upper = static_cast<std::uint8_t>(rows < 16 ? rows : 16);
  const auto lower = static_cast<std::uint8_t>(rows > 16 ? rows - 16 : 0);
  TileConfig cfg;
  const std::uint8_t tile_rows[8] = {upper, upper, lower, lower, upper, lower, 16, 16};
  for (std::size_t t = 0; t < 8; ++t) {
    cfg.rows[t] = tile_rows[t];
    cfg.colsb[t] = tile_rows[t] != 0 ? kRowBytes : 0;
  }
  _tile_loadconfig(&cfg);
  configured_rows = rows;
}

SPX_AMX void amx_zero() noexcept {
  _tile_zero(0);
  _tile_zero(1);
  if (configured_rows > 16) {
    _tile_zero(2);
    _tile_zero(3);
  }
}

SPX_AMX void amx_step_bf16(const bf16* in, std::size_t stride, std::size_t rows, const bf16* w0,
                           const bf16* w1) noexcept {
  const std::size_t bytes = stride * sizeof(bf16);
  _tile_loadd(4, in, bytes);
  _tile_loadd(6, w0, kRowBytes);
  _tile_dpbf16ps(0, 4, 6);
  if (w1 != nullptr) {
    _tile_loadd(7, w1, kRowBytes);
    _tile_dpbf16ps(1, 4, 7);
  }
  if (rows > 16) {
    _tile_loadd(5, in + 16 * stride, bytes);
    _tile_dpbf16ps(2, 5, 6);
    if (w1 != nullptr) _tile_dpbf16ps(3, 5, 7);
  }
}

SPX_AMX void amx_step_int8(const std::int8_t* in, std::size_t stride, std::size_t rows, const std::int8_t* w0,
                           const std::int8_t* w1) noexcept {
  _tile_loadd(4, in, stride);
  _tile_loadd(6, w0, kRowBytes);
  _tile_dpbssd(0, 4, 6);
  if (w1 != nullptr) {
    _tile_loadd(7, w1, kRowBytes);
    _tile_dpbssd(1, 4, 7);
  }
  if (rows > 16) {
    _tile_loadd(5, in + 16 * stride, stride);
    _tile_dpbssd(2, 5, 6);
    if (w1 != nullptr) _tile_dpbssd(3, 5, 7);
  }
}

namespace {

template <class Acc>
SPX_AMX void store_block(Acc* acc, std::size_t rows, bool two_strips) {
  constexpr std::size_t stride = kAccStride * sizeof(Acc);
  _tile_stored(0, acc, stride);
  if (two_strips) _tile_stored(1, acc + 16, stride);
  if (rows > 16) {
    _tile_stored(2, acc + 16 * kAccStride, stride);
    if (two_strips) _tile_stored(3, acc + 16 * kAccStride + 16, stride);
  }
}

}  // namespace

SPX_AMX void amx_store_f32(float* acc, std::size_t rows, bool two_strips) noexcept {
  store_block(acc, rows, two_strips);
}

SPX_AMX void amx_store_i32(std::int32_t* acc, std::size_t rows, bool two_strips) noexcept {
  store_block(acc, rows, two_strips);
}

SPX_AMX void amx_release() noexcept {
  if (configured_rows == 0) return;
  _tile_release();
  configured_rows = 0;
}

}  // namespace spx::detail

#else  // !__x86_64__

namespace spx::detail {

void amx_configure(std::size_t) noexcept { std::abort(); }
void amx_zero() noexcept { std::abort(); }
void amx_step_bf16(const bf16*, std::size_t, std::size_t, const bf16*, const bf16*) noexcept { std::abort(); }
void amx_step_int8(const std::int8_t*, std::size_t, std::size_t, const std::int8_t*, const std::int8_t*) noexcept {
  std::abort();
}
void amx_store_f32(float*, std::size_t, bool) noexcept { std::abort(); }
void amx_store_i32(std::int32_t*, std::size_t, bool) noexcept { std::abort(); }
void amx_release() noexcept {}

}  // namespace spx::detail

#endif
