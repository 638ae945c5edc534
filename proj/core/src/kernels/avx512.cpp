// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

// Functions here are compiled for AVX-512 through target attributes and are
// only reached after cpu_features() reports support.

#include <cstdlib>
#include <cstring>

#include "kernels/backends.hpp"

#if defined(__x86_64__)
#include <immintrin.h>

#define SPX_AVX512 \
  __attribute__((target("avx512f,avx512bw,avx512vl,avx512vbmi2,avx512vnni,avx512vpopcntdq,popcnt")))

namespace spx::detail {
namespace {

// Lane i gets the sum of lanes [0, i]. alignr(v, 0, 16 - s) moves lane i - s
// to lane i and fills the bottom s lanes with zero.
SPX_AVX512 inline __m512i prefix16(__m512i v) {
  const __m512i zero = _mm512_setzero_si512();
  v = _mm512_add_epi32(v, _mm512_alignr_epi32(v, zero, 15));
  v = _mm512_add_epi32(v, _mm512_alignr_epi32(v, zero, 14));
  v = _mm512_add_epi32(v, _mm512_alignr_epi32(v, zero, 12));
  v = _mm512_add_epi32(v, _mm512_alignr_epi32(v, zero, 8));
  return v;
}

SPX_AVX512 inline __m512 bf16_even(__m512i w) { return _mm512_castsi512_ps(_mm512_slli_epi32(w, 16)); }

SPX_AVX512 inline __m512 bf16_odd(__m512i w) {
  return _mm512_castsi512_ps(_mm512_and_si512(w, _mm512_set1_epi32(static_cast<int>(0xffff0000u))));
}

SPX_AVX512 inline __m512 broadcast(bf16 v) { return _mm512_set1_ps(v.to_float()); }

template <std::size_t G>
SPX_AVX512 void vector_row_fixed(const bf16* in, std::size_t padded_k, const std::uint32_t* const* meta,
                                 const bf16* values, const std::size_t* cursor, float* out) {
  __m512 acc[G];
  const bf16* src[G];
#pragma GCC unroll 8
  for (std::size_t g = 0; g < G; ++g) {
    acc[g] = _mm512_setzero_ps();
    src[g] = values + cursor[g];
  }
  for (std::size_t q = 0; q < padded_k / 2; ++q) {
    const __m512 x0 = broadcast(in[2 * q]);
    const __m512 x1 = broadcast(in[2 * q + 1]);
#pragma GCC unroll 8
    for (std::size_t g = 0; g < G; ++g) {
      const std::uint32_t word = meta[g][q];
      const __m512i w = _mm512_maskz_expandloadu_epi16(static_cast<__mmask32>(word), src[g]);
      src[g] += _mm_popcnt_u32(word);
      acc[g] = _mm512_fmadd_ps(x0, bf16_even(w), acc[g]);
      acc[g] = _mm512_fmadd_ps(x1, bf16_odd(w), acc[g]);
    }
  }
#pragma GCC unroll 8
  for (std::size_t g = 0; g < G; ++g) _mm512_storeu_ps(out + 16 * g, acc[g]);
}

}  // namespace

SPX_AVX512 std::size_t expand_bf16_avx512(const std::uint32_t* meta, const bf16* values, bf16* out) noexcept {
  const __m512i counts = _mm512_popcnt_epi32(_mm512_loadu_si512(meta));
  alignas(64) std::uint32_t offset[16];
  _mm512_store_si512(offset, _mm512_sub_epi32(prefix16(counts), counts));
  for (std::size_t r = 0; r < 16; ++r) {
    const __m512i row = _mm512_maskz_expandloadu_epi16(static_cast<__mmask32>(meta[r]), values + offset[r]);
    _mm512_storeu_si512(out + 32 * r, row);
  }
  return offset[15] + static_cast<std::size_t>(_mm_popcnt_u32(meta[15]));
}

SPX_AVX512 std::size_t expand_int8_avx512(const std::uint32_t* meta, const std::int8_t* values,
                                   std::int8_t* out) noexcept {
  std::size_t base = 0;
  for (std::size_t g = 0; g < 2; ++g) {
    const std::uint32_t* words = meta + 16 * g;
    const __m512i counts = _mm512_popcnt_epi32(_mm512_loadu_si512(words));
    const __m512i inclusive = prefix16(counts);
    alignas(64) std::uint32_t offset[16];
    _mm512_store_si512(offset, _mm512_sub_epi32(inclusive, counts));
    // Two words per tile row: one 64-bit mask drives one 64-byte expand.
    for (std::size_t i = 0; i < 8; ++i) {
      const std::uint64_t mask = std::uint64_t{words[2 * i]} | (std::uint64_t{words[2 * i + 1]} << 32);
      const __m512i row = _mm512_maskz_expandloadu_epi8(mask, values + base + offset[2 * i]);
      _mm512_storeu_si512(out + 64 * (8 * g + i), row);
    }
    base += offset[15] + static_cast<std::size_t>(_mm_popcnt_u32(words[15]));
  }
  return base;
}

SPX_AVX512 void madd_bf16_avx512(float* acc, const bf16* in, std::size_t stride, std::size_t rows, const bf16* w0,
                                 const bf16* w1) noexcept {
  const bf16* tiles[2] = {w0, w1};
  const std::size_t strips = w1 != nullptr ? 2 : 1;
  for (std::size_t m = 0; m < rows; ++m) {
    const bf16* x = in + m * stride;
    for (std::size_t s = 0; s < strips; ++s) {
      float* a = acc + m * kAccStride + 16 * s;
      __m512 c = _mm512_loadu_ps(a);
      for (std::size_t r = 0; r < 16; ++r) {
        const __m512i w = _mm512_loadu_si512(tiles[s] + 32 * r);
        c = _mm512_fmadd_ps(broadcast(x[2 * r]), bf16_even(w), c);
        c = _mm512_fmadd_ps(broadcast(x[2 * r + 1]), bf16_odd(w), c);
      }
      _mm512_storeu_ps(a, c);
    }
  }
}

// Signed x signed through the unsigned x signed dot product: feed x + 128
// and subtract 128 * sum(w). Both sides wrap identically modulo 2^32, so the
// result equals the plain signed product sum.
SPX_AVX512 void madd_int8_avx512(std::int32_t* acc, const std::int8_t* in, std::size_t stride, std::size_t rows,
                                 const std::int8_t* w0, const std::int8_t* w1) noexcept {
  const std::int8_t* tiles[2] = {w0, w1};
  const std::size_t strips = w1 != nullptr ? 2 : 1;
  const __m512i ones = _mm512_set1_epi8(1);
  const __m512i flip = _mm512_set1_epi8(static_cast<char>(0x80));
  __m512i w[2][16];
  __m512i correction[2];
  for (std::size_t s = 0; s < strips; ++s) {
    __m512i sum = _mm512_setzero_si512();
    for (std::size_t r = 0; r < 16; ++r) {
      w[s][r] = _mm512_loadu_si512(tiles[s] + 64 * r);
      sum = _mm512_dpbusd_epi32(sum, ones, w[s][r]);
    }
    correction[s] = _mm512_slli_epi32(sum, 7);
  }
  for (std::size_t m = 0; m < rows; ++m) {
    const std::int8_t* x = in + m * stride;
    __m512i xs[16];
    for (std::size_t r = 0; r < 16; ++r) {
      std::int32_t quad;
      std::memcpy(&quad, x + 4 * r, sizeof(quad));
      xs[r] = _mm512_xor_si512(_mm512_set1_epi32(quad), flip);
    }
    for (std::size_t s = 0; s < strips; ++s) {
      std::int32_t* a = acc + m * kAccStride + 16 * s;
      __m512i c = _mm512_setzero_si512();
      for (std::size_t r = 0; r < 16; ++r) c = _mm512_dpbusd_epi32(c, xs[r], w[s][r]);
      c = _mm512_sub_epi32(c, correction[s]);
      _mm512_storeu_si512(a, _mm512_add_epi32(_mm512_loadu_si512(a), c));
    }
  }
}

SPX_AVX512 void vector_row_avx512(const bf16* in, std::size_t padded_k, const std::uint32_t* const* meta,
                                  const bf16* values, const std::size_t* cursor, std::size_t groups,
                                  float* out) noexcept {
  switch (groups) {
    case 1: vector_row_fixed<1>(in, padded_k, meta, values, cursor, out); break;
    case 2: vector_row_fixed<2>(in, padded_k, meta, values, cursor, out); break;
    case 3: vector_row_fixed<3>(in, padded_k, meta, values, cursor, out); break;
    case 4: vector_row_fixed<4>(in, padded_k, meta, values, cursor, out); break;
    case 5: vector_row_fixed<5>(in, padded_k, meta, values, cursor, out); break;
    case 6: vector_row_fixed<6>(in, padded_k, meta, values, cursor, out); break;
    case 7: vector_row_fixed<7>(in, padded_k, meta, values, cursor, out); break;
    case 8: vector_row_fixed<8>(in, padded_k, meta, values, cursor, out); break;
    default: std::abort();
  }
}

}  // namespace spx::detail

#else  // !__x86_64__

namespace spx::detail {

std::size_t expand_bf16_avx512(const std::uint32_t*, const bf16*, bf16*) noexcept { std::abort(); }
std::size_t expand_int8_avx512(const std::uint32_t*, const std::int8_t*, std::int8_t*) noexcept { std::abort(); }
void madd_bf16_avx512(float*, const bf16*, std::size_t, std::size_t, const bf16*, const bf16*) noexcept {
  std::abort();
}
void madd_int8_avx512(std::int32_t*, const std::int8_t*, std::size_t, std::size_t, const std::int8_t*,
                      const std::int8_t*) noexcept {
  std::abort();
}
void vector_row_avx512(const bf16*, std::size_t, const std::uint32_t* const*, const bf16*, const std::size_t*,
                       std::size_t, float*) noexcept {
  std::abort();
}

}  // namespace spx::detail

#endif
