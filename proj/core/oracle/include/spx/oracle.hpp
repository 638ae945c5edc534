// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force reference implementations. They use flat logical indexing
// only and share no code with the kernels, so agreement between the two is
// evidence rather than tautology. Single-threaded and slow on purpose.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spx/bf16.hpp"
#include "spx/matrix.hpp"

namespace spx::oracle {

/// Textbook triple loop in FP64. Throws kDimensionMismatch.
Matrix<double> naive_gemm_f64(const Matrix<double>& a, const Matrix<double>& b);

template <class T>
Matrix<double> widen(const Matrix<T>& m) {
  Matrix<double> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = static_cast<double>(to_float(m.flat()[i]));
  return out;
}

/// sum_k |a_ik| * |b_kj|: the natural scale for the rounding error of
/// element (i, j) of a product.
Matrix<double> abs_gemm_f64(const Matrix<double>& a, const Matrix<double>& b);

/// Exact integer product.
Matrix<std::int64_t> int_gemm(const Matrix<std::int8_t>& a, const Matrix<std::int8_t>& b);

/// Plain ordered FP32 dot product: acc += a[i] * b[i] for ascending i.
float ordered_dot(std::span<const float> a, std::span<const float> b);

template <class T>
struct ExpandResult {
  std::vector<T> elements;  // 32 per word
  std::size_t cursor = 0;
};

/// Walks each word LSB-first; a set bit takes values[cursor++], a clear bit
/// emits zero. Throws kExhaustedValues on underrun.
ExpandResult<bf16> scalar_expand(std::span<const std::uint32_t> words, std::span<const bf16> values,
                                 std::size_t cursor);
ExpandResult<std::int8_t> scalar_expand(std::span<const std::uint32_t> words, std::span<const std::int8_t> values,
                                        std::size_t cursor);

std::uint32_t scalar_popcount(std::uint32_t word);
std::array<std::uint32_t, 16> scalar_prefix_sum(const std::array<std::uint32_t, 16>& v);

/// Number of set bits before each bit offset, by a linear scan.
std::vector<std::uint32_t> scalar_cursor_scan(std::span<const std::uint32_t> bitmap,
                                              std::span<const std::size_t> bit_offsets);

/// Decode attention with an explicit FP64 score matrix and softmax. k[g]
/// and v[g] are context x head_dim per KV head; they are first copied once
/// per query head (GQA repeat) before any arithmetic.
Matrix<double> naive_attention(const Matrix<double>& q, const std::vector<Matrix<double>>& k,
                               const std::vector<Matrix<double>>& v, double scale,
                               Matrix<double>* probabilities = nullptr);

/// Largest |c_ij - ref_ij| / sum_k |a_ik| |b_kj| with ref accumulated in
/// FP64, one output row at a time so nothing is widened. `a` may carry
/// zero padding past b.rows() columns. An element whose scale is zero must
/// be exactly zero, otherwise the result is infinite.
double gemm_relative_error(const Matrix<bf16>& a, const Matrix<bf16>& b, const Matrix<float>& c);

/// Same bound for decode attention: |o - r| / sum_t p_t |v_t| per element,
/// with p and r from the FP64 softmax of q . k_t * scale. Query head h
/// reads KV head h / (heads / k.size()); no repeated copies are built.
double attention_relative_error(const Matrix<double>& q, const std::vector<Matrix<double>>& k,
                                const std::vector<Matrix<double>>& v, double scale, const Matrix<float>& out);

/// Keeps all but the floor(sparsity * n) smallest-|x| entries, ties dropping
/// the higher index first, via a full stable sort.
template <class T>
std::vector<T> prune_by_sort(std::span<const T> x, double sparsity);

extern template std::vector<float> prune_by_sort<float>(std::span<const float>, double);
extern template std::vector<bf16> prune_by_sort<bf16>(std::span<const bf16>, double);
extern template std::vector<std::int8_t> prune_by_sort<std::int8_t>(std::span<const std::int8_t>, double);

}  // namespace spx::oracle
