// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "spx/kernel.hpp"
#include "spx/matrix.hpp"
#include "spx/sparse_format.hpp"

namespace spx {

/// Symmetric quantization: zero point 0, one scale per output column for
/// weights and one per call for activations.
struct QuantParams {
  std::vector<float> weight_scales;
  float activation_scale = 1.0f;

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

inline constexpr int kInt8Max = 127;

/// clamp(round_half_away_from_zero(x / scale), -127, 127). Throws
/// kInvalidArgument for non-finite x or a scale that is not positive and finite.
std::int8_t quantize(float x, float scale);
std::vector<std::int8_t> quantize(std::span<const float> x, float scale);
inline float dequantize(std::int8_t q, float scale) { return static_cast<float>(q) * scale; }

/// max|x| / 127, or 1 when x is all zero.
float symmetric_scale(std::span<const float> x);

/// Per-column weight scales; activation_scale is left at 1.
QuantParams choose_scales(const Matrix<float>& weights);

/// Column n quantized with weight_scales[n].
Matrix<std::int8_t> quantize_weights(const Matrix<float>& weights, const QuantParams& params);

struct QuantizedActivations {
  Matrix<std::int8_t> values;
  float scale = 1.0f;
};

/// Per-call activation quantization with symmetric_scale over the whole input.
QuantizedActivations quantize_activations(const Matrix<float>& input);

/// out[m][n] = (float(acc[m][n]) * activation_scale) * weight_scales[n].
Matrix<float> dequantize_accumulators(const Matrix<std::int32_t>& acc, const QuantParams& params);

Matrix<float> int8_dense_gemm(const Matrix<std::int8_t>& input, const DenseTiled<std::int8_t>& weights,
                              const QuantParams& params, const GemmPlan& plan);
Matrix<float> int8_sparse_gemm(const Matrix<std::int8_t>& input, const PackedSparseTensor& weights,
                               const QuantParams& params, const GemmPlan& plan);

// Optional section after a packed tensor, little-endian:
//   "QNT1" | u32 n | n x f32 weight scales | f32 activation scale
inline constexpr char kQuantMagic[4] = {'Q', 'N', 'T', '1'};

void save_quant_section(const QuantParams& params, std::ostream& sink);

/// Returns nullopt at a clean end of stream. Throws kBadMagic for any other
/// trailing bytes and kTruncated for a partial section.
std::optional<QuantParams> load_quant_section(std::istream& source);

}  // namespace spx
