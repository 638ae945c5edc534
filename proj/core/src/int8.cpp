// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/int8.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <string>

#include "le_io.hpp"

namespace spx {

std::int8_t quantize(float x, float scale) {
  if (!std::isfinite(scale) || scale <= 0.0f) raise(Errc::kInvalidArgument, "quantization scale must be positive");
  if (!std::isfinite(x)) raise(Errc::kInvalidArgument, "cannot quantize a non-finite value");
  const float q = std::round(x / scale);
  return static_cast<std::int8_t>(std::clamp(q, -static_cast<float>(kInt8Max), static_cast<float>(kInt8Max)));
}

std::vector<std::int8_t> quantize(std::span<const float> x, float scale) {
  std::vector<std::int8_t> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = quantize(x[i], scale);
  return out;
}

float symmetric_scale(std::span<const float> x) {
  float peak = 0.0f;
  for (float v : x) {
    if (!std::isfinite(v)) raise(Errc::kInvalidArgument, "cannot scale a non-finite value");
    peak = std::max(peak, std::fabs(v));
  }
  return peak == 0.0f ? 1.0f : peak / static_cast<float>(kInt8Max);
}

QuantParams choose_scales(const Matrix<float>& weights) {
  QuantParams params;
  params.weight_scales.resize(weights.cols());
  std::vector<float> column(weights.rows());
  for (std::size_t n = 0; n < weights.cols(); ++n) {
    for (std::size_t k = 0; k < weights.rows(); ++k) column[k] = weights(k, n);
    params.weight_scales[n] = symmetric_scale(column);
  }
  return params;
}

Matrix<std::int8_t> quantize_weights(const Matrix<float>& weights, const QuantParams& params) {
  if (params.weight_scales.size() != weights.cols()) {
    raise(Errc::kDimensionMismatch, "one weight scale per column is required");
  }
  Matrix<std::int8_t> out(weights.rows(), weights.cols());
  for (std::size_t k = 0; k < weights.rows(); ++k) {
    for (std::size_t n = 0; n < weights.cols(); ++n) out(k, n) = quantize(weights(k, n), params.weight_scales[n]);
  }
  return out;
}

QuantizedActivations quantize_activations(const Matrix<float>& input) {
  QuantizedActivations q;
  q.scale = symmetric_scale(input.flat());
  q.values = Matrix<std::int8_t>(input.rows(), input.cols(), quantize(input.flat(), q.scale));
  return q;
}

Matrix<float> dequantize_accumulators(const Matrix<std::int32_t>& acc, const QuantParams& params) {
  if (params.weight_scales.size() != acc.cols()) {
    raise(Errc::kDimensionMismatch, "one weight scale per output column is required");
  }
  Matrix<float> out(acc.rows(), acc.cols());
  for (std::size_t m = 0; m < acc.rows(); ++m) {
    for (std::size_t n = 0; n < acc.cols(); ++n) {
      out(m, n) = (static_cast<float>(acc(m, n)) * params.activation_scale) * params.weight_scales[n];
    }
  }
  return out;
}

Matrix<float> int8_dense_gemm(const Matrix<std::int8_t>& input, const DenseTiled<std::int8_t>& weights,
                              const QuantParams& params, const GemmPlan& plan) {
  return dequantize_accumulators(int8_dense_accumulate(input, weights, plan), params);
}

Matrix<float> int8_sparse_gemm(const Matrix<std::int8_t>& input, const PackedSparseTensor& weights,
                               const QuantParams& params, const GemmPlan& plan) {
  return dequantize_accumulators(int8_sparse_accumulate(input, weights, plan), params);
}

void save_quant_section(const QuantParams& params, std::ostream& sink) {
  if (params.weight_scales.size() > 0xffffffffu) raise(Errc::kUnsupported, "too many weight scales");
  detail::write_bytes(sink, kQuantMagic, sizeof(kQuantMagic));
  detail::put_u32(sink, static_cast<std::uint32_t>(params.weight_scales.size()));
  for (float s : params.weight_scales) detail::put_f32(sink, s);
  detail::put_f32(sink, params.activation_scale);
}

std::optional<QuantParams> load_quant_section(std::istream& source) {
  if (source.peek() == std::char_traits<char>::eof()) {
    source.clear();
    return std::nullopt;
  }
  char magic[4] = {};
  detail::read_bytes(source, magic, sizeof(magic), "quantization magic");
  if (std::memcmp(magic, kQuantMagic, sizeof(magic)) != 0) raise(Errc::kBadMagic, "trailing bytes are not QNT1");
  const std::uint32_t n = detail::get_u32(source, "quantization header");
  QuantParams params;
  params.weight_scales.reserve(std::min<std::uint32_t>(n, 1u << 20));
  for (std::uint32_t i = 0; i < n; ++i) params.weight_scales.push_back(detail::get_f32(source, "weight scales"));
  params.activation_scale = detail::get_f32(source, "activation scale");
  return params;
}

}  // namespace spx
