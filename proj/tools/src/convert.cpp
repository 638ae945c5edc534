// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/tools/convert.hpp"

#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "spx/attention.hpp"
#include "spx/int8.hpp"
#include "spx/packed_io.hpp"
#include "spx/sparse_format.hpp"

namespace spx::tools {

namespace {

Matrix<bf16> to_bf16(const Matrix<float>& m) {
  Matrix<bf16> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = bf16::from_float(m.flat()[i]);
  return out;
}

PackedSparseTensor convert_bf16(const DenseTensor& input, const ConvertOptions& options) {
  Matrix<bf16> w;
  if (const auto* b = std::get_if<Matrix<bf16>>(&input)) {
    w = *b;
  } else if (const auto* f = std::get_if<Matrix<float>>(&input)) {
    w = to_bf16(*f);
  } else {
    raise(Errc::kUnsupported, "INT8 input cannot be converted to BF16 weights");
  }
  magnitude_prune_inplace<bf16>(w.flat(), options.sparsity);
  const TileLayout layout = options.vector_order ? TileLayout::bf16_vector() : TileLayout::bf16_tiles();
  return pack_weights(w, layout, options.workers);
}

PackedSparseTensor convert_int8(const DenseTensor& input, const ConvertOptions& options, QuantParams& params) {
  if (const auto* q = std::get_if<Matrix<std::int8_t>>(&input)) {
    Matrix<std::int8_t> w = *q;
    magnitude_prune_inplace<std::int8_t>(w.flat(), options.sparsity);
    params.weight_scales.assign(w.cols(), 1.0f);
    return pack_weights(w, TileLayout::int8_tiles(), options.workers);
  }
  Matrix<float> w = to_fp32(input);
  magnitude_prune_inplace<float>(w.flat(), options.sparsity);
  params = choose_scales(w);
  return pack_weights(quantize_weights(w, params), TileLayout::int8_tiles(), options.workers);
}

}  // namespace

ConvertSummary convert_tensor(const DenseTensor& input, const ConvertOptions& options, std::ostream& sink) {
  if (options.vector_order && options.dtype != Dtype::kBF16) {
    raise(Errc::kUnsupported, "vector order is only defined for BF16 weights");
  }
  QuantParams params;
  const PackedSparseTensor packed =
      options.dtype == Dtype::kBF16 ? convert_bf16(input, options) : convert_int8(input, options, params);
  save_packed(packed, sink);
  std::size_t file_bytes = packed_file_size(packed);
  if (options.dtype == Dtype::kINT8) {
    std::ostringstream trailer;
    save_quant_section(params, trailer);
    sink << trailer.str();
    file_bytes += trailer.str().size();
  }
  if (!sink) raise(Errc::kIo, "write failed");

  ConvertSummary s;
  s.rows = packed.logical_rows();
  s.cols = packed.logical_cols();
  s.nnz = packed.nnz();
  s.compressed_bytes = compressed_size_bytes(packed);
  s.dense_bytes = s.rows * s.cols * packed.layout().element_bytes();
  s.file_bytes = file_bytes;
  return s;
}

ConvertSummary convert_file(const std::filesystem::path& input, const std::filesystem::path& output,
                            const ConvertOptions& options) {
  const DenseTensor dense = load_dense(input);
  std::ofstream sink(output, std::ios::binary | std::ios::trunc);
  if (!sink) raise(Errc::kIo, "cannot open " + output.string() + " for writing");
  const ConvertSummary summary = convert_tensor(dense, options, sink);
  sink.close();
  if (!sink) raise(Errc::kIo, "cannot finish writing " + output.string());
  return summary;
}

DenseTensor random_dense(std::size_t rows, std::size_t cols, DenseDtype dtype, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  switch (dtype) {
    case DenseDtype::kINT8: {
      std::uniform_int_distribution<int> dist(-127, 127);
      Matrix<std::int8_t> m(rows, cols);
      for (auto& v : m.flat()) v = static_cast<std::int8_t>(dist(rng));
      return m;
    }
    case DenseDtype::kBF16: {
      std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
      Matrix<bf16> m(rows, cols);
      for (auto& v : m.flat()) v = bf16::from_float(dist(rng));
      return m;
    }
    case DenseDtype::kFP32: break;
  }
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Matrix<float> m(rows, cols);
  for (auto& v : m.flat()) v = dist(rng);
  return m;
}

}  // namespace spx::tools
