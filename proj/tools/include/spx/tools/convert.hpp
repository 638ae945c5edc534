// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "spx/dense_io.hpp"
#include "spx/tile_layout.hpp"

namespace spx::tools {

struct ConvertOptions {
  double sparsity = 0.0;
  Dtype dtype = Dtype::kBF16;
  std::size_t workers = 1;
  bool vector_order = false;  // BF16 only: pack for the lane-vector kernel
};

struct ConvertSummary {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t nnz = 0;
  std::size_t compressed_bytes = 0;  // compressed_size_bytes() of the result
  std::size_t dense_bytes = 0;       // rows * cols * element size
  std::size_t file_bytes = 0;

  double density() const { return static_cast<double>(nnz) / static_cast<double>(rows * cols); }
  double ratio() const { return static_cast<double>(compressed_bytes) / static_cast<double>(dense_bytes); }
};

/// Prunes `input` by magnitude at the requested rate, packs it and writes
/// the .spx stream. BF16 output rounds FP32 input first and rejects INT8
/// input. INT8 output from floating input prunes in FP32, then quantizes
/// per output column and appends the quantization section; INT8 input is
/// pruned as is with unit scales.
ConvertSummary convert_tensor(const DenseTensor& input, const ConvertOptions& options, std::ostream& sink);

ConvertSummary convert_file(const std::filesystem::path& input, const std::filesystem::path& output,
                            const ConvertOptions& options);

/// Uniform [-1, 1) values in the given dtype (INT8 draws [-127, 127]).
DenseTensor random_dense(std::size_t rows, std::size_t cols, DenseDtype dtype, std::uint64_t seed);

}  // namespace spx::tools
