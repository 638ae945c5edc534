// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <variant>

#include "spx/bf16.hpp"
#include "spx/matrix.hpp"

namespace spx {

// Raw dense tensor file, little-endian:
//   "RAW1" | u32 rows | u32 cols | u8 dtype (0 = bf16, 1 = int8, 2 = fp32) | rows*cols elements, row-major
inline constexpr char kDenseMagic[4] = {'R', 'A', 'W', '1'};
inline constexpr std::size_t kDenseHeaderBytes = 4 + 4 + 4 + 1;

enum class DenseDtype : std::uint8_t { kBF16 = 0, kINT8 = 1, kFP32 = 2 };

using DenseTensor = std::variant<Matrix<bf16>, Matrix<std::int8_t>, Matrix<float>>;

std::string_view to_string(DenseDtype dtype) noexcept;
DenseDtype dtype_of(const DenseTensor& tensor) noexcept;
std::size_t rows_of(const DenseTensor& tensor) noexcept;
std::size_t cols_of(const DenseTensor& tensor) noexcept;

/// Element-wise widening to FP32.
Matrix<float> to_fp32(const DenseTensor& tensor);

void save_dense(const DenseTensor& tensor, std::ostream& sink);
/// Throws kBadMagic, kTruncated or kInvalidArgument (unknown dtype, empty shape).
DenseTensor load_dense(std::istream& source);

void save_dense(const DenseTensor& tensor, const std::filesystem::path& path);
DenseTensor load_dense(const std::filesystem::path& path);

}  // namespace spx
