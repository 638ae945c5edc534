// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>

#include "spx/sparse_format.hpp"

namespace spx {

// .spx layout, little-endian:
//   "SPX1" | u8 version (1) | u8 dtype (0 = bf16, 1 = int8; bit 7 set = vector order)
//   | u32 logical_rows | u32 logical_cols | u32 padded_rows | u32 padded_cols | u32 num_workers
//   | u32 n, n x u32 thread cursors | u32 n, n x u32 bitmap words | u32 n, n raw elements
inline constexpr char kPackedMagic[4] = {'S', 'P', 'X', '1'};
inline constexpr std::uint8_t kPackedVersion = 1;
inline constexpr std::uint8_t kVectorOrderFlag = 0x80;
inline constexpr std::size_t kPackedHeaderBytes = 4 + 1 + 1 + 5 * 4;
inline constexpr std::size_t kPackedPrefixBytes = 3 * 4;

void save_packed(const PackedSparseTensor& tensor, std::ostream& sink);

/// Reads one tensor and leaves the stream positioned just past it, so an
/// optional trailing section can follow. Throws kBadMagic, kVersionMismatch,
/// kTruncated or kCorruptTensor.
PackedSparseTensor load_packed(std::istream& source);

void save_packed(const PackedSparseTensor& tensor, const std::filesystem::path& path);
PackedSparseTensor load_packed(const std::filesystem::path& path);

/// Exact byte count save_packed() writes for `tensor`.
std::size_t packed_file_size(const PackedSparseTensor& tensor);

}  // namespace spx
