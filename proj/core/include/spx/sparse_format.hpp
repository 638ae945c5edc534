// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "spx/bf16.hpp"
#include "spx/error.hpp"
#include "spx/matrix.hpp"
#include "spx/tile_layout.hpp"

namespace spx {

using ValueStore = std::variant<std::vector<bf16>, std::vector<std::int8_t>>;

template <class T>
constexpr Dtype dtype_of();
template <>
constexpr Dtype dtype_of<bf16>() { return Dtype::kBF16; }
template <>
constexpr Dtype dtype_of<std::int8_t>() { return Dtype::kINT8; }

/// Bitmap-compressed weight matrix of logical shape K x N (inner x output).
///
/// One bit per padded element in packed order (LSB-first within each 32-bit
/// word); set bits consume the next entry of values(). thread_cursors()[t] is
/// the value index at which worker t's first column block begins. Instances
/// are immutable once built; from_parts() rejects anything inconsistent.
class PackedSparseTensor {
 public:
  PackedSparseTensor() = default;

  /// Throws Errc::kCorruptTensor when the parts violate a format invariant.
  static PackedSparseTensor from_parts(TileLayout layout, std::size_t logical_rows,
                                       std::size_t logical_cols, std::vector<std::uint32_t> bitmap,
                                       ValueStore values, std::vector<std::uint32_t> thread_cursors);

  const TileLayout& layout() const noexcept { return layout_; }
  Dtype dtype() const noexcept { return layout_.dtype(); }
  std::size_t logical_rows() const noexcept { return logical_rows_; }
  std::size_t logical_cols() const noexcept { return logical_cols_; }
  std::size_t padded_rows() const noexcept { return padded_rows_; }
  std::size_t padded_cols() const noexcept { return padded_cols_; }
  std::size_t padded_elements() const noexcept { return padded_rows_ * padded_cols_; }
  std::size_t column_blocks() const noexcept { return TileLayout::column_blocks(padded_cols_); }

  std::span<const std::uint32_t> bitmap() const noexcept { return bitmap_; }
  std::span<const std::uint32_t> thread_cursors() const noexcept { return cursors_; }
  std::size_t num_workers() const noexcept { return cursors_.size(); }
  std::size_t nnz() const noexcept;
  const ValueStore& value_store() const noexcept { return values_; }

  template <class T>
  std::span<const T> values() const;

  friend bool operator==(const PackedSparseTensor&, const PackedSparseTensor&) = default;

 private:
  TileLayout layout_;
  std::size_t logical_rows_ = 0;
  std::size_t logical_cols_ = 0;
  std::size_t padded_rows_ = 0;
  std::size_t padded_cols_ = 0;
  std::vector<std::uint32_t> bitmap_;
  ValueStore values_;
  std::vector<std::uint32_t> cursors_;
};

/// Weights reordered into packed order without compression; the operand
/// format of the dense kernels.
template <class T>
class DenseTiled {
 public:
  DenseTiled() = default;
  DenseTiled(TileLayout layout, std::size_t logical_rows, std::size_t logical_cols,
             std::vector<T> data);

  const TileLayout& layout() const noexcept { return layout_; }
  std::size_t logical_rows() const noexcept { return logical_rows_; }
  std::size_t logical_cols() const noexcept { return logical_cols_; }
  std::size_t padded_rows() const noexcept { return layout_.padded_rows(logical_rows_); }
  std::size_t padded_cols() const noexcept { return layout_.padded_cols(logical_cols_); }
  std::size_t column_blocks() const noexcept { return TileLayout::column_blocks(padded_cols()); }
  std::span<const T> data() const noexcept { return data_; }

 private:
  TileLayout layout_;
  std::size_t logical_rows_ = 0;
  std::size_t logical_cols_ = 0;
  std::vector<T> data_;
};

/// Boundaries [b_0 = 0, b_1, ..., b_workers = column_blocks] of the contiguous
/// column-block range owned by each worker. The first column_blocks % workers
/// workers receive one extra block. Throws kOverPartitioned when there are
/// more workers than column blocks.
std::vector<std::size_t> partition_column_blocks(std::size_t column_blocks, std::size_t workers);

/// cursor[t] = number of set bits in bitmap[0, partition_starts[t]).
/// Starts are bit offsets; they must be strictly increasing, lie within the
/// bitmap and fall on tile boundaries of `layout`.
std::vector<std::uint32_t> build_thread_cursors(std::span<const std::uint32_t> bitmap,
                                                std::span<const std::size_t> partition_starts,
                                                const TileLayout& layout);

/// Packs pruned weights (zeros are the pruned entries). K, N >= 1.
PackedSparseTensor pack_weights(const Matrix<bf16>& dense, TileLayout layout, std::size_t num_workers);
PackedSparseTensor pack_weights(const Matrix<std::int8_t>& dense, TileLayout layout,
                                std::size_t num_workers);

template <class T>
Matrix<T> unpack_weights(const PackedSparseTensor& tensor);

/// Same bitmap and values with cursors rebuilt for a new worker count.
PackedSparseTensor repartition(const PackedSparseTensor& tensor, std::size_t num_workers);

template <class T>
DenseTiled<T> reorder_dense(const Matrix<T>& dense, TileLayout layout);

/// ceil(padded_elements / 8) + element_bytes * nnz + 4 * num_workers.
std::size_t compressed_size_bytes(const PackedSparseTensor& tensor);

template <class T>
std::span<const T> PackedSparseTensor::values() const {
  const auto* store = std::get_if<std::vector<T>>(&values_);
  if (store == nullptr) raise(Errc::kInvalidArgument, "value type does not match tensor dtype");
  return *store;
}

extern template Matrix<bf16> unpack_weights<bf16>(const PackedSparseTensor&);
extern template Matrix<std::int8_t> unpack_weights<std::int8_t>(const PackedSparseTensor&);
extern template DenseTiled<bf16> reorder_dense<bf16>(const Matrix<bf16>&, TileLayout);
extern template DenseTiled<std::int8_t> reorder_dense<std::int8_t>(const Matrix<std::int8_t>&, TileLayout);
extern template class DenseTiled<bf16>;
extern template class DenseTiled<std::int8_t>;

}  // namespace spx
