// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/sparse_format.hpp"

#include <bit>
#include <limits>
#include <string>
#include <type_traits>
#include <variant>

namespace spx {

std::string_view to_string(Dtype dtype) noexcept {
  return dtype == Dtype::kBF16 ? "bf16" : "int8";
}

std::string_view to_string(PackOrder order) noexcept {
  return order == PackOrder::kTile ? "tile" : "vector";
}

TileLayout::TileLayout(Dtype dtype, PackOrder order) : dtype_(dtype), order_(order) {
  if (dtype != Dtype::kBF16 && dtype != Dtype::kINT8) raise(Errc::kInvalidArgument, "unknown dtype");
  if (order == PackOrder::kVector && dtype != Dtype::kBF16) {
    raise(Errc::kUnsupported, "vector order is only defined for bf16");
  }
}

std::size_t TileLayout::packed_index(std::size_t k, std::size_t n, std::size_t padded_rows,
                                     std::size_t padded_cols) const noexcept {
  const std::size_t strip = n / kStripCols;
  const std::size_t n_local = n % kStripCols;
  if (order_ == PackOrder::kVector) {
    return strip * kStripCols * padded_rows + (k / 2) * kWordBits + n_local * 2 + (k % 2);
  }
  const std::size_t block = n / kBlockCols;
  const std::size_t strips = padded_cols / kStripCols;
  const std::size_t in_block = strips - block * 2 < 2 ? 1 : 2;
  const std::size_t kt = k / k_tile();
  const std::size_t which = strip % 2;
  return column_block_start(block, padded_rows) + (kt * in_block + which) * tile_elements() +
         tile_position(k % k_tile(), n_local);
}

namespace {

template <class T>
bool is_stored(T v) {
  if constexpr (std::is_same_v<T, bf16>) {
    // Bit-pattern test: -0.0 is a value, so round trips stay bit exact.
    return v.bits != 0;
  } else {
    return v != 0;
  }
}

std::size_t popcount_bits(std::span<const std::uint32_t> words) {
  std::size_t total = 0;
  for (std::uint32_t w : words) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

std::vector<std::size_t> worker_start_bits(std::size_t padded_rows, std::size_t padded_cols,
                                           std::size_t workers) {
  const auto bounds = partition_column_blocks(TileLayout::column_blocks(padded_cols), workers);
  std::vector<std::size_t> starts(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    starts[t] = TileLayout::column_block_start(bounds[t], padded_rows);
  }
  return starts;
}

template <class T>
void check_dims(const TileLayout& layout, std::size_t rows, std::size_t cols, std::size_t workers) {
  if (layout.dtype() != dtype_of<T>()) raise(Errc::kInvalidArgument, "matrix type does not match layout dtype");
  if (rows == 0 || cols == 0) raise(Errc::kInvalidArgument, "weight matrix must be at least 1x1");
  if (workers == 0) raise(Errc::kInvalidArgument, "num_workers must be >= 1");
}

template <class T>
PackedSparseTensor pack_impl(const Matrix<T>& dense, TileLayout layout, std::size_t workers) {
  check_dims<T>(layout, dense.rows(), dense.cols(), workers);
  const std::size_t rows = dense.rows();
  const std::size_t cols = dense.cols();
  const std::size_t pr = layout.padded_rows(rows);
  const std::size_t pc = layout.padded_cols(cols);
  // Fail before doing any work if the partition is impossible.
  const auto starts = worker_start_bits(pr, pc, workers);

  std::vector<std::uint32_t> bitmap(pr * pc / TileLayout::kWordBits, 0u);
  std::vector<T> values;
  std::size_t index = 0;
  for_each_packed(layout, pr, pc, [&](std::size_t k, std::size_t n) {
    if (k < rows && n < cols) {
      const T v = dense(k, n);
      if (is_stored(v)) {
        bitmap[index >> 5] |= 1u << (index & 31u);
        values.push_back(v);
      }
    }
    ++index;
  });
  if (values.size() > std::numeric_limits<std::uint32_t>::max()) {
    raise(Errc::kUnsupported, "more than 2^32-1 non-zeros");
  }
  auto cursors = build_thread_cursors(bitmap, starts, layout);
  return PackedSparseTensor::from_parts(layout, rows, cols, std::move(bitmap), ValueStore(std::move(values)),
                                        std::move(cursors));
}

bool padding_is_clear(const TileLayout& layout, std::size_t rows, std::size_t cols,
                      std::span<const std::uint32_t> bitmap) {
  const std::size_t pr = layout.padded_rows(rows);
  const std::size_t pc = layout.padded_cols(cols);
  if (pr == rows && pc == cols) return true;
  bool clear = true;
  std::size_t index = 0;
  for_each_packed(layout, pr, pc, [&](std::size_t k, std::size_t n) {
    if ((k >= rows || n >= cols) && ((bitmap[index >> 5] >> (index & 31u)) & 1u)) clear = false;
    ++index;
  });
  return clear;
}

}  // namespace

std::vector<std::size_t> partition_column_blocks(std::size_t column_blocks, std::size_t workers) {
  if (workers == 0) raise(Errc::kInvalidArgument, "num_workers must be >= 1");
  if (workers > column_blocks) {
    raise(Errc::kOverPartitioned, std::to_string(workers) + " workers for " + std::to_string(column_blocks) +
                                      " column blocks");
  }
  std::vector<std::size_t> bounds(workers + 1, 0);
  const std::size_t base = column_blocks / workers;
  const std::size_t extra = column_blocks % workers;
  for (std::size_t t = 0; t < workers; ++t) bounds[t + 1] = bounds[t] + base + (t < extra ? 1 : 0);
  return bounds;
}

std::vector<std::uint32_t> build_thread_cursors(std::span<const std::uint32_t> bitmap,
                                                std::span<const std::size_t> partition_starts,
                                                const TileLayout& layout) {
  const std::size_t total_bits = bitmap.size() * TileLayout::kWordBits;
  const std::size_t align = layout.tile_elements();
  std::vector<std::uint32_t> cursors;
  cursors.reserve(partition_starts.size());
  std::size_t word = 0;
  std::size_t running = 0;
  for (std::size_t t = 0; t < partition_starts.size(); ++t) {
    const std::size_t start = partition_starts[t];
    if (start % align != 0) {
      raise(Errc::kUnalignedPartition, "start bit " + std::to_string(start) + " is not a multiple of " +
                                           std::to_string(align));
    }
    if (t > 0 && start <= partition_starts[t - 1]) {
      raise(Errc::kInvalidArgument, "partition starts must be strictly increasing");
    }
    if (start > total_bits) raise(Errc::kInvalidArgument, "partition start beyond bitmap");
    const std::size_t end_word = start / TileLayout::kWordBits;
    running += popcount_bits(bitmap.subspan(word, end_word - word));
    word = end_word;
    if (running > std::numeric_limits<std::uint32_t>::max()) raise(Errc::kUnsupported, "cursor overflow");
    cursors.push_back(static_cast<std::uint32_t>(running));
  }
  return cursors;
}

PackedSparseTensor PackedSparseTensor::from_parts(TileLayout layout, std::size_t logical_rows,
                                                  std::size_t logical_cols, std::vector<std::uint32_t> bitmap,
                                                  ValueStore values, std::vector<std::uint32_t> thread_cursors) {
  if (logical_rows == 0 || logical_cols == 0) raise(Errc::kCorruptTensor, "empty logical shape");
  const std::size_t pr = layout.padded_rows(logical_rows);
  const std::size_t pc = layout.padded_cols(logical_cols);
  if (bitmap.size() * TileLayout::kWordBits != pr * pc) {
    raise(Errc::kCorruptTensor, "bitmap has " + std::to_string(bitmap.size()) + " words, expected " +
                                    std::to_string(pr * pc / TileLayout::kWordBits));
  }
  const bool type_ok = layout.dtype() == Dtype::kBF16 ? std::holds_alternative<std::vector<bf16>>(values)
                                                      : std::holds_alternative<std::vector<std::int8_t>>(values);
  if (!type_ok) raise(Errc::kCorruptTensor, "value store type does not match dtype");
  const std::size_t count = std::visit([](const auto& v) { return v.size(); }, values);
  const std::size_t set_bits = popcount_bits(bitmap);
  if (set_bits != count) {
    raise(Errc::kCorruptTensor, "bitmap popcount " + std::to_string(set_bits) + " != " + std::to_string(count) +
                                    " values");
  }
  if (thread_cursors.empty()) raise(Errc::kCorruptTensor, "no thread cursors");
  if (thread_cursors.size() > TileLayout::column_blocks(pc)) raise(Errc::kCorruptTensor, "over-partitioned cursors");
  const auto starts = worker_start_bits(pr, pc, thread_cursors.size());
  if (build_thread_cursors(bitmap, starts, layout) != thread_cursors) {
    raise(Errc::kCorruptTensor, "thread cursors disagree with bitmap");
  }
  if (!padding_is_clear(layout, logical_rows, logical_cols, bitmap)) raise(Errc::kCorruptTensor, "padding bits set");

  PackedSparseTensor t;
  t.layout_ = layout;
  t.logical_rows_ = logical_rows;
  t.logical_cols_ = logical_cols;
  t.padded_rows_ = pr;
  t.padded_cols_ = pc;
  t.bitmap_ = std::move(bitmap);
  t.values_ = std::move(values);
  t.cursors_ = std::move(thread_cursors);
  return t;
}

std::size_t PackedSparseTensor::nnz() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, values_);
}

PackedSparseTensor pack_weights(const Matrix<bf16>& dense, TileLayout layout, std::size_t num_workers) {
  return pack_impl(dense, layout, num_workers);
}

PackedSparseTensor pack_weights(const Matrix<std::int8_t>& dense, TileLayout layout, std::size_t num_workers) {
  return pack_impl(dense, layout, num_workers);
}

template <class T>
Matrix<T> unpack_weights(const PackedSparseTensor& tensor) {
  const auto values = tensor.values<T>();
  const auto bitmap = tensor.bitmap();
  if (popcount_bits(bitmap) != values.size()) raise(Errc::kCorruptTensor, "bitmap/value length mismatch");
  const std::size_t rows = tensor.logical_rows();
  const std::size_t cols = tensor.logical_cols();
  Matrix<T> out(rows, cols);
  std::size_t index = 0;
  std::size_t cursor = 0;
  for_each_packed(tensor.layout(), tensor.padded_rows(), tensor.padded_cols(), [&](std::size_t k, std::size_t n) {
    if ((bitmap[index >> 5] >> (index & 31u)) & 1u) {
      const T v = values[cursor++];
      if (k < rows && n < cols) out(k, n) = v;
    }
    ++index;
  });
  return out;
}

PackedSparseTensor repartition(const PackedSparseTensor& tensor, std::size_t num_workers) {
  auto starts = worker_start_bits(tensor.padded_rows(), tensor.padded_cols(), num_workers);
  auto cursors = build_thread_cursors(tensor.bitmap(), starts, tensor.layout());
  return PackedSparseTensor::from_parts(
      tensor.layout(), tensor.logical_rows(), tensor.logical_cols(),
      std::vector<std::uint32_t>(tensor.bitmap().begin(), tensor.bitmap().end()), tensor.value_store(),
      std::move(cursors));
}

template <class T>
DenseTiled<T>::DenseTiled(TileLayout layout, std::size_t logical_rows, std::size_t logical_cols,
                          std::vector<T> data)
    : layout_(layout), logical_rows_(logical_rows), logical_cols_(logical_cols), data_(std::move(data)) {
  if (layout.dtype() != dtype_of<T>()) raise(Errc::kInvalidArgument, "element type does not match layout dtype");
  if (data_.size() != padded_rows() * padded_cols()) raise(Errc::kDimensionMismatch, "tiled data size");
}

template <class T>
DenseTiled<T> reorder_dense(const Matrix<T>& dense, TileLayout layout) {
  check_dims<T>(layout, dense.rows(), dense.cols(), 1);
  const std::size_t pr = layout.padded_rows(dense.rows());
  const std::size_t pc = layout.padded_cols(dense.cols());
  std::vector<T> data;
  data.reserve(pr * pc);
  for_each_packed(layout, pr, pc, [&](std::size_t k, std::size_t n) {
    data.push_back(k < dense.rows() && n < dense.cols() ? dense(k, n) : T{});
  });
  return DenseTiled<T>(layout, dense.rows(), dense.cols(), std::move(data));
}

std::size_t compressed_size_bytes(const PackedSparseTensor& tensor) {
  return ceil_div(tensor.padded_elements(), 8) + tensor.layout().element_bytes() * tensor.nnz() +
         4 * tensor.num_workers();
}

template Matrix<bf16> unpack_weights<bf16>(const PackedSparseTensor&);
template Matrix<std::int8_t> unpack_weights<std::int8_t>(const PackedSparseTensor&);
template DenseTiled<bf16> reorder_dense<bf16>(const Matrix<bf16>&, TileLayout);
template DenseTiled<std::int8_t> reorder_dense<std::int8_t>(const Matrix<std::int8_t>&, TileLayout);
template class DenseTiled<bf16>;
template class DenseTiled<std::int8_t>;

}  // namespace spx
