// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "spx/bf16.hpp"
#include "spx/matrix.hpp"
#include "spx/sparse_format.hpp"

namespace spx {

// kPortable is the reference semantics. kAvx512 is bit-identical to it.
// kAmx runs the tile multiplies on the matrix unit; its BF16 accumulation
// rounding is the hardware's, so it matches the other backends only to
// within FP32 rounding, but dense and sparse kernels on kAmx are still
// bit-identical to each other. INT8 results are exact on every backend.
enum class Backend : std::uint8_t { kPortable, kAvx512, kAmx };

std::string_view to_string(Backend backend) noexcept;
std::optional<Backend> parse_backend(std::string_view name) noexcept;
bool backend_available(Backend backend) noexcept;
std::vector<Backend> available_backends();

/// Best available backend, unless SPX_BACKEND names an available one.
Backend default_backend() noexcept;

using Lane16 = std::array<std::uint32_t, 16>;

/// Inclusive prefix sum by the shift-and-add doubling schedule (offsets 1,
/// 2, 4, 8); lane arithmetic wraps modulo 2^32.
Lane16 prefix_sum16(const Lane16& v) noexcept;

/// lane i = popcount(metadata[i]).
Lane16 row_popcounts(std::span<const std::uint32_t, 16> metadata) noexcept;

/// Dense scratch for one decompressed weight tile (16 rows x 512 bits).
class TileBuffer {
 public:
  template <class T>
  std::span<T> as() noexcept {
    return {reinterpret_cast<T*>(bytes_.data()), bytes_.size() / sizeof(T)};
  }
  template <class T>
  std::span<const T> as() const noexcept {
    return {reinterpret_cast<const T*>(bytes_.data()), bytes_.size() / sizeof(T)};
  }

 private:
  alignas(64) std::array<std::uint8_t, TileLayout::kTileBytes> bytes_{};
};

/// Expands one tile. `metadata` holds the tile's words_per_tile() words:
/// 16 for BF16 (one per row), 32 for INT8 (two per row, consumed as two
/// 16-word groups covering rows 0-7 and 8-15). Each row's value offset is
/// the exclusive prefix of the per-word popcounts. Returns the cursor
/// advanced by the tile's popcount; throws kExhaustedValues on underrun.
std::size_t decompress_tile(std::span<const std::uint32_t> metadata, std::span<const bf16> values,
                            std::size_t cursor, TileBuffer& out, Backend backend = default_backend());
std::size_t decompress_tile(std::span<const std::uint32_t> metadata, std::span<const std::int8_t> values,
                            std::size_t cursor, TileBuffer& out, Backend backend = default_backend());

/// One worker's share of a GEMM: a contiguous column-block range and a
/// contiguous output-row range.
struct WorkerSlice {
  std::size_t col_worker = 0;
  std::size_t block_begin = 0;
  std::size_t block_end = 0;
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
};

/// Work decomposition of OUT(M x N) = IN(M x K) x W(K x N).
///
/// Each accumulator set covers two 16-row input tiles by two 16-column
/// weight tiles (four accumulator tiles, two input and two weight operand
/// tiles live at once). Workers split column blocks first; when there are
/// more workers than column blocks, the remaining factor splits row
/// blocks. Inner-dimension splitting is never done.
class GemmPlan {
 public:
  static constexpr std::size_t kColBlockTiles = 2;
  static constexpr std::size_t kRowBlockTiles = 2;
  static constexpr std::size_t kRowBlock = kRowBlockTiles * TileLayout::kTileRows;

  static GemmPlan create(std::size_t out_rows, std::size_t inner, std::size_t out_cols, std::size_t workers,
                         TileLayout layout, Backend backend = default_backend());

  /// Plan whose column partition is the one frozen into `weights`.
  static GemmPlan for_weights(std::size_t out_rows, const PackedSparseTensor& weights, std::size_t threads,
                              Backend backend = default_backend());

  std::size_t out_rows() const noexcept { return out_rows_; }
  std::size_t inner() const noexcept { return inner_; }
  std::size_t out_cols() const noexcept { return out_cols_; }
  std::size_t logical_inner() const noexcept { return logical_inner_; }
  std::size_t logical_out_cols() const noexcept { return logical_out_cols_; }
  std::size_t col_workers() const noexcept { return col_workers_; }
  std::size_t row_splits() const noexcept { return row_splits_; }
  std::size_t workers() const noexcept { return slices_.size(); }
  const std::vector<WorkerSlice>& slices() const noexcept { return slices_; }
  const TileLayout& layout() const noexcept { return layout_; }
  Backend backend() const noexcept { return backend_; }

 private:
  GemmPlan(std::size_t out_rows, std::size_t logical_inner, std::size_t logical_out_cols, std::size_t col_workers,
           std::size_t threads, TileLayout layout, Backend backend);

  std::size_t out_rows_ = 0;
  std::size_t inner_ = 0;
  std::size_t out_cols_ = 0;
  std::size_t logical_inner_ = 0;
  std::size_t logical_out_cols_ = 0;
  std::size_t col_workers_ = 1;
  std::size_t row_splits_ = 1;
  std::vector<WorkerSlice> slices_;
  TileLayout layout_;
  Backend backend_ = Backend::kPortable;
};

/// OUT = IN x W with FP32 accumulation in ascending inner-dimension order.
/// `input` has K or padded-K columns.
Matrix<float> dense_gemm(const Matrix<bf16>& input, const DenseTiled<bf16>& weights, const GemmPlan& plan);

/// Same traversal as dense_gemm with each weight tile decompressed into a
/// per-worker TileBuffer right before use; bit-identical to dense_gemm on
/// the unpacked weights under the same plan. Throws kRepartitionRequired if
/// the plan's column workers differ from the tensor's cursors.
Matrix<float> sparse_gemm(const Matrix<bf16>& input, const PackedSparseTensor& weights, const GemmPlan& plan);

inline constexpr std::size_t kDefaultNeuronGroups = 4;
inline constexpr std::size_t kMaxNeuronGroups = 8;

/// Lane-vector kernel over vector-order weights: every input element is
/// broadcast and multiplied into `num_neuron_groups` accumulators, one per
/// 16-column strip. Uses the tensor's worker partition. The AMX backend
/// falls back to the AVX-512 path here.
Matrix<float> vector_sparse_gemm(const Matrix<bf16>& input, const PackedSparseTensor& weights,
                                 std::size_t num_neuron_groups = kDefaultNeuronGroups,
                                 Backend backend = default_backend());

/// Raw INT32 accumulators of the INT8 kernels (see int8.hpp for the
/// dequantizing wrappers).
Matrix<std::int32_t> int8_dense_accumulate(const Matrix<std::int8_t>& input, const DenseTiled<std::int8_t>& weights,
                                           const GemmPlan& plan);
Matrix<std::int32_t> int8_sparse_accumulate(const Matrix<std::int8_t>& input, const PackedSparseTensor& weights,
                                            const GemmPlan& plan);

/// Modeled weight traffic of one forward call, in bytes.
std::size_t bytes_read_model(const PackedSparseTensor& weights);
std::size_t bytes_read_model(std::size_t inner, std::size_t out_cols, Dtype dtype);

}  // namespace spx
