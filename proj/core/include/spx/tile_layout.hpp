// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace spx {

enum class Dtype : std::uint8_t { kBF16 = 0, kINT8 = 1 };

// kTile feeds the matrix-unit style kernels (one 16-row tile per weight block);
// kVector feeds the lane-vector kernel (one 32-element metadata word per
// inner-dimension pair, whole inner dimension of a 16-column strip contiguous).
enum class PackOrder : std::uint8_t { kTile = 0, kVector = 1 };

std::string_view to_string(Dtype dtype) noexcept;
std::string_view to_string(PackOrder order) noexcept;

constexpr std::size_t round_up(std::size_t value, std::size_t multiple) {
  return (value + multiple - 1) / multiple * multiple;
}

constexpr std::size_t ceil_div(std::size_t value, std::size_t divisor) {
  return (value + divisor - 1) / divisor;
}

/// Geometry and element ordering of one weight operand tile.
///
/// A tile is always 16 rows of 512 bits: 16x32 BF16 or 16x64 INT8. Weight
/// blocks are interleaved so that packed row r, position n*interleave + j
/// holds W[r*interleave + j, n]; a tile therefore spans k_tile() inner
/// elements by 16 output columns.
class TileLayout {
 public:
  static constexpr std::size_t kTileRows = 16;
  static constexpr std::size_t kTileBytes = 1024;
  static constexpr std::size_t kStripCols = 16;
  static constexpr std::size_t kBlockCols = 32;  // two strips per accumulator set
  static constexpr std::size_t kWordBits = 32;

  constexpr TileLayout() = default;
  // Throws kUnsupported for INT8 in vector order.
  TileLayout(Dtype dtype, PackOrder order = PackOrder::kTile);

  static TileLayout bf16_tiles() { return TileLayout(Dtype::kBF16); }
  static TileLayout int8_tiles() { return TileLayout(Dtype::kINT8); }
  static TileLayout bf16_vector() { return TileLayout(Dtype::kBF16, PackOrder::kVector); }

  constexpr Dtype dtype() const noexcept { return dtype_; }
  constexpr PackOrder order() const noexcept { return order_; }

  constexpr std::size_t element_bytes() const noexcept { return dtype_ == Dtype::kBF16 ? 2 : 1; }
  constexpr std::size_t element_bits() const noexcept { return element_bytes() * 8; }
  constexpr std::size_t tile_rows() const noexcept { return kTileRows; }
  constexpr std::size_t tile_cols() const noexcept { return dtype_ == Dtype::kBF16 ? 32 : 64; }
  constexpr std::size_t interleave() const noexcept { return dtype_ == Dtype::kBF16 ? 2 : 4; }
  constexpr std::size_t k_tile() const noexcept { return kTileRows * interleave(); }
  constexpr std::size_t tile_elements() const noexcept { return kTileRows * tile_cols(); }
  constexpr std::size_t words_per_tile() const noexcept { return tile_elements() / kWordBits; }
  constexpr std::size_t words_per_row() const noexcept { return tile_cols() / kWordBits; }

  constexpr std::size_t padded_rows(std::size_t k) const noexcept { return round_up(k, k_tile()); }
  constexpr std::size_t padded_cols(std::size_t n) const noexcept { return round_up(n, kStripCols); }

  /// Position inside a tile of the logical element (k_local, n_local).
  constexpr std::size_t tile_position(std::size_t k_local, std::size_t n_local) const noexcept {
    const std::size_t il = interleave();
    return (k_local / il) * tile_cols() + n_local * il + (k_local % il);
  }

  /// Index in the packed stream of logical element (k, n) for a tensor with
  /// the given padded dimensions.
  std::size_t packed_index(std::size_t k, std::size_t n, std::size_t padded_rows,
                           std::size_t padded_cols) const noexcept;

  static constexpr std::size_t column_blocks(std::size_t padded_cols) noexcept {
    return ceil_div(padded_cols, kBlockCols);
  }
  static constexpr std::size_t column_block_start(std::size_t block, std::size_t padded_rows) noexcept {
    return block * kBlockCols * padded_rows;
  }

  friend constexpr bool operator==(TileLayout, TileLayout) = default;

 private:
  Dtype dtype_ = Dtype::kBF16;
  PackOrder order_ = PackOrder::kTile;
};

/// Visits every padded element in packed order, calling fn(k, n) with the
/// logical coordinates of each successive packed position.
template <class Fn>
void for_each_packed(const TileLayout& layout, std::size_t padded_rows, std::size_t padded_cols,
                     Fn&& fn) {
  const std::size_t strips = padded_cols / TileLayout::kStripCols;
  if (layout.order() == PackOrder::kVector) {
    for (std::size_t s = 0; s < strips; ++s) {
      const std::size_t n0 = s * TileLayout::kStripCols;
      for (std::size_t k0 = 0; k0 < padded_rows; k0 += 2) {
        for (std::size_t n = 0; n < TileLayout::kStripCols; ++n) {
          fn(k0, n0 + n);
          fn(k0 + 1, n0 + n);
        }
      }
    }
    return;
  }
  const std::size_t il = layout.interleave();
  const std::size_t kt_count = padded_rows / layout.k_tile();
  for (std::size_t s0 = 0; s0 < strips; s0 += 2) {
    const std::size_t in_block = strips - s0 < 2 ? 1 : 2;
    for (std::size_t kt = 0; kt < kt_count; ++kt) {
      for (std::size_t w = 0; w < in_block; ++w) {
        const std::size_t n0 = (s0 + w) * TileLayout::kStripCols;
        for (std::size_t r = 0; r < TileLayout::kTileRows; ++r) {
          const std::size_t k0 = kt * layout.k_tile() + r * il;
          for (std::size_t n = 0; n < TileLayout::kStripCols; ++n) {
            for (std::size_t j = 0; j < il; ++j) fn(k0 + j, n0 + n);
          }
        }
      }
    }
  }
}

}  // namespace spx
