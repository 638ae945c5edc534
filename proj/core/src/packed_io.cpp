// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/packed_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <string>

#include "le_io.hpp"

namespace spx {

using detail::get_u32;
using detail::get_u8;
using detail::put_u32;
using detail::put_u8;

namespace {

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > 0xffffffffu) raise(Errc::kUnsupported, std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

std::uint8_t dtype_code(const TileLayout& layout) {
  auto code = static_cast<std::uint8_t>(layout.dtype());
  if (layout.order() == PackOrder::kVector) code |= kVectorOrderFlag;
  return code;
}

TileLayout layout_from_code(std::uint8_t code) {
  const auto base = static_cast<std::uint8_t>(code & ~kVectorOrderFlag);
  if (base > 1) raise(Errc::kCorruptTensor, "unknown dtype code " + std::to_string(code));
  const Dtype dtype = base == 0 ? Dtype::kBF16 : Dtype::kINT8;
  const PackOrder order = (code & kVectorOrderFlag) ? PackOrder::kVector : PackOrder::kTile;
  if (order == PackOrder::kVector && dtype != Dtype::kBF16) raise(Errc::kCorruptTensor, "int8 vector order");
  return TileLayout(dtype, order);
}

std::uint32_t get_length(std::istream& is, std::size_t expected_max, const char* what) {
  const std::uint32_t n = get_u32(is, what);
  if (n > expected_max) raise(Errc::kCorruptTensor, std::string(what) + " length " + std::to_string(n) + " too large");
  return n;
}

}  // namespace

void save_packed(const PackedSparseTensor& tensor, std::ostream& sink) {
  detail::write_bytes(sink, kPackedMagic, sizeof(kPackedMagic));
  put_u8(sink, kPackedVersion);
  put_u8(sink, dtype_code(tensor.layout()));
  put_u32(sink, narrow(tensor.logical_rows(), "logical_rows"));
  put_u32(sink, narrow(tensor.logical_cols(), "logical_cols"));
  put_u32(sink, narrow(tensor.padded_rows(), "padded_rows"));
  put_u32(sink, narrow(tensor.padded_cols(), "padded_cols"));
  put_u32(sink, narrow(tensor.num_workers(), "num_workers"));

  put_u32(sink, narrow(tensor.thread_cursors().size(), "cursor count"));
  detail::put_array(sink, tensor.thread_cursors());
  put_u32(sink, narrow(tensor.bitmap().size(), "bitmap length"));
  detail::put_array(sink, tensor.bitmap());
  put_u32(sink, narrow(tensor.nnz(), "value count"));
  std::visit([&](const auto& v) { detail::put_array(sink, std::span(v)); }, tensor.value_store());
}

PackedSparseTensor load_packed(std::istream& source) {
  char magic[4] = {};
  detail::read_bytes(source, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kPackedMagic, sizeof(magic)) != 0) raise(Errc::kBadMagic, "not an SPX1 stream");
  const std::uint8_t version = get_u8(source, "version");
  if (version != kPackedVersion) raise(Errc::kVersionMismatch, "version " + std::to_string(version));
  const TileLayout layout = layout_from_code(get_u8(source, "dtype"));
  const std::size_t rows = get_u32(source, "header");
  const std::size_t cols = get_u32(source, "header");
  const std::size_t padded_rows = get_u32(source, "header");
  const std::size_t padded_cols = get_u32(source, "header");
  const std::size_t workers = get_u32(source, "header");
  if (rows == 0 || cols == 0) raise(Errc::kCorruptTensor, "empty logical shape");
  if (padded_rows != layout.padded_rows(rows) || padded_cols != layout.padded_cols(cols)) {
    raise(Errc::kCorruptTensor, "padded dims disagree with layout");
  }
  const std::size_t padded = padded_rows * padded_cols;

  std::vector<std::uint32_t> cursors(get_length(source, TileLayout::column_blocks(padded_cols), "cursors"));
  if (cursors.size() != workers) raise(Errc::kCorruptTensor, "cursor count != num_workers");
  detail::get_array(source, std::span(cursors), "cursors");

  std::vector<std::uint32_t> bitmap(get_length(source, padded / TileLayout::kWordBits, "bitmap"));
  detail::get_array(source, std::span(bitmap), "bitmap");

  const std::uint32_t count = get_length(source, padded, "values");
  ValueStore values;
  if (layout.dtype() == Dtype::kBF16) {
    std::vector<bf16> v(count);
    detail::get_array(source, std::span(v), "values");
    values = std::move(v);
  } else {
    std::vector<std::int8_t> v(count);
    detail::get_array(source, std::span(v), "values");
    values = std::move(v);
  }
  return PackedSparseTensor::from_parts(layout, rows, cols, std::move(bitmap), std::move(values), std::move(cursors));
}

void save_packed(const PackedSparseTensor& tensor, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(Errc::kIo, "cannot open " + path.string() + " for writing");
  save_packed(tensor, os);
}

PackedSparseTensor load_packed(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(Errc::kIo, "cannot open " + path.string());
  return load_packed(is);
}

std::size_t packed_file_size(const PackedSparseTensor& tensor) {
  return kPackedHeaderBytes + kPackedPrefixBytes + 4 * tensor.num_workers() + 4 * tensor.bitmap().size() +
         tensor.layout().element_bytes() * tensor.nnz();
}

}  // namespace spx
