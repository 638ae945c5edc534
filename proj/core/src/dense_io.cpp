// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/dense_io.hpp"

#include <cstring>
#include <fstream>
#include <string>

#include "le_io.hpp"

namespace spx {

std::string_view to_string(DenseDtype dtype) noexcept {
  switch (dtype) {
    case DenseDtype::kBF16: return "bf16";
    case DenseDtype::kINT8: return "int8";
    case DenseDtype::kFP32: return "fp32";
  }
  return "unknown";
}

DenseDtype dtype_of(const DenseTensor& tensor) noexcept { return static_cast<DenseDtype>(tensor.index()); }

std::size_t rows_of(const DenseTensor& tensor) noexcept {
  return std::visit([](const auto& m) { return m.rows(); }, tensor);
}

std::size_t cols_of(const DenseTensor& tensor) noexcept {
  return std::visit([](const auto& m) { return m.cols(); }, tensor);
}

Matrix<float> to_fp32(const DenseTensor& tensor) {
  return std::visit(
      [](const auto& m) {
        Matrix<float> out(m.rows(), m.cols());
        for (std::size_t i = 0; i < m.size(); ++i) out.flat()[i] = to_float(m.flat()[i]);
        return out;
      },
      tensor);
}

void save_dense(const DenseTensor& tensor, std::ostream& sink) {
  const std::size_t rows = rows_of(tensor);
  const std::size_t cols = cols_of(tensor);
  if (rows > 0xffffffffu || cols > 0xffffffffu) raise(Errc::kUnsupported, "dense shape does not fit in u32");
  detail::write_bytes(sink, kDenseMagic, sizeof(kDenseMagic));
  detail::put_u32(sink, static_cast<std::uint32_t>(rows));
  detail::put_u32(sink, static_cast<std::uint32_t>(cols));
  detail::put_u8(sink, static_cast<std::uint8_t>(dtype_of(tensor)));
  std::visit([&](const auto& m) { detail::put_array(sink, m.flat()); }, tensor);
}

namespace {

template <class T>
DenseTensor read_body(std::istream& is, std::size_t rows, std::size_t cols) {
  Matrix<T> m(rows, cols);
  detail::get_array(is, m.flat(), "dense data");
  return m;
}

}  // namespace

DenseTensor load_dense(std::istream& source) {
  char magic[4] = {};
  detail::read_bytes(source, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kDenseMagic, sizeof(magic)) != 0) raise(Errc::kBadMagic, "not a RAW1 dense tensor");
  const std::size_t rows = detail::get_u32(source, "header");
  const std::size_t cols = detail::get_u32(source, "header");
  const std::uint8_t code = detail::get_u8(source, "header");
  if (rows == 0 || cols == 0) raise(Errc::kInvalidArgument, "empty dense shape");
  switch (code) {
    case 0: return read_body<bf16>(source, rows, cols);
    case 1: return read_body<std::int8_t>(source, rows, cols);
    case 2: return read_body<float>(source, rows, cols);
    default: raise(Errc::kInvalidArgument, "unknown dense dtype code " + std::to_string(code));
  }
}

void save_dense(const DenseTensor& tensor, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(Errc::kIo, "cannot open " + path.string() + " for writing");
  save_dense(tensor, os);
}

DenseTensor load_dense(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(Errc::kIo, "cannot open " + path.string());
  return load_dense(is);
}

}  // namespace spx
