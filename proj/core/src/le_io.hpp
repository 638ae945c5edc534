// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "spx/error.hpp"

namespace spx::detail {

inline void write_bytes(std::ostream& os, const void* data, std::size_t n) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) raise(Errc::kIo, "write failed");
}

inline void put_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<std::uint8_t, 4> b{static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                                      static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
  write_bytes(os, b.data(), b.size());
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

inline void read_bytes(std::istream& is, void* data, std::size_t n, const char* what) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) raise(Errc::kTruncated, std::string("stream ended in ") + what);
}

inline std::uint8_t get_u8(std::istream& is, const char* what) {
  std::uint8_t v = 0;
  read_bytes(is, &v, 1, what);
  return v;
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  std::array<std::uint8_t, 4> b{};
  read_bytes(is, b.data(), b.size(), what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is, const char* what) { return std::bit_cast<float>(get_u32(is, what)); }

// Bulk element arrays: the in-memory form is little-endian on every target we build for.
static_assert(std::endian::native == std::endian::little, "bulk IO assumes a little-endian host");

template <class T>
void put_array(std::ostream& os, std::span<const T> items) {
  write_bytes(os, items.data(), items.size_bytes());
}

template <class T>
void get_array(std::istream& is, std::span<T> items, const char* what) {
  read_bytes(is, items.data(), items.size_bytes(), what);
}

}  // namespace spx::detail
