// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernels/backends.hpp"

#if defined(__x86_64__)
#include <cpuid.h>
#include <sys/syscall.h>
#include <unistd.h>
#endif

namespace spx::detail {
namespace {

#if defined(__x86_64__)

std::uint64_t read_xcr0() {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
  __asm__ volatile("xgetbv" : "=a"(lo), "=d"(hi) : "c"(0));
  return (std::uint64_t{hi} << 32) | lo;
}

bool bit(std::uint32_t reg, int n) { return ((reg >> n) & 1u) != 0; }

// Linux keeps tile data disabled until a process asks for it.
bool request_tile_permission() {
  constexpr long kArchReqXcompPerm = 0x1023;
  constexpr long kXfeatureXtiledata = 18;
  return syscall(SYS_arch_prctl, kArchReqXcompPerm, kXfeatureXtiledata) == 0;
}

CpuFeatures detect() {
  CpuFeatures f;
  unsigned a = 0, b = 0, c = 0, d = 0;
  if (__get_cpuid(1, &a, &b, &c, &d) == 0 || !bit(c, 27)) return f;  // OSXSAVE
  const std::uint64_t xcr0 = read_xcr0();
  if (__get_cpuid_count(7, 0, &a, &b, &c, &d) == 0) return f;
  const bool zmm_state = (xcr0 & 0xe6) == 0xe6;
  f.avx512 = zmm_state && bit(b, 16) && bit(b, 30) && bit(b, 31) && bit(c, 6) && bit(c, 11) && bit(c, 14);
  const bool tile_state = (xcr0 & (3ull << 17)) == (3ull << 17);
  const bool tile_isa = bit(d, 22) && bit(d, 24) && bit(d, 25);
  f.amx = f.avx512 && tile_isa && tile_state && request_tile_permission();
  return f;
}

#else

CpuFeatures detect() { return {}; }

#endif

}  // namespace

const CpuFeatures& cpu_features() noexcept {
  static const CpuFeatures features = detect();
  return features;
}

}  // namespace spx::detail
