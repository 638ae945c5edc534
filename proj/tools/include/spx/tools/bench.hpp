// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spx/kernel.hpp"
#include "spx/tools/catalog.hpp"

namespace spx::tools {

enum class KernelKind : std::uint8_t { kDense, kSparse, kVectorSparse, kInt8Dense, kInt8Sparse, kAttention };

std::string_view to_string(KernelKind kind) noexcept;
std::optional<KernelKind> parse_kernel(std::string_view name) noexcept;
Dtype kernel_dtype(KernelKind kind) noexcept;

/// A sweep. GEMM kernels run over shapes (or weight files) x sparsity x M x
/// workers; the attention kernel runs over context x sparsity x workers
/// with v_sparsities paired index-wise with sparsities (or equal to them
/// when empty).
struct BenchConfig {
  std::vector<KernelKind> kernels;
  std::vector<ProjectionShape> shapes;
  std::vector<std::filesystem::path> weight_files;  // replaces shapes and sparsities when set
  std::vector<std::size_t> m_values{1};
  std::vector<double> sparsities{0.0};
  std::vector<double> v_sparsities;
  std::vector<std::size_t> workers{1};
  std::vector<std::size_t> contexts{512};
  std::size_t heads = 32;
  std::size_t kv_heads = 8;
  std::size_t head_dim = 128;
  std::size_t reps = 5;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
  std::size_t neuron_groups = kDefaultNeuronGroups;
  Backend backend = default_backend();

  /// Test hook: applied to every point's output before validation.
  std::function<void(Matrix<float>&)> fault_injection;

  /// Throws kInvalidArgument (reps < 3, warmup < 1, empty lists, ...).
  void validate() const;
};

/// One CSV row. The timing columns are median_ns, min_ns and throughput;
/// every other column depends only on the configuration and seed.
struct BenchResult {
  std::string kernel;
  std::string shape;
  std::string backend;
  std::string dtype;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  std::size_t heads = 0;
  std::size_t kv_heads = 0;
  std::size_t head_dim = 0;
  std::size_t context = 0;
  double sparsity = 0.0;
  double v_sparsity = 0.0;
  std::size_t workers = 0;
  std::size_t reps = 0;
  std::size_t warmup = 0;
  std::uint64_t seed = 0;
  std::size_t nnz = 0;
  std::size_t modeled_bytes = 0;
  std::size_t dense_bytes = 0;
  std::string checksum;
  double median_ns = 0.0;
  double min_ns = 0.0;
  double throughput = 0.0;
  std::string throughput_unit;

  bool is_attention() const { return kernel == "attention"; }
};

inline constexpr std::string_view kCsvHeader =
    "kernel,shape,backend,dtype,m,k,n,heads,kv_heads,head_dim,context,sparsity,v_sparsity,workers,reps,warmup,"
    "seed,nnz,modeled_bytes,dense_bytes,checksum,median_ns,min_ns,throughput,throughput_unit";

void write_csv_header(std::ostream& sink);
void write_csv_row(const BenchResult& row, std::ostream& sink);
/// Throws kInvalidArgument for a wrong header or a malformed row.
std::vector<BenchResult> read_csv(std::istream& source);

/// SPARAMX_THREADS when set (kInvalidArgument unless a positive integer),
/// otherwise the hardware thread count.
std::size_t default_workers();

/// 64-bit FNV-1a over the bit patterns of `values`, as 16 hex digits.
std::string checksum(std::span<const float> values);

/// Runs every point: builds inputs from the seed, validates the output once
/// against the FP64 or integer oracle (and, for the sparse variants,
/// bit-exactly against the dense kernel), then times warmup + reps calls.
/// A point that fails validation is not timed and not emitted; after the
/// sweep a kValidation error reports how many points failed. `on_row`
/// receives each finished row; `log` (if set) receives progress lines.
std::vector<BenchResult> run_bench(const BenchConfig& config,
                                   const std::function<void(const BenchResult&)>& on_row = {},
                                   std::ostream* log = nullptr);

}  // namespace spx::tools
