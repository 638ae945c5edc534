// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "spx/tools/bench.hpp"

namespace spx::tools {

struct SpeedupRow {
  BenchResult row;
  std::size_t baseline = 0;  // index into the input rows
  double speedup = 1.0;      // baseline median / row median
  double bytes_ratio = 1.0;  // modeled_bytes / dense_bytes
};

/// Pairs each row with its dense baseline: a "dense" row for dense, sparse
/// and vector_sparse, "int8_dense" for the INT8 kernels, and the attention
/// row at zero K and V sparsity for attention. Baselines share shape, M,
/// K, N (or heads, head_dim, context) and workers, and preferably the
/// row's sparsity; failing that, sparsity 0. Throws kMissingBaseline.
std::vector<SpeedupRow> compute_speedups(const std::vector<BenchResult>& rows);

/// One markdown table per kernel, in first-appearance order.
void write_markdown(const std::vector<SpeedupRow>& rows, std::ostream& sink);

/// Writes <kernel>.dat per kernel (whitespace-separated: sparsity, m,
/// workers, speedup, bytes ratio, median ns) for plotting.
std::vector<std::filesystem::path> write_plot_data(const std::vector<SpeedupRow>& rows,
                                                   const std::filesystem::path& dir);

}  // namespace spx::tools
