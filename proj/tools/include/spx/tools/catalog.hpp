// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace spx::tools {

/// A projection weight of `inner` inputs by `out` outputs.
struct ProjectionShape {
  std::string name;
  std::size_t inner = 0;
  std::size_t out = 0;
};

/// "llama3-8b": the seven per-layer projections of Llama 3 8B.
/// "llama3-8b-profile": the 4192 x 14336 profiling shape next to the
/// 4096 x 14336 MLP shape it most likely denotes.
/// Throws kInvalidArgument for an unknown name.
std::vector<ProjectionShape> shape_catalog(std::string_view name);
std::vector<std::string_view> catalog_names();

}  // namespace spx::tools
