// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/tools/catalog.hpp"

#include <string>

#include "spx/error.hpp"

namespace spx::tools {

std::vector<ProjectionShape> shape_catalog(std::string_view name) {
  if (name == "llama3-8b") {
    return {
        {"q_proj", 4096, 4096},     {"k_proj", 4096, 1024},    {"v_proj", 4096, 1024},
        {"o_proj", 4096, 4096},     {"gate_proj", 4096, 14336}, {"up_proj", 4096, 14336},
        {"down_proj", 14336, 4096},
    };
  }
  if (name == "llama3-8b-profile") {
    return {{"profile_4192", 4192, 14336}, {"profile_4096", 4096, 14336}};
  }
  raise(Errc::kInvalidArgument, "unknown shape catalog '" + std::string(name) + "'");
}

std::vector<std::string_view> catalog_names() { return {"llama3-8b", "llama3-8b-profile"}; }

}  // namespace spx::tools
