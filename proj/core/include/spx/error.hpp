// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spx {

enum class Errc {
  kInvalidArgument,
  kDimensionMismatch,
  kOverPartitioned,
  kUnalignedPartition,
  kCorruptTensor,
  kExhaustedValues,
  kRepartitionRequired,
  kUnsupported,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kIo,
  kNoContext,
  kValidation,
  kMissingBaseline,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the codes above; the
/// message starts with the code's canonical text (e.g. "over-partitioned").
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] void raise(Errc code, const std::string& detail = {});

}  // namespace spx
