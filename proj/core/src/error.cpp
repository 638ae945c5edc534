// Copyright 2026 The spx Authors
// SPDX-License-Identifier: Apache-2.0

#include "spx/error.hpp"

#include <string>

namespace spx {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::kInvalidArgument: return "invalid argument";
    case Errc::kDimensionMismatch: return "dimension mismatch";
    case Errc::kOverPartitioned: return "over-partitioned";
    case Errc::kUnalignedPartition: return "unaligned partition";
    case Errc::kCorruptTensor: return "corrupt tensor";
    case Errc::kExhaustedValues: return "exhausted values";
    case Errc::kRepartitionRequired: return "repartition required";
    case Errc::kUnsupported: return "unsupported";
    case Errc::kBadMagic: return "bad magic";
    case Errc::kVersionMismatch: return "version mismatch";
    case Errc::kTruncated: return "truncation";
    case Errc::kIo: return "io error";
    case Errc::kNoContext: return "no context";
    case Errc::kValidation: return "validation error";
    case Errc::kMissingBaseline: return "missing baseline";
  }
  return "unknown error";
}

namespace {

std::string compose(Errc code, const std::string& detail) {
  std::string msg(to_string(code));
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}

}  // namespace

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(compose(code, detail)), code_(code) {}

void raise(Errc code, const std::string& detail) { throw Error(code, detail); }

}  // namespace spx
