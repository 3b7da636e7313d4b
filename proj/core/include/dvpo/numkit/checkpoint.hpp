// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dvpo/numkit/param_set.hpp"

namespace dvpo::numkit {

// Self-describing parameter container: a fixed magic, a format version, the
// hash of the differentiable-op set the parameters were built for, named
// shapes, and raw row-major 64-bit values. Loading rejects mismatched format
// versions and corrupt files; op-set and role checks are the caller's
// business (see models::saveCheckpoint).
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointData {
  ParamSet params;
  std::uint64_t opSetHash = 0;
  nlohmann::json extra;  // role, backbone config, vocab hash, ...
};

void saveCheckpoint(const std::filesystem::path& path, const ParamSet& params,
                    std::uint64_t opSetHash, const nlohmann::json& extra);

CheckpointData loadCheckpoint(const std::filesystem::path& path);

}  // namespace dvpo::numkit
