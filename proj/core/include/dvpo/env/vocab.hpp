// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "dvpo/common/error.hpp"
#include "dvpo/common/hash.hpp"

namespace dvpo::env {

// Token id space. Ids [0, 4) are reserved and fixed project-wide (models and
// samplers rely on pad being id 0); payload ids fill the rest.
struct Vocabulary {
  int size = 16;
  static constexpr int pad = 0;
  static constexpr int bos = 1;
  static constexpr int eos = 2;
  static constexpr int sep = 3;

  int payloadBegin() const { return 4; }
  int payloadCount() const { return size - 4; }

  bool isReserved(int id) const { return id == pad || id == bos || id == eos || id == sep; }

  // Reserved ids are distinct and in range by construction; only the size can
  // be misconfigured.
  void validate() const {
    if (size <= 4) throw ConfigError("Vocabulary: size must exceed the 4 reserved ids");
  }

  std::uint64_t hash() const {
    HashAccumulator h;
    h.u64(static_cast<std::uint64_t>(size));
    h.u64(static_cast<std::uint64_t>(pad));
    h.u64(static_cast<std::uint64_t>(bos));
    h.u64(static_cast<std::uint64_t>(eos));
    h.u64(static_cast<std::uint64_t>(sep));
    return h.digest();
  }
};

using TokenSeq = std::vector<int>;

}  // namespace dvpo::env
