// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace dvpo {

// FNV-1a, 64-bit. Used for content fingerprints (parameter sets, vocab
// descriptors, op registries). Not cryptographic.
class HashAccumulator {
 public:
  HashAccumulator& bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= static_cast<std::uint64_t>(p[i]);
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  HashAccumulator& str(std::string_view s) { return bytes(s.data(), s.size()); }

  HashAccumulator& u64(std::uint64_t v) { return bytes(&v, sizeof(v)); }

  HashAccumulator& f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    return u64(bits);
  }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t mixSeed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dvpo
