// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dvpo/numkit/array.hpp"

namespace dvpo::numkit {

// Named, ordered collection of parameter arrays. Iteration order is the
// insertion order, which makes fingerprints and optimizer traversals
// reproducible across runs.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    RealArray value;
  };

  void add(std::string name, RealArray value);

  bool contains(std::string_view name) const;
  const RealArray& get(std::string_view name) const;
  RealArray& get(std::string_view name);

  std::size_t count() const { return entries_.size(); }
  std::size_t scalarCount() const;

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }

  // Content hash over names, shapes, and raw 64-bit values. Changes iff any
  // name, shape, or value changes.
  std::uint64_t fingerprint() const;

  // Fingerprint restricted to entries whose name starts with `prefix`.
  std::uint64_t fingerprint(std::string_view prefix) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-parameter gradients plus the scalar loss they were taken from. Entry
// order mirrors the ParamSet the gradients were computed against.
struct GradientRecord {
  double loss = 0.0;
  std::vector<ParamSet::Entry> grads;

  const RealArray* find(std::string_view name) const;
  RealArray& findOrAdd(const std::string& name, const std::vector<std::size_t>& shape);
};

}  // namespace dvpo::numkit
