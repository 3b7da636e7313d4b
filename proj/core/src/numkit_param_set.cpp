// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include "dvpo/numkit/param_set.hpp"

#include "dvpo/common/hash.hpp"

namespace dvpo::numkit {

void ParamSet::add(std::string name, RealArray value) {
  if (index_.count(name)) {
    throw ConfigError("ParamSet: duplicate parameter name '" + name + "'");
  }
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

const RealArray& ParamSet::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ConfigError("ParamSet: unknown parameter '" + std::string(name) + "'");
  }
  return entries_[it->second].value;
}

RealArray& ParamSet::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) {
    throw ConfigError("ParamSet: unknown parameter '" + std::string(name) + "'");
  }
  return entries_[it->second].value;
}

std::size_t ParamSet::scalarCount() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::uint64_t ParamSet::fingerprint() const { return fingerprint(""); }

std::uint64_t ParamSet::fingerprint(std::string_view prefix) const {
  HashAccumulator h;
  for (const auto& e : entries_) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    h.str(e.name);
    for (std::size_t d : e.value.shape()) h.u64(d);
    for (double v : e.value.values()) h.f64(v);
  }
  return h.digest();
}

const RealArray* GradientRecord::find(std::string_view name) const {
  for (const auto& e : grads) {
    if (e.name == name) return &e.value;
  }
  return nullptr;
}

RealArray& GradientRecord::findOrAdd(const std::string& name,
                                     const std::vector<std::size_t>& shape) {
  for (auto& e : grads) {
    if (e.name == name) return e.value;
  }
  grads.push_back({name, RealArray::zeros(shape)});
  return grads.back().value;
}

}  // namespace dvpo::numkit
