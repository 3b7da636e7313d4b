// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include "dvpo/numkit/array.hpp"

#include <cmath>
#include <sstream>

namespace dvpo::numkit {

std::size_t shapeProduct(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

RealArray::RealArray(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), values_(shapeProduct(shape_), 0.0) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("RealArray: zero-sized dimension");
  }
}

RealArray::RealArray(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("RealArray: zero-sized dimension");
  }
  if (shapeProduct(shape_) != values_.size()) {
    throw ShapeError("RealArray: value count does not match shape");
  }
}

RealArray RealArray::scalar(double v) { return RealArray({1}, {v}); }

RealArray RealArray::zeros(std::vector<std::size_t> shape) {
  return RealArray(std::move(shape));
}

RealArray RealArray::full(std::vector<std::size_t> shape, double v) {
  RealArray a(std::move(shape));
  a.fill(v);
  return a;
}

RealArray RealArray::fromVector(std::vector<double> values) {
  std::vector<std::size_t> shape{values.size()};
  return RealArray(std::move(shape), std::move(values));
}

bool RealArray::allFinite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void RealArray::requireFinite(const std::string& context) const {
  if (!allFinite()) {
    throw NumericError("non-finite value in " + context);
  }
}

void RealArray::fill(double v) {
  for (double& x : values_) x = v;
}

std::string RealArray::shapeString() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

}  // namespace dvpo::numkit
