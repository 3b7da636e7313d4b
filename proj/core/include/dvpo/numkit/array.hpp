// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dvpo/common/error.hpp"

namespace dvpo::numkit {

// Dense row-major array of 64-bit reals. Rank is dynamic but in practice
// everything here is a scalar, a vector, or a matrix. Public operations in
// this library either leave all values finite or throw NumericError.
class RealArray {
 public:
  RealArray() = default;

  explicit RealArray(std::vector<std::size_t> shape);

  RealArray(std::vector<std::size_t> shape, std::vector<double> values);

  static RealArray scalar(double v);
  static RealArray zeros(std::vector<std::size_t> shape);
  static RealArray full(std::vector<std::size_t> shape, double v);
  static RealArray fromVector(std::vector<double> values);  // rank-1

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Matrix accessors; valid for rank-2 arrays.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }
  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }

  bool sameShape(const RealArray& other) const { return shape_ == other.shape_; }

  bool allFinite() const;

  // Throws NumericError naming `context` if any value is non-finite.
  void requireFinite(const std::string& context) const;

  void fill(double v);

  std::string shapeString() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shapeProduct(const std::vector<std::size_t>& shape);

}  // namespace dvpo::numkit
