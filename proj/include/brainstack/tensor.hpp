// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "brainstack/errors.hpp"

namespace brainstack {

// Dense row-major tensor of doubles. Rank up to 4 is what the library uses;
// the class itself does not care.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)), v_(checked_numel(shape_), 0.0) {}

  Tensor(std::vector<int64_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    if (static_cast<int64_t>(v_.size()) != checked_numel(shape_)) {
      throw ShapeError("tensor value count does not match shape " + shape_str());
    }
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, double fill) {
    Tensor t(std::move(shape));
    for (double& x : t.v_) x = fill;
    return t;
  }

  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(v_.size()); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (double x : v_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  void fill(double x) {
    for (double& e : v_) e = x;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    s += ")";
    return s;
  }

 private:
  static int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int64_t> shape_;
  std::vector<double> v_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

}  // namespace brainstack
