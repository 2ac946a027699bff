#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "oncoabs/common/error.hpp"

namespace oncoabs::num {

/// Dense row-major matrix. Vectors are 1×n rows or n×1 columns; the shape is
/// always reported as {rows, cols}.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_)
      throw DimensionError("tensor value count " + std::to_string(values_.size()) +
                           " does not match shape " + shape_string());
  }

  static Tensor row(std::initializer_list<T> xs) {
    return Tensor(1, xs.size(), std::vector<T>(xs));
  }
  static Tensor row(std::span<const T> xs) {
    return Tensor(1, xs.size(), std::vector<T>(xs.begin(), xs.end()));
  }
  static Tensor scalar(T x) { return Tensor(1, 1, x); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::span<T> row_span(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const T> row_span(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  T& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }
  T& operator[](std::size_t i) noexcept { return values_[i]; }
  T operator[](std::size_t i) const noexcept { return values_[i]; }

  T item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string());
    return values_[0];
  }

  void fill(T x) { std::fill(values_.begin(), values_.end(), x); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T x) { return std::isfinite(x); });
  }

  std::string shape_string() const {
    return "[" + std::to_string(rows_) + ", " + std::to_string(cols_) + "]";
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(rows_, cols_, std::vector<U>(values_.begin(), values_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

}  // namespace oncoabs::num
