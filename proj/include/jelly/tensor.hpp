#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "jelly/errors.hpp"

namespace jelly {

inline std::size_t shape_size(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s + "]";
}

/// Dense row-major array with a runtime shape.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(std::vector<int> shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
    }
  }

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(std::vector<int> shape) {
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    shape_ = std::move(shape);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

}  // namespace jelly
