#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace jelly {

/// Row-major 2-D grid. `at(row, col)` with row in [0, height).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}
  Grid(int width, int height, std::vector<T> values)
      : width_(width), height_(height), data_(std::move(values)) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  const T& at(int row, int col) const {
    return data_[static_cast<std::size_t>(row) * width_ + col];
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  bool operator==(const Grid&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Image = Grid<float>;         // grayscale intensities in [0,1]
using Mask = Grid<std::uint8_t>;   // binary, 1 = set

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};
using RgbImage = Grid<Rgb>;

}  // namespace jelly
