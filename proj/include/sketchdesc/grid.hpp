#pragma once

#include <cassert>
#include <cmath>
#include <compare>
#include <cstddef>
#include <vector>

namespace sketchdesc {

/// Integer image coordinate. Rows grow downwards, columns to the right.
struct Pixel {
  int row = 0;
  int col = 0;
  constexpr auto operator<=>(const Pixel&) const = default;
};

inline double euclidean_distance(Pixel a, Pixel b) {
  return std::hypot(static_cast<double>(a.row - b.row), static_cast<double>(a.col - b.col));
}

inline int chebyshev_distance(Pixel a, Pixel b) {
  const int dr = a.row > b.row ? a.row - b.row : b.row - a.row;
  const int dc = a.col > b.col ? a.col - b.col : b.col - a.col;
  return dr > dc ? dr : dc;
}

/// Dense row-major 2D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int r, int c) const { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }
  bool contains(Pixel p) const { return contains(p.row, p.col); }

  T& operator()(int r, int c) {
    assert(contains(r, c));
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  const T& operator()(int r, int c) const {
    assert(contains(r, c));
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }
  T& operator[](Pixel p) { return (*this)(p.row, p.col); }
  const T& operator[](Pixel p) const { return (*this)(p.row, p.col); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Grid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

}  // namespace sketchdesc
