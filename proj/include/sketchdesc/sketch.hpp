#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>

#include "sketchdesc/error.hpp"
#include "sketchdesc/grid.hpp"
#include "sketchdesc/render.hpp"

namespace sketchdesc {

/// Native side lengths of the four patch scales, smallest first.
inline constexpr std::array<int, 4> kPatchScales{32, 64, 128, 256};

/// Binary line drawing, 1 = ink.
struct SketchImage {
  Grid<std::uint8_t> pixels;
  Viewpoint view;
  std::string shape_id;
  int view_id = 0;

  int rows() const { return pixels.rows(); }
  int cols() const { return pixels.cols(); }
  bool ink(int r, int c) const { return pixels.contains(r, c) && pixels(r, c) != 0; }
  bool ink(Pixel p) const { return ink(p.row, p.col); }

  std::size_t ink_count() const {
    std::size_t n = 0;
    for (auto v : pixels.values()) n += v != 0;
    return n;
  }

  void validate() const {
    require(rows() == kSketchSize && cols() == kSketchSize, "sketch must be 480x480");
    for (auto v : pixels.values()) require(v == 0 || v == 1, "sketch pixels must be binary");
  }
};

inline SketchImage blank_sketch() { return SketchImage{Grid<std::uint8_t>(kSketchSize, kSketchSize, 0), {}, {}, 0}; }

/// Summed-area table over ink, for O(1) window counts.
class InkIntegral {
 public:
  explicit InkIntegral(const SketchImage& sketch)
      : rows_(sketch.rows()), cols_(sketch.cols()), sums_(rows_ + 1, cols_ + 1, 0) {
    for (int r = 0; r < rows_; ++r) {
      std::int64_t row_sum = 0;
      for (int c = 0; c < cols_; ++c) {
        row_sum += sketch.pixels(r, c) != 0;
        sums_(r + 1, c + 1) = sums_(r, c + 1) + row_sum;
      }
    }
  }

  /// Ink count in rows [r0, r1) x cols [c0, c1), clipped to the image.
  std::int64_t count(int r0, int c0, int r1, int c1) const {
    r0 = std::max(r0, 0);
    c0 = std::max(c0, 0);
    r1 = std::min(r1, rows_);
    c1 = std::min(c1, cols_);
    if (r0 >= r1 || c0 >= c1) return 0;
    return sums_(r1, c1) - sums_(r0, c1) - sums_(r1, c0) + sums_(r0, c0);
  }

  /// Ink count inside the side x side window centered at `center`, i.e.
  /// rows [row - side/2, row + side/2).
  std::int64_t window(Pixel center, int side) const {
    const int half = side / 2;
    return count(center.row - half, center.col - half, center.row - half + side, center.col - half + side);
  }

 private:
  int rows_;
  int cols_;
  Grid<std::int64_t> sums_;
};

}  // namespace sketchdesc
