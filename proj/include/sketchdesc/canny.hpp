#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sketchdesc/error.hpp"
#include "sketchdesc/grid.hpp"
#include "sketchdesc/render.hpp"
#include "sketchdesc/sketch.hpp"

namespace sketchdesc {

struct CannyParams {
  double low = 0.1;   // fraction of the maximum gradient magnitude
  double high = 0.2;  // fraction of the maximum gradient magnitude
  double sigma = 1.0; // Gaussian pre-smoothing; 0 disables it
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable blur with clamped borders.
inline Grid<double> blur(const Grid<double>& in, const std::vector<double>& k) {
  const int radius = static_cast<int>(k.size() / 2);
  const int rows = in.rows(), cols = in.cols();
  Grid<double> tmp(rows, cols), out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * in(r, std::clamp(c + i, 0, cols - 1));
      tmp(r, c) = s;
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp(std::clamp(r + i, 0, rows - 1), c);
      out(r, c) = s;
    }
  }
  return out;
}

inline Grid<std::uint8_t> resize_nearest(const Grid<std::uint8_t>& in, int size) {
  Grid<std::uint8_t> out(size, size, 0);
  for (int r = 0; r < size; ++r) {
    const int sr = std::min(in.rows() - 1, static_cast<int>((r + 0.5) * in.rows() / size));
    for (int c = 0; c < size; ++c) {
      const int sc = std::min(in.cols() - 1, static_cast<int>((c + 0.5) * in.cols() / size));
      out(r, c) = in(sr, sc);
    }
  }
  return out;
}

}  // namespace detail

/// Canny edge detection on the 3-channel normal image. The per-pixel gradient
/// is taken from the channel with the strongest response. Because the normal
/// map is depth-tested, only visible creases and silhouettes produce edges.
inline SketchImage extract_sketch(const NormalMap& nm, const CannyParams& params = {}) {
  require(params.low < params.high, "canny low threshold must be below the high threshold");
  require(params.low >= 0.0, "canny thresholds must be non-negative");
  if (nm.foreground_count() == 0) throw precondition_error("empty render");

  const int rows = nm.rows(), cols = nm.cols();
  std::array<Grid<double>, 3> channel{Grid<double>(rows, cols), Grid<double>(rows, cols), Grid<double>(rows, cols)};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Vec3& n = nm.normals(r, c);
      channel[0](r, c) = n.x;
      channel[1](r, c) = n.y;
      channel[2](r, c) = n.z;
    }
  }
  if (params.sigma > 0.0) {
    const auto k = detail::gaussian_kernel(params.sigma);
    for (auto& ch : channel) ch = detail::blur(ch, k);
  }

  Grid<double> mag(rows, cols, 0.0);
  Grid<double> gx(rows, cols, 0.0), gy(rows, cols, 0.0);
  double max_mag = 0.0;
  for (int r = 1; r + 1 < rows; ++r) {
    for (int c = 1; c + 1 < cols; ++c) {
      double best = -1.0;
      for (const auto& ch : channel) {
        const double dx = (ch(r - 1, c + 1) + 2.0 * ch(r, c + 1) + ch(r + 1, c + 1)) -
                          (ch(r - 1, c - 1) + 2.0 * ch(r, c - 1) + ch(r + 1, c - 1));
        const double dy = (ch(r + 1, c - 1) + 2.0 * ch(r + 1, c) + ch(r + 1, c + 1)) -
                          (ch(r - 1, c - 1) + 2.0 * ch(r - 1, c) + ch(r - 1, c + 1));
        const double m2 = dx * dx + dy * dy;
        if (m2 > best) {
          best = m2;
          gx(r, c) = dx;
          gy(r, c) = dy;
        }
      }
      mag(r, c) = std::sqrt(best);
      max_mag = std::max(max_mag, mag(r, c));
    }
  }

  Grid<std::uint8_t> out(rows, cols, 0);
  if (max_mag > 0.0) {
    const double lo = params.low * max_mag;
    const double hi = params.high * max_mag;
    // 0 = suppressed, 1 = weak, 2 = strong
    Grid<std::uint8_t> state(rows, cols, 0);
    std::vector<Pixel> stack;
    constexpr double tan22 = 0.41421356237309503;  // tan(22.5 deg)
    for (int r = 1; r + 1 < rows; ++r) {
      for (int c = 1; c + 1 < cols; ++c) {
        const double m = mag(r, c);
        if (m < lo || m == 0.0) continue;
        const double ax = std::abs(gx(r, c)), ay = std::abs(gy(r, c));
        double n1, n2;
        if (ay <= ax * tan22) {
          n1 = mag(r, c - 1);
          n2 = mag(r, c + 1);
        } else if (ax <= ay * tan22) {
          n1 = mag(r - 1, c);
          n2 = mag(r + 1, c);
        } else if ((gx(r, c) > 0) == (gy(r, c) > 0)) {
          n1 = mag(r - 1, c - 1);
          n2 = mag(r + 1, c + 1);
        } else {
          n1 = mag(r - 1, c + 1);
          n2 = mag(r + 1, c - 1);
        }
        // Ties resolved towards the lower/left neighbour, as in OpenCV.
        if (m > n1 && m >= n2) {
          state(r, c) = m >= hi ? 2 : 1;
          if (state(r, c) == 2) stack.push_back({r, c});
        }
      }
    }
    while (!stack.empty()) {
      const Pixel p = stack.back();
      stack.pop_back();
      if (out[p]) continue;
      out[p] = 1;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const Pixel q{p.row + dr, p.col + dc};
          if (state.contains(q) && state[q] != 0 && !out[q]) stack.push_back(q);
        }
      }
    }
  }

  SketchImage sketch;
  sketch.view = nm.view;
  sketch.pixels = rows == kSketchSize && cols == kSketchSize ? std::move(out) : detail::resize_nearest(out, kSketchSize);
  return sketch;
}

}  // namespace sketchdesc
