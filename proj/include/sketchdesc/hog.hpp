#pragma once

// Histogram-of-oriented-gradients descriptor of a 32x32 patch: unsigned
// orientation in 9 bins, 8x8-pixel cells, 2x2-cell blocks at one-cell stride
// with L2-Hys normalization. 3x3 blocks x 4 cells x 9 bins = 324 values.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "sketchdesc/error.hpp"
#include "sketchdesc/grid.hpp"

namespace sketchdesc {

inline constexpr int kHogBins = 9;
inline constexpr int kHogCell = 8;
inline constexpr int kHogDim = 324;

using HogDescriptor = std::array<float, kHogDim>;

inline HogDescriptor hog_descriptor(const Grid<float>& patch) {
  require(patch.rows() == 32 && patch.cols() == 32, "HOG expects a 32x32 patch");
  constexpr int cells = 32 / kHogCell;
  std::array<double, cells * cells * kHogBins> hist{};
  auto at = [&](int r, int c) { return static_cast<double>(patch(std::clamp(r, 0, 31), std::clamp(c, 0, 31))); };
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      const double gx = at(r, c + 1) - at(r, c - 1);
      const double gy = at(r + 1, c) - at(r - 1, c);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double angle = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      if (angle >= 180.0) angle -= 180.0;
      // Bin centers at 10, 30, ..., 170 degrees; linear vote between the two nearest.
      const double pos = angle / 20.0 - 0.5;
      const double lo = std::floor(pos);
      const double frac = pos - lo;
      const int b0 = (static_cast<int>(lo) + kHogBins) % kHogBins, b1 = (b0 + 1) % kHogBins;
      double* cell = hist.data() + ((r / kHogCell) * cells + c / kHogCell) * kHogBins;
      cell[b0] += mag * (1.0 - frac);
      cell[b1] += mag * frac;
    }
  }
  HogDescriptor out{};
  int k = 0;
  for (int br = 0; br + 1 < cells; ++br) {
    for (int bc = 0; bc + 1 < cells; ++bc) {
      std::array<double, 4 * kHogBins> block{};
      int j = 0;
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc)
          for (int b = 0; b < kHogBins; ++b) block[j++] = hist[((br + dr) * cells + bc + dc) * kHogBins + b];
      auto normalize = [&] {
        double sq = 0.0;
        for (double v : block) sq += v * v;
        const double n = std::sqrt(sq + 1e-12);
        for (double& v : block) v /= n;
      };
      normalize();
      for (double& v : block) v = std::min(v, 0.2);
      normalize();
      for (double v : block) out[k++] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace sketchdesc
