#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "sketchdesc/error.hpp"
#include "sketchdesc/grid.hpp"
#include "sketchdesc/sketch.hpp"

namespace sketchdesc {

inline constexpr int kPatchSide = 32;
inline constexpr int kPatchPixels = kPatchSide * kPatchSide;

inline bool is_patch_scale(int side) {
  return std::find(kPatchScales.begin(), kPatchScales.end(), side) != kPatchScales.end();
}

/// side x side crop covering rows [r - side/2, r + side/2); pixels outside
/// the sketch are background (0).
inline Grid<float> extract_patch(const SketchImage& sketch, Pixel center, int side) {
  require(sketch.pixels.contains(center), "patch center out of bounds");
  require(is_patch_scale(side), "patch scale must be 32, 64, 128 or 256");
  Grid<float> out(side, side, 0.0f);
  const int r0 = center.row - side / 2, c0 = center.col - side / 2;
  for (int r = std::max(0, -r0); r < side && r0 + r < sketch.rows(); ++r)
    for (int c = std::max(0, -c0); c < side && c0 + c < sketch.cols(); ++c) out(r, c) = sketch.pixels(r0 + r, c0 + c) ? 1.0f : 0.0f;
  return out;
}

namespace detail {

struct Tap {
  int index;
  float weight;
};

// Antialiased bilinear (triangle) filter for downsampling `in` samples to
// `out` samples: the kernel is widened by the scale factor and the weights of
// each output sample are normalized over the in-range taps.
inline std::vector<std::vector<Tap>> bilinear_taps(int in, int out) {
  const double scale = static_cast<double>(in) / out;
  const double support = std::max(1.0, scale);
  std::vector<std::vector<Tap>> taps(out);
  for (int i = 0; i < out; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(center - support)));
    const int hi = std::min(in - 1, static_cast<int>(std::ceil(center + support)));
    double total = 0.0;
    std::vector<double> w;
    for (int j = lo; j <= hi; ++j) {
      const double x = std::abs(j + 0.5 - center) / support;
      w.push_back(std::max(0.0, 1.0 - x));
      total += w.back();
    }
    for (int j = lo; j <= hi; ++j)
      if (w[j - lo] > 0.0) taps[i].push_back({j, static_cast<float>(w[j - lo] / total)});
  }
  return taps;
}

inline const std::vector<std::vector<Tap>>& taps_for(int side) {
  static const std::array<std::vector<std::vector<Tap>>, 4> table{
      bilinear_taps(kPatchScales[0], kPatchSide), bilinear_taps(kPatchScales[1], kPatchSide),
      bilinear_taps(kPatchScales[2], kPatchSide), bilinear_taps(kPatchScales[3], kPatchSide)};
  return table[std::find(kPatchScales.begin(), kPatchScales.end(), side) - kPatchScales.begin()];
}

// Separable resample of a square raster into out[32 * 32].
inline void rescale_into(const Grid<float>& patch, float* out) {
  const int side = patch.rows();
  if (side == kPatchSide) {
    std::copy(patch.data(), patch.data() + kPatchPixels, out);
    return;
  }
  const auto& taps = taps_for(side);
  std::vector<float> tmp(static_cast<std::size_t>(side) * kPatchSide, 0.0f);  // side rows x 32 cols
  for (int r = 0; r < side; ++r) {
    const float* row = patch.data() + static_cast<std::size_t>(r) * side;
    for (int c = 0; c < kPatchSide; ++c) {
      float s = 0.0f;
      for (const auto& t : taps[c]) s += t.weight * row[t.index];
      tmp[static_cast<std::size_t>(r) * kPatchSide + c] = s;
    }
  }
  for (int r = 0; r < kPatchSide; ++r) {
    for (int c = 0; c < kPatchSide; ++c) {
      float s = 0.0f;
      for (const auto& t : taps[r]) s += t.weight * tmp[static_cast<std::size_t>(t.index) * kPatchSide + c];
      out[r * kPatchSide + c] = std::clamp(s, 0.0f, 1.0f);
    }
  }
}

}  // namespace detail

/// Bilinear downsampling to 32x32; a 32x32 input is returned unchanged.
inline Grid<float> rescale_to_32(const Grid<float>& patch) {
  require(patch.rows() == patch.cols(), "patch must be square");
  require(is_patch_scale(patch.rows()), "patch side must be 32, 64, 128 or 256");
  Grid<float> out(kPatchSide, kPatchSide, 0.0f);
  detail::rescale_into(patch, out.data());
  return out;
}

/// Four 32x32 channels from the 32/64/128/256 neighbourhoods of one pixel.
struct MultiScalePatch {
  std::array<float, 4 * kPatchPixels> data{};
  Pixel center;
  std::string shape_id;
  int view_id = 0;
  int vertex_id = -1;  // ground-truth tag, -1 when unknown

  float* channel(int k) { return data.data() + k * kPatchPixels; }
  const float* channel(int k) const { return data.data() + k * kPatchPixels; }
  float at(int k, int r, int c) const { return data[k * kPatchPixels + r * kPatchSide + c]; }
};

inline MultiScalePatch make_multiscale(const SketchImage& sketch, Pixel center) {
  MultiScalePatch p;
  p.center = center;
  p.shape_id = sketch.shape_id;
  p.view_id = sketch.view_id;
  for (int k = 0; k < 4; ++k) detail::rescale_into(extract_patch(sketch, center, kPatchScales[k]), p.channel(k));
  return p;
}

}  // namespace sketchdesc
