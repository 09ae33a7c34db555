#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sketchdesc/error.hpp"
#include "sketchdesc/grid.hpp"
#include "sketchdesc/render.hpp"
#include "sketchdesc/sketch.hpp"

namespace sketchdesc {

using Rgb8 = std::array<std::uint8_t, 3>;
using Rgb16 = std::array<std::uint16_t, 3>;

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// rows: one byte buffer per image row, already in PNG byte order.
inline void write_png_rows(const std::filesystem::path& path, int width, int height, int bit_depth, int color_type,
                           std::vector<std::vector<png_byte>>& rows) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw runtime_failure("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw runtime_failure("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw runtime_failure("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw runtime_failure("failed writing PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (auto& row : rows) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const Grid<std::uint8_t>& gray) {
  std::vector<std::vector<png_byte>> rows(gray.rows(), std::vector<png_byte>(gray.cols()));
  for (int r = 0; r < gray.rows(); ++r)
    for (int c = 0; c < gray.cols(); ++c) rows[r][c] = gray(r, c);
  detail::write_png_rows(path, gray.cols(), gray.rows(), 8, PNG_COLOR_TYPE_GRAY, rows);
}

inline void write_png(const std::filesystem::path& path, const Grid<Rgb8>& rgb) {
  std::vector<std::vector<png_byte>> rows(rgb.rows(), std::vector<png_byte>(rgb.cols() * 3));
  for (int r = 0; r < rgb.rows(); ++r)
    for (int c = 0; c < rgb.cols(); ++c)
      for (int k = 0; k < 3; ++k) rows[r][3 * c + k] = rgb(r, c)[k];
  detail::write_png_rows(path, rgb.cols(), rgb.rows(), 8, PNG_COLOR_TYPE_RGB, rows);
}

// 16-bit samples are stored big-endian in PNG.
inline void write_png(const std::filesystem::path& path, const Grid<Rgb16>& rgb) {
  std::vector<std::vector<png_byte>> rows(rgb.rows(), std::vector<png_byte>(rgb.cols() * 6));
  for (int r = 0; r < rgb.rows(); ++r) {
    for (int c = 0; c < rgb.cols(); ++c) {
      for (int k = 0; k < 3; ++k) {
        rows[r][6 * c + 2 * k] = static_cast<png_byte>(rgb(r, c)[k] >> 8);
        rows[r][6 * c + 2 * k + 1] = static_cast<png_byte>(rgb(r, c)[k] & 0xFF);
      }
    }
  }
  detail::write_png_rows(path, rgb.cols(), rgb.rows(), 16, PNG_COLOR_TYPE_RGB, rows);
}

/// Reads any PNG as 8-bit grayscale (alpha composited over white).
inline Grid<std::uint8_t> read_png_gray(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  require(fp != nullptr, "cannot open image " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw runtime_failure("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw runtime_failure("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw precondition_error("not a readable PNG: " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_color_16 white{0, 255, 255, 255, 255};
  png_set_background(png, &white, PNG_BACKGROUND_GAMMA_SCREEN, 0, 1.0);
  png_read_update_info(png, info);
  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const auto rowbytes = png_get_rowbytes(png, info);
  const int channels = png_get_channels(png, info);
  std::vector<png_byte> buffer(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) rows[r] = buffer.data() + r * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  Grid<std::uint8_t> out(height, width);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c) out(r, c) = rows[r][c * channels];
  return out;
}

/// Writes a sketch for viewing: ink black (0) on white (255).
inline void save_sketch_png(const std::filesystem::path& path, const SketchImage& sketch) {
  Grid<std::uint8_t> img(sketch.rows(), sketch.cols());
  for (int r = 0; r < sketch.rows(); ++r)
    for (int c = 0; c < sketch.cols(); ++c) img(r, c) = sketch.pixels(r, c) ? 0 : 255;
  write_png(path, img);
}

/// Loads an externally drawn or saved sketch; dark pixels (< 128) are ink.
inline SketchImage load_sketch_png(const std::filesystem::path& path) {
  const Grid<std::uint8_t> gray = read_png_gray(path);
  require(gray.rows() == kSketchSize && gray.cols() == kSketchSize,
          "sketch image must be 480x480: " + path.string());
  SketchImage s = blank_sketch();
  for (int r = 0; r < gray.rows(); ++r)
    for (int c = 0; c < gray.cols(); ++c) s.pixels(r, c) = gray(r, c) < 128 ? 1 : 0;
  return s;
}

/// Debug output: normals mapped to (n + 1) / 2 in 16-bit RGB.
inline void save_normal_map_png(const std::filesystem::path& path, const NormalMap& nm) {
  Grid<Rgb16> img(nm.rows(), nm.cols());
  auto enc = [](double v) { return static_cast<std::uint16_t>(std::lround(std::clamp((v + 1.0) * 0.5, 0.0, 1.0) * 65535.0)); };
  for (int r = 0; r < nm.rows(); ++r) {
    for (int c = 0; c < nm.cols(); ++c) {
      const Vec3& n = nm.normals(r, c);
      img(r, c) = {enc(n.x), enc(n.y), enc(n.z)};
    }
  }
  write_png(path, img);
}

}  // namespace sketchdesc
