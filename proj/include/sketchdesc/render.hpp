#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "sketchdesc/error.hpp"
#include "sketchdesc/grid.hpp"
#include "sketchdesc/mesh.hpp"
#include "sketchdesc/vec.hpp"

namespace sketchdesc {

inline constexpr int kSketchSize = 480;

/// Camera placement on the viewing hemisphere around the origin.
struct Viewpoint {
  double azimuth = 0.0;    // degrees in [0, 360)
  double elevation = 30.0; // degrees above the XZ plane
  double distance = 2.5;   // camera to origin, in units of the bounding radius
  int image_size = kSketchSize;

  bool operator==(const Viewpoint&) const = default;
};

/// Azimuths 0, step, 2*step, ... at a fixed elevation, truncated from the end.
inline std::vector<Viewpoint> sample_viewpoints(int azimuth_step, double elevation, int count_limit) {
  require(azimuth_step == 15 || azimuth_step == 30, "azimuth step must be 15 or 30 degrees");
  require(elevation >= 15.0 && elevation <= 45.0, "elevation must lie in [15, 45] degrees");
  require(count_limit >= 0, "view count limit must be non-negative");
  const int full = 360 / azimuth_step;
  const int n = std::min(full, count_limit);
  std::vector<Viewpoint> views;
  views.reserve(n);
  for (int i = 0; i < n; ++i) views.push_back(Viewpoint{static_cast<double>(i * azimuth_step), elevation});
  return views;
}

/// Continuous image-plane position; pixel (r, c) covers [r, r+1) x [c, c+1).
struct ScreenPoint {
  double row = 0.0;
  double col = 0.0;
  double depth = 0.0;  // distance along the viewing axis

  Pixel pixel() const { return {static_cast<int>(std::floor(row)), static_cast<int>(std::floor(col))}; }
};

/// Perspective camera looking at the origin with +Y up. Camera space is
/// right-handed with the camera looking down -Z; depth = -z.
class Camera {
 public:
  explicit Camera(const Viewpoint& view) : size_(view.image_size) {
    require(view.distance > 1.0, "camera must be outside the unit bounding sphere");
    require(view.image_size > 0, "image size must be positive");
    const double az = view.azimuth * std::numbers::pi / 180.0;
    const double el = view.elevation * std::numbers::pi / 180.0;
    eye_ = Vec3{std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az)} * view.distance;
    forward_ = normalized(-eye_);
    right_ = normalized(cross(forward_, Vec3{0.0, 1.0, 0.0}));
    if (length(right_) == 0.0) right_ = Vec3{1.0, 0.0, 0.0};
    up_ = cross(right_, forward_);
    // The unit sphere subtends asin(1/d); keep a 5% margin around it.
    half_extent_ = std::tan(std::asin(1.0 / view.distance)) * 1.05;
  }

  int image_size() const { return size_; }
  const Vec3& eye() const { return eye_; }

  Vec3 to_camera(const Vec3& world) const {
    const Vec3 d = world - eye_;
    return {dot(d, right_), dot(d, up_), -dot(d, forward_)};
  }
  Vec3 direction_to_camera(const Vec3& world_dir) const {
    return {dot(world_dir, right_), dot(world_dir, up_), -dot(world_dir, forward_)};
  }

  ScreenPoint project_camera(const Vec3& cam) const {
    const double depth = -cam.z;
    const double u = cam.x / depth / half_extent_;
    const double v = cam.y / depth / half_extent_;
    return {(1.0 - v) * 0.5 * size_, (u + 1.0) * 0.5 * size_, depth};
  }
  ScreenPoint project(const Vec3& world) const { return project_camera(to_camera(world)); }

  /// Camera-space ray direction through an image-plane position, with z = -1.
  Vec3 ray_direction(double row, double col) const {
    const double u = col / size_ * 2.0 - 1.0;
    const double v = 1.0 - row / size_ * 2.0;
    return {u * half_extent_, v * half_extent_, -1.0};
  }

 private:
  int size_;
  Vec3 eye_, forward_, right_, up_;
  double half_extent_;
};

/// Depth-tested render: camera-space unit normal of the nearest surface per
/// pixel, its depth, and the index of the triangle that produced it.
struct NormalMap {
  Grid<Vec3> normals;  // zero vector on background
  Grid<double> depth;  // +inf on background
  Grid<int> face;      // -1 on background
  Viewpoint view;

  int rows() const { return depth.rows(); }
  int cols() const { return depth.cols(); }
  bool foreground(int r, int c) const { return face(r, c) >= 0; }
  std::size_t foreground_count() const {
    return static_cast<std::size_t>(std::count_if(face.values().begin(), face.values().end(), [](int f) { return f >= 0; }));
  }
};

namespace detail {

struct ScreenTriangle {
  std::array<ScreenPoint, 3> p;
  double area2 = 0.0;  // twice the signed screen-space area
};

inline double edge_function(const ScreenPoint& a, const ScreenPoint& b, double row, double col) {
  return (b.col - a.col) * (row - a.row) - (b.row - a.row) * (col - a.col);
}

// Barycentric weights of (row, col); returns false when outside. `slack`
// widens the inside test by a fraction of the triangle's area.
inline bool barycentric(const ScreenTriangle& t, double row, double col, std::array<double, 3>& w, double slack = 0.0) {
  const double e0 = edge_function(t.p[1], t.p[2], row, col);
  const double e1 = edge_function(t.p[2], t.p[0], row, col);
  const double e2 = edge_function(t.p[0], t.p[1], row, col);
  w = {e0 / t.area2, e1 / t.area2, e2 / t.area2};
  return w[0] >= -slack && w[1] >= -slack && w[2] >= -slack;
}

// Perspective-correct depth: 1/depth is affine in screen space.
inline double interpolate_depth(const ScreenTriangle& t, const std::array<double, 3>& w) {
  return 1.0 / (w[0] / t.p[0].depth + w[1] / t.p[1].depth + w[2] / t.p[2].depth);
}

inline constexpr double kNearPlane = 1e-6;

inline bool screen_triangle(const Camera& cam, const TriangleMesh& mesh, std::size_t index, ScreenTriangle& out) {
  const auto& tri = mesh.triangles[index];
  for (int k = 0; k < 3; ++k) {
    out.p[k] = cam.project(mesh.vertices[tri[k]]);
    if (!(out.p[k].depth > kNearPlane)) return false;
  }
  out.area2 = edge_function(out.p[0], out.p[1], out.p[2].row, out.p[2].col);
  return std::abs(out.area2) > 1e-12;
}

}  // namespace detail

/// Camera-space face normal of a triangle, oriented towards the camera.
inline Vec3 facing_normal(const Camera& cam, const TriangleMesh& mesh, std::size_t index) {
  const auto& tri = mesh.triangles[index];
  const Vec3 a = cam.to_camera(mesh.vertices[tri[0]]);
  const Vec3 b = cam.to_camera(mesh.vertices[tri[1]]);
  const Vec3 c = cam.to_camera(mesh.vertices[tri[2]]);
  Vec3 n = normalized(cross(b - a, c - a));
  if (dot(n, -a) < 0.0) n = -n;
  return n;
}

/// Z-buffered rasterization sampled at pixel centers, flat (per-face) normals.
/// Degenerate triangles and triangles touching the camera plane are skipped.
inline NormalMap render_normal_map(const TriangleMesh& mesh, const Viewpoint& view) {
  mesh.validate();
  const Camera cam(view);
  const int n = view.image_size;
  NormalMap out{Grid<Vec3>(n, n), Grid<double>(n, n, std::numeric_limits<double>::infinity()), Grid<int>(n, n, -1), view};

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    detail::ScreenTriangle st;
    if (!detail::screen_triangle(cam, mesh, t, st)) continue;
    double rmin = st.p[0].row, rmax = rmin, cmin = st.p[0].col, cmax = cmin;
    for (const auto& p : st.p) {
      rmin = std::min(rmin, p.row);
      rmax = std::max(rmax, p.row);
      cmin = std::min(cmin, p.col);
      cmax = std::max(cmax, p.col);
    }
    const int r0 = std::max(0, static_cast<int>(std::ceil(rmin - 0.5)));
    const int r1 = std::min(n - 1, static_cast<int>(std::floor(rmax - 0.5)));
    const int c0 = std::max(0, static_cast<int>(std::ceil(cmin - 0.5)));
    const int c1 = std::min(n - 1, static_cast<int>(std::floor(cmax - 0.5)));
    if (r0 > r1 || c0 > c1) continue;
    const Vec3 normal = facing_normal(cam, mesh, t);
    std::array<double, 3> w;
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (!detail::barycentric(st, r + 0.5, c + 0.5, w)) continue;
        const double z = detail::interpolate_depth(st, w);
        if (z < out.depth(r, c)) {
          out.depth(r, c) = z;
          out.normals(r, c) = normal;
          out.face(r, c) = static_cast<int>(t);
        }
      }
    }
  }
  return out;
}

/// One vertex seen from one view.
struct VertexProjection {
  int vertex_id = 0;
  int view_id = 0;
  Pixel pixel;          // nearest pixel (floor of the continuous position)
  double depth = 0.0;   // view-space depth of the vertex
  bool in_bounds = false;
  bool visible = false;
};

/// Projects every vertex and flags it visible when it is not behind the depth
/// buffer by more than eps_depth. The buffer depth is evaluated at the
/// vertex's exact image position using the triangles the rasterizer stored
/// around its pixel, so slanted surfaces do not self-occlude.
inline std::vector<VertexProjection> project_vertices(const TriangleMesh& mesh, const Viewpoint& view,
                                                      const NormalMap& buffer, double eps_depth, int view_id = 0) {
  require(buffer.rows() == view.image_size && buffer.cols() == view.image_size,
          "depth buffer does not match the viewpoint's image size");
  const Camera cam(view);
  std::vector<VertexProjection> out;
  out.reserve(mesh.vertices.size());
  std::vector<int> candidates;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    VertexProjection rec;
    rec.vertex_id = static_cast<int>(v);
    rec.view_id = view_id;
    const ScreenPoint sp = cam.project(mesh.vertices[v]);
    rec.depth = sp.depth;
    if (!(sp.depth > detail::kNearPlane) || !std::isfinite(sp.row) || !std::isfinite(sp.col)) {
      rec.pixel = {-1, -1};
      out.push_back(rec);
      continue;
    }
    rec.pixel = sp.pixel();
    rec.in_bounds = buffer.depth.contains(rec.pixel);
    if (rec.in_bounds) {
      candidates.clear();
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const Pixel q{rec.pixel.row + dr, rec.pixel.col + dc};
          if (!buffer.face.contains(q)) continue;
          const int f = buffer.face[q];
          if (f >= 0 && std::find(candidates.begin(), candidates.end(), f) == candidates.end()) candidates.push_back(f);
        }
      }
      double front = std::numeric_limits<double>::infinity();
      for (int f : candidates) {
        detail::ScreenTriangle st;
        if (!detail::screen_triangle(cam, mesh, static_cast<std::size_t>(f), st)) continue;
        std::array<double, 3> w;
        if (!detail::barycentric(st, sp.row, sp.col, w, 1e-9)) continue;
        front = std::min(front, detail::interpolate_depth(st, w));
      }
      rec.visible = sp.depth <= front + eps_depth;
    }
    out.push_back(rec);
  }
  return out;
}

/// Depth tolerance used for vertex visibility: 1e-3 of the bounding radius.
inline double default_depth_epsilon(double bounding_radius = 1.0) { return 1e-3 * bounding_radius; }

}  // namespace sketchdesc
