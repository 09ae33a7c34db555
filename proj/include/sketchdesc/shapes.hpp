#pragma once

// Procedural meshes for desk-scale datasets and tests: boxes, chairs, lamps
// and random triangle soups. Part labels are recorded per triangle.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <tuple>

#include "sketchdesc/mesh.hpp"
#include "sketchdesc/rng.hpp"
#include "sketchdesc/vec.hpp"

namespace sketchdesc {

class MeshBuilder {
 public:
  explicit MeshBuilder(double weld_tolerance = 1e-7) : tol_(weld_tolerance) {}

  int vertex(const Vec3& p) {
    const auto key = std::make_tuple(std::llround(p.x / tol_), std::llround(p.y / tol_), std::llround(p.z / tol_));
    const auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(mesh_.vertices.size());
    mesh_.vertices.push_back(p);
    index_.emplace(key, id);
    return id;
  }

  void triangle(int a, int b, int c, int label) {
    if (a == b || b == c || a == c) return;
    mesh_.triangles.push_back({a, b, c});
    mesh_.part_labels.push_back(label);
  }

  // Planar quad grid spanning origin + s*u + t*v, s,t in [0,1].
  void quad(const Vec3& origin, const Vec3& u, const Vec3& v, int nu, int nv, int label) {
    std::vector<int> ids((nu + 1) * (nv + 1));
    for (int j = 0; j <= nv; ++j)
      for (int i = 0; i <= nu; ++i)
        ids[j * (nu + 1) + i] = vertex(origin + u * (static_cast<double>(i) / nu) + v * (static_cast<double>(j) / nv));
    for (int j = 0; j < nv; ++j) {
      for (int i = 0; i < nu; ++i) {
        const int a = ids[j * (nu + 1) + i], b = ids[j * (nu + 1) + i + 1];
        const int c = ids[(j + 1) * (nu + 1) + i + 1], d = ids[(j + 1) * (nu + 1) + i];
        triangle(a, b, c, label);
        triangle(a, c, d, label);
      }
    }
  }

  // Axis-aligned box [lo, hi] whose faces are subdivided so that grid edges
  // are at most `spacing` long.
  void box(const Vec3& lo, const Vec3& hi, double spacing, int label) {
    const Vec3 size = hi - lo;
    auto segs = [&](double len) { return std::max(1, static_cast<int>(std::ceil(len / spacing - 1e-9))); };
    const int nx = segs(size.x), ny = segs(size.y), nz = segs(size.z);
    const Vec3 ex{size.x, 0, 0}, ey{0, size.y, 0}, ez{0, 0, size.z};
    quad(lo, ey, ex, ny, nx, label);                   // z = lo
    quad(lo + ez, ex, ey, nx, ny, label);              // z = hi
    quad(lo, ez, ey, nz, ny, label);                   // x = lo
    quad(lo + ex, ey, ez, ny, nz, label);              // x = hi
    quad(lo, ex, ez, nx, nz, label);                   // y = lo
    quad(lo + ey, ez, ex, nz, nx, label);              // y = hi
  }

  // Open frustum around the Y axis from (y0, r0) to (y1, r1).
  void frustum(double y0, double r0, double y1, double r1, int segments, int rings, int label) {
    std::vector<int> ids((segments + 1) * (rings + 1));
    for (int j = 0; j <= rings; ++j) {
      const double t = static_cast<double>(j) / rings;
      const double y = y0 + (y1 - y0) * t, r = r0 + (r1 - r0) * t;
      for (int i = 0; i <= segments; ++i) {
        const double a = 2.0 * std::numbers::pi * (i % segments) / segments;
        ids[j * (segments + 1) + i] = vertex({r * std::cos(a), y, r * std::sin(a)});
      }
    }
    for (int j = 0; j < rings; ++j) {
      for (int i = 0; i < segments; ++i) {
        const int a = ids[j * (segments + 1) + i], b = ids[j * (segments + 1) + i + 1];
        const int c = ids[(j + 1) * (segments + 1) + i + 1], d = ids[(j + 1) * (segments + 1) + i];
        triangle(a, b, c, label);
        triangle(a, c, d, label);
      }
    }
  }

  TriangleMesh take() { return std::move(mesh_); }

 private:
  double tol_;
  TriangleMesh mesh_;
  std::map<std::tuple<long long, long long, long long>, int> index_;
};

/// Axis-aligned cube of side `side` centered at the origin, faces split into
/// `subdivisions` x `subdivisions` quads.
inline TriangleMesh make_cube(double side = 1.0, int subdivisions = 1) {
  MeshBuilder b;
  const double h = side / 2.0;
  b.box({-h, -h, -h}, {h, h, h}, side / subdivisions, 0);
  TriangleMesh m = b.take();
  m.part_labels.clear();
  return m;
}

enum ChairPart { kChairSeat = 0, kChairLegs = 1, kChairBack = 2 };

/// Four-legged chair with a solid back; proportions jittered by `seed`.
/// `spacing` controls the vertex density.
inline TriangleMesh make_chair(std::uint64_t seed, double spacing = 0.1) {
  Rng rng = Rng::derive(seed, 0xC4A1);
  const double w = rng.uniform(0.8, 1.1), d = rng.uniform(0.75, 1.0);
  const double seat_y = rng.uniform(0.8, 1.0), seat_t = rng.uniform(0.08, 0.14);
  const double leg = rng.uniform(0.07, 0.11), back_h = rng.uniform(0.8, 1.1), back_t = rng.uniform(0.08, 0.12);
  MeshBuilder b;
  b.box({-w / 2, seat_y, -d / 2}, {w / 2, seat_y + seat_t, d / 2}, spacing, kChairSeat);
  for (int sx : {-1, 1}) {
    for (int sz : {-1, 1}) {
      const double x0 = sx < 0 ? -w / 2 : w / 2 - leg;
      const double z0 = sz < 0 ? -d / 2 : d / 2 - leg;
      b.box({x0, 0.0, z0}, {x0 + leg, seat_y, z0 + leg}, spacing, kChairLegs);
    }
  }
  b.box({-w / 2, seat_y + seat_t, -d / 2}, {w / 2, seat_y + seat_t + back_h, -d / 2 + back_t}, spacing, kChairBack);
  return b.take();
}

enum LampPart { kLampPole = 0, kLampShade = 1 };

/// Floor lamp: base plate and pole (part 0) under a conical shade (part 1).
inline TriangleMesh make_lamp(std::uint64_t seed, double spacing = 0.1) {
  Rng rng = Rng::derive(seed, 0x1A3B);
  const double pole_h = rng.uniform(1.4, 1.8), pole_w = rng.uniform(0.07, 0.1);
  const double base_r = rng.uniform(0.3, 0.4), shade_h = rng.uniform(0.5, 0.7);
  const double shade_bottom = rng.uniform(0.45, 0.6), shade_top = rng.uniform(0.2, 0.3);
  MeshBuilder b;
  b.box({-base_r, 0.0, -base_r}, {base_r, 0.06, base_r}, spacing, kLampPole);
  b.box({-pole_w / 2, 0.06, -pole_w / 2}, {pole_w / 2, pole_h, pole_w / 2}, spacing, kLampPole);
  const int rings = std::max(1, static_cast<int>(std::ceil(shade_h / spacing)));
  b.frustum(pole_h - shade_h * 0.4, shade_bottom, pole_h + shade_h * 0.6, shade_top, 24, rings, kLampShade);
  return b.take();
}

/// Unwelded random triangles inside the unit sphere.
inline TriangleMesh make_random_soup(std::uint64_t seed, int triangle_count) {
  Rng rng = Rng::derive(seed, 0x50A9);
  auto in_ball = [&](double radius) {
    for (;;) {
      const Vec3 p{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      if (dot(p, p) <= 1.0) return p * radius;
    }
  };
  TriangleMesh m;
  for (int t = 0; t < triangle_count; ++t) {
    const Vec3 c = in_ball(0.55);
    const int base = static_cast<int>(m.vertices.size());
    for (int k = 0; k < 3; ++k) m.vertices.push_back(c + in_ball(0.4));
    m.triangles.push_back({base, base + 1, base + 2});
  }
  return m;
}

}  // namespace sketchdesc
