#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sketchdesc/error.hpp"
#include "sketchdesc/vec.hpp"

namespace sketchdesc {

/// Indexed triangle geometry. +Y is up.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  /// Optional per-triangle part label (empty when the mesh is unlabeled).
  std::vector<int> part_labels;

  bool empty() const { return triangles.empty(); }

  void validate() const {
    require(!triangles.empty(), "mesh has no triangles");
    const int n = static_cast<int>(vertices.size());
    for (const auto& t : triangles) {
      for (int idx : t) {
        require(idx >= 0 && idx < n, "triangle index out of range");
      }
    }
    for (const auto& v : vertices) require(is_finite(v), "mesh has non-finite coordinates");
    require(part_labels.empty() || part_labels.size() == triangles.size(),
            "part label count does not match triangle count");
  }
};

struct BoundingSphere {
  Vec3 center;
  double radius = 0.0;
};

/// Center of the axis-aligned bounding box and the largest vertex distance from it.
inline BoundingSphere bounding_sphere(const TriangleMesh& mesh) {
  require(!mesh.vertices.empty(), "mesh has no vertices");
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi = -lo;
  for (const auto& v : mesh.vertices) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
  }
  BoundingSphere s;
  s.center = (lo + hi) * 0.5;
  for (const auto& v : mesh.vertices) s.radius = std::max(s.radius, length(v - s.center));
  return s;
}

/// Translates and scales the mesh into the unit sphere centered at the origin.
inline TriangleMesh normalize_to_unit_sphere(TriangleMesh mesh) {
  mesh.validate();
  const BoundingSphere s = bounding_sphere(mesh);
  require(s.radius > 0.0, "mesh is degenerate (zero extent)");
  for (auto& v : mesh.vertices) v = (v - s.center) / s.radius;
  return mesh;
}

namespace detail {

inline int parse_obj_index(const std::string& token, int vertex_count) {
  const std::string head = token.substr(0, token.find('/'));
  int idx = 0;
  try {
    idx = std::stoi(head);
  } catch (const std::exception&) {
    throw precondition_error("malformed OBJ face index '" + token + "'");
  }
  if (idx < 0) return vertex_count + idx;
  require(idx != 0, "OBJ face index 0 is invalid");
  return idx - 1;
}

}  // namespace detail

/// Reads a Wavefront OBJ stream. Polygons are fan-triangulated; `g`/`o`
/// statements start a new part label.
inline TriangleMesh read_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string line;
  int part = -1;
  bool saw_group = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      require(static_cast<bool>(ss >> v.x >> v.y >> v.z), "malformed OBJ vertex line");
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ss >> tok) poly.push_back(detail::parse_obj_index(tok, static_cast<int>(mesh.vertices.size())));
      require(poly.size() >= 3, "OBJ face with fewer than three vertices");
      for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
        mesh.triangles.push_back({poly[0], poly[i], poly[i + 1]});
        mesh.part_labels.push_back(std::max(part, 0));
      }
    } else if (tag == "g" || tag == "o") {
      ++part;
      saw_group = true;
    }
  }
  if (!saw_group) mesh.part_labels.clear();
  mesh.validate();
  return mesh;
}

inline TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open mesh file " + path.string());
  return read_obj(in);
}

inline void write_obj(std::ostream& out, const TriangleMesh& mesh) {
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  int current = -1;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (!mesh.part_labels.empty() && mesh.part_labels[t] != current) {
      current = mesh.part_labels[t];
      out << "g part" << current << '\n';
    }
    const auto& tri = mesh.triangles[t];
    out << "f " << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << '\n';
  }
}

inline void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write mesh file " + path.string());
  write_obj(out, mesh);
}

}  // namespace sketchdesc
