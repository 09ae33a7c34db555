#pragma once

// Rendering a shape into a multi-view sketch set with ground truth, and the
// on-disk dataset layout:
//   <dir>/manifest.json
//   <dir>/<shape_id>/mesh.obj            unit-sphere normalized copy
//   <dir>/<shape_id>/view_<k>.png        sketch of view k
//   <dir>/<shape_id>/labels_<k>.png      part label + 1 at ink pixels (labeled meshes only)
//   <dir>/<shape_id>/correspondences.txt

#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sketchdesc/canny.hpp"
#include "sketchdesc/correspondence.hpp"
#include "sketchdesc/manifest.hpp"
#include "sketchdesc/mesh.hpp"
#include "sketchdesc/parallel.hpp"
#include "sketchdesc/png_io.hpp"
#include "sketchdesc/render.hpp"
#include "sketchdesc/sketch.hpp"

namespace sketchdesc {

struct SynthConfig {
  CannyParams canny;
  double depth_epsilon = default_depth_epsilon();  // meshes are normalized to radius 1
  int threads = 1;
};

/// Per-view result of rendering one shape.
struct ShapeRender {
  std::string shape_id;
  std::vector<SketchImage> sketches;
  std::vector<NormalMap> normal_maps;
  std::vector<std::vector<VertexProjection>> projections;
  std::vector<Grid<int>> part_labels;  // -1 where unknown; empty for unlabeled meshes
  std::vector<CorrespondenceRecord> records;
};

namespace detail {

// Part label for each ink pixel: label of the nearest rendered face within 3 px.
inline Grid<int> ink_part_labels(const SketchImage& sketch, const NormalMap& nm, const TriangleMesh& mesh) {
  Grid<int> labels(sketch.rows(), sketch.cols(), -1);
  constexpr int radius = 3;
  for (int r = 0; r < sketch.rows(); ++r) {
    for (int c = 0; c < sketch.cols(); ++c) {
      if (!sketch.ink(r, c)) continue;
      int best_d = radius + 1;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          const int d = std::max(std::abs(dr), std::abs(dc));
          if (d >= best_d || !nm.face.contains(r + dr, c + dc)) continue;
          const int f = nm.face(r + dr, c + dc);
          if (f < 0) continue;
          best_d = d;
          labels(r, c) = mesh.part_labels[f];
        }
      }
    }
  }
  return labels;
}

}  // namespace detail

/// Normalizes the mesh, renders every view, extracts sketches and projects
/// vertices. View ids are positions in `views`.
inline ShapeRender synthesize_shape(const TriangleMesh& input, const std::vector<Viewpoint>& views,
                                    const std::string& shape_id, const SynthConfig& cfg = {}) {
  input.validate();
  require(!views.empty(), "no viewpoints");
  const TriangleMesh mesh = normalize_to_unit_sphere(input);
  ShapeRender out;
  out.shape_id = shape_id;
  const std::size_t n = views.size();
  out.sketches.resize(n);
  out.normal_maps.resize(n);
  out.projections.resize(n);
  if (!mesh.part_labels.empty()) out.part_labels.resize(n);
  parallel_for(n, cfg.threads, [&](std::size_t k) {
    out.normal_maps[k] = render_normal_map(mesh, views[k]);
    out.sketches[k] = extract_sketch(out.normal_maps[k], cfg.canny);
    out.sketches[k].shape_id = shape_id;
    out.sketches[k].view_id = static_cast<int>(k);
    out.projections[k] = project_vertices(mesh, views[k], out.normal_maps[k], cfg.depth_epsilon, static_cast<int>(k));
    if (!mesh.part_labels.empty()) out.part_labels[k] = detail::ink_part_labels(out.sketches[k], out.normal_maps[k], mesh);
  });
  out.records = build_ground_truth(out.projections);
  return out;
}

inline void save_label_png(const std::filesystem::path& path, const Grid<int>& labels) {
  Grid<std::uint8_t> img(labels.rows(), labels.cols(), 0);
  for (int r = 0; r < labels.rows(); ++r) {
    for (int c = 0; c < labels.cols(); ++c) {
      const int l = labels(r, c);
      require(l < 255, "part labels above 254 cannot be stored");
      img(r, c) = static_cast<std::uint8_t>(l < 0 ? 0 : l + 1);
    }
  }
  write_png(path, img);
}

inline Grid<int> load_label_png(const std::filesystem::path& path) {
  const auto img = read_png_gray(path);
  Grid<int> labels(img.rows(), img.cols(), -1);
  for (int r = 0; r < img.rows(); ++r)
    for (int c = 0; c < img.cols(); ++c) labels(r, c) = static_cast<int>(img(r, c)) - 1;
  return labels;
}

struct NamedMesh {
  std::string shape_id;
  TriangleMesh mesh;
};

struct BuildConfig {
  std::string category = "shapes";
  std::vector<Viewpoint> views;
  SamplingMode sampling_mode = SamplingMode::Or;
  std::uint64_t seed = 0;
  std::array<double, 3> split_ratio{8, 1, 1};
  SynthConfig synth;
};

/// Renders all shapes, writes the dataset directory and returns its manifest.
inline DatasetManifest build_dataset(const std::vector<NamedMesh>& meshes, const std::filesystem::path& dir,
                                     const BuildConfig& cfg) {
  std::vector<std::string> ids;
  for (const auto& m : meshes) ids.push_back(m.shape_id);
  DatasetManifest manifest = split_dataset(ids, cfg.seed, cfg.split_ratio);
  manifest.category = cfg.category;
  manifest.sampling_mode = cfg.sampling_mode;
  manifest.canny_low = cfg.synth.canny.low;
  manifest.canny_high = cfg.synth.canny.high;
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    const auto& id = meshes[i].shape_id;
    require(!id.empty() && id.find_first_of(" \t\n/\\") == std::string::npos, "invalid shape id '" + id + "'");
    const ShapeRender sr = synthesize_shape(meshes[i].mesh, cfg.views, id, cfg.synth);
    const auto shape_dir = dir / id;
    std::filesystem::create_directories(shape_dir);
    ShapeRecord& rec = manifest.shapes[i];
    rec.mesh_path = id + "/mesh.obj";
    save_obj(dir / rec.mesh_path, normalize_to_unit_sphere(meshes[i].mesh));
    rec.views = cfg.views;
    char name[64];
    for (std::size_t k = 0; k < cfg.views.size(); ++k) {
      std::snprintf(name, sizeof name, "/view_%02zu.png", k);
      rec.sketch_paths.push_back(id + name);
      save_sketch_png(dir / rec.sketch_paths.back(), sr.sketches[k]);
      if (!sr.part_labels.empty()) {
        std::snprintf(name, sizeof name, "/labels_%02zu.png", k);
        rec.label_paths.push_back(id + name);
        save_label_png(dir / rec.label_paths.back(), sr.part_labels[k]);
      }
    }
    rec.correspondence_path = id + "/correspondences.txt";
    save_store(dir / rec.correspondence_path, {id, sr.records});
    rec.pair_count = pair_count(sr.records);
    rec.no_correspondences = sr.records.empty();
  }
  save_manifest(dir / "manifest.json", manifest);
  return manifest;
}

/// One shape's sketches and ground truth in memory.
struct ShapeData {
  std::string shape_id;
  Split split = Split::Train;
  std::vector<SketchImage> sketches;
  std::vector<Grid<int>> part_labels;
  std::vector<CorrespondenceRecord> records;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<ShapeData> shapes;  // same order as manifest.shapes

  std::vector<const ShapeData*> in_split(Split s) const {
    std::vector<const ShapeData*> out;
    for (const auto& sh : shapes)
      if (sh.split == s) out.push_back(&sh);
    return out;
  }
};

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = load_manifest(dir / "manifest.json");
  for (const auto& rec : ds.manifest.shapes) {
    ShapeData sh;
    sh.shape_id = rec.shape_id;
    sh.split = rec.split;
    for (std::size_t k = 0; k < rec.sketch_paths.size(); ++k) {
      SketchImage s = load_sketch_png(dir / rec.sketch_paths[k]);
      s.view = rec.views[k];
      s.shape_id = rec.shape_id;
      s.view_id = static_cast<int>(k);
      sh.sketches.push_back(std::move(s));
    }
    for (const auto& p : rec.label_paths) sh.part_labels.push_back(load_label_png(dir / p));
    CorrespondenceStore store = load_store(dir / rec.correspondence_path);
    require(store.shape_id == rec.shape_id, "correspondence store belongs to shape " + store.shape_id);
    sh.records = std::move(store.records);
    ds.shapes.push_back(std::move(sh));
  }
  return ds;
}

}  // namespace sketchdesc
