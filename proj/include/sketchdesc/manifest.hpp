#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sketchdesc/correspondence.hpp"
#include "sketchdesc/error.hpp"
#include "sketchdesc/render.hpp"
#include "sketchdesc/rng.hpp"

namespace sketchdesc {

enum class Split { Train = 0, Val = 1, Test = 2 };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

struct ShapeRecord {
  std::string shape_id;
  std::string mesh_path;
  std::vector<Viewpoint> views;
  std::vector<std::string> sketch_paths;  // relative to the dataset directory
  std::vector<std::string> label_paths;   // per-view part label maps, may be empty
  std::string correspondence_path;
  std::uint64_t pair_count = 0;
  bool no_correspondences = false;
  Split split = Split::Train;

  bool operator==(const ShapeRecord&) const = default;
};

struct DatasetManifest {
  std::string category;
  std::vector<ShapeRecord> shapes;
  SamplingMode sampling_mode = SamplingMode::Or;
  std::uint64_t seed = 0;
  double canny_low = 0.1;
  double canny_high = 0.2;

  std::vector<const ShapeRecord*> in_split(Split s) const {
    std::vector<const ShapeRecord*> out;
    for (const auto& r : shapes)
      if (r.split == s) out.push_back(&r);
    return out;
  }

  bool operator==(const DatasetManifest&) const = default;
};

/// Largest-remainder apportionment of n shapes over (train, val, test); ties
/// go to the earlier split. With at least 3 shapes no split is left empty: a
/// shape is moved from the largest split into any empty one.
inline std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& ratio = {8, 1, 1}) {
  const double total = ratio[0] + ratio[1] + ratio[2];
  require(total > 0 && ratio[0] >= 0 && ratio[1] >= 0 && ratio[2] >= 0, "split ratio must be non-negative");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * ratio[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    frac[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b] + 1e-12; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  if (n >= 3) {
    for (int i = 0; i < 3; ++i) {
      if (counts[i] != 0 || ratio[i] == 0) continue;
      const auto largest = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      --counts[largest];
      ++counts[i];
    }
  }
  return counts;
}

/// Shape-level split: shuffle ids with the seed, then cut by split_counts.
/// Shapes keep their input order in the manifest.
inline DatasetManifest split_dataset(const std::vector<std::string>& shape_ids, std::uint64_t seed,
                                     const std::array<double, 3>& ratio = {8, 1, 1}) {
  require(shape_ids.size() >= 3, "need at least 3 shapes to split, got " + std::to_string(shape_ids.size()));
  require(std::set<std::string>(shape_ids.begin(), shape_ids.end()).size() == shape_ids.size(), "duplicate shape id");
  const auto counts = split_counts(shape_ids.size(), ratio);
  std::vector<std::size_t> order(shape_ids.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::derive(seed, 0x5B117);
  rng.shuffle(order.begin(), order.end());
  DatasetManifest m;
  m.seed = seed;
  m.shapes.resize(shape_ids.size());
  for (std::size_t i = 0; i < shape_ids.size(); ++i) m.shapes[i].shape_id = shape_ids[i];
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Split s = k < counts[0] ? Split::Train : k < counts[0] + counts[1] ? Split::Val : Split::Test;
    m.shapes[order[k]].split = s;
  }
  return m;
}

inline nlohmann::json to_json(const DatasetManifest& m) {
  using nlohmann::json;
  json shapes = json::array();
  json splits = {{"train", json::array()}, {"val", json::array()}, {"test", json::array()}};
  for (const auto& s : m.shapes) {
    json views = json::array();
    for (const auto& v : s.views)
      views.push_back({{"azimuth", v.azimuth}, {"elevation", v.elevation}, {"distance", v.distance}, {"image_size", v.image_size}});
    shapes.push_back({{"shape_id", s.shape_id},
                      {"mesh_path", s.mesh_path},
                      {"views", views},
                      {"sketch_paths", s.sketch_paths},
                      {"label_paths", s.label_paths},
                      {"correspondence_path", s.correspondence_path},
                      {"pair_count", s.pair_count},
                      {"no_correspondences", s.no_correspondences}});
    splits[to_string(s.split)].push_back(s.shape_id);
  }
  return {{"category", m.category},
          {"shapes", shapes},
          {"splits", splits},
          {"seed", m.seed},
          {"sampling_mode", to_string(m.sampling_mode)},
          {"canny_low", m.canny_low},
          {"canny_high", m.canny_high}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.category = j.at("category").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.sampling_mode = parse_sampling_mode(j.at("sampling_mode").get<std::string>());
    m.canny_low = j.value("canny_low", 0.1);
    m.canny_high = j.value("canny_high", 0.2);
    for (const auto& s : j.at("shapes")) {
      ShapeRecord r;
      r.shape_id = s.at("shape_id").get<std::string>();
      r.mesh_path = s.at("mesh_path").get<std::string>();
      for (const auto& v : s.at("views"))
        r.views.push_back({v.at("azimuth").get<double>(), v.at("elevation").get<double>(), v.at("distance").get<double>(),
                           v.at("image_size").get<int>()});
      r.sketch_paths = s.at("sketch_paths").get<std::vector<std::string>>();
      r.label_paths = s.value("label_paths", std::vector<std::string>{});
      r.correspondence_path = s.at("correspondence_path").get<std::string>();
      r.pair_count = s.at("pair_count").get<std::uint64_t>();
      r.no_correspondences = s.value("no_correspondences", false);
      require(r.sketch_paths.size() == r.views.size(), "shape " + r.shape_id + ": sketch and view counts differ");
      m.shapes.push_back(std::move(r));
    }
    std::set<std::string> assigned;
    for (Split split : {Split::Train, Split::Val, Split::Test}) {
      for (const auto& id : j.at("splits").at(to_string(split))) {
        const auto name = id.get<std::string>();
        require(assigned.insert(name).second, "shape " + name + " appears in more than one split");
        auto it = std::find_if(m.shapes.begin(), m.shapes.end(), [&](const ShapeRecord& r) { return r.shape_id == name; });
        require(it != m.shapes.end(), "split names unknown shape " + name);
        it->split = split;
      }
    }
    require(assigned.size() == m.shapes.size(), "splits do not cover every shape");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw precondition_error(std::string("malformed manifest: ") + e.what());
  }
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw precondition_error("manifest is not valid JSON: " + path.string());
  }
  return manifest_from_json(j);
}

}  // namespace sketchdesc
