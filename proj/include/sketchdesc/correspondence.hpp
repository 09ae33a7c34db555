#pragma once

// Cross-view ground truth: a record per mesh vertex listing the pixels where
// it is visible, plus the OR/AND patch validity rule and the text store.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sketchdesc/error.hpp"
#include "sketchdesc/grid.hpp"
#include "sketchdesc/render.hpp"
#include "sketchdesc/sketch.hpp"

namespace sketchdesc {

enum class SamplingMode { Or, And };

inline std::string to_string(SamplingMode m) { return m == SamplingMode::Or ? "OR" : "AND"; }

inline SamplingMode parse_sampling_mode(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (s == "OR") return SamplingMode::Or;
  if (s == "AND") return SamplingMode::And;
  throw precondition_error("sampling mode must be OR or AND, got '" + s + "'");
}

struct CorrespondenceEntry {
  int view_id = 0;
  Pixel pixel;

  bool operator==(const CorrespondenceEntry&) const = default;
};

struct CorrespondenceRecord {
  int vertex_id = 0;
  std::vector<CorrespondenceEntry> entries;  // ascending view_id, one per view

  const CorrespondenceEntry* find(int view_id) const {
    for (const auto& e : entries)
      if (e.view_id == view_id) return &e;
    return nullptr;
  }

  bool operator==(const CorrespondenceRecord&) const = default;
};

inline std::uint64_t pair_count(const CorrespondenceRecord& r) {
  const auto n = static_cast<std::uint64_t>(r.entries.size());
  return n * (n - 1) / 2;
}

inline std::uint64_t pair_count(const std::vector<CorrespondenceRecord>& records) {
  std::uint64_t total = 0;
  for (const auto& r : records) total += pair_count(r);
  return total;
}

/// One record per vertex visible in at least two distinct views. Records are
/// ordered by vertex id and entries by view id.
inline std::vector<CorrespondenceRecord> build_ground_truth(const std::vector<std::vector<VertexProjection>>& per_view) {
  std::map<int, std::vector<CorrespondenceEntry>> seen;
  for (const auto& view : per_view) {
    for (const auto& p : view) {
      if (!p.visible) continue;
      require(p.in_bounds, "visible projection outside the image");
      seen[p.vertex_id].push_back({p.view_id, p.pixel});
    }
  }
  std::vector<CorrespondenceRecord> out;
  for (auto& [vertex, entries] : seen) {
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.view_id < b.view_id; });
    for (std::size_t i = 1; i < entries.size(); ++i)
      require(entries[i].view_id != entries[i - 1].view_id,
              "vertex " + std::to_string(vertex) + " projected twice into view " + std::to_string(entries[i].view_id));
    if (entries.size() >= 2) out.push_back({vertex, std::move(entries)});
  }
  return out;
}

/// A ground-truth pixel pair between two specific views.
struct PixelPair {
  int vertex_id = 0;
  Pixel a;
  Pixel b;

  bool operator==(const PixelPair&) const = default;
};

inline std::vector<PixelPair> pairs_between(const std::vector<CorrespondenceRecord>& records, int view_a, int view_b) {
  std::vector<PixelPair> out;
  for (const auto& r : records) {
    const auto* ea = r.find(view_a);
    const auto* eb = r.find(view_b);
    if (ea && eb) out.push_back({r.vertex_id, ea->pixel, eb->pixel});
  }
  return out;
}

/// OR: some scale's window holds ink. AND: every scale's window holds ink.
inline bool is_valid_sample(const InkIntegral& ink, Pixel p, SamplingMode mode) {
  if (mode == SamplingMode::Or) return ink.window(p, kPatchScales.back()) > 0;  // windows are nested
  return ink.window(p, kPatchScales.front()) > 0;
}

inline bool is_valid_sample(const SketchImage& sketch, Pixel p, SamplingMode mode) {
  require(sketch.pixels.contains(p), "sample pixel out of bounds");
  return is_valid_sample(InkIntegral(sketch), p, mode);
}

/// Ground truth of one shape as stored on disk.
struct CorrespondenceStore {
  std::string shape_id;
  std::vector<CorrespondenceRecord> records;

  bool operator==(const CorrespondenceStore&) const = default;
};

// Header: "shape <id> records <n> pairs <p>", then one "vertex view row col"
// line per entry, grouped by vertex.
inline void write_store(std::ostream& out, const CorrespondenceStore& store) {
  require(!store.shape_id.empty() && store.shape_id.find_first_of(" \t\n") == std::string::npos,
          "shape id must be a non-empty token");
  out << "shape " << store.shape_id << " records " << store.records.size() << " pairs " << pair_count(store.records)
      << '\n';
  for (const auto& r : store.records)
    for (const auto& e : r.entries) out << r.vertex_id << ' ' << e.view_id << ' ' << e.pixel.row << ' ' << e.pixel.col << '\n';
}

inline CorrespondenceStore read_store(std::istream& in) {
  CorrespondenceStore store;
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), "correspondence store is empty");
  std::istringstream hs(header);
  std::string k0, k1, k2;
  std::size_t n_records = 0;
  std::uint64_t n_pairs = 0;
  hs >> k0 >> store.shape_id >> k1 >> n_records >> k2 >> n_pairs;
  require(hs && k0 == "shape" && k1 == "records" && k2 == "pairs", "malformed correspondence store header");
  int vertex, view, row, col;
  while (in >> vertex >> view >> row >> col) {
    if (store.records.empty() || store.records.back().vertex_id != vertex) store.records.push_back({vertex, {}});
    store.records.back().entries.push_back({view, {row, col}});
  }
  require(in.eof(), "malformed correspondence store line");
  require(store.records.size() == n_records, "correspondence store record count mismatch");
  require(pair_count(store.records) == n_pairs, "correspondence store pair count mismatch");
  for (const auto& r : store.records) require(r.entries.size() >= 2, "record with fewer than two views");
  return store;
}

inline void save_store(const std::filesystem::path& path, const CorrespondenceStore& store) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write " + path.string());
  write_store(out, store);
  if (!out) throw runtime_failure("failed writing " + path.string());
}

inline CorrespondenceStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open correspondence store " + path.string());
  return read_store(in);
}

}  // namespace sketchdesc
