#pragma once

// Training pairs and triplet batches. Anchors and positives are cross-view
// pixels of one vertex; each negative is the positive of another triplet in
// the same batch.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sketchdesc/correspondence.hpp"
#include "sketchdesc/dataset.hpp"
#include "sketchdesc/error.hpp"
#include "sketchdesc/patch.hpp"
#include "sketchdesc/rng.hpp"

namespace sketchdesc {

/// Negatives closer than this to the anchor vertex's own projection in the
/// negative's view are rejected.
inline constexpr double kNegativeExclusionRadius = 16.0;

struct PatchRef {
  int shape = 0;  // index into the pool's shapes
  int view_id = 0;
  Pixel pixel;
  int vertex_id = -1;

  bool operator==(const PatchRef&) const = default;
};

struct Triplet {
  PatchRef anchor;
  PatchRef positive;
  PatchRef negative;
  int negative_source = -1;  // index of the triplet whose positive is reused

  bool operator==(const Triplet&) const = default;
};

struct TrainingPair {
  int shape = 0;
  int record = 0;  // index into the pool's filtered records of that shape
  CorrespondenceEntry a;
  CorrespondenceEntry b;
};

/// Ground truth of a set of shapes, restricted to entries that pass the
/// sampling rule.
class TrainingPool {
 public:
  TrainingPool(std::vector<const ShapeData*> shapes, SamplingMode mode) : shapes_(std::move(shapes)), mode_(mode) {
    records_.resize(shapes_.size());
    for (std::size_t s = 0; s < shapes_.size(); ++s) {
      const ShapeData& sh = *shapes_[s];
      std::vector<InkIntegral> ink;
      for (const auto& sk : sh.sketches) ink.emplace_back(sk);
      require(std::is_sorted(sh.records.begin(), sh.records.end(),
                             [](const auto& a, const auto& b) { return a.vertex_id < b.vertex_id; }),
              "correspondence records must be ordered by vertex id");
      for (const auto& rec : sh.records) {
        CorrespondenceRecord kept{rec.vertex_id, {}};
        for (const auto& e : rec.entries) {
          require(e.view_id >= 0 && e.view_id < static_cast<int>(ink.size()), "record references a missing view");
          if (is_valid_sample(ink[e.view_id], e.pixel, mode)) kept.entries.push_back(e);
        }
        valid_samples_ += kept.entries.size();
        if (kept.entries.size() < 2) continue;
        const int ri = static_cast<int>(records_[s].size());
        for (std::size_t i = 0; i < kept.entries.size(); ++i)
          for (std::size_t j = i + 1; j < kept.entries.size(); ++j)
            pairs_.push_back({static_cast<int>(s), ri, kept.entries[i], kept.entries[j]});
        records_[s].push_back(std::move(kept));
      }
    }
  }

  SamplingMode mode() const { return mode_; }
  std::size_t shape_count() const { return shapes_.size(); }
  const ShapeData& shape(int s) const { return *shapes_[s]; }
  const std::vector<CorrespondenceRecord>& records(int s) const { return records_[s]; }
  const std::vector<TrainingPair>& pairs() const { return pairs_; }
  /// Ground-truth pixels passing the sampling rule, over all views.
  std::size_t valid_samples() const { return valid_samples_; }

  std::size_t eligible_vertices() const {
    std::size_t n = 0;
    for (const auto& r : records_) n += r.size();
    return n;
  }

  const SketchImage& sketch(const PatchRef& ref) const { return shapes_[ref.shape]->sketches[ref.view_id]; }

  MultiScalePatch patch(const PatchRef& ref) const {
    MultiScalePatch p = make_multiscale(sketch(ref), ref.pixel);
    p.vertex_id = ref.vertex_id;
    return p;
  }

 private:
  std::vector<const ShapeData*> shapes_;
  SamplingMode mode_;
  std::vector<std::vector<CorrespondenceRecord>> records_;
  std::vector<TrainingPair> pairs_;
  std::size_t valid_samples_ = 0;
};

namespace detail {

inline bool acceptable_negative(const TrainingPool& pool, const Triplet& t, const PatchRef& candidate) {
  if (candidate.shape != t.anchor.shape) return true;
  if (candidate.vertex_id == t.anchor.vertex_id) return false;
  // Anchor vertex's ground-truth location in the candidate's view, if any.
  const auto& records = pool.shape(t.anchor.shape).records;
  const auto it = std::lower_bound(records.begin(), records.end(), t.anchor.vertex_id,
                                   [](const CorrespondenceRecord& r, int v) { return r.vertex_id < v; });
  if (it == records.end() || it->vertex_id != t.anchor.vertex_id) return true;
  const auto* e = it->find(candidate.view_id);
  return !e || euclidean_distance(e->pixel, candidate.pixel) >= kNegativeExclusionRadius;
}

// Random in-batch negatives: for each triplet, the first acceptable positive
// of another triplet in a random order.
inline void assign_negatives(const TrainingPool& pool, std::vector<Triplet>& batch, Rng& rng) {
  const std::size_t n = batch.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    bool found = false;
    for (std::size_t j : order) {
      if (j == i || !acceptable_negative(pool, batch[i], batch[j].positive)) continue;
      batch[i].negative = batch[j].positive;
      batch[i].negative_source = static_cast<int>(j);
      found = true;
      break;
    }
    if (!found) throw precondition_error("no acceptable in-batch negative for triplet " + std::to_string(i));
  }
}

inline Triplet triplet_from_pair(const TrainingPool& pool, const TrainingPair& p, Rng& rng) {
  const int vertex = pool.records(p.shape)[p.record].vertex_id;
  const bool flip = rng.coin();
  const auto& first = flip ? p.b : p.a;
  const auto& second = flip ? p.a : p.b;
  Triplet t;
  t.anchor = {p.shape, first.view_id, first.pixel, vertex};
  t.positive = {p.shape, second.view_id, second.pixel, vertex};
  return t;
}

}  // namespace detail

/// batch_size triplets over distinct random vertices, each with a random
/// cross-view pair.
inline std::vector<Triplet> assemble_batch(const TrainingPool& pool, std::size_t batch_size, Rng& rng) {
  require(batch_size >= 2, "batch size must be at least 2");
  const std::size_t eligible = pool.eligible_vertices();
  require(eligible >= batch_size, "not enough valid correspondence records: " + std::to_string(eligible) +
                                      " eligible vertices for a batch of " + std::to_string(batch_size));
  std::vector<std::pair<int, int>> all;  // (shape, record)
  for (std::size_t s = 0; s < pool.shape_count(); ++s)
    for (std::size_t r = 0; r < pool.records(static_cast<int>(s)).size(); ++r) all.emplace_back(static_cast<int>(s), static_cast<int>(r));
  std::vector<Triplet> batch;
  batch.reserve(batch_size);
  // Partial Fisher-Yates: the first batch_size slots become a uniform sample.
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::swap(all[i], all[i + rng.index(all.size() - i)]);
    const auto [s, r] = all[i];
    const auto& rec = pool.records(s)[r];
    const std::size_t a = rng.index(rec.entries.size());
    std::size_t b = rng.index(rec.entries.size() - 1);
    if (b >= a) ++b;
    Triplet t;
    t.anchor = {s, rec.entries[a].view_id, rec.entries[a].pixel, rec.vertex_id};
    t.positive = {s, rec.entries[b].view_id, rec.entries[b].pixel, rec.vertex_id};
    batch.push_back(t);
  }
  detail::assign_negatives(pool, batch, rng);
  return batch;
}

/// One epoch: a shuffled pass over the pool's pairs (the first `max_pairs`
/// after shuffling when nonzero) cut into batches of distinct vertices. Pairs
/// whose vertex is already in the current batch wait for a later batch; a
/// trailing batch smaller than 2 is dropped.
inline std::vector<std::vector<Triplet>> epoch_batches(const TrainingPool& pool, std::size_t batch_size,
                                                       std::size_t max_pairs, Rng& rng) {
  require(batch_size >= 2, "batch size must be at least 2");
  require(pool.eligible_vertices() >= 2, "need at least 2 eligible vertices to form triplets, have " +
                                             std::to_string(pool.eligible_vertices()));
  std::vector<std::size_t> order(pool.pairs().size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  if (max_pairs > 0 && order.size() > max_pairs) order.resize(max_pairs);

  std::vector<std::vector<Triplet>> batches;
  std::vector<char> used(order.size(), 0);
  std::size_t first_unused = 0;
  std::set<std::pair<int, int>> members;
  for (;;) {
    while (first_unused < order.size() && used[first_unused]) ++first_unused;
    if (first_unused == order.size()) break;
    members.clear();
    std::vector<Triplet> batch;
    for (std::size_t k = first_unused; k < order.size() && batch.size() < batch_size; ++k) {
      if (used[k]) continue;
      const TrainingPair& p = pool.pairs()[order[k]];
      if (!members.emplace(p.shape, p.record).second) continue;
      used[k] = 1;
      batch.push_back(detail::triplet_from_pair(pool, p, rng));
    }
    if (batch.size() < 2) break;
    detail::assign_negatives(pool, batch, rng);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace sketchdesc
