#pragma once

// Evaluation tasks: cross-view correspondence by nearest descriptor, pixel
// retrieval MAP, the HOG retrieval baseline, view-disparity sweeps, dense
// distance maps and label transfer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sketchdesc/batch.hpp"
#include "sketchdesc/correspondence.hpp"
#include "sketchdesc/dataset.hpp"
#include "sketchdesc/error.hpp"
#include "sketchdesc/hog.hpp"
#include "sketchdesc/network.hpp"
#include "sketchdesc/parallel.hpp"
#include "sketchdesc/patch.hpp"
#include "sketchdesc/png_io.hpp"
#include "sketchdesc/rng.hpp"

namespace sketchdesc {

inline constexpr double kSuccessRadius = 16.0;

enum class SuccessMetric { Euclidean, Chebyshev };

inline SuccessMetric parse_success_metric(const std::string& s) {
  if (s == "euclidean") return SuccessMetric::Euclidean;
  if (s == "chebyshev") return SuccessMetric::Chebyshev;
  throw precondition_error("unknown success metric '" + s + "' (expected euclidean or chebyshev)");
}

inline double pixel_error(Pixel a, Pixel b, SuccessMetric m) {
  return m == SuccessMetric::Euclidean ? euclidean_distance(a, b) : static_cast<double>(chebyshev_distance(a, b));
}

struct Query {
  Pixel pixel;
  Pixel truth;
  int vertex_id = -1;
};

struct MatchResult {
  Pixel query;
  Pixel matched;
  Pixel truth;
  double distance = 0.0;
  bool success = false;
  int vertex_id = -1;
};

/// Descriptors of a pixel set; rows follow ascending (row, col) order.
struct DescriptorTable {
  int dim = 0;
  std::vector<Pixel> pixels;
  std::vector<float> values;

  std::size_t size() const { return pixels.size(); }
  const float* row(std::size_t i) const { return values.data() + i * static_cast<std::size_t>(dim); }
  /// Row of a pixel, or -1.
  std::ptrdiff_t find(Pixel p) const {
    const auto it = std::lower_bound(pixels.begin(), pixels.end(), p);
    return it != pixels.end() && *it == p ? it - pixels.begin() : -1;
  }
};

inline std::vector<Pixel> sorted_unique(std::vector<Pixel> px) {
  std::sort(px.begin(), px.end());
  px.erase(std::unique(px.begin(), px.end()), px.end());
  return px;
}

inline DescriptorTable describe_pixels(SketchDescNet<float>& net, const SketchImage& sketch, std::vector<Pixel> pixels,
                                       int threads = 1, std::size_t block = 256) {
  DescriptorTable t;
  t.dim = kDescriptorDim;
  t.pixels = sorted_unique(std::move(pixels));
  t.values.resize(t.pixels.size() * kDescriptorDim);
  for (std::size_t first = 0; first < t.pixels.size(); first += block) {
    const std::size_t count = std::min(block, t.pixels.size() - first);
    std::vector<MultiScalePatch> patches(count);
    parallel_for(count, threads, [&](std::size_t i) { patches[i] = make_multiscale(sketch, t.pixels[first + i]); });
    const auto d = net.describe(patches, threads);
    std::copy(d.begin(), d.end(), t.values.begin() + static_cast<std::ptrdiff_t>(first * kDescriptorDim));
  }
  return t;
}

inline DescriptorTable hog_table(const SketchImage& sketch, std::vector<Pixel> pixels, int threads = 1) {
  DescriptorTable t;
  t.dim = kHogDim;
  t.pixels = sorted_unique(std::move(pixels));
  t.values.resize(t.pixels.size() * kHogDim);
  parallel_for(t.pixels.size(), threads, [&](std::size_t i) {
    const HogDescriptor h = hog_descriptor(extract_patch(sketch, t.pixels[i], kPatchSide));
    std::copy(h.begin(), h.end(), t.values.begin() + static_cast<std::ptrdiff_t>(i * kHogDim));
  });
  return t;
}

/// Euclidean distance accumulated in double; symmetric in its arguments.
inline double descriptor_distance(const float* a, const float* b, int dim) {
  double s = 0.0;
  for (int j = 0; j < dim; ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += d * d;
  }
  return std::sqrt(s);
}

struct Nearest {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Exhaustive nearest row; the first row wins ties.
inline Nearest nearest_neighbor(const float* q, const DescriptorTable& cands) {
  require(cands.size() > 0, "empty candidate set");
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double d = descriptor_distance(q, cands.row(i), cands.dim);
    if (d < best.distance) best = {i, d};
  }
  return best;
}

struct MatchOptions {
  double tau = kSuccessRadius;
  SuccessMetric metric = SuccessMetric::Euclidean;
  int threads = 1;
};

/// Matches queries whose descriptors are rows of `queries_table` against `cands`.
inline std::vector<MatchResult> match_queries(const DescriptorTable& queries_table, const DescriptorTable& cands,
                                              const std::vector<Query>& queries, const MatchOptions& opt = {}) {
  require(cands.size() > 0, "empty candidate set");
  require(queries_table.dim == cands.dim, "query and candidate descriptors differ in dimension");
  std::vector<MatchResult> out(queries.size());
  parallel_for(queries.size(), opt.threads, [&](std::size_t i) {
    const Query& q = queries[i];
    const auto row = queries_table.find(q.pixel);
    require(row >= 0, "query pixel has no descriptor");
    const Nearest nn = nearest_neighbor(queries_table.row(static_cast<std::size_t>(row)), cands);
    MatchResult& r = out[i];
    r.query = q.pixel;
    r.truth = q.truth;
    r.vertex_id = q.vertex_id;
    r.matched = cands.pixels[nn.index];
    r.distance = nn.distance;
    r.success = pixel_error(r.matched, r.truth, opt.metric) <= opt.tau;
  });
  return out;
}

/// Nearest-descriptor match in sketch b for each query pixel of sketch a,
/// searched over `candidates`.
inline std::vector<MatchResult> match_correspondences(SketchDescNet<float>& net, const SketchImage& a, const SketchImage& b,
                                                      const std::vector<Query>& queries, const std::vector<Pixel>& candidates,
                                                      const MatchOptions& opt = {}) {
  require(!candidates.empty(), "empty candidate set");
  for (const auto& p : candidates) require(b.pixels.contains(p), "candidate pixel outside the target sketch");
  std::vector<Pixel> qp;
  for (const auto& q : queries) {
    require(a.pixels.contains(q.pixel), "query pixel outside the source sketch");
    qp.push_back(q.pixel);
  }
  const DescriptorTable qt = describe_pixels(net, a, qp, opt.threads);
  const DescriptorTable ct = describe_pixels(net, b, candidates, opt.threads);
  return match_queries(qt, ct, queries, opt);
}

inline double correspondence_accuracy(const std::vector<MatchResult>& results) {
  require(!results.empty(), "accuracy of an empty result set");
  std::size_t ok = 0;
  for (const auto& r : results) ok += r.success;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

/// Accuracy with the success radius replaced by `tau`.
inline double accuracy_at(const std::vector<MatchResult>& results, double tau, SuccessMetric m = SuccessMetric::Euclidean) {
  require(!results.empty(), "accuracy of an empty result set");
  std::size_t ok = 0;
  for (const auto& r : results) ok += pixel_error(r.matched, r.truth, m) <= tau;
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

// ---------------------------------------------------------------------------
// Evaluation domain

/// Ground-truth pixels of one view that pass the sampling rule.
inline std::vector<Pixel> evaluation_candidates(const ShapeData& shape, int view, SamplingMode mode = SamplingMode::And) {
  require(view >= 0 && view < static_cast<int>(shape.sketches.size()), "view index out of range");
  const InkIntegral ink(shape.sketches[view]);
  std::vector<Pixel> out;
  for (const auto& rec : shape.records)
    if (const auto* e = rec.find(view); e && is_valid_sample(ink, e->pixel, mode)) out.push_back(e->pixel);
  return sorted_unique(std::move(out));
}

/// Sampling-valid ground-truth pixels of view a with their vertex, one per
/// pixel (lowest vertex id when several project there).
inline std::vector<std::pair<Pixel, const CorrespondenceRecord*>> view_samples(const ShapeData& shape, int view,
                                                                              SamplingMode mode = SamplingMode::And) {
  require(view >= 0 && view < static_cast<int>(shape.sketches.size()), "view index out of range");
  const InkIntegral ink(shape.sketches[view]);
  std::map<Pixel, const CorrespondenceRecord*> by_pixel;
  for (const auto& rec : shape.records)
    if (const auto* e = rec.find(view); e && is_valid_sample(ink, e->pixel, mode)) by_pixel.emplace(e->pixel, &rec);
  return {by_pixel.begin(), by_pixel.end()};
}

/// Queries from view a whose vertex is visible in view b.
inline std::vector<Query> evaluation_queries(const ShapeData& shape, int view_a, int view_b, SamplingMode mode = SamplingMode::And) {
  require(view_b >= 0 && view_b < static_cast<int>(shape.sketches.size()), "view index out of range");
  std::vector<Query> out;
  for (const auto& [px, rec] : view_samples(shape, view_a, mode))
    if (const auto* e = rec->find(view_b)) out.push_back({px, e->pixel, rec->vertex_id});
  return out;
}

/// Uniform subset of at most n items, original order kept.
template <typename V>
std::vector<V> subsample(const std::vector<V>& items, std::size_t n, Rng& rng) {
  if (n == 0 || items.size() <= n) return items;
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<V> out;
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

struct EvalOptions {
  double tau = kSuccessRadius;
  SuccessMetric metric = SuccessMetric::Euclidean;
  SamplingMode mode = SamplingMode::And;
  std::size_t max_queries = 0;  // per view pair, 0 = all
  std::uint64_t seed = 0;
  int threads = 1;

  MatchOptions match() const { return {tau, metric, threads}; }
};

/// Descriptors of every view's evaluation candidates.
struct ShapeDescriptors {
  std::vector<DescriptorTable> views;
};

inline ShapeDescriptors describe_shape(SketchDescNet<float>& net, const ShapeData& shape, SamplingMode mode = SamplingMode::And,
                                       int threads = 1) {
  ShapeDescriptors out;
  for (int v = 0; v < static_cast<int>(shape.sketches.size()); ++v)
    out.views.push_back(describe_pixels(net, shape.sketches[v], evaluation_candidates(shape, v, mode), threads));
  return out;
}

struct PairEvaluation {
  std::string shape_id;
  int view_a = 0;
  int view_b = 0;
  std::vector<MatchResult> results;
  double accuracy = 0.0;
};

inline PairEvaluation evaluate_pair(const ShapeData& shape, const ShapeDescriptors& desc, int view_a, int view_b,
                                    const EvalOptions& opt = {}) {
  PairEvaluation pe{shape.shape_id, view_a, view_b, {}, 0.0};
  Rng rng = Rng::derive(opt.seed, 0xE7A1 + static_cast<std::uint64_t>(view_a) * 1000 + static_cast<std::uint64_t>(view_b));
  const auto queries = subsample(evaluation_queries(shape, view_a, view_b, opt.mode), opt.max_queries, rng);
  if (queries.empty()) return pe;
  pe.results = match_queries(desc.views.at(view_a), desc.views.at(view_b), queries, opt.match());
  pe.accuracy = correspondence_accuracy(pe.results);
  return pe;
}

struct CorrespondenceReport {
  std::vector<PairEvaluation> pairs;
  double mean_accuracy = 0.0;  // average over view pairs with at least one query
  std::size_t queries = 0;
};

/// Every ordered view pair (a, b), a != b, of every shape.
inline CorrespondenceReport evaluate_correspondence(SketchDescNet<float>& net, const std::vector<const ShapeData*>& shapes,
                                                    const EvalOptions& opt = {}) {
  CorrespondenceReport rep;
  double sum = 0.0;
  std::size_t counted = 0;
  for (const ShapeData* sh : shapes) {
    const ShapeDescriptors desc = describe_shape(net, *sh, opt.mode, opt.threads);
    const int n = static_cast<int>(sh->sketches.size());
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        PairEvaluation pe = evaluate_pair(*sh, desc, a, b, opt);
        if (!pe.results.empty()) {
          sum += pe.accuracy;
          ++counted;
          rep.queries += pe.results.size();
        }
        rep.pairs.push_back(std::move(pe));
      }
  }
  require(counted > 0, "no view pair produced evaluation queries");
  rep.mean_accuracy = sum / static_cast<double>(counted);
  return rep;
}

// ---------------------------------------------------------------------------
// Semantic distance ordering on triplets

struct OrderingReport {
  std::size_t triplets = 0;
  std::size_t satisfied = 0;
  double fraction = 0.0;
};

/// Fraction of triplets whose anchor descriptor is closer to the positive
/// than to the negative.
inline OrderingReport triplet_ordering(SketchDescNet<float>& net, const TrainingPool& pool, std::size_t batch_size,
                                       std::size_t max_pairs, std::uint64_t seed, int threads = 1) {
  Rng rng = Rng::derive(seed, 0x0D3E);
  OrderingReport rep;
  for (const auto& batch : epoch_batches(pool, batch_size, max_pairs, rng)) {
    std::vector<MultiScalePatch> patches;
    for (const auto& t : batch) patches.push_back(pool.patch(t.anchor));
    for (const auto& t : batch) patches.push_back(pool.patch(t.positive));
    const auto d = net.describe(patches, threads);
    const std::size_t b = batch.size();
    for (std::size_t i = 0; i < b; ++i) {
      const float* a = d.data() + i * kDescriptorDim;
      const double dp = descriptor_distance(a, d.data() + (b + i) * kDescriptorDim, kDescriptorDim);
      const double dn = descriptor_distance(a, d.data() + (b + batch[i].negative_source) * kDescriptorDim, kDescriptorDim);
      rep.satisfied += dp < dn;
      ++rep.triplets;
    }
  }
  require(rep.triplets > 0, "no triplets to order");
  rep.fraction = static_cast<double>(rep.satisfied) / static_cast<double>(rep.triplets);
  return rep;
}

// ---------------------------------------------------------------------------
// Retrieval

/// AP of a ranked list of +1/-1 labels: mean over positive ranks k of
/// (positives in the first k) / k.
inline double average_precision(const std::vector<int>& labels) {
  double sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 1 || labels[i] == -1, "ranked labels must be +1 or -1");
    if (labels[i] == 1) {
      ++pos;
      sum += static_cast<double>(pos) / static_cast<double>(i + 1);
    }
  }
  require(pos > 0, "average precision needs at least one positive");
  return sum / static_cast<double>(pos);
}

struct QueryAP {
  std::size_t query_id = 0;
  std::string shape_id;
  int view_id = 0;
  Pixel pixel;
  int vertex_id = -1;
  std::size_t positives = 0;
  std::size_t gallery = 0;
  double ap = 0.0;
};

struct RetrievalOptions {
  std::size_t queries = 1000;
  std::size_t gallery_per_view = 0;  // sampled negatives per gallery view, 0 = all candidates
  SamplingMode mode = SamplingMode::And;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct RetrievalReport {
  std::vector<QueryAP> queries;
  double map = 0.0;
  std::size_t skipped = 0;  // sampled queries without any positive
};

namespace detail {

struct GalleryItem {
  int view;
  Pixel pixel;
  std::size_t row;  // into that view's descriptor table
};

}  // namespace detail

/// Ranks gallery pixels of the other views of a query's shape by descriptor
/// distance; positives are the query vertex's sampling-valid projections.
inline RetrievalReport retrieval_from_descriptors(const std::vector<const ShapeData*>& shapes,
                                                  const std::vector<ShapeDescriptors>& desc, const RetrievalOptions& opt) {
  require(shapes.size() == desc.size(), "one descriptor set per shape is required");
  struct Candidate {
    std::size_t shape;
    int view;
    Pixel pixel;
    const CorrespondenceRecord* rec;
  };
  std::vector<Candidate> population;
  for (std::size_t s = 0; s < shapes.size(); ++s)
    for (int v = 0; v < static_cast<int>(shapes[s]->sketches.size()); ++v)
      for (const auto& [px, rec] : view_samples(*shapes[s], v, opt.mode)) population.push_back({s, v, px, rec});
  require(!population.empty(), "no query pixels pass the sampling rule");
  Rng rng = Rng::derive(opt.seed, 0x2E7A);
  const auto chosen = subsample(population, opt.queries, rng);

  // Per-shape gallery: all (or sampled) candidates of every view.
  std::vector<std::vector<detail::GalleryItem>> gallery(shapes.size());
  for (std::size_t s = 0; s < shapes.size(); ++s)
    for (int v = 0; v < static_cast<int>(desc[s].views.size()); ++v) {
      std::vector<detail::GalleryItem> items;
      for (std::size_t i = 0; i < desc[s].views[v].size(); ++i) items.push_back({v, desc[s].views[v].pixels[i], i});
      Rng grng = Rng::derive(opt.seed, 0x6A11 + s * 64 + static_cast<std::size_t>(v));
      for (const auto& it : subsample(items, opt.gallery_per_view, grng)) gallery[s].push_back(it);
    }

  RetrievalReport rep;
  std::vector<QueryAP> results(chosen.size());
  std::vector<char> valid(chosen.size(), 0);
  parallel_for(chosen.size(), opt.threads, [&](std::size_t qi) {
    const Candidate& q = chosen[qi];
    const DescriptorTable& qt = desc[q.shape].views[q.view];
    const auto qrow = qt.find(q.pixel);
    require(qrow >= 0, "query pixel has no descriptor");
    std::set<std::pair<int, Pixel>> positives;
    for (const auto& e : q.rec->entries)
      if (e.view_id != q.view && desc[q.shape].views[e.view_id].find(e.pixel) >= 0) positives.emplace(e.view_id, e.pixel);
    if (positives.empty()) return;
    std::vector<detail::GalleryItem> items;
    for (const auto& it : gallery[q.shape])
      if (it.view != q.view) items.push_back(it);
    // Positives missing from a sampled gallery are added back.
    for (const auto& [v, px] : positives) {
      const bool present = std::any_of(items.begin(), items.end(), [&](const auto& it) { return it.view == v && it.pixel == px; });
      if (!present) items.push_back({v, px, static_cast<std::size_t>(desc[q.shape].views[v].find(px))});
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    for (std::size_t i = 0; i < items.size(); ++i)
      ranked.emplace_back(descriptor_distance(qt.row(static_cast<std::size_t>(qrow)), desc[q.shape].views[items[i].view].row(items[i].row), kDescriptorDim), i);
    std::sort(ranked.begin(), ranked.end(), [&](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first < y.first;
      const auto& a = items[x.second];
      const auto& b = items[y.second];
      return std::tie(a.view, a.pixel) < std::tie(b.view, b.pixel);
    });
    std::vector<int> labels;
    for (const auto& [d, i] : ranked) labels.push_back(positives.count({items[i].view, items[i].pixel}) ? 1 : -1);
    QueryAP& r = results[qi];
    r.query_id = qi;
    r.shape_id = shapes[q.shape]->shape_id;
    r.view_id = q.view;
    r.pixel = q.pixel;
    r.vertex_id = q.rec->vertex_id;
    r.positives = positives.size();
    r.gallery = items.size();
    r.ap = average_precision(labels);
    valid[qi] = 1;
  });
  double sum = 0.0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (!valid[i]) {
      ++rep.skipped;
      continue;
    }
    sum += results[i].ap;
    rep.queries.push_back(std::move(results[i]));
  }
  require(!rep.queries.empty(), "every retrieval query lacked positives");
  rep.map = sum / static_cast<double>(rep.queries.size());
  return rep;
}

inline RetrievalReport pixelwise_retrieval_map(SketchDescNet<float>& net, const std::vector<const ShapeData*>& shapes,
                                               const RetrievalOptions& opt = {}) {
  require(!shapes.empty(), "retrieval needs at least one shape");
  std::vector<ShapeDescriptors> desc;
  for (const auto* sh : shapes) desc.push_back(describe_shape(net, *sh, opt.mode, opt.threads));
  return retrieval_from_descriptors(shapes, desc, opt);
}

// ---------------------------------------------------------------------------
// Retrieval-based baseline

namespace detail {

inline bool same_view(const Viewpoint& a, const Viewpoint& b) {
  return std::abs(a.azimuth - b.azimuth) < 1e-6 && std::abs(a.elevation - b.elevation) < 1e-6;
}

inline int find_view(const ShapeData& shape, const Viewpoint& v) {
  for (int i = 0; i < static_cast<int>(shape.sketches.size()); ++i)
    if (same_view(shape.sketches[i].view, v)) return i;
  return -1;
}

inline std::string view_name(const Viewpoint& v) {
  return "azimuth " + std::to_string(v.azimuth) + ", elevation " + std::to_string(v.elevation);
}

}  // namespace detail

/// Three hops: HOG-match the query into training sketches of the same view,
/// follow their ground truth to the target view, HOG-match back into the
/// test sketch.
inline std::vector<MatchResult> retrieval_baseline(const std::vector<const ShapeData*>& train, const ShapeData& test, int view_a,
                                                   int view_b, const std::vector<Query>& queries, const EvalOptions& opt = {}) {
  require(!train.empty(), "baseline needs training shapes");
  const Viewpoint va = test.sketches.at(view_a).view, vb = test.sketches.at(view_b).view;
  // Train pixels in view a with a known view-b counterpart, and where they lead.
  DescriptorTable hop_table;
  hop_table.dim = kHogDim;
  std::vector<std::pair<std::size_t, Pixel>> jump;  // (train shape, pixel in its view b)
  std::vector<int> train_view_b(train.size(), -1);
  for (std::size_t s = 0; s < train.size(); ++s) {
    const int ta = detail::find_view(*train[s], va), tb = detail::find_view(*train[s], vb);
    if (ta < 0) throw precondition_error("training shape " + train[s]->shape_id + " has no sketch at " + detail::view_name(va));
    if (tb < 0) throw precondition_error("training shape " + train[s]->shape_id + " has no sketch at " + detail::view_name(vb));
    train_view_b[s] = tb;
    std::vector<Pixel> px;
    std::map<Pixel, Pixel> to_b;
    for (const auto& [p, rec] : view_samples(*train[s], ta, opt.mode))
      if (const auto* e = rec->find(tb)) {
        px.push_back(p);
        to_b.emplace(p, e->pixel);
      }
    const DescriptorTable t = hog_table(train[s]->sketches[ta], px, opt.threads);
    hop_table.pixels.insert(hop_table.pixels.end(), t.pixels.begin(), t.pixels.end());
    hop_table.values.insert(hop_table.values.end(), t.values.begin(), t.values.end());
    for (const auto& p : t.pixels) jump.emplace_back(s, to_b.at(p));
  }
  require(hop_table.size() > 0, "training shapes have no ground truth between the two views");
  const DescriptorTable target = hog_table(test.sketches[view_b], evaluation_candidates(test, view_b, opt.mode), opt.threads);
  require(target.size() > 0, "empty candidate set");
  std::vector<Pixel> qp;
  for (const auto& q : queries) qp.push_back(q.pixel);
  const DescriptorTable qt = hog_table(test.sketches[view_a], qp, opt.threads);

  std::vector<MatchResult> out(queries.size());
  parallel_for(queries.size(), opt.threads, [&](std::size_t i) {
    const Query& q = queries[i];
    const Nearest first = nearest_neighbor(qt.row(static_cast<std::size_t>(qt.find(q.pixel))), hop_table);
    const auto [s, pb] = jump[first.index];
    const HogDescriptor h = hog_descriptor(extract_patch(train[s]->sketches[train_view_b[s]], pb, kPatchSide));
    const Nearest second = nearest_neighbor(h.data(), target);
    MatchResult& r = out[i];
    r.query = q.pixel;
    r.truth = q.truth;
    r.vertex_id = q.vertex_id;
    r.matched = target.pixels[second.index];
    r.distance = second.distance;
    r.success = pixel_error(r.matched, r.truth, opt.metric) <= opt.tau;
  });
  return out;
}

// ---------------------------------------------------------------------------
// View disparity

struct DisparityRow {
  double disparity = 0.0;
  int target_view = -1;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // queries whose vertex is hidden in the target view
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  std::vector<MatchResult> results;
};

inline const std::vector<double>& default_disparities() {
  static const std::vector<double> d{30, 60, 90, 150, 180};
  return d;
}

/// View of `shape` at the anchor's elevation whose azimuth is `disparity`
/// degrees further round, or -1.
inline int view_at_disparity(const ShapeData& shape, int anchor_view, double disparity) {
  const Viewpoint& a = shape.sketches.at(anchor_view).view;
  for (int i = 0; i < static_cast<int>(shape.sketches.size()); ++i) {
    const Viewpoint& v = shape.sketches[i].view;
    const double diff = std::fmod(v.azimuth - a.azimuth - disparity + 720.0, 360.0);
    if ((diff < 1e-6 || diff > 360.0 - 1e-6) && std::abs(v.elevation - a.elevation) < 1e-6) return i;
  }
  return -1;
}

inline std::vector<DisparityRow> view_disparity_sweep(const ShapeData& shape, const ShapeDescriptors& desc, int anchor_view,
                                                      const std::vector<double>& disparities = default_disparities(),
                                                      const EvalOptions& opt = {}) {
  const auto samples = view_samples(shape, anchor_view, opt.mode);
  std::vector<DisparityRow> rows;
  for (double d : disparities) {
    DisparityRow row;
    row.disparity = d;
    row.target_view = view_at_disparity(shape, anchor_view, d);
    if (row.target_view < 0) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%g", d);
      throw precondition_error("no view of " + shape.shape_id + " at " + buf + " degrees from view " + std::to_string(anchor_view));
    }
    std::vector<Query> queries;
    for (const auto& [px, rec] : samples) {
      if (const auto* e = rec->find(row.target_view))
        queries.push_back({px, e->pixel, rec->vertex_id});
      else
        ++row.excluded;
    }
    Rng rng = Rng::derive(opt.seed, 0xD15 + static_cast<std::uint64_t>(row.target_view));
    queries = subsample(queries, opt.max_queries, rng);
    row.evaluated = queries.size();
    if (!queries.empty()) {
      row.results = match_queries(desc.views.at(anchor_view), desc.views.at(row.target_view), queries, opt.match());
      row.accuracy = correspondence_accuracy(row.results);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Distance maps

struct DistanceMap {
  Grid<float> distance;  // NaN outside the evaluated domain
  Pixel query;
  Pixel minimum;
  double min_value = 0.0;
};

/// Descriptor distance from pixel p of sketch a to each domain pixel of sketch b.
inline DistanceMap distance_map(SketchDescNet<float>& net, const SketchImage& a, Pixel p, const SketchImage& b,
                                const std::vector<Pixel>& domain, int threads = 1) {
  require(a.pixels.contains(p), "query pixel outside the source sketch");
  require(!domain.empty(), "empty distance-map domain");
  const DescriptorTable qt = describe_pixels(net, a, {p}, threads);
  const DescriptorTable dt = describe_pixels(net, b, domain, threads);
  DistanceMap m{Grid<float>(b.rows(), b.cols(), std::numeric_limits<float>::quiet_NaN()), p, {}, 0.0};
  const Nearest nn = nearest_neighbor(qt.row(0), dt);
  for (std::size_t i = 0; i < dt.size(); ++i)
    m.distance[dt.pixels[i]] = static_cast<float>(descriptor_distance(qt.row(0), dt.row(i), kDescriptorDim));
  m.minimum = dt.pixels[nn.index];
  m.min_value = nn.distance;
  return m;
}

/// Fraction of the map's finite values strictly below the value at `p`.
inline double distance_rank(const DistanceMap& m, Pixel p) {
  require(m.distance.contains(p) && !std::isnan(m.distance[p]), "pixel outside the distance-map domain");
  const float ref = m.distance[p];
  std::size_t below = 0, total = 0;
  for (float v : m.distance.values()) {
    if (std::isnan(v)) continue;
    ++total;
    below += v < ref;
  }
  return static_cast<double>(below) / static_cast<double>(total);
}

namespace detail {

inline Rgb8 heat_color(double t) {
  t = std::clamp(t, 0.0, 1.0);
  // Red (near) through yellow and green to blue (far).
  const double r = std::clamp(2.0 - 4.0 * t, 0.0, 1.0);
  const double g = t < 0.5 ? std::clamp(4.0 * t, 0.0, 1.0) : std::clamp(3.0 - 4.0 * t, 0.0, 1.0);
  const double b = std::clamp(4.0 * t - 2.0, 0.0, 1.0);
  return {static_cast<std::uint8_t>(std::lround(255 * r)), static_cast<std::uint8_t>(std::lround(255 * g)),
          static_cast<std::uint8_t>(std::lround(255 * b))};
}

inline void draw_box(Grid<Rgb8>& img, Pixel c, int half, Rgb8 color, int col_offset = 0) {
  for (int d = -half; d <= half; ++d) {
    const Pixel edge[4] = {{c.row - half, c.col + d}, {c.row + half, c.col + d}, {c.row + d, c.col - half}, {c.row + d, c.col + half}};
    for (const auto& e : edge) {
      const int col = e.col + col_offset;
      if (e.row >= 0 && e.row < img.rows() && e.col >= 0 && e.col < img.cols() - col_offset && col < img.cols()) img(e.row, col) = color;
    }
  }
}

inline void paint_sketch(Grid<Rgb8>& img, const SketchImage& s, int col_offset, std::uint8_t ink_level) {
  for (int r = 0; r < s.rows(); ++r)
    for (int c = 0; c < s.cols(); ++c) img(r, c + col_offset) = s.ink(r, c) ? Rgb8{ink_level, ink_level, ink_level} : Rgb8{255, 255, 255};
}

}  // namespace detail

/// Heat image of a distance map over sketch b; the minimum gets a black box.
inline Grid<Rgb8> render_heat(const DistanceMap& m, const SketchImage& b) {
  Grid<Rgb8> img(b.rows(), b.cols());
  detail::paint_sketch(img, b, 0, 200);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (float v : m.distance.values())
    if (!std::isnan(v)) lo = std::min<double>(lo, v), hi = std::max<double>(hi, v);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int r = 0; r < b.rows(); ++r)
    for (int c = 0; c < b.cols(); ++c) {
      const float v = m.distance(r, c);
      if (std::isnan(v)) continue;
      const Rgb8 color = detail::heat_color((v - lo) / span);
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
          if (img.contains(r + dr, c + dc) && ((dr == 0 && dc == 0) || std::isnan(m.distance(r + dr, c + dc)))) img(r + dr, c + dc) = color;
    }
  detail::draw_box(img, m.minimum, 6, {0, 0, 0});
  return img;
}

/// Source and target side by side; each drawn query gets a blue box on the
/// left and its match a green (success) or red (failure) box on the right.
inline Grid<Rgb8> render_matches(const SketchImage& a, const SketchImage& b, const std::vector<MatchResult>& results,
                                 std::size_t max_drawn = 40) {
  Grid<Rgb8> img(std::max(a.rows(), b.rows()), a.cols() + b.cols(), Rgb8{255, 255, 255});
  detail::paint_sketch(img, a, 0, 0);
  detail::paint_sketch(img, b, a.cols(), 0);
  const std::size_t step = std::max<std::size_t>(1, results.size() / std::max<std::size_t>(1, max_drawn));
  for (std::size_t i = 0; i < results.size(); i += step) {
    const auto& r = results[i];
    detail::draw_box(img, r.query, 4, {0, 90, 255});
    detail::draw_box(img, r.matched, 4, r.success ? Rgb8{0, 180, 0} : Rgb8{220, 0, 0}, a.cols());
  }
  return img;
}

// ---------------------------------------------------------------------------
// Label transfer

struct TransferOptions {
  bool smooth = true;
  int stride = 1;  // describe every stride-th ink pixel; others copy the nearest described pixel
  int threads = 1;
};

namespace detail {

inline std::vector<Pixel> ink_pixels(const SketchImage& s) {
  std::vector<Pixel> out;
  for (int r = 0; r < s.rows(); ++r)
    for (int c = 0; c < s.cols(); ++c)
      if (s.ink(r, c)) out.push_back({r, c});
  return out;
}

inline std::vector<Pixel> every_nth(const std::vector<Pixel>& px, int stride) {
  std::vector<Pixel> out;
  for (std::size_t i = 0; i < px.size(); i += static_cast<std::size_t>(stride)) out.push_back(px[i]);
  return out;
}

}  // namespace detail

namespace detail {

constexpr int kRingRow[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kRingCol[8] = {0, 1, 1, 1, 0, -1, -1, -1};

// Zhang-Suen thinning of the ink to a one-pixel skeleton.
inline Grid<char> skeleton(const SketchImage& s) {
  Grid<char> on(s.rows(), s.cols(), 0);
  for (int r = 0; r < s.rows(); ++r)
    for (int c = 0; c < s.cols(); ++c) on(r, c) = s.ink(r, c) ? 1 : 0;
  auto at = [&](int r, int c) { return on.contains(r, c) && on(r, c); };
  std::vector<Pixel> kill;
  for (bool changed = true; changed;) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      kill.clear();
      for (int r = 0; r < on.rows(); ++r)
        for (int c = 0; c < on.cols(); ++c) {
          if (!on(r, c)) continue;
          bool n[8];
          int count = 0, runs = 0;
          for (int k = 0; k < 8; ++k) count += n[k] = at(r + kRingRow[k], c + kRingCol[k]);
          for (int k = 0; k < 8; ++k) runs += !n[k] && n[(k + 1) % 8];
          if (count < 2 || count > 6 || runs != 1) continue;
          // n[0..7] = N, NE, E, SE, S, SW, W, NW
          const bool ok = pass == 0 ? !(n[0] && n[2] && n[4]) && !(n[2] && n[4] && n[6]) : !(n[0] && n[2] && n[6]) && !(n[0] && n[4] && n[6]);
          if (ok) kill.push_back({r, c});
        }
      for (const auto& p : kill) on[p] = 0;
      changed = changed || !kill.empty();
    }
  }
  return on;
}

// Skeleton pixels where three or more branches meet (crossing number >= 3).
inline std::vector<Pixel> skeleton_junctions(const Grid<char>& skel) {
  std::vector<Pixel> out;
  auto at = [&](int r, int c) { return skel.contains(r, c) && skel(r, c); };
  for (int r = 0; r < skel.rows(); ++r)
    for (int c = 0; c < skel.cols(); ++c) {
      if (!skel(r, c)) continue;
      int runs = 0;
      for (int k = 0; k < 8; ++k) runs += !at(r + kRingRow[k], c + kRingCol[k]) && at(r + kRingRow[(k + 1) % 8], c + kRingCol[(k + 1) % 8]);
      if (runs >= 3) out.push_back({r, c});
    }
  return out;
}

}  // namespace detail

inline constexpr int kJunctionRadius = 2;

/// Stroke-majority smoothing. The ink is cut into strokes by removing every
/// ink pixel within kJunctionRadius (Chebyshev) of a skeleton junction; each
/// remaining 8-connected stroke takes its majority label, smallest label on
/// ties. Unlabeled pixels do not vote and the cut pixels keep their label.
inline Grid<int> smooth_by_stroke(const SketchImage& sketch, const Grid<int>& labels) {
  Grid<int> out = labels;
  Grid<char> seen(sketch.rows(), sketch.cols(), 0);
  for (const Pixel j : detail::skeleton_junctions(detail::skeleton(sketch)))
    for (int dr = -kJunctionRadius; dr <= kJunctionRadius; ++dr)
      for (int dc = -kJunctionRadius; dc <= kJunctionRadius; ++dc)
        if (seen.contains(j.row + dr, j.col + dc)) seen(j.row + dr, j.col + dc) = 1;
  std::vector<Pixel> stack, stroke;
  for (int r = 0; r < sketch.rows(); ++r)
    for (int c = 0; c < sketch.cols(); ++c) {
      if (!sketch.ink(r, c) || seen(r, c)) continue;
      stroke.clear();
      stack.push_back({r, c});
      seen(r, c) = 1;
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        stroke.push_back(p);
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const Pixel q{p.row + dr, p.col + dc};
            if (sketch.pixels.contains(q) && sketch.ink(q.row, q.col) && !seen[q]) {
              seen[q] = 1;
              stack.push_back(q);
            }
          }
      }
      std::map<int, std::size_t> votes;
      for (const auto& p : stroke)
        if (labels[p] >= 0) ++votes[labels[p]];
      if (votes.empty()) continue;
      const auto best = std::max_element(votes.begin(), votes.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
      for (const auto& p : stroke) out[p] = best->first;
    }
  return out;
}

/// Labels for the target's ink pixels from their nearest-descriptor labeled
/// source pixel; -1 elsewhere.
inline Grid<int> transfer_labels(SketchDescNet<float>& net, const SketchImage& source, const Grid<int>& source_labels,
                                 const SketchImage& target, const TransferOptions& opt = {}) {
  require(opt.stride >= 1, "transfer stride must be at least 1");
  require(source_labels.rows() == source.rows() && source_labels.cols() == source.cols(), "label grid does not match the source sketch");
  std::vector<Pixel> labeled;
  for (const auto& p : detail::ink_pixels(source))
    if (source_labels[p] >= 0) labeled.push_back(p);
  if (labeled.empty()) throw precondition_error("source sketch has no labeled ink pixels");
  const DescriptorTable st = describe_pixels(net, source, detail::every_nth(labeled, opt.stride), opt.threads);
  const auto target_ink = detail::ink_pixels(target);
  Grid<int> out(target.rows(), target.cols(), -1);
  if (target_ink.empty()) return out;
  const DescriptorTable tt = describe_pixels(net, target, detail::every_nth(target_ink, opt.stride), opt.threads);
  for (std::size_t i = 0; i < tt.size(); ++i) out[tt.pixels[i]] = source_labels[st.pixels[nearest_neighbor(tt.row(i), st).index]];
  if (opt.stride > 1) {
    for (const auto& p : target_ink) {
      if (out[p] >= 0) continue;
      double best = std::numeric_limits<double>::infinity();
      int label = -1;
      for (const auto& q : tt.pixels) {
        const double d = euclidean_distance(p, q);
        if (d < best) best = d, label = out[q];
      }
      out[p] = label;
    }
  }
  return opt.smooth ? smooth_by_stroke(target, out) : out;
}

/// Fraction of pixels labeled in `truth` (>= 0) that `predicted` labels the same.
inline double label_agreement(const Grid<int>& predicted, const Grid<int>& truth) {
  require(predicted.rows() == truth.rows() && predicted.cols() == truth.cols(), "label grids differ in size");
  std::size_t total = 0, same = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth.values()[i] < 0) continue;
    ++total;
    same += predicted.values()[i] == truth.values()[i];
  }
  require(total > 0, "ground-truth labels are empty");
  return static_cast<double>(same) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_matches_csv(const std::filesystem::path& path, const std::vector<MatchResult>& results) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write " + path.string());
  out << "query_row,query_col,match_row,match_col,distance,success\n";
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.9g,%d\n", r.query.row, r.query.col, r.matched.row, r.matched.col, r.distance,
                  r.success ? 1 : 0);
    out << buf;
  }
}

inline void write_ap_csv(const std::filesystem::path& path, const RetrievalReport& rep) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write " + path.string());
  out << "query_id,AP\n";
  char buf[64];
  for (const auto& q : rep.queries) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g\n", q.query_id, q.ap);
    out << buf;
  }
}

inline void write_disparity_csv(const std::filesystem::path& path, const std::vector<DisparityRow>& rows) {
  std::ofstream out(path);
  if (!out) throw runtime_failure("cannot write " + path.string());
  out << "disparity,target_view,evaluated,excluded,accuracy\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%g,%d,%zu,%zu,%.9g\n", r.disparity, r.target_view, r.evaluated, r.excluded, r.accuracy);
    out << buf;
  }
}

}  // namespace sketchdesc
