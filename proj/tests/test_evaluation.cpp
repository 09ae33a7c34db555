#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sketchdesc/eval.hpp"
#include "sketchdesc/shapes.hpp"

using namespace sketchdesc;

namespace {

ShapeData to_shape(const ShapeRender& sr, Split split) {
  ShapeData sh;
  sh.shape_id = sr.shape_id;
  sh.split = split;
  sh.sketches = sr.sketches;
  sh.part_labels = sr.part_labels;
  sh.records = sr.records;
  return sh;
}

// A lamp seen from all twelve 30-degree azimuths.
const ShapeData& lamp() {
  static const ShapeData sh = to_shape(synthesize_shape(make_lamp(4, 0.08), sample_viewpoints(30, 30, 12), "lamp4"), Split::Test);
  return sh;
}

const ShapeData& chair(int seed) {
  static std::map<int, ShapeData> cache;
  auto it = cache.find(seed);
  if (it == cache.end())
    it = cache.emplace(seed, to_shape(synthesize_shape(make_chair(seed, 0.08), sample_viewpoints(30, 30, 4),
                                                       "chair" + std::to_string(seed)),
                                      Split::Train))
             .first;
  return it->second;
}

SketchDescNet<float>& net() {
  static SketchDescNet<float> n = [] {
    NetConfig cfg;
    cfg.width = 0.25;
    return SketchDescNet<float>(cfg, 17);
  }();
  return n;
}

const ShapeDescriptors& lamp_descriptors() {
  static const ShapeDescriptors d = describe_shape(net(), lamp());
  return d;
}

MatchResult result_at(Pixel matched, Pixel truth, double tau = kSuccessRadius) {
  MatchResult r;
  r.matched = matched;
  r.truth = truth;
  r.success = euclidean_distance(matched, truth) <= tau;
  return r;
}

// AP as the mean, over positives, of (positives ranked at or above it) / rank.
double ap_oracle(const std::vector<int>& labels) {
  double sum = 0.0;
  int npos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    ++npos;
    int above = 0;
    for (std::size_t j = 0; j <= i; ++j) above += labels[j] == 1;
    sum += static_cast<double>(above) / static_cast<double>(i + 1);
  }
  return sum / npos;
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Matching, SelfMatchIsExact) {
  const auto& sh = lamp();
  const auto cands = evaluation_candidates(sh, 0);
  ASSERT_GT(cands.size(), 20u);
  std::vector<Query> queries;
  for (std::size_t i = 0; i < cands.size(); i += cands.size() / 10) queries.push_back({cands[i], cands[i], -1});
  const auto res = match_correspondences(net(), sh.sketches[0], sh.sketches[0], queries, cands);
  for (const auto& r : res) {
    EXPECT_NEAR(r.distance, 0.0, 1e-5);
    EXPECT_EQ(r.matched, r.query);
    EXPECT_TRUE(r.success);
  }
  EXPECT_DOUBLE_EQ(correspondence_accuracy(res), 1.0);
}

TEST(Matching, SingleCandidateAlwaysChosen) {
  const auto& sh = lamp();
  const auto qs = evaluation_queries(sh, 0, 1);
  ASSERT_GE(qs.size(), 5u);
  const Pixel only = evaluation_candidates(sh, 1).front();
  const std::vector<Query> few(qs.begin(), qs.begin() + 5);
  for (const auto& r : match_correspondences(net(), sh.sketches[0], sh.sketches[1], few, {only})) {
    EXPECT_EQ(r.matched, only);
    EXPECT_EQ(r.success, euclidean_distance(only, r.truth) <= 16.0);
  }
  EXPECT_THROW(match_correspondences(net(), sh.sketches[0], sh.sketches[1], few, {}), precondition_error);
}

TEST(Matching, NearestNeighborAgreesWithBruteForce) {
  const auto& sh = lamp();
  const auto& d = lamp_descriptors();
  const auto qs = evaluation_queries(sh, 0, 2);
  ASSERT_FALSE(qs.empty());
  const std::vector<Query> some(qs.begin(), qs.begin() + std::min<std::size_t>(8, qs.size()));
  const auto res = match_queries(d.views[0], d.views[2], some);
  for (const auto& r : res) {
    const auto qd = net().describe({make_multiscale(sh.sketches[0], r.query)});
    double best = 1e300;
    Pixel arg;
    for (const auto& p : d.views[2].pixels) {
      const auto cd = net().describe({make_multiscale(sh.sketches[2], p)});
      double s = 0.0;
      for (int j = 0; j < kDescriptorDim; ++j) s += (double(qd[j]) - cd[j]) * (double(qd[j]) - cd[j]);
      if (std::sqrt(s) < best) best = std::sqrt(s), arg = p;
    }
    EXPECT_NEAR(r.distance, best, 1e-5);
    if (std::abs(r.distance - best) < 1e-9) {
      EXPECT_EQ(r.matched, arg);
    }
  }
}

TEST(Matching, DescriptorDistanceSymmetric) {
  const auto& t = lamp_descriptors().views[3];
  ASSERT_GE(t.size(), 10u);
  for (std::size_t i = 0; i + 1 < 10; ++i) {
    EXPECT_EQ(descriptor_distance(t.row(i), t.row(i + 1), t.dim), descriptor_distance(t.row(i + 1), t.row(i), t.dim));
    EXPECT_EQ(descriptor_distance(t.row(i), t.row(i), t.dim), 0.0);
  }
}

TEST(Accuracy, WorkedExamples) {
  std::vector<MatchResult> all_ok{result_at({0, 0}, {0, 0}), result_at({10, 10}, {0, 0})};
  EXPECT_DOUBLE_EQ(correspondence_accuracy(all_ok), 1.0);
  std::vector<MatchResult> three_of_four{result_at({0, 0}, {0, 0}), result_at({16, 0}, {0, 0}), result_at({12, 12}, {0, 0}),
                                         result_at({100, 100}, {0, 0})};
  // (12,12) is 16.97 px away: fails on Euclidean distance, passes on Chebyshev.
  EXPECT_DOUBLE_EQ(correspondence_accuracy(three_of_four), 0.5);
  EXPECT_DOUBLE_EQ(accuracy_at(three_of_four, 16.0, SuccessMetric::Chebyshev), 0.75);
  EXPECT_DOUBLE_EQ(accuracy_at(three_of_four, 17.0), 0.75);
  EXPECT_THROW(correspondence_accuracy({}), precondition_error);
}

TEST(Accuracy, MonotoneInRadius) {
  Rng rng(9);
  std::vector<MatchResult> rs;
  for (int i = 0; i < 300; ++i) rs.push_back(result_at({int(rng.index(480)), int(rng.index(480))}, {240, 240}));
  double prev = 0.0;
  for (double tau = 0; tau <= 400; tau += 7) {
    const double a = accuracy_at(rs, tau);
    EXPECT_GE(a, prev);
    prev = a;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
}

TEST(Retrieval, AveragePrecisionExamples) {
  EXPECT_DOUBLE_EQ(average_precision({1, 1, -1}), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({1, -1, 1}), 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(average_precision({-1, 1}), 0.5);
  EXPECT_THROW(average_precision({-1, -1}), precondition_error);
  EXPECT_THROW(average_precision({1, 0}), precondition_error);
}

TEST(Retrieval, AveragePrecisionMatchesOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> labels(1 + rng.index(20));
    for (auto& l : labels) l = rng.coin() ? 1 : -1;
    labels[rng.index(labels.size())] = 1;
    EXPECT_NEAR(average_precision(labels), ap_oracle(labels), 1e-12);
  }
}

TEST(Retrieval, MapRecomputedFromScratch) {
  const auto& sh = lamp();
  RetrievalOptions opt;
  opt.queries = 6;
  opt.seed = 3;
  const std::vector<const ShapeData*> shapes{&sh};
  const auto rep = retrieval_from_descriptors(shapes, {lamp_descriptors()}, opt);
  ASSERT_FALSE(rep.queries.empty());
  double sum = 0.0;
  for (const auto& q : rep.queries) sum += q.ap;
  EXPECT_NEAR(rep.map, sum / rep.queries.size(), 1e-15);
  EXPECT_EQ(rep.queries.size() + rep.skipped, 6u);

  // Full recount for the first query with independently computed descriptors.
  const auto& q = rep.queries.front();
  const CorrespondenceRecord* rec = nullptr;
  for (const auto& r : sh.records)
    if (r.vertex_id == q.vertex_id) rec = &r;
  ASSERT_NE(rec, nullptr);
  const auto qd = net().describe({make_multiscale(sh.sketches[q.view_id], q.pixel)});
  std::vector<std::tuple<double, int, Pixel>> ranked;
  for (int v = 0; v < 12; ++v) {
    if (v == q.view_id) continue;
    const auto cands = evaluation_candidates(sh, v);
    std::vector<MultiScalePatch> patches;
    for (const auto& p : cands) patches.push_back(make_multiscale(sh.sketches[v], p));
    const auto cd = net().describe(patches);
    for (std::size_t i = 0; i < cands.size(); ++i)
      ranked.emplace_back(descriptor_distance(qd.data(), cd.data() + i * kDescriptorDim, kDescriptorDim), v, cands[i]);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<int> labels;
  std::size_t npos = 0;
  for (const auto& [d, v, p] : ranked) {
    const auto* e = rec->find(v);
    const bool pos = e && e->pixel == p;
    npos += pos;
    labels.push_back(pos ? 1 : -1);
  }
  EXPECT_EQ(npos, q.positives);
  EXPECT_EQ(ranked.size(), q.gallery);
  EXPECT_NEAR(q.ap, ap_oracle(labels), 1e-6);
}

TEST(Retrieval, SampledGalleryKeepsPositives) {
  RetrievalOptions opt;
  opt.queries = 5;
  opt.gallery_per_view = 10;
  const auto rep = retrieval_from_descriptors({&lamp()}, {lamp_descriptors()}, opt);
  for (const auto& q : rep.queries) {
    EXPECT_GE(q.gallery, 10u * 11);
    EXPECT_LE(q.gallery, 10u * 11 + q.positives);
    EXPECT_GT(q.ap, 0.0);
    EXPECT_LE(q.ap, 1.0);
  }
}

TEST(Domain, QueriesAreValidAndUnique) {
  const auto& sh = lamp();
  const auto qs = evaluation_queries(sh, 0, 1);
  std::set<Pixel> seen;
  for (const auto& q : qs) {
    EXPECT_TRUE(seen.insert(q.pixel).second);
    EXPECT_TRUE(is_valid_sample(sh.sketches[0], q.pixel, SamplingMode::And));
    const CorrespondenceRecord* rec = nullptr;
    for (const auto& r : sh.records)
      if (r.vertex_id == q.vertex_id) rec = &r;
    ASSERT_NE(rec, nullptr);
    EXPECT_EQ(rec->find(0)->pixel, q.pixel);
    EXPECT_EQ(rec->find(1)->pixel, q.truth);
  }
  const auto c = evaluation_candidates(sh, 1);
  EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
  EXPECT_EQ(std::adjacent_find(c.begin(), c.end()), c.end());
}

TEST(DistanceMap, MinimumIsTheMatch) {
  const auto& sh = lamp();
  const auto qs = evaluation_queries(sh, 0, 1);
  const auto cands = evaluation_candidates(sh, 1);
  const Query q = qs[qs.size() / 2];
  const auto m = distance_map(net(), sh.sketches[0], q.pixel, sh.sketches[1], cands);
  const auto r = match_correspondences(net(), sh.sketches[0], sh.sketches[1], {q}, cands).front();
  EXPECT_EQ(m.minimum, r.matched);
  EXPECT_NEAR(m.min_value, r.distance, 1e-9);
  EXPECT_EQ(distance_rank(m, m.minimum), 0.0);
  std::size_t finite = 0;
  for (float v : m.distance.values()) finite += !std::isnan(v);
  EXPECT_EQ(finite, cands.size());
  const auto heat = render_heat(m, sh.sketches[1]);
  EXPECT_EQ(heat.rows(), 480);
  const auto side = render_matches(sh.sketches[0], sh.sketches[1], {r});
  EXPECT_EQ(side.cols(), 960);
}

TEST(DistanceMap, SameSketchHasZeroAtQuery) {
  const auto& sh = lamp();
  const auto cands = evaluation_candidates(sh, 4);
  const Pixel q = cands[cands.size() / 3];
  const auto m = distance_map(net(), sh.sketches[4], q, sh.sketches[4], cands);
  EXPECT_EQ(m.minimum, q);
  EXPECT_NEAR(m.min_value, 0.0, 1e-5);
  EXPECT_NEAR(m.distance[q], 0.0f, 1e-5f);
}

TEST(Hog, Layout) {
  const HogDescriptor zero = hog_descriptor(Grid<float>(32, 32, 0.4f));
  for (float v : zero) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(zero.size(), 324u);
  EXPECT_THROW(hog_descriptor(Grid<float>(16, 16, 0.f)), precondition_error);
}

TEST(Hog, VerticalEdgeSplitsBetweenEndBins) {
  Grid<float> p(32, 32, 0.f);
  for (int r = 0; r < 32; ++r)
    for (int c = 16; c < 32; ++c) p(r, c) = 1.f;
  const auto h = hog_descriptor(p);
  // Block (0, 1) covers cells in columns 1..2, so the edge at column 16 sits in its right cells.
  const int block = 1 * 36;
  for (int cell = 0; cell < 4; ++cell) {
    const float* b = h.data() + block + cell * 9;
    EXPECT_FLOAT_EQ(b[0], b[8]);
    for (int k = 1; k < 8; ++k) EXPECT_EQ(b[k], 0.0f);
  }
  for (int blk = 0; blk < 9; ++blk) {
    double sq = 0.0;
    for (int j = 0; j < 36; ++j) sq += double(h[blk * 36 + j]) * h[blk * 36 + j];
    EXPECT_TRUE(sq == 0.0 || std::abs(sq - 1.0) < 1e-5) << sq;
  }
}

TEST(Baseline, ThreeHopsMatchBruteForce) {
  const auto& train = chair(30);
  const auto& test = chair(31);
  const auto qs_all = evaluation_queries(test, 0, 1);
  ASSERT_GT(qs_all.size(), 40u);
  std::vector<Query> qs;
  for (std::size_t i = 0; i < qs_all.size(); i += qs_all.size() / 20) qs.push_back(qs_all[i]);
  const auto res = retrieval_baseline({&train}, test, 0, 1, qs);

  auto hog_at = [](const SketchImage& s, Pixel p) { return hog_descriptor(extract_patch(s, p, 32)); };
  auto dist = [](const HogDescriptor& a, const HogDescriptor& b) {
    double s = 0.0;
    for (int j = 0; j < kHogDim; ++j) s += (double(a[j]) - b[j]) * (double(a[j]) - b[j]);
    return s;
  };
  std::vector<std::pair<Pixel, Pixel>> hops;  // train view-0 pixel -> its view-1 pixel
  for (const auto& q : evaluation_queries(train, 0, 1)) hops.emplace_back(q.pixel, q.truth);
  std::sort(hops.begin(), hops.end());
  const auto target = evaluation_candidates(test, 1);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto hq = hog_at(test.sketches[0], qs[i].pixel);
    double best = 1e300;
    Pixel jump;
    for (const auto& [p, pb] : hops)
      if (const double d = dist(hq, hog_at(train.sketches[0], p)); d < best) best = d, jump = pb;
    const auto hb = hog_at(train.sketches[1], jump);
    best = 1e300;
    Pixel match;
    for (const auto& p : target)
      if (const double d = dist(hb, hog_at(test.sketches[1], p)); d < best) best = d, match = p;
    EXPECT_EQ(res[i].matched, match);
    EXPECT_EQ(res[i].success, euclidean_distance(match, qs[i].truth) <= 16.0);
  }
}

TEST(Baseline, MissingViewNamed) {
  ShapeData partial = chair(30);
  partial.sketches.resize(2);
  const auto& test = chair(31);
  const auto qs = evaluation_queries(test, 0, 2);
  try {
    retrieval_baseline({&partial}, test, 0, 2, qs);
    FAIL() << "expected a precondition error";
  } catch (const precondition_error& e) {
    EXPECT_NE(std::string(e.what()).find("azimuth 60"), std::string::npos) << e.what();
  }
}

TEST(Disparity, SweepCountsAndSelfAccuracy) {
  const auto& sh = lamp();
  const auto rows = view_disparity_sweep(sh, lamp_descriptors(), 0, {0, 30, 90, 180});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].target_view, 0);
  EXPECT_DOUBLE_EQ(rows[0].accuracy, 1.0);
  EXPECT_EQ(rows[0].excluded, 0u);
  EXPECT_EQ(rows[3].target_view, 6);
  const auto samples = view_samples(sh, 0);
  for (const auto& row : rows) {
    // Recount from the anchor's ink and the target's vertex projections.
    std::size_t hidden = 0;
    const InkIntegral ink(sh.sketches[0]);
    std::set<int> seen_target;
    for (const auto& rec : sh.records)
      if (rec.find(row.target_view)) seen_target.insert(rec.vertex_id);
    std::set<Pixel> counted;
    for (const auto& rec : sh.records) {
      const auto* e = rec.find(0);
      if (!e || !is_valid_sample(ink, e->pixel, SamplingMode::And) || !counted.insert(e->pixel).second) continue;
      hidden += !seen_target.count(rec.vertex_id);
    }
    EXPECT_EQ(row.excluded, hidden) << row.disparity;
    EXPECT_EQ(row.evaluated + row.excluded, samples.size());
  }
  EXPECT_THROW(view_disparity_sweep(sh, lamp_descriptors(), 0, {45}), precondition_error);
}

TEST(Disparity, TargetViewWrapsAround) {
  const auto& sh = lamp();
  EXPECT_EQ(view_at_disparity(sh, 9, 90), 0);
  EXPECT_EQ(view_at_disparity(sh, 11, 180), 5);
  EXPECT_EQ(view_at_disparity(sh, 0, 15), -1);
}

TEST(Transfer, IdenticalSketchReproducesLabels) {
  const auto& sh = lamp();
  ASSERT_EQ(sh.part_labels.size(), 12u);
  TransferOptions opt;
  opt.smooth = false;
  const Grid<int>& src = sh.part_labels[0];
  const auto out = transfer_labels(net(), sh.sketches[0], src, sh.sketches[0], opt);
  std::size_t labeled = 0;
  for (int r = 0; r < 480; ++r)
    for (int c = 0; c < 480; ++c) {
      if (!sh.sketches[0].ink(r, c)) {
        EXPECT_EQ(out(r, c), -1);
      } else if (src(r, c) >= 0) {
        ++labeled;
        EXPECT_EQ(out(r, c), src(r, c)) << r << "," << c;
      }
    }
  EXPECT_GT(labeled, 100u);
}

TEST(Transfer, SmoothingKeepsSourceLabelSet) {
  const auto& sh = lamp();
  TransferOptions opt;
  opt.stride = 6;
  const auto out = transfer_labels(net(), sh.sketches[0], sh.part_labels[0], sh.sketches[2], opt);
  std::set<int> source_set, out_set;
  for (int v : sh.part_labels[0].values())
    if (v >= 0) source_set.insert(v);
  for (int v : out.values())
    if (v >= 0) out_set.insert(v);
  EXPECT_FALSE(out_set.empty());
  for (int v : out_set) EXPECT_TRUE(source_set.count(v)) << v;
}

TEST(Transfer, SmoothingIsConstantPerStroke) {
  SketchImage s = blank_sketch();
  Grid<int> labels(480, 480, -1);
  for (int c = 10; c < 20; ++c) s.pixels(5, c) = 1, labels(5, c) = c < 14 ? 2 : 1;
  for (int c = 40; c < 44; ++c) s.pixels(5, c) = 1, labels(5, c) = c < 42 ? 3 : 0;
  const auto out = smooth_by_stroke(s, labels);
  for (int c = 10; c < 20; ++c) EXPECT_EQ(out(5, c), 1);
  // Two against two: the smaller label wins.
  for (int c = 40; c < 44; ++c) EXPECT_EQ(out(5, c), 0);
  EXPECT_EQ(out(0, 0), -1);
}

TEST(Transfer, JunctionsSplitStrokes) {
  // A T: bar labeled 1, stem labeled 2 with some stray 1s. One connected
  // component, two strokes.
  SketchImage s = blank_sketch();
  Grid<int> labels(480, 480, -1);
  for (int c = 50; c <= 150; ++c) s.pixels(100, c) = 1, labels(100, c) = 1;
  for (int r = 101; r <= 200; ++r) s.pixels(r, 100) = 1, labels(r, 100) = r % 5 == 0 ? 1 : 2;
  const auto out = smooth_by_stroke(s, labels);
  for (int c = 50; c <= 150; ++c)
    if (std::abs(c - 100) > kJunctionRadius) {
      EXPECT_EQ(out(100, c), 1) << c;
    }
  for (int r = 100 + kJunctionRadius + 1; r <= 200; ++r) EXPECT_EQ(out(r, 100), 2) << r;
}

TEST(Transfer, SkeletonThinsThickStrokes) {
  SketchImage s = blank_sketch();
  for (int r = 99; r <= 101; ++r)
    for (int c = 50; c <= 150; ++c) s.pixels(r, c) = 1;
  for (int r = 102; r <= 200; ++r)
    for (int c = 99; c <= 101; ++c) s.pixels(r, c) = 1;
  const auto skel = detail::skeleton(s);
  std::size_t count = 0;
  for (int r = 0; r < 480; ++r)
    for (int c = 0; c < 480; ++c) {
      if (!skel(r, c)) continue;
      ++count;
      EXPECT_TRUE(s.ink(r, c));
    }
  EXPECT_GT(count, 150u);
  EXPECT_LT(count, 220u);
  for (int c = 60; c <= 140; ++c) {
    int column = 0;
    for (int r = 95; r <= 105; ++r) column += skel(r, c);
    if (std::abs(c - 100) > 3) {
      EXPECT_EQ(column, 1) << c;
    }
  }
  const auto junctions = detail::skeleton_junctions(skel);
  ASSERT_FALSE(junctions.empty());
  for (const auto& j : junctions) {
    EXPECT_LE(std::abs(j.row - 100), 3);
    EXPECT_LE(std::abs(j.col - 100), 3);
  }
}

TEST(Transfer, RejectsUnlabeledSource) {
  const auto& sh = lamp();
  EXPECT_THROW(transfer_labels(net(), sh.sketches[0], Grid<int>(480, 480, -1), sh.sketches[1]), precondition_error);
}

TEST(Transfer, AgreementExamples) {
  Grid<int> truth(2, 2, -1), pred(2, 2, 0);
  truth(0, 0) = 1;
  truth(0, 1) = 0;
  EXPECT_DOUBLE_EQ(label_agreement(pred, truth), 0.5);
  EXPECT_THROW(label_agreement(pred, Grid<int>(2, 2, -1)), precondition_error);
}

TEST(Ordering, FractionInRangeAndDeterministic) {
  const auto& sh = chair(30);
  const TrainingPool pool({&sh}, SamplingMode::Or);
  const auto a = triplet_ordering(net(), pool, 16, 32, 4);
  const auto b = triplet_ordering(net(), pool, 16, 32, 4);
  EXPECT_EQ(a.satisfied, b.satisfied);
  EXPECT_GT(a.triplets, 0u);
  EXPECT_GE(a.fraction, 0.0);
  EXPECT_LE(a.fraction, 1.0);
}

TEST(Csv, Formats) {
  const auto dir = std::filesystem::temp_directory_path() / "sketchdesc_eval_csv";
  std::filesystem::create_directories(dir);
  MatchResult r = result_at({3, 4}, {3, 5});
  r.query = {1, 2};
  r.distance = 0.25;
  write_matches_csv(dir / "m.csv", {r});
  EXPECT_EQ(lines_of(dir / "m.csv"), (std::vector<std::string>{"query_row,query_col,match_row,match_col,distance,success", "1,2,3,4,0.25,1"}));
  RetrievalReport rep;
  rep.queries.push_back({});
  rep.queries.back().query_id = 7;
  rep.queries.back().ap = 0.5;
  write_ap_csv(dir / "ap.csv", rep);
  EXPECT_EQ(lines_of(dir / "ap.csv"), (std::vector<std::string>{"query_id,AP", "7,0.5"}));
  DisparityRow d;
  d.disparity = 30;
  d.target_view = 1;
  d.evaluated = 4;
  d.excluded = 2;
  d.accuracy = 0.75;
  write_disparity_csv(dir / "d.csv", {d});
  EXPECT_EQ(lines_of(dir / "d.csv").back(), "30,1,4,2,0.75");
}
