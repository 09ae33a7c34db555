#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "sketchdesc/batch.hpp"
#include "sketchdesc/dataset.hpp"
#include "sketchdesc/patch.hpp"
#include "sketchdesc/rng.hpp"
#include "sketchdesc/shapes.hpp"

using namespace sketchdesc;

namespace {

// Non-separable reference: each output pixel is the normalized 2D sum of
// triangle-kernel weights over every input pixel, the kernel widened by the
// downsampling factor.
Grid<double> reference_bilinear(const Grid<float>& in) {
  const int n = in.rows();
  const double f = static_cast<double>(n) / 32.0;
  Grid<double> out(32, 32, 0.0);
  for (int i = 0; i < 32; ++i) {
    for (int j = 0; j < 32; ++j) {
      const double ci = (i + 0.5) * f, cj = (j + 0.5) * f;
      double num = 0.0, den = 0.0;
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
          const double wr = std::max(0.0, 1.0 - std::abs(r + 0.5 - ci) / f);
          const double wc = std::max(0.0, 1.0 - std::abs(c + 0.5 - cj) / f);
          num += wr * wc * in(r, c);
          den += wr * wc;
        }
      }
      out(i, j) = num / den;
    }
  }
  return out;
}

ShapeData shape_data(const ShapeRender& sr, const std::string& id) {
  ShapeData sh;
  sh.shape_id = id;
  sh.sketches = sr.sketches;
  sh.records = sr.records;
  return sh;
}

struct DeskShapes {
  std::vector<ShapeData> shapes;
  std::vector<const ShapeData*> ptrs() const {
    std::vector<const ShapeData*> p;
    for (const auto& s : shapes) p.push_back(&s);
    return p;
  }
};

const DeskShapes& desk() {
  static const DeskShapes d = [] {
    DeskShapes out;
    for (int i = 0; i < 2; ++i) {
      const auto id = "chair" + std::to_string(i);
      out.shapes.push_back(shape_data(synthesize_shape(make_chair(i, 0.08), sample_viewpoints(30, 30, 4), id), id));
    }
    return out;
  }();
  return d;
}

}  // namespace

TEST(ExtractPatch, CenteredWindowArithmetic) {
  SketchImage s = blank_sketch();
  for (int r = 0; r < 480; ++r)
    for (int c = 0; c < 480; ++c) s.pixels(r, c) = (r * 7 + c * 13) % 5 == 0;
  const Grid<float> p = extract_patch(s, {240, 240}, 32);
  ASSERT_EQ(p.rows(), 32);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) EXPECT_EQ(p(r, c), static_cast<float>(s.pixels(224 + r, 224 + c)));
}

TEST(ExtractPatch, CornerCenterIsZeroPadded) {
  SketchImage s = blank_sketch();
  for (auto& v : s.pixels.values()) v = 1;
  const Grid<float> p = extract_patch(s, {0, 0}, 64);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) EXPECT_EQ(p(r, c), (r >= 32 && c >= 32) ? 1.0f : 0.0f) << r << "," << c;
}

TEST(ExtractPatch, InkCountMatchesDoubleLoop) {
  Rng rng(3);
  SketchImage s = blank_sketch();
  for (int k = 0; k < 4000; ++k) s.pixels(static_cast<int>(rng.index(480)), static_cast<int>(rng.index(480))) = 1;
  for (int q = 0; q < 40; ++q) {
    const Pixel center{static_cast<int>(rng.index(480)), static_cast<int>(rng.index(480))};
    for (int side : kPatchScales) {
      const Grid<float> p = extract_patch(s, center, side);
      double sum = 0.0;
      for (float v : p.values()) sum += v;
      int brute = 0;
      for (int r = center.row - side / 2; r < center.row + side / 2; ++r)
        for (int c = center.col - side / 2; c < center.col + side / 2; ++c) brute += s.ink(r, c);
      EXPECT_EQ(static_cast<int>(sum), brute);
    }
  }
  EXPECT_THROW(extract_patch(s, {240, 240}, 48), precondition_error);
  EXPECT_THROW(extract_patch(s, {-1, 240}, 32), precondition_error);
}

TEST(RescaleTo32, IdentityAndConstants) {
  Grid<float> p(32, 32);
  Rng rng(1);
  for (auto& v : p.values()) v = static_cast<float>(rng.uniform());
  EXPECT_EQ(rescale_to_32(p), p);
  for (int side : {64, 128, 256}) {
    const Grid<float> out = rescale_to_32(Grid<float>(side, side, 1.0f));
    for (float v : out.values()) EXPECT_NEAR(v, 1.0f, 1e-6f);
  }
  EXPECT_THROW(rescale_to_32(Grid<float>(64, 32)), precondition_error);
  EXPECT_THROW(rescale_to_32(Grid<float>(48, 48)), precondition_error);
}

TEST(RescaleTo32, SingleInkPixelMatchesReferenceBilinear) {
  for (int side : {64, 128, 256}) {
    for (auto [r, c] : {std::pair{0, 0}, std::pair{17, 40}, std::pair{side - 1, side / 2}}) {
      Grid<float> in(side, side, 0.0f);
      in(r, c) = 1.0f;
      const Grid<float> got = rescale_to_32(in);
      const Grid<double> want = reference_bilinear(in);
      for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) EXPECT_NEAR(got(i, j), want(i, j), 1e-6) << side << " " << i << "," << j;
    }
  }
}

TEST(RescaleTo32, RandomPatchesMatchReferenceAndStayInUnitRange) {
  Rng rng(8);
  for (int side : {64, 128}) {
    Grid<float> in(side, side, 0.0f);
    for (auto& v : in.values()) v = rng.uniform() < 0.1 ? 1.0f : 0.0f;
    const Grid<float> got = rescale_to_32(in);
    const Grid<double> want = reference_bilinear(in);
    for (int i = 0; i < 32; ++i) {
      for (int j = 0; j < 32; ++j) {
        EXPECT_NEAR(got(i, j), want(i, j), 1e-5);
        EXPECT_GE(got(i, j), 0.0f);
        EXPECT_LE(got(i, j), 1.0f);
      }
    }
  }
}

TEST(MakeMultiscale, BlankAndDistantInk) {
  const MultiScalePatch blank = make_multiscale(blank_sketch(), {240, 240});
  for (float v : blank.data) EXPECT_EQ(v, 0.0f);

  auto channel_sums = [](int offset) {
    SketchImage s = blank_sketch();
    for (int r = 230; r < 250; ++r) s.pixels(r, 240 + offset) = 1;
    const MultiScalePatch p = make_multiscale(s, {240, 240});
    std::array<double, 4> sums{};
    for (int k = 0; k < 4; ++k)
      for (int i = 0; i < kPatchPixels; ++i) sums[k] += p.channel(k)[i];
    return sums;
  };
  // 100 px away only the 256 window (half side 128) reaches the stroke.
  const auto far = channel_sums(100);
  EXPECT_EQ(far[0], 0.0);
  EXPECT_EQ(far[1], 0.0);
  EXPECT_EQ(far[2], 0.0);
  EXPECT_GT(far[3], 0.0);
  // 50 px away the 128 and 256 windows see it.
  const auto mid = channel_sums(50);
  EXPECT_EQ(mid[0], 0.0);
  EXPECT_EQ(mid[1], 0.0);
  EXPECT_GT(mid[2], 0.0);
  EXPECT_GT(mid[3], 0.0);
}

TEST(MakeMultiscale, ChannelZeroIsRawCropAndOrderIsSmallestFirst) {
  const ShapeData& sh = desk().shapes[0];
  const SketchImage& s = sh.sketches[1];
  const auto& e = sh.records[sh.records.size() / 2].entries[0];
  const MultiScalePatch p = make_multiscale(sh.sketches[e.view_id], e.pixel);
  const Grid<float> crop = extract_patch(sh.sketches[e.view_id], e.pixel, 32);
  EXPECT_EQ(std::memcmp(p.channel(0), crop.data(), sizeof(float) * kPatchPixels), 0);
  for (int k = 1; k < 4; ++k) {
    const Grid<float> want = rescale_to_32(extract_patch(sh.sketches[e.view_id], e.pixel, kPatchScales[k]));
    EXPECT_EQ(std::memcmp(p.channel(k), want.data(), sizeof(float) * kPatchPixels), 0) << k;
  }
  const MultiScalePatch corner = make_multiscale(s, {100, 100});
  for (float v : corner.data) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(MakeMultiscale, ChannelSumsTrackWindowInkCounts) {
  // Ink confined to the central 16x16 block lies away from every window's
  // border, so each channel's sum times the squared factor is the ink count.
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    SketchImage s = blank_sketch();
    const int count = 1 + static_cast<int>(rng.index(60));
    for (int k = 0; k < count; ++k) s.pixels(232 + static_cast<int>(rng.index(16)), 232 + static_cast<int>(rng.index(16))) = 1;
    const MultiScalePatch p = make_multiscale(s, {240, 240});
    const InkIntegral ink(s);
    for (int k = 0; k < 4; ++k) {
      double sum = 0.0;
      for (int i = 0; i < kPatchPixels; ++i) sum += p.channel(k)[i];
      const double f = kPatchScales[k] / 32.0;
      EXPECT_NEAR(sum * f * f, static_cast<double>(ink.window({240, 240}, kPatchScales[k])), 1e-3) << k;
    }
  }
}

TEST(AssembleBatch, SixtyFourDistinctVerticesWithValidNegatives) {
  const TrainingPool pool(desk().ptrs(), SamplingMode::Or);
  ASSERT_GE(pool.eligible_vertices(), 64u);
  Rng rng(0);
  const auto batch = assemble_batch(pool, 64, rng);
  ASSERT_EQ(batch.size(), 64u);
  std::set<std::pair<int, int>> anchors;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Triplet& t = batch[i];
    EXPECT_TRUE(anchors.emplace(t.anchor.shape, t.anchor.vertex_id).second);
    EXPECT_EQ(t.anchor.vertex_id, t.positive.vertex_id);
    EXPECT_EQ(t.anchor.shape, t.positive.shape);
    EXPECT_NE(t.anchor.view_id, t.positive.view_id);
    ASSERT_GE(t.negative_source, 0);
    EXPECT_NE(t.negative_source, static_cast<int>(i));
    EXPECT_EQ(t.negative, batch[t.negative_source].positive);
    EXPECT_FALSE(t.negative.shape == t.anchor.shape && t.negative.vertex_id == t.anchor.vertex_id);
    if (t.negative.shape == t.anchor.shape) {
      for (const auto& rec : pool.shape(t.anchor.shape).records) {
        if (rec.vertex_id != t.anchor.vertex_id) continue;
        if (const auto* e = rec.find(t.negative.view_id)) {
          EXPECT_GE(euclidean_distance(e->pixel, t.negative.pixel), 16.0);
        }
      }
    }
    for (const auto* ref : {&t.anchor, &t.positive, &t.negative})
      EXPECT_TRUE(is_valid_sample(pool.sketch(*ref), ref->pixel, SamplingMode::Or));
  }
}

TEST(AssembleBatch, SingleEligibleVertexIsAnError) {
  ShapeData sh;
  sh.shape_id = "one";
  SketchImage s = blank_sketch();
  s.pixels(100, 100) = 1;
  sh.sketches = {s, s};
  sh.records = {{3, {{0, {100, 100}}, {1, {100, 101}}}}};
  const TrainingPool pool({&sh}, SamplingMode::And);
  EXPECT_EQ(pool.eligible_vertices(), 1u);
  Rng rng(0);
  EXPECT_THROW(assemble_batch(pool, 2, rng), precondition_error);
  EXPECT_THROW(epoch_batches(pool, 2, 0, rng), precondition_error);
}

TEST(AssembleBatch, FixedSeedGivesIdenticalBatchesAndPatches) {
  const TrainingPool pool(desk().ptrs(), SamplingMode::Or);
  Rng a(77), b(77);
  for (int k = 0; k < 3; ++k) {
    const auto ba = assemble_batch(pool, 16, a);
    const auto bb = assemble_batch(pool, 16, b);
    ASSERT_EQ(ba, bb);
    const auto pa = pool.patch(ba[0].anchor), pb = pool.patch(bb[0].anchor);
    EXPECT_EQ(std::memcmp(pa.data.data(), pb.data.data(), sizeof(pa.data)), 0);
  }
}

TEST(EpochBatches, EachPairUsedOnceWithDistinctVerticesPerBatch) {
  const TrainingPool pool(desk().ptrs(), SamplingMode::And);
  Rng rng(4);
  const auto batches = epoch_batches(pool, 64, 0, rng);
  std::size_t total = 0;
  for (const auto& batch : batches) {
    ASSERT_GE(batch.size(), 2u);
    ASSERT_LE(batch.size(), 64u);
    std::set<std::pair<int, int>> seen;
    for (const auto& t : batch) EXPECT_TRUE(seen.emplace(t.anchor.shape, t.anchor.vertex_id).second);
    total += batch.size();
  }
  EXPECT_LE(total, pool.pairs().size());
  EXPECT_GE(total + 64, pool.pairs().size());  // only a tail of one vertex's pairs may be dropped

  Rng capped_rng(4);
  std::size_t capped = 0;
  for (const auto& batch : epoch_batches(pool, 64, 200, capped_rng)) capped += batch.size();
  EXPECT_LE(capped, 200u);
  EXPECT_GE(capped, 150u);
}

TEST(TrainingPool, OrSamplingKeepsStrictlyMoreSamplesThanAnd) {
  for (const auto& sh : desk().shapes) {
    for (const auto& s : sh.sketches) {
      ShapeData single;
      single.shape_id = sh.shape_id;
      single.sketches = {s};
      // every pixel of the sketch as a candidate sample
      std::size_t or_count = 0, and_count = 0;
      const InkIntegral ink(s);
      for (int r = 0; r < 480; ++r) {
        for (int c = 0; c < 480; ++c) {
          or_count += is_valid_sample(ink, {r, c}, SamplingMode::Or);
          and_count += is_valid_sample(ink, {r, c}, SamplingMode::And);
        }
      }
      EXPECT_GT(or_count, and_count);
    }
  }
  const TrainingPool or_pool(desk().ptrs(), SamplingMode::Or), and_pool(desk().ptrs(), SamplingMode::And);
  EXPECT_GT(or_pool.valid_samples(), and_pool.valid_samples());
  EXPECT_GE(or_pool.pairs().size(), and_pool.pairs().size());
}
