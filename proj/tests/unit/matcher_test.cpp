#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vplab/common/error.hpp"
#include "vplab/matcher/matcher.hpp"
#include "vplab/segcore/encoder.hpp"
#include "vplab/trainer/metrics.hpp"
#include "vplab/trainer/synthetic.hpp"

using namespace vplab;
using namespace vplab::matcher;
using vplab::testing::random_image;

namespace {

FeatureGrid grid_of(int h, int w, const Mat& features) {
  FeatureGrid g;
  g.h = h;
  g.w = w;
  g.stride = 8;
  g.features = features;
  return g;
}

BinaryMask cell_mask(int h, int w, std::initializer_list<std::pair<int, int>> cells, int stride = 8) {
  BinaryMask m(h * stride, w * stride);
  for (auto [r, c] : cells)
    for (int y = r * stride; y < (r + 1) * stride; ++y)
      for (int x = c * stride; x < (c + 1) * stride; ++x) m.set(y, x, true);
  return m;
}

SimilarityMap map_of(const Mat& values) {
  SimilarityMap sm;
  sm.h = static_cast<int>(values.rows());
  sm.w = static_cast<int>(values.cols());
  sm.stride = 8;
  sm.values = values;
  return sm;
}

}  // namespace

TEST(Reference, FullMaskTakesEveryCell) {
  const auto g = encode_image(random_image(64, 1));
  const auto ref = build_reference(g, BinaryMask(64, 64, true));
  EXPECT_EQ(ref.vectors.size(), static_cast<std::size_t>(g.h * g.w));
  for (const auto& v : ref.vectors) EXPECT_NEAR(v.norm(), 1.0, 1e-12);
}

TEST(Reference, SingleCell) {
  const auto g = encode_image(random_image(64, 2));
  const auto ref = build_reference(g, cell_mask(g.h, g.w, {{3, 5}}, g.stride));
  ASSERT_EQ(ref.vectors.size(), 1u);
  const Vec expected = g.cell(3, 5).transpose() / g.cell(3, 5).norm();
  EXPECT_LT((ref.vectors[0] - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Reference, CentroidOfOrthogonalCells) {
  Mat f = Mat::Zero(4, 2);
  f(0, 0) = 1;
  f(1, 1) = 1;
  const auto ref = build_reference(grid_of(2, 2, f), cell_mask(2, 2, {{0, 0}, {0, 1}}));
  EXPECT_NEAR(ref.centroid(0), std::sqrt(2.0) / 2, 1e-12);
  EXPECT_NEAR(ref.centroid(1), std::sqrt(2.0) / 2, 1e-12);
}

TEST(Reference, Errors) {
  const auto g = encode_image(random_image(64, 3));
  EXPECT_THROW(build_reference(g, BinaryMask(64, 64)), EmptyReference);
  EXPECT_THROW(build_reference(g, BinaryMask(32, 32, true)), ShapeError);
  // Less than half a cell covered does not qualify.
  BinaryMask sliver(64, 64);
  for (int x = 0; x < 64; ++x) sliver.set(0, x, true);
  EXPECT_THROW(build_reference(g, sliver), EmptyReference);
}

TEST(Similarity, SelfMatchScoresOne) {
  const auto g = encode_image(random_image(64, 4));
  const auto mask = cell_mask(g.h, g.w, {{1, 1}, {4, 6}, {7, 0}}, g.stride);
  const auto sm = similarity_map(build_reference(g, mask), g);
  EXPECT_NEAR(sm.at(1, 1), 1.0, 1e-6);
  EXPECT_NEAR(sm.at(4, 6), 1.0, 1e-6);
  EXPECT_NEAR(sm.at(7, 0), 1.0, 1e-6);
  EXPECT_LE(sm.values.maxCoeff(), 1.0);
  EXPECT_GE(sm.values.minCoeff(), -1.0);
}

TEST(Similarity, HandExamples) {
  Mat rf = Mat::Zero(4, 2);
  rf(0, 0) = 1;
  const auto ref = build_reference(grid_of(2, 2, rf), cell_mask(2, 2, {{0, 0}}));
  Mat tf(4, 2);
  tf << 0, 1, 0.6, 0.8, 0, -3, 0, 0;
  const auto sm = similarity_map(ref, grid_of(2, 2, tf));
  EXPECT_NEAR(sm.at(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(sm.at(0, 1), 0.6, 1e-12);
  EXPECT_NEAR(sm.at(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(sm.at(1, 1), 0.0, 1e-12);
}

TEST(Similarity, InvariantToPositiveFeatureScale) {
  const auto g = encode_image(random_image(64, 5));
  const auto ref = build_reference(g, cell_mask(g.h, g.w, {{2, 2}, {2, 3}}, g.stride));
  const auto t = encode_image(random_image(64, 6));
  auto scaled = t;
  scaled.features *= 7.5;
  EXPECT_LT((similarity_map(ref, t).values - similarity_map(ref, scaled).values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Sampling, SingleCell) {
  Mat v = Mat::Zero(8, 8);
  v(2, 5) = 0.9;
  const auto pts = sample_points(map_of(v), 0.5, 5, 1);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].x, 5.5 * 8);
  EXPECT_EQ(pts[0].y, 2.5 * 8);
  EXPECT_EQ(pts[0].polarity, Polarity::positive);
}

TEST(Sampling, AdjacentCellsSuppressed) {
  Mat v = Mat::Zero(8, 8);
  v(3, 3) = 0.7;
  v(3, 4) = 0.8;
  auto pts = sample_points(map_of(v), 0.5, 5, 1);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].x, 4.5 * 8);
  v(3, 4) = 0.7;
  pts = sample_points(map_of(v), 0.5, 5, 1);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].x, 3.5 * 8);
  EXPECT_EQ(pts[0].y, 3.5 * 8);
}

TEST(Sampling, NoMatchAndBadTau) {
  EXPECT_THROW(sample_points(map_of(Mat::Constant(8, 8, 0.49)), 0.5, 5, 1), NoMatch);
  EXPECT_THROW(sample_points(map_of(Mat::Constant(8, 8, 0.9)), 1.0, 5, 1), std::invalid_argument);
  EXPECT_THROW(sample_points(map_of(Mat::Constant(8, 8, 0.9)), 0.0, 5, 1), std::invalid_argument);
}

TEST(Sampling, RespectsKMaxAndRadius) {
  const auto pts = sample_points(map_of(Mat::Constant(8, 8, 0.9)), 0.5, 50, 1);
  // Greedy raster order with Chebyshev radius 1 keeps every second row and column.
  EXPECT_EQ(pts.size(), 16u);
  EXPECT_EQ(sample_points(map_of(Mat::Constant(8, 8, 0.9)), 0.5, 3, 1).size(), 3u);
  EXPECT_EQ(sample_points(map_of(Mat::Constant(8, 8, 0.9)), 0.5, 100, 0).size(), 64u);
}

TEST(Sampling, RaisingTauKeepsASubset) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat v = rng.uniform_matrix(8, 8, -1.0, 1.0);
    std::vector<PointPrompt> prev;
    bool have_prev = false;
    for (double tau = 0.05; tau < 1.0; tau += 0.1) {
      std::vector<PointPrompt> pts;
      try {
        pts = sample_points(map_of(v), tau, 5, 1);
      } catch (const NoMatch&) {
      }
      if (have_prev) {
        for (const auto& p : pts) EXPECT_NE(std::find(prev.begin(), prev.end(), p), prev.end());
      }
      prev = pts;
      have_prev = true;
    }
  }
}

TEST(LabelStatus, ForwardOnly) {
  PseudoLabel l;
  l.advance(LabelStatus::refined);
  l.advance(LabelStatus::refined);
  l.advance(LabelStatus::validated);
  EXPECT_THROW(l.advance(LabelStatus::predicted), std::logic_error);
  EXPECT_TRUE(can_transition(LabelStatus::predicted, LabelStatus::validated));
  EXPECT_FALSE(can_transition(LabelStatus::validated, LabelStatus::refined));
  for (auto s : {LabelStatus::predicted, LabelStatus::refined, LabelStatus::validated})
    EXPECT_EQ(label_status_from_string(to_string(s)), s);
}

class Pipeline : public ::testing::Test {
 protected:
  const DecoderWeights& w = vplab::testing::fixture_weights();
  Model model{&w};
  std::vector<trainer::LabeledExample> ds = trainer::make_synthetic_dataset({"shapes", 6, 64}, 42);
};

TEST_F(Pipeline, EmptyTargetList) {
  const auto ref = build_reference(encode_image(ds[0].image), ds[0].gt_mask);
  EXPECT_TRUE(generate_pseudolabels(model, nullptr, ref, {}).empty());
}

TEST_F(Pipeline, FeaturelessTargetGivesEmptyMask) {
  // Mid-gray maps to zero input, so every feature is zero and nothing can match.
  ImageRGB gray(64, 64, "gray");
  std::fill(gray.pixels.begin(), gray.pixels.end(), 0.5f);
  const auto ref = build_reference(encode_image(ds[0].image), ds[0].gt_mask);
  const auto pl = pseudolabel_one(model, nullptr, ref, gray, {});
  EXPECT_EQ(pl.mask.count(), 0u);
  EXPECT_EQ(pl.confidence, 0.0);
  EXPECT_TRUE(pl.points.empty());
  EXPECT_EQ(pl.status, LabelStatus::predicted);
}

TEST_F(Pipeline, DeterministicAcrossThreadCounts) {
  const auto ref = build_reference(encode_image(ds[0].image), ds[0].gt_mask);
  std::vector<ImageRGB> targets;
  for (const auto& ex : ds) targets.push_back(ex.image);
  MatcherParams serial;
  MatcherParams parallel;
  parallel.threads = 3;
  const auto a = generate_pseudolabels(model, nullptr, ref, targets, serial);
  const auto b = generate_pseudolabels(model, nullptr, ref, targets, parallel);
  ASSERT_EQ(a.size(), targets.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mask, b[i].mask);
    EXPECT_EQ(a[i].confidence, b[i].confidence);
    EXPECT_EQ(a[i].points, b[i].points);
  }
}

TEST_F(Pipeline, ConfidenceInUnitInterval) {
  const auto ref = build_reference(encode_image(ds[0].image), ds[0].gt_mask);
  for (const auto& ex : ds) {
    const auto pl = pseudolabel_one(model, nullptr, ref, ex.image, {});
    EXPECT_GE(pl.confidence, 0.0);
    EXPECT_LE(pl.confidence, 1.0);
    EXPECT_EQ(pl.mask.size(), ex.image.size());
  }
}
