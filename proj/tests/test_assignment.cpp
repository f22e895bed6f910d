#include <gtest/gtest.h>

#include <cmath>

#include "frcnn/anchors.hpp"
#include "frcnn/assignment.hpp"

using namespace frcnn;

namespace {

AnchorSet plain(std::vector<Box> boxes) {
  AnchorSet s;
  s.anchors = std::move(boxes);
  s.k = 1;
  s.feature_w = s.anchors.size();
  s.feature_h = 1;
  s.inside.assign(s.anchors.size(), 1);
  return s;
}

std::vector<Box> random_gt(Rng& rng, std::size_t n) {
  std::vector<Box> gt;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 12 + rng.uniform() * 60, h = 12 + rng.uniform() * 60;
    const double x = rng.uniform() * (128 - w), y = rng.uniform() * (128 - h);
    gt.push_back({x, y, x + w, y + h});
  }
  return gt;
}

AnchorSet toy_set() {
  return anchors_for_image(AnchorConfig::toy_default(), 16, 16, 128, 128);
}

}  // namespace

TEST(AssignLabels, ThresholdExamples) {
  const Box gt{0, 0, 10, 10};
  // IoU 0.8 (positive), 0.2 (negative), 0.5 (ignore; gt's argmax is the first).
  const auto s = plain({{0, 0, 10, 8}, {0, 0, 10, 2}, {0, 0, 10, 5}});
  const auto t = assign_labels(s, std::vector<Box>{gt});
  EXPECT_EQ(t.labels[0], AnchorLabel::kPositive);
  EXPECT_EQ(t.labels[1], AnchorLabel::kNegative);
  EXPECT_EQ(t.labels[2], AnchorLabel::kIgnore);
}

TEST(AssignLabels, RuleOneRescuesWeakGt) {
  // Best anchor only reaches IoU 0.5.
  const auto s = plain({{0, 0, 10, 5}, {0, 0, 10, 2}});
  const auto t = assign_labels(s, std::vector<Box>{{0, 0, 10, 10}});
  EXPECT_EQ(t.labels[0], AnchorLabel::kPositive);
  EXPECT_EQ(t.matched_gt[0], 0);
}

TEST(AssignLabels, TiedArgmaxAllPositive) {
  const auto s = plain({{0, 0, 10, 5}, {0, 5, 10, 10}, {50, 50, 60, 60}});
  const auto t = assign_labels(s, std::vector<Box>{{0, 0, 10, 10}});
  EXPECT_EQ(t.labels[0], AnchorLabel::kPositive);
  EXPECT_EQ(t.labels[1], AnchorLabel::kPositive);
  EXPECT_EQ(t.labels[2], AnchorLabel::kNegative);
}

TEST(AssignLabels, PosThresholdInclusive) {
  const auto s = plain({{0, 0, 10, 7}, {0, 0, 10, 10}});
  const auto t = assign_labels(s, std::vector<Box>{{0, 0, 10, 10}, {0, 0, 10, 7}});
  EXPECT_EQ(t.labels[0], AnchorLabel::kPositive);
  EXPECT_EQ(t.labels[1], AnchorLabel::kPositive);
}

TEST(AssignLabels, OutsideAnchorsIgnored) {
  auto s = plain({{0, 0, 10, 10}, {0, 0, 10, 10}});
  s.inside[1] = 0;
  const auto t = assign_labels(s, std::vector<Box>{{0, 0, 10, 10}});
  EXPECT_EQ(t.labels[0], AnchorLabel::kPositive);
  EXPECT_EQ(t.labels[1], AnchorLabel::kIgnore);
}

TEST(AssignLabels, EmptyGtAllInsideNegative) {
  const auto s = toy_set();
  const auto t = assign_labels(s, std::vector<Box>{});
  for (std::size_t a = 0; a < s.size(); ++a)
    EXPECT_EQ(t.labels[a], s.inside[a] ? AnchorLabel::kNegative : AnchorLabel::kIgnore);
}

TEST(AssignLabels, MatchesHighestIouGtLowestIndexOnTies) {
  const auto s = plain({{0, 0, 10, 10}});
  const auto t = assign_labels(s, std::vector<Box>{{0, 0, 10, 10}, {0, 0, 10, 10}});
  EXPECT_EQ(t.matched_gt[0], 0);
}

TEST(AssignLabels, RandomScenesProperties) {
  Rng rng(101);
  const auto s = toy_set();
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = random_gt(rng, 1 + rng.below(5));
    const auto t = assign_labels(s, gt);
    // rule (i) guarantee
    for (std::size_t g = 0; g < gt.size(); ++g) {
      bool any_overlap = false, has_pos = false;
      for (std::size_t a = 0; a < s.size(); ++a) {
        if (!s.inside[a] || iou(s.anchors[a], gt[g]) <= 0.0) continue;
        any_overlap = true;
        has_pos |= t.labels[a] == AnchorLabel::kPositive;
      }
      if (any_overlap) {
        EXPECT_TRUE(has_pos) << "trial " << trial << " gt " << g;
      }
    }
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (!s.inside[a]) {
        EXPECT_EQ(t.labels[a], AnchorLabel::kIgnore);
      }
      if (t.labels[a] != AnchorLabel::kPositive) continue;
      // target decodes back to the matched gt
      ASSERT_GE(t.matched_gt[a], 0);
      const Box& g = gt[static_cast<std::size_t>(t.matched_gt[a])];
      const Box r = decode(t.target_deltas[a], s.anchors[a]);
      EXPECT_NEAR(r.x1, g.x1, 1e-9);
      EXPECT_NEAR(r.y1, g.y1, 1e-9);
      EXPECT_NEAR(r.x2, g.x2, 1e-9);
      EXPECT_NEAR(r.y2, g.y2, 1e-9);
      EXPECT_TRUE(std::isfinite(t.target_deltas[a].tw));
    }
  }
}

TEST(SampleMinibatch, CapsPositivesAndPads) {
  std::vector<Box> boxes(5200, Box{0, 0, 1, 1});
  auto s = plain(boxes);
  RpnTargets t;
  t.labels.assign(5200, AnchorLabel::kNegative);
  for (int i = 0; i < 200; ++i) t.labels[i] = AnchorLabel::kPositive;
  t.target_deltas.resize(5200);
  t.matched_gt.assign(5200, -1);
  Rng rng(1);
  sample_minibatch(t, 256, 128, rng);
  EXPECT_EQ(t.count_sampled(AnchorLabel::kPositive), 128u);
  EXPECT_EQ(t.count_sampled(AnchorLabel::kNegative), 128u);

  for (int i = 30; i < 200; ++i) t.labels[i] = AnchorLabel::kNegative;
  sample_minibatch(t, 256, 128, rng);
  EXPECT_EQ(t.count_sampled(AnchorLabel::kPositive), 30u);
  EXPECT_EQ(t.count_sampled(AnchorLabel::kNegative), 226u);

  for (int i = 0; i < 30; ++i) t.labels[i] = AnchorLabel::kNegative;
  sample_minibatch(t, 256, 128, rng);
  EXPECT_EQ(t.count_sampled(AnchorLabel::kPositive), 0u);
  EXPECT_EQ(t.count_sampled(AnchorLabel::kNegative), 256u);
}

TEST(SampleMinibatch, UndershootsOnlyWhenFewLabeled) {
  RpnTargets t;
  t.labels = {AnchorLabel::kPositive, AnchorLabel::kNegative, AnchorLabel::kIgnore,
              AnchorLabel::kNegative};
  t.target_deltas.resize(4);
  t.matched_gt.assign(4, -1);
  Rng rng(2);
  sample_minibatch(t, 256, 128, rng);
  EXPECT_EQ(t.count_sampled(), 3u);
  EXPECT_FALSE(t.sample_mask[2]);
}

TEST(SampleMinibatch, NoLabeledAnchorsThrows) {
  RpnTargets t;
  t.labels.assign(10, AnchorLabel::kIgnore);
  t.target_deltas.resize(10);
  t.matched_gt.assign(10, -1);
  Rng rng(3);
  EXPECT_THROW(sample_minibatch(t, 256, 128, rng), std::runtime_error);
}

TEST(SampleMinibatch, SeedReproducibleAndLabelsUntouched) {
  Rng scene(7);
  const auto s = toy_set();
  const auto base = assign_labels(s, random_gt(scene, 3));
  auto a = base, b = base, c = base;
  Rng r1(9), r2(9), r3(10);
  sample_minibatch(a, 256, 128, r1);
  sample_minibatch(b, 256, 128, r2);
  sample_minibatch(c, 256, 128, r3);
  EXPECT_EQ(a.sample_mask, b.sample_mask);
  EXPECT_NE(a.sample_mask, c.sample_mask);
  EXPECT_EQ(a.labels, base.labels);
  EXPECT_EQ(c.labels, base.labels);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (a.sample_mask[i]) {
      EXPECT_NE(a.labels[i], AnchorLabel::kIgnore);
      EXPECT_TRUE(s.inside[i]);
    }
  EXPECT_LE(a.count_sampled(), 256u);
}

TEST(SampleWithoutReplacement, DistinctAndBounded) {
  Rng rng(4);
  std::vector<std::size_t> pool(50);
  for (std::size_t i = 0; i < 50; ++i) pool[i] = i * 3;
  auto picked = sample_without_replacement(pool, 20, rng);
  ASSERT_EQ(picked.size(), 20u);
  std::sort(picked.begin(), picked.end());
  EXPECT_EQ(std::adjacent_find(picked.begin(), picked.end()), picked.end());
  for (auto v : picked) EXPECT_EQ(v % 3, 0u);
  EXPECT_EQ(sample_without_replacement(pool, 80, rng).size(), 50u);
}
