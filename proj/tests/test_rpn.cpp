#include <gtest/gtest.h>

#include <cmath>

#include "frcnn/rpn.hpp"
#include "support/gradcheck.hpp"

using namespace frcnn;
using namespace frcnn::testing;

namespace {

constexpr std::size_t kGrid = 8;

AnchorSet toy_anchors() {
  return anchors_for_image(AnchorConfig::toy_default(), kGrid, kGrid, 64, 64);
}

RpnTargets scene_targets(const AnchorSet& set, std::vector<Box> gt, std::uint64_t seed) {
  auto t = assign_labels(set, gt);
  Rng rng(seed);
  sample_minibatch(t, 64, 32, rng);
  return t;
}

// Channel index of (anchor a, component c) in an anchor-major map.
std::size_t at(std::size_t channel, std::size_t cell) { return channel * kGrid * kGrid + cell; }

}  // namespace

TEST(RpnHead, ChannelLaw) {
  Rng rng(1);
  for (std::size_t k : {1u, 3u, 9u}) {
    const auto head = make_rpn_head<float>(8, 16, k, rng);
    EXPECT_EQ(head.cls_channels(), 2 * k);
    EXPECT_EQ(head.reg_channels(), 4 * k);
    auto f = Var<float>::leaf(random_tensor({8, 6, 4}, rng).cast<float>(), false);
    const auto out = head.forward(f);
    EXPECT_EQ(out.cls.shape(), (Shape{2 * k, 6, 4}));
    EXPECT_EQ(out.reg.shape(), (Shape{4 * k, 6, 4}));
  }
  auto bad = Var<float>::leaf(Tensor<float>({5, 4, 4}), false);
  EXPECT_THROW(make_rpn_head<float>(8, 16, 9, rng).forward(bad), ShapeError);
}

TEST(RpnHead, ParamNames) {
  Rng rng(2);
  auto head = make_rpn_head<float>(8, 16, 9, rng);
  for (const auto* p : head.params()) EXPECT_EQ(p->name().rfind("rpn.", 0), 0u) << p->name();
}

TEST(RpnHead, ObjectnessPairsSoftmaxToOne) {
  Rng rng(3);
  const auto head = make_rpn_head<float>(4, 8, 3, rng);
  auto f = Var<float>::leaf(random_tensor({4, 5, 5}, rng, -5, 5).cast<float>(), false);
  const auto cls = head.forward(f).cls.value();
  const auto obj = objectness(cls);
  ASSERT_EQ(obj.size(), 75u);
  const std::size_t cells = 25;
  for (std::size_t cell = 0; cell < cells; ++cell)
    for (std::size_t a = 0; a < 3; ++a) {
      const double b = cls[(2 * a) * cells + cell], o = cls[(2 * a + 1) * cells + cell];
      const double p = 1.0 / (1.0 + std::exp(b - o));
      EXPECT_NEAR(obj[cell * 3 + a], p, 1e-6);
      EXPECT_GE(obj[cell * 3 + a], 0.0);
      EXPECT_LE(obj[cell * 3 + a], 1.0);
    }
}

TEST(RpnHead, TranslationEquivariantInInterior) {
  Rng rng(4);
  const auto head = make_rpn_head<double>(3, 6, 2, rng);
  const std::size_t h = 7, w = 7;
  const auto base = random_tensor({3, h, w}, rng);
  Tensor<double> shifted({3, h, w}, 0.0);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 1; j < w; ++j) shifted[(c * h + i) * w + j] = base[(c * h + i) * w + j - 1];
  const auto a = head.forward(Var<double>::leaf(base, false));
  const auto b = head.forward(Var<double>::leaf(shifted, false));
  const std::size_t ch = a.reg.dim(0);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t i = 1; i + 1 < h; ++i)
      for (std::size_t j = 1; j + 2 < w; ++j)
        EXPECT_NEAR(b.reg.value()[(c * h + i) * w + j + 1], a.reg.value()[(c * h + i) * w + j], 1e-12);
}

TEST(RpnLoss, ZeroPositivesGivesZeroReg) {
  const auto set = toy_anchors();
  const auto t = scene_targets(set, {}, 5);
  ASSERT_EQ(t.count(AnchorLabel::kPositive), 0u);
  Rng rng(6);
  auto cls = Var<float>::leaf(random_tensor({18, kGrid, kGrid}, rng).cast<float>(), true);
  auto reg = Var<float>::leaf(random_tensor({36, kGrid, kGrid}, rng).cast<float>(), true);
  const auto loss = rpn_loss(cls, reg, t, LossWeights{});
  EXPECT_EQ(loss.reg.item(), 0.0f);
  EXPECT_GT(loss.cls.item(), 0.0f);
}

TEST(RpnLoss, PerfectPredictionIsZero) {
  const auto set = toy_anchors();
  const auto t = scene_targets(set, {{4, 4, 30, 28}, {30, 20, 60, 60}}, 7);
  ASSERT_GT(t.count(AnchorLabel::kPositive), 0u);
  Tensor<float> cls({18, kGrid, kGrid}, 0.0f);
  Tensor<float> reg({36, kGrid, kGrid}, 0.0f);
  for (std::size_t cell = 0; cell < kGrid * kGrid; ++cell)
    for (std::size_t a = 0; a < 9; ++a) {
      const std::size_t n = cell * 9 + a;
      const bool pos = t.labels[n] == AnchorLabel::kPositive;
      cls[at(2 * a + (pos ? 1 : 0), cell)] = 500.0f;
      if (!pos) continue;
      const BoxDelta& d = t.target_deltas[n];
      reg[at(4 * a + 0, cell)] = static_cast<float>(d.tx);
      reg[at(4 * a + 1, cell)] = static_cast<float>(d.ty);
      reg[at(4 * a + 2, cell)] = static_cast<float>(d.tw);
      reg[at(4 * a + 3, cell)] = static_cast<float>(d.th);
    }
  // Targets are computed in double; the float map holds them rounded.
  auto t32 = t;
  for (auto& d : t32.target_deltas)
    d = {static_cast<float>(d.tx), static_cast<float>(d.ty), static_cast<float>(d.tw),
         static_cast<float>(d.th)};
  const auto loss = rpn_loss(Var<float>::leaf(cls, true), Var<float>::leaf(reg, true), t32, LossWeights{});
  EXPECT_EQ(loss.cls.item(), 0.0f);
  EXPECT_EQ(loss.reg.item(), 0.0f);
  EXPECT_EQ(loss.total.item(), 0.0f);
}

TEST(RpnLoss, LambdaScalesOnlyTheRegTerm) {
  const auto set = toy_anchors();
  const auto t = scene_targets(set, {{4, 4, 30, 28}}, 8);
  Rng rng(9);
  const auto c = random_tensor({18, kGrid, kGrid}, rng);
  const auto r = random_tensor({36, kGrid, kGrid}, rng);
  auto eval = [&](double lambda) {
    LossWeights w;
    w.lambda = lambda;
    return rpn_loss(Var<double>::leaf(c, true), Var<double>::leaf(r, true), t, w);
  };
  const auto l1 = eval(1.0), l8 = eval(8.0);
  EXPECT_EQ(l1.cls.item(), l8.cls.item());
  EXPECT_EQ(l1.reg.item(), l8.reg.item());
  EXPECT_DOUBLE_EQ(l8.total.item() - l8.cls.item(), 8.0 * (l1.total.item() - l1.cls.item()));
}

TEST(RpnLoss, DefaultNormalizers) {
  const LossWeights w;
  EXPECT_EQ(w.lambda, 10.0);
  EXPECT_EQ(w.n_cls, 256.0);
  // N_reg defaults to the number of anchor locations: doubling the grid
  // area halves the reg term of one fixed positive.
  auto reg_for = [](std::size_t gw) {
    const auto set = anchors_for_image(AnchorConfig::toy_default(), gw, kGrid, 8.0 * gw, 64);
    auto t = assign_labels(set, std::vector<Box>{set.anchors[4]});
    Rng rng(1);
    sample_minibatch(t, 64, 32, rng);
    Tensor<double> reg({36, kGrid, gw}, 0.5);
    const auto cls = Tensor<double>({18, kGrid, gw}, 0.0);
    const double n_pos = static_cast<double>(t.count(AnchorLabel::kPositive));
    return rpn_loss(Var<double>::leaf(cls, true), Var<double>::leaf(reg, true), t, LossWeights{}).reg.item() /
           n_pos;
  };
  EXPECT_NEAR(reg_for(8) / reg_for(16), 2.0, 1e-9);
}

TEST(RpnLoss, RegTermCoversUnsampledPositives) {
  const auto set = toy_anchors();
  auto t = scene_targets(set, {{4, 4, 30, 28}}, 10);
  std::size_t pos = 0;
  for (std::size_t a = 0; a < t.size(); ++a) pos += t.labels[a] == AnchorLabel::kPositive;
  ASSERT_GT(pos, 0u);
  const auto cls = Tensor<double>({18, kGrid, kGrid}, 0.0);
  const auto reg = Tensor<double>({36, kGrid, kGrid}, 0.0);
  // unsample every positive but keep one negative so the batch is valid
  auto t2 = t;
  for (std::size_t a = 0; a < t2.size(); ++a)
    if (t2.labels[a] == AnchorLabel::kPositive) t2.sample_mask[a] = 0;
  const auto l1 = rpn_loss(Var<double>::leaf(cls, true), Var<double>::leaf(reg, true), t, LossWeights{});
  const auto l2 = rpn_loss(Var<double>::leaf(cls, true), Var<double>::leaf(reg, true), t2, LossWeights{});
  EXPECT_EQ(l1.reg.item(), l2.reg.item());
}

TEST(RpnLoss, NothingSampledThrows) {
  const auto set = toy_anchors();
  auto t = scene_targets(set, {{4, 4, 30, 28}}, 11);
  std::fill(t.sample_mask.begin(), t.sample_mask.end(), 0);
  const auto cls = Var<float>::leaf(Tensor<float>({18, kGrid, kGrid}), true);
  const auto reg = Var<float>::leaf(Tensor<float>({36, kGrid, kGrid}), true);
  EXPECT_THROW(rpn_loss(cls, reg, t, LossWeights{}), std::runtime_error);
}

class Proposals : public ::testing::Test {
 protected:
  void SetUp() override {
    set = toy_anchors();
    Rng rng(12);
    cls = random_tensor({18, kGrid, kGrid}, rng, -3, 3).cast<float>();
    reg = random_tensor({36, kGrid, kGrid}, rng, -0.3, 0.3).cast<float>();
  }
  AnchorSet set;
  Tensor<float> cls, reg;
};

TEST_F(Proposals, SortedBoundedAndSuppressed) {
  ProposalParams p = ProposalParams::test_default();
  for (std::size_t post : {1u, 10u, 300u}) {
    p.post_nms_top = post;
    const auto out = generate_proposals(cls, reg, set, 64, 64, p);
    EXPECT_LE(out.size(), post);
    EXPECT_FALSE(out.empty());
    for (std::size_t i = 1; i < out.size(); ++i) EXPECT_GE(out[i - 1].score, out[i].score);
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_GE(out[i].box.x1, 0.0);
      EXPECT_LE(out[i].box.x2, 64.0);
      EXPECT_GE(out[i].box.width(), p.min_size);
      for (std::size_t j = i + 1; j < out.size(); ++j)
        EXPECT_LE(iou(out[i].box, out[j].box), p.nms_iou);
    }
  }
}

TEST_F(Proposals, Deterministic) {
  const auto p = ProposalParams::test_default();
  const auto a = generate_proposals(cls, reg, set, 64, 64, p);
  const auto b = generate_proposals(cls, reg, set, 64, 64, p);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].box, b[i].box);
    EXPECT_EQ(a[i].score, b[i].score);
  }
}

TEST_F(Proposals, ZeroRegGivesClippedAnchors) {
  const Tensor<float> zero(reg.shape(), 0.0f);
  auto p = ProposalParams::test_default();
  const auto out = generate_proposals(cls, zero, set, 64, 64, p);
  p.use_reg = false;
  const auto off = generate_proposals(cls, reg, set, 64, 64, p);
  ASSERT_EQ(out.size(), off.size());
  const auto obj = objectness(cls);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i].box, off[i].box);
    bool found = false;
    for (std::size_t a = 0; a < set.size() && !found; ++a)
    {
      const Box c = clip(set.anchors[a], 64, 64);
      found = std::abs(c.x1 - out[i].box.x1) < 1e-9 && std::abs(c.y1 - out[i].box.y1) < 1e-9 &&
              std::abs(c.x2 - out[i].box.x2) < 1e-9 && std::abs(c.y2 - out[i].box.y2) < 1e-9 &&
              obj[a] == out[i].score;
    }
    EXPECT_TRUE(found) << i;
  }
}

TEST_F(Proposals, NoClsDrawsUnrankedRandomBoxes) {
  auto p = ProposalParams::test_default();
  p.use_cls = false;
  p.post_nms_top = 50;
  Rng r1(3), r2(3), r3(4);
  const auto a = generate_proposals(cls, reg, set, 64, 64, p, &r1);
  const auto b = generate_proposals(cls, reg, set, 64, 64, p, &r2);
  const auto c = generate_proposals(cls, reg, set, 64, 64, p, &r3);
  ASSERT_EQ(a.size(), 50u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].score, 0.0);
    EXPECT_EQ(a[i].box, b[i].box);
  }
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= !(a[i].box == c[i].box);
  EXPECT_TRUE(differs);
}

TEST(ProposalParams, Defaults) {
  EXPECT_EQ(ProposalParams::train_default().post_nms_top, 2000u);
  EXPECT_EQ(ProposalParams::test_default().post_nms_top, 300u);
  EXPECT_EQ(ProposalParams::test_default().nms_iou, 0.7);
  ProposalParams p;
  p.post_nms_top = p.pre_nms_top + 1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.nms_iou = 1.5;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}
