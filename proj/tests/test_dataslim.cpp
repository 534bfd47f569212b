#include <gtest/gtest.h>

#include <map>

#include "dance/dataslim.hpp"
#include "oracles.hpp"

using namespace dance;

namespace {

SlimPolicy with_weight(double lo, double hi) {
  SlimPolicy p;
  p.weight_range = {lo, hi};
  return p;
}

SlimPolicy with_drop(double lo, double hi) {
  SlimPolicy p;
  p.drop_range = {lo, hi};
  return p;
}

}  // namespace

TEST(DownsampleScale, DefaultFormula) {
  const SlimPolicy p;
  EXPECT_EQ(downsample_scale(1.0, p), 1.0);
  EXPECT_EQ(downsample_scale(0.0, p), 0.5);
  SlimPolicy q;
  q.scale_range = {0.5, 1.0};
  EXPECT_EQ(downsample_scale(0.5, q), 0.75);
}

TEST(DropProbability, DefaultAndTableRanges) {
  EXPECT_NEAR(drop_probability(0.8, SlimPolicy{}), 0.2, 1e-15);
  EXPECT_NEAR(drop_probability(0.5, with_drop(0.40, 0.60)), 0.5, 1e-15);
  EXPECT_NEAR(drop_probability(1.0, with_drop(0.25, 0.75)), 0.25, 1e-15);
}

TEST(LossWeight, DefaultAndTableRanges) {
  EXPECT_EQ(loss_weight(0.3, SlimPolicy{}), 0.3);
  EXPECT_EQ(loss_weight(0.5, with_weight(1.0, 2.0)), 1.5);
  EXPECT_EQ(loss_weight(0.0, with_weight(1.0, 4.0)), 1.0);
}

TEST(SlimMaps, DomainErrors) {
  const SlimPolicy p;
  for (double bad : {-0.01, 1.01, std::nan("")}) {
    EXPECT_THROW(downsample_scale(bad, p), DomainError);
    EXPECT_THROW(drop_probability(bad, p), DomainError);
    EXPECT_THROW(loss_weight(bad, p), DomainError);
  }
}

TEST(SlimMapsProperty, DefaultPolicyReproducesFormulasExactly) {
  const SlimPolicy p;
  for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    EXPECT_EQ(downsample_scale(x, p), 0.5 * x + 0.5);
    EXPECT_EQ(drop_probability(x, p), 1.0 - x);
    EXPECT_EQ(loss_weight(x, p), x);
  }
}

TEST(SlimMapsProperty, MonotoneForRandomRanges) {
  SplitMix64 rng(31);
  for (int t = 0; t < 500; ++t) {
    SlimPolicy p;
    auto range = [&](double lo_min, double hi_max) {
      double a = rng.uniform(lo_min, hi_max), b = rng.uniform(lo_min, hi_max);
      return Range{std::min(a, b), std::max(a, b)};
    };
    p.scale_range = range(0.01, 1.0);
    p.drop_range = range(0.0, 1.0);
    p.weight_range = range(0.0, 5.0);
    double a = rng.uniform(), b = rng.uniform();
    if (a > b) std::swap(a, b);
    ASSERT_LE(downsample_scale(a, p), downsample_scale(b, p));
    ASSERT_LE(loss_weight(a, p), loss_weight(b, p));
    ASSERT_GE(drop_probability(a, p), drop_probability(b, p));
  }
}

TEST(Decide, DisabledRulesAreNeutral) {
  SplitMix64 rng(1);
  const auto d = decide("x", 0.2, 48, 40, SlimPolicy::disabled(), rng);
  EXPECT_TRUE(d.keep);
  EXPECT_EQ(d.scale, 1.0);
  EXPECT_EQ(d.weight, 1.0);
  EXPECT_EQ(d.target_w, 48);
  EXPECT_EQ(d.target_h, 40);
}

TEST(Decide, CasdOffKeepsRegardlessOfDraws) {
  SlimPolicy p;
  p.casd = false;
  SplitMix64 rng(2);
  for (int i = 0; i < 1000; ++i) ASSERT_TRUE(decide("x", 0.0, 16, 16, p, rng).keep);
}

TEST(Decide, ZeroDropProbabilityAlwaysKeeps) {
  SplitMix64 rng(3);
  for (int i = 0; i < 1000; ++i) ASSERT_TRUE(decide("x", 1.0, 16, 16, SlimPolicy{}, rng).keep);
}

TEST(Decide, TargetDimsRoundedAndClamped) {
  SplitMix64 rng(4);
  const auto d = decide("x", 0.0, 45, 11, SlimPolicy{}, rng);
  EXPECT_EQ(d.target_w, 23);  // round(22.5)
  EXPECT_EQ(d.target_h, 8);   // round(5.5) = 6, clamped to 8
}

TEST(Decide, KeepFrequencyMatchesBernoulli) {
  SplitMix64 rng(5);
  int kept = 0;
  for (int i = 0; i < 10000; ++i) kept += decide("x", 0.7, 16, 16, SlimPolicy{}, rng).keep;
  EXPECT_NEAR(kept / 10000.0, 0.7, 0.01);
}

TEST(Decide, RandomDropUsesConfiguredRate) {
  SlimPolicy p = SlimPolicy::disabled();
  p.rd = true;
  SplitMix64 rng(6);
  int kept = 0;
  for (int i = 0; i < 10000; ++i) kept += decide("x", 0.9, 16, 16, p, rng).keep;
  EXPECT_NEAR(kept / 10000.0, 0.5, 0.015);
}

TEST(DecideProperty, SameSeedSameDecisions) {
  SplitMix64 a(77), b(77);
  SplitMix64 src(8);
  for (int i = 0; i < 500; ++i) {
    const double p = src.uniform();
    const auto x = decide("x", p, 32, 24, SlimPolicy{}, a), y = decide("x", p, 32, 24, SlimPolicy{}, b);
    ASSERT_EQ(x.keep, y.keep);
    ASSERT_EQ(x.scale, y.scale);
    ASSERT_EQ(x.weight, y.weight);
    ASSERT_EQ(x.target_w, y.target_w);
  }
  EXPECT_EQ(a.state(), b.state());
}

TEST(DecideProperty, OneDrawPerCallWhateverTheToggles) {
  SplitMix64 a(1), b(1);
  decide("x", 0.5, 8, 8, SlimPolicy{}, a);
  decide("x", 0.5, 8, 8, SlimPolicy::disabled(), b);
  EXPECT_EQ(a.state(), b.state());
}

TEST(Policy, RandomDropAndCasdExclusive) {
  SlimPolicy p;
  p.rd = true;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ResizeImage, IdentityIsBitExact) {
  SplitMix64 rng(9);
  const auto img = oracle::random_image(rng, 7, 5, 3);
  EXPECT_EQ(resize_image(img, 7, 5), img);
}

TEST(ResizeImage, ConstantStaysConstant) {
  RasterImage img(9, 6, 3, 0.37);
  for (auto [w, h] : {std::pair{4, 3}, std::pair{13, 11}, std::pair{1, 1}}) {
    const auto out = resize_image(img, w, h);
    for (double v : out.data) ASSERT_NEAR(v, 0.37, 1e-15);
  }
}

TEST(ResizeImage, CheckerboardMatchesBilinearOracle) {
  RasterImage img(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(x, y) = (x + y) % 2;
  const auto out = resize_image(img, 2, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      const double ref = oracle::bilinear_at(img, (x + 0.5) * 2.0 - 0.5, (y + 0.5) * 2.0 - 0.5, 0);
      EXPECT_NEAR(out.at(x, y), ref, 1e-15);
      EXPECT_NEAR(out.at(x, y), 0.5, 1e-15);
    }
}

TEST(ResizeImage, RandomMatchesBilinearOracle) {
  SplitMix64 rng(10);
  for (int t = 0; t < 20; ++t) {
    const int sw = 3 + static_cast<int>(rng.below(20)), sh = 3 + static_cast<int>(rng.below(20));
    const int tw = 1 + static_cast<int>(rng.below(30)), th = 1 + static_cast<int>(rng.below(30));
    const auto img = oracle::random_image(rng, sw, sh, 3);
    const auto out = resize_image(img, tw, th);
    for (int y = 0; y < th; ++y)
      for (int x = 0; x < tw; ++x)
        for (int c = 0; c < 3; ++c) {
          const double sx = (x + 0.5) * sw / tw - 0.5, sy = (y + 0.5) * sh / th - 0.5;
          ASSERT_NEAR(out.at(x, y, c), oracle::bilinear_at(img, sx, sy, c), 1e-12);
        }
  }
}

TEST(ResizeImage, ZeroTargetIsDomainError) {
  RasterImage img(4, 4, 1);
  EXPECT_THROW(resize_image(img, 0, 4), DomainError);
  EXPECT_THROW(resize_image(img, 4, 0), DomainError);
}

TEST(ResizeLabels, IdentityAndUniform) {
  LabelMap lm(5, 4, 2);
  lm.at(1, 1) = 3;
  EXPECT_EQ(resize_labels(lm, 5, 4), lm);
  const LabelMap u(6, 6, 1);
  for (auto v : resize_labels(u, 3, 5).labels) EXPECT_EQ(v, 1);
}

TEST(ResizeLabels, FourByFourToTwoByTwo) {
  LabelMap lm(4, 4);
  for (int i = 0; i < 16; ++i) lm.labels[i] = static_cast<std::uint8_t>(i);
  const auto out = resize_labels(lm, 2, 2);
  // Destination centers (i + 0.5) * 2 land on source pixels 1 and 3.
  EXPECT_EQ(out.at(0, 0), 5);
  EXPECT_EQ(out.at(1, 0), 7);
  EXPECT_EQ(out.at(0, 1), 13);
  EXPECT_EQ(out.at(1, 1), 15);
}

TEST(ResizeLabels, ZeroTargetIsDomainError) {
  LabelMap lm(4, 4);
  EXPECT_THROW(resize_labels(lm, 0, 1), DomainError);
}

TEST(WeightedLoss, Examples) {
  const std::vector<double> l{1.0, 3.0, 2.0};
  EXPECT_NEAR(weighted_loss(std::vector<double>{0.5, 0.5, 0.5}, l), 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(weighted_loss(std::vector<double>{0.3}, std::vector<double>{4.2}), 4.2);
  EXPECT_NEAR(weighted_loss(std::vector<double>{0.2, 0.8}, std::vector<double>{1.0, 3.0}), 2.6, 1e-15);
}

TEST(WeightedLoss, Errors) {
  EXPECT_THROW(weighted_loss(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 2.0}), DegenerateBatchError);
  EXPECT_THROW(weighted_loss(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), InvalidInputError);
  EXPECT_THROW(weighted_loss(std::vector<double>{}, std::vector<double>{}), InvalidInputError);
  EXPECT_THROW(weighted_loss(std::vector<double>{-1.0, 2.0}, std::vector<double>{1.0, 2.0}), InvalidInputError);
}

TEST(WeightedLossProperty, ScaleInvariantAndConvex) {
  SplitMix64 rng(12);
  for (int t = 0; t < 500; ++t) {
    const int n = 1 + static_cast<int>(rng.below(10));
    std::vector<double> w, l, w2;
    const double c = 0.001 + 100.0 * rng.uniform();
    for (int i = 0; i < n; ++i) {
      w.push_back(0.01 + rng.uniform());
      l.push_back(rng.uniform(0.0, 5.0));
      w2.push_back(c * w.back());
    }
    const double a = weighted_loss(w, l), b = weighted_loss(w2, l);
    ASSERT_NEAR(a, b, 1e-12 * std::abs(a));
    ASSERT_GE(a, *std::min_element(l.begin(), l.end()) - 1e-12);
    ASSERT_LE(a, *std::max_element(l.begin(), l.end()) + 1e-12);
  }
}

TEST(StratifiedUniform, StaysInUnitInterval) {
  SplitMix64 rng(21);
  for (int t = 0; t < 2000; ++t) {
    const double u = stratified_uniform(rng.uniform(), rng.below(100000));
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  EXPECT_DOUBLE_EQ(stratified_uniform(0.25, 0), 0.25);
}

TEST(StratifiedUniformProperty, KeepFrequencyTracksProbability) {
  SplitMix64 rng(22);
  for (int t = 0; t < 300; ++t) {
    const double p = rng.uniform(), off = rng.uniform();
    int kept = 0;
    for (std::uint64_t e = 0; e < 200; ++e)
      kept += decide("x", p, 16, 16, SlimPolicy{}, stratified_uniform(off, e)).keep;
    ASSERT_NEAR(kept / 200.0, 1.0 - drop_probability(p, SlimPolicy{}), 0.03) << "p=" << p << " offset=" << off;
  }
}
