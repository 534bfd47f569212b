#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "dance/distribution.hpp"
#include "dance/manifest.hpp"
#include "oracles.hpp"

using namespace dance;

TEST(FitMaxwell, ConstantSamples) {
  const std::vector<double> x(10, 1.5);
  EXPECT_NEAR(fit_maxwell(x).scale_a, 1.5 / std::sqrt(3.0), 1e-15);
}

TEST(FitMaxwell, OneTwoThree) {
  const std::vector<double> x{1, 2, 3};
  EXPECT_NEAR(fit_maxwell(x).scale_a, std::sqrt(14.0 / 9.0), 1e-15);
  EXPECT_EQ(fit_maxwell(x).n_samples, 3u);
}

TEST(FitMaxwell, RecoversScaleFromSeededDraws) {
  SplitMix64 rng(99);
  std::vector<double> x;
  for (int i = 0; i < 10000; ++i) x.push_back(oracle::maxwell_draw(rng, 2.0));
  EXPECT_NEAR(fit_maxwell(x).scale_a, 2.0, 0.02 * 2.0);
}

TEST(FitMaxwell, Errors) {
  EXPECT_THROW(fit_maxwell(std::vector<double>{}), FitError);
  EXPECT_THROW(fit_maxwell(std::vector<double>{1.0}), FitError);
  EXPECT_THROW(fit_maxwell(std::vector<double>{1.0, 0.0}), FitError);
  EXPECT_THROW(fit_maxwell(std::vector<double>{1.0, -2.0}), FitError);
}

TEST(FitMaxwell, KsStatInUnitInterval) {
  SplitMix64 rng(3);
  std::vector<double> x;
  for (int i = 0; i < 50; ++i) x.push_back(0.1 + rng.uniform());
  const auto f = fit_maxwell(x);
  EXPECT_GE(f.ks_stat, 0.0);
  EXPECT_LE(f.ks_stat, 1.0);
}

TEST(FitMaxwellProperty, ScaleEquivariant) {
  SplitMix64 rng(8);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> x, y;
    const double c = 0.1 + 10.0 * rng.uniform();
    for (int i = 0; i < 20; ++i) {
      x.push_back(0.01 + rng.uniform());
      y.push_back(c * x.back());
    }
    const double a = fit_maxwell(x).scale_a;
    ASSERT_NEAR(fit_maxwell(y).scale_a, c * a, 1e-12 * c * a);
  }
}

TEST(MaxwellCdf, Bounds) {
  for (double a : {0.1, 1.0, 7.5}) {
    EXPECT_EQ(maxwell_cdf(0.0, a), 0.0);
    EXPECT_GE(maxwell_cdf(10.0 * a, a), 1.0 - 1e-9);
  }
}

TEST(MaxwellCdf, AtScale) {
  // Simpson integration of the pdf over [0, a].
  const double a = 1.7;
  const double ref = oracle::simpson([&](double x) {
    return std::sqrt(2.0 / std::numbers::pi) * x * x * std::exp(-x * x / (2 * a * a)) / (a * a * a);
  }, 0.0, a, 2000);
  EXPECT_NEAR(ref, 0.19875, 1e-5);
  EXPECT_NEAR(maxwell_cdf(a, a), ref, 1e-9);
}

TEST(MaxwellCdf, MatchesIntegratedPdfOnGrid) {
  const double a = 2.0;
  auto pdf = [&](double x) {
    return std::sqrt(2.0 / std::numbers::pi) * x * x * std::exp(-x * x / (2 * a * a)) / (a * a * a);
  };
  for (int i = 1; i <= 100; ++i) {
    const double x = 8.0 * a * i / 100.0;
    ASSERT_NEAR(maxwell_cdf(x, a), oracle::simpson(pdf, 0.0, x, 4000), 1e-6) << x;
  }
}

TEST(MaxwellCdf, DomainErrors) {
  EXPECT_THROW(maxwell_cdf(-0.1, 1.0), DomainError);
  EXPECT_THROW(maxwell_cdf(1.0, 0.0), DomainError);
  EXPECT_THROW(maxwell_cdf(1.0, -1.0), DomainError);
  EXPECT_THROW(maxwell_pdf(1.0, 0.0), DomainError);
}

TEST(MaxwellCdfProperty, StrictlyIncreasing) {
  const double a = 0.8;
  double prev = maxwell_cdf(0.0, a);
  for (int i = 1; i <= 1000; ++i) {
    const double v = maxwell_cdf(i * 0.004, a);
    ASSERT_GT(v, prev);
    prev = v;
  }
}

TEST(ComplexityToP, ZeroMapsToZero) {
  MaxwellFit f;
  f.scale_a = 0.3;
  EXPECT_EQ(complexity_to_p(0.0, f), 0.0);
}

TEST(ComplexityToP, MedianMapsToHalf) {
  MaxwellFit f;
  f.scale_a = 1.3;
  double lo = 0.0, hi = 20.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (maxwell_cdf(mid, f.scale_a) < 0.5 ? lo : hi) = mid;
  }
  EXPECT_NEAR(complexity_to_p(0.5 * (lo + hi), f), 0.5, 1e-6);
}

TEST(ComplexityToP, UnfittedIndexIsStateError) {
  ComplexityIndex idx;
  EXPECT_THROW(complexity_to_p(SpatialComplexity{0.2, 9}, idx), StateError);
}

TEST(ComplexityToPProperty, Monotone) {
  MaxwellFit f;
  f.scale_a = 0.4;
  SplitMix64 rng(12);
  for (int t = 0; t < 1000; ++t) {
    double a = rng.uniform(0.0, 3.0), b = rng.uniform(0.0, 3.0);
    if (a > b) std::swap(a, b);
    ASSERT_LE(complexity_to_p(a, f), complexity_to_p(b, f));
  }
}

TEST(PitProperty, ThousandSamplesNearUniform) {
  SplitMix64 rng(1000);
  std::vector<double> x;
  for (int i = 0; i < 1000; ++i) x.push_back(oracle::maxwell_draw(rng, 0.7));
  const auto fit = fit_maxwell(x);
  std::vector<double> p;
  for (double v : x) p.push_back(complexity_to_p(v, fit));
  EXPECT_LT(oracle::ks_uniform(p), 0.05);
}

TEST(BuildIndex, FitsOnTrainOnly) {
  std::vector<ScoredImage> s{{"a", "train", 1.0}, {"b", "train", 2.0}, {"c", "test", 100.0}};
  const auto idx = build_index(s);
  EXPECT_NEAR(idx.fit().scale_a, std::sqrt(5.0 / 6.0), 1e-15);
  EXPECT_EQ(idx.fit().n_samples, 2u);
  EXPECT_NEAR(idx.p("c"), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(idx.p("a"), maxwell_cdf(1.0, idx.fit().scale_a));
}

TEST(BuildIndex, Errors) {
  EXPECT_THROW(build_index(std::vector<ScoredImage>{}), InvalidInputError);
  EXPECT_THROW(build_index(std::vector<ScoredImage>{{"a", "train", 0.4}}), FitError);
  EXPECT_THROW(build_index(std::vector<ScoredImage>{{"a", "train", 0.0}, {"b", "train", 0.0}}), FitError);
  EXPECT_THROW(build_index(std::vector<ScoredImage>{{"a", "test", 0.3}, {"b", "test", 0.4}}), InvalidInputError);
  EXPECT_THROW(build_index(std::vector<ScoredImage>{{"a", "train", 0.3}, {"a", "train", 0.4}}), InvalidInputError);
}

TEST(BuildIndex, ConstantImagesGetZeroP) {
  std::vector<ScoredImage> s{{"a", "train", 0.0}, {"b", "train", 0.2}, {"c", "train", 0.3}};
  const auto idx = build_index(s);
  EXPECT_EQ(idx.p("a"), 0.0);
  EXPECT_EQ(idx.fit().n_samples, 2u);
}

TEST(BuildIndexProperty, PInUnitIntervalAndMonotoneInSc) {
  SplitMix64 rng(77);
  std::vector<ScoredImage> s;
  for (int i = 0; i < 300; ++i)
    s.push_back({"img" + std::to_string(i), i % 4 == 3 ? "test" : "train", rng.uniform(0.0, 2.0)});
  const auto idx = build_index(s);
  auto e = idx.entries();
  std::sort(e.begin(), e.end(), [](auto& a, auto& b) { return a.sc_mean < b.sc_mean; });
  for (std::size_t i = 0; i < e.size(); ++i) {
    ASSERT_GE(e[i].p, 0.0);
    ASSERT_LE(e[i].p, 1.0);
    if (i) ASSERT_LE(e[i - 1].p, e[i].p);
  }
}

TEST(Manifest, RoundTripIsBitStable) {
  const auto dir = std::filesystem::temp_directory_path() / "dance_manifest_test";
  std::filesystem::create_directories(dir);
  SplitMix64 rng(5);
  std::vector<ScoredImage> s;
  Manifest m;
  for (int i = 0; i < 20; ++i) {
    const std::string id = "img" + std::to_string(i);
    s.push_back({id, i % 4 == 0 ? "test" : "train", rng.uniform(0.0, 1.0) / 3.0});
    m.records.push_back({id, "images/" + id + ".png", "labels/" + id + ".png", s.back().split, {}, {}});
  }
  const auto idx = build_index(s);
  attach_index(m, idx);
  write_manifest(dir / "m.jsonl", m);
  const Manifest back = read_manifest(dir / "m.jsonl");
  ASSERT_TRUE(back.fit.has_value());
  EXPECT_EQ(back.fit->scale_a, idx.fit().scale_a);
  EXPECT_EQ(back.fit->ks_stat, idx.fit().ks_stat);
  ASSERT_EQ(back.records.size(), m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    EXPECT_EQ(back.records[i].id, m.records[i].id);
    EXPECT_EQ(back.records[i].split, m.records[i].split);
    EXPECT_EQ(*back.records[i].sc_mean, *m.records[i].sc_mean);
    EXPECT_EQ(*back.records[i].p, *m.records[i].p);
  }
  const auto idx2 = to_index(back);
  EXPECT_EQ(idx2.p("img3"), idx.p("img3"));
  std::filesystem::remove_all(dir);
}

TEST(Manifest, DuplicateIdsRejected) {
  Manifest m;
  m.records.push_back({"x", "a.png", "", "train", {}, {}});
  m.records.push_back({"x", "b.png", "", "train", {}, {}});
  EXPECT_THROW(check_unique_ids(m), InvalidInputError);
}

TEST(Manifest, MissingFileIsIoError) { EXPECT_THROW(read_manifest("/nonexistent/dir/m.jsonl"), IoError); }
