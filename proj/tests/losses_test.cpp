// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "segforest/losses.hpp"

namespace sf = segforest;
using sf::BlockTarget;
using sf::RegionHistogram;
using sf::RegionMap;

namespace {

BlockTarget uniform_target(int w, int h, int classes, int label) {
  BlockTarget t;
  t.classes = classes;
  t.width = w;
  t.height = h;
  t.labels.assign(w * h, label);
  return t;
}

RegionMap<double> one_hot_map(int regions, const std::vector<int>& region_of) {
  RegionMap<double> m{regions, static_cast<int>(region_of.size()), {}};
  m.prob.assign(static_cast<std::size_t>(regions) * m.points, 0.0);
  for (int q = 0; q < m.points; ++q) m.prob[region_of[q] * m.points + q] = 1.0;
  return m;
}

RegionMap<double> uniform_map(int regions, int points) {
  return {regions, points, std::vector<double>(static_cast<std::size_t>(regions) * points,
                                               1.0 / regions)};
}

double purity_of(const RegionHistogram<double>& h) {
  return sf::loss_purity<double>(std::span<const RegionHistogram<double>>(&h, 1));
}

}  // namespace

TEST(LossesTest, WeightsValidation) {
  sf::LossWeights w;
  EXPECT_NO_THROW(w.validate(4));
  EXPECT_NEAR(w.mu[0] + w.mu[1] + w.mu[2] + w.mu[3], 1.0, 1e-12);
  EXPECT_EQ(w.s_min, 8.0);
  w.mu = {0.5, 0.5, 0.5, 0.0};
  EXPECT_THROW(w.validate(4), sf::ContractError);
  w = {};
  w.mu = {1.2, -0.2, 0.0, 0.0};
  EXPECT_THROW(w.validate(4), sf::ContractError);
  w = {};
  w.class_weights = {1.0, 0.0, 1.0};
  EXPECT_THROW(w.validate(3), sf::ContractError);
  w.class_weights = {1.0, 1.0};
  EXPECT_THROW(w.validate(3), sf::ContractError);
  w = {};
  w.s_min = -1.0;
  EXPECT_THROW(w.validate(3), sf::ContractError);
}

TEST(LossesTest, TargetFromMask) {
  sf::ClassMask m(4, 2);
  m.values = {0, 1, 2, 255, 1, 1, 2, 0};
  const BlockTarget t = BlockTarget::from_mask(m, 1, 0, 2, 2, 3, 2);
  EXPECT_EQ(t.labels, (std::vector<int>{1, -1, 1, -1}));
  EXPECT_EQ(t.valid_pixels(), 2);
  EXPECT_EQ(t.one_hot(0), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(t.one_hot(1), (std::vector<double>{0, 0, 0}));
  EXPECT_THROW(BlockTarget::from_mask(m, 3, 0, 2, 2, 3), sf::ContractError);
}

TEST(LossesTest, HistogramExamples) {
  const BlockTarget single = uniform_target(8, 8, 3, 0);
  auto h = sf::region_class_histogram<double>(one_hot_map(4, std::vector<int>(64, 2)), single);
  EXPECT_EQ(h.y[2 * 3 + 0], 64.0);
  EXPECT_EQ(h.s[2], 64.0);
  EXPECT_EQ(h.p[2 * 3 + 0], 1.0);
  EXPECT_EQ(h.empty_count(), 3);
  EXPECT_EQ(h.p[0], 1.0 / 3.0);  // empty region gets a uniform distribution

  h = sf::region_class_histogram<double>(uniform_map(4, 64), single);
  for (double s : h.s) EXPECT_DOUBLE_EQ(s, 16.0);

  BlockTarget split = uniform_target(2, 2, 2, 0);
  split.labels = {0, 1, 0, 1};
  h = sf::region_class_histogram<double>(one_hot_map(2, {0, 1, 0, 1}), split);
  EXPECT_EQ(h.p, (std::vector<double>{1, 0, 0, 1}));
  EXPECT_EQ(h.s, (std::vector<double>{2, 2}));
}

TEST(LossesTest, HistogramMassIdentity) {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> label(-1, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + trial % 5;
    RegionMap<double> m{k, 16, std::vector<double>(static_cast<std::size_t>(k) * 16)};
    for (int q = 0; q < 16; ++q) {
      double total = 0.0;
      for (int i = 0; i < k; ++i) total += (m.prob[i * 16 + q] = u(rng));
      for (int i = 0; i < k; ++i) m.prob[i * 16 + q] /= total;
    }
    BlockTarget t = uniform_target(4, 4, 4, 0);
    for (int& l : t.labels) l = label(rng);
    const auto h = sf::region_class_histogram<double>(m, t);
    double s = 0.0;
    for (double v : h.s) s += v;
    EXPECT_NEAR(s, t.valid_pixels(), 1e-6);
    for (double y : h.y) EXPECT_GE(y, 0.0);
    for (int i = 0; i < k; ++i) {
      if (h.empty[i]) continue;
      double p = 0.0;
      for (int c = 0; c < 4; ++c) p += h.p[i * 4 + c];
      EXPECT_NEAR(p, 1.0, 1e-12);
    }
  }
}

TEST(LossesTest, GiniExamples) {
  EXPECT_EQ(sf::gini<double>(std::vector<double>{0, 1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(sf::gini<double>(std::vector<double>{0.25, 0.25, 0.25, 0.25}), 0.75);
  EXPECT_DOUBLE_EQ(sf::gini<double>(std::vector<double>{0.5, 0.5, 0, 0}), 0.5);
}

TEST(LossesTest, ImpurityExtremaAgreeForGiniAndEntropy) {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int m = 2; m <= 6; ++m) {
    std::vector<double> one_hot(m, 0.0), uniform(m, 1.0 / m);
    one_hot[m - 1] = 1.0;
    for (auto kind : {sf::Impurity::kGini, sf::Impurity::kEntropy}) {
      const double lo = sf::impurity<double>(one_hot, kind);
      const double hi = sf::impurity<double>(uniform, kind);
      EXPECT_NEAR(lo, 0.0, 1e-10);
      for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p(m);
        double total = 0.0;
        for (double& x : p) total += (x = u(rng));
        for (double& x : p) x /= total;
        const double v = sf::impurity<double>(p, kind);
        EXPECT_GT(v, lo);
        EXPECT_LE(v, hi + 1e-12);
      }
    }
    EXPECT_NEAR(sf::gini<double>(uniform), 1.0 - 1.0 / m, 1e-12);
    EXPECT_NEAR(sf::entropy<double>(uniform), std::log(m), 1e-12);
  }
}

TEST(LossesTest, PurityExamples) {
  const BlockTarget single = uniform_target(2, 2, 2, 1);
  EXPECT_EQ(purity_of(sf::region_class_histogram<double>(one_hot_map(2, {0, 0, 1, 1}), single)),
            0.0);

  BlockTarget mixed = uniform_target(2, 2, 2, 0);
  mixed.labels = {0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(purity_of(sf::region_class_histogram<double>(one_hot_map(2, {0, 0, 1, 1}), mixed)),
                   0.5);
  // Region 0 pure, region 1 half/half.
  mixed.labels = {0, 0, 0, 1};
  EXPECT_DOUBLE_EQ(purity_of(sf::region_class_histogram<double>(one_hot_map(2, {0, 0, 1, 1}), mixed)),
                   0.25);
}

TEST(LossesTest, MinRegionSizeExamples) {
  RegionHistogram<double> h;
  h.regions = 4;
  h.s = {16, 16, 16, 16};
  auto ls = [&](double s_min) {
    return sf::loss_min_region_size<double>(std::span<const RegionHistogram<double>>(&h, 1), s_min);
  };
  EXPECT_EQ(ls(8.0), 0.0);
  h.s = {0, 0, 0, 64};
  EXPECT_EQ(ls(8.0), 6.0);
  EXPECT_EQ(ls(0.0), 0.0);
}

TEST(LossesTest, SharpnessExamples) {
  auto lr = [](const RegionMap<double>& m) {
    return sf::loss_sharpness<double>(std::span<const RegionMap<double>>(&m, 1));
  };
  EXPECT_EQ(lr(one_hot_map(4, {0, 1, 2, 3})), 0.0);
  EXPECT_DOUBLE_EQ(lr(uniform_map(4, 4)), 0.75);
  RegionMap<double> half = one_hot_map(4, {0, 1, 2, 3});
  for (int i = 0; i < 4; ++i) {
    half.prob[i * 4 + 2] = 0.25;
    half.prob[i * 4 + 3] = 0.25;
  }
  EXPECT_DOUBLE_EQ(lr(half), 0.375);
}

TEST(LossesTest, CrossEntropyExamples) {
  const BlockTarget t = uniform_target(2, 1, 4, 2);
  sf::Logits<double> strong{4, 2, {0, 0, 20, 0, 0, 0, 25, 0}};
  EXPECT_LT(sf::loss_cross_entropy<double>(strong, t).value, 1e-8);
  sf::Logits<double> flat{4, 2, std::vector<double>(8, 0.3)};
  EXPECT_NEAR(sf::loss_cross_entropy<double>(flat, t).value, std::log(4.0), 1e-12);

  // Two pixels; ignoring the second leaves only the first pixel's term.
  BlockTarget two = uniform_target(2, 1, 2, 0);
  sf::Logits<double> h{2, 2, {1.0, 0.0, 0.0, 2.0}};
  const double a = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  const double b = -std::log(1.0 / (1.0 + std::exp(2.0)));
  EXPECT_NEAR(sf::loss_cross_entropy<double>(h, two).value, (a + b) / 2.0, 1e-12);
  two.labels[1] = -1;
  EXPECT_NEAR(sf::loss_cross_entropy<double>(h, two).value, a, 1e-12);
  two.labels[0] = -1;
  const auto none = sf::loss_cross_entropy<double>(h, two);
  EXPECT_TRUE(none.all_ignored);
  EXPECT_EQ(none.value, 0.0);
}

TEST(LossesTest, CrossEntropyClassWeights) {
  BlockTarget t = uniform_target(2, 1, 2, 0);
  t.labels = {0, 1};
  sf::Logits<double> h{2, 2, {1.0, 0.0, 1.0, 0.0}};
  const double a = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  const double b = -std::log(1.0 / (std::exp(1.0) + 1.0));
  const std::vector<double> w{1.0, 3.0};
  EXPECT_NEAR(sf::loss_cross_entropy<double>(h, t, w).value, (a + 3.0 * b) / 4.0, 1e-12);
}

TEST(LossesTest, SplitTargetForSubset) {
  BlockTarget t = uniform_target(3, 1, 4, 0);
  t.labels = {2, 0, -1};
  const std::vector<int> subset{1, 2};
  const BlockTarget s = sf::split_target_for_subset(t, subset);
  EXPECT_EQ(s.classes, 3);
  EXPECT_EQ(s.labels, (std::vector<int>{1, 2, -1}));
  const std::vector<int> all{0, 1, 2, 3};
  EXPECT_EQ(sf::split_target_for_subset(t, all).classes, 4);
}

namespace {

struct Fixture {
  sf::ForestSpec spec;
  sf::ParamLayout layout;
  std::vector<sf::Point> points;
};

Fixture fixture(sf::ForestSpec spec, int size) {
  Fixture f{std::move(spec), {}, sf::Raster{size, size}.points()};
  f.layout = sf::param_layout(f.spec);
  return f;
}

}  // namespace

TEST(LossesTest, TotalReducesToCrossEntropy) {
  std::mt19937_64 rng(53);
  std::normal_distribution<double> n(0.0, 1.0);
  const Fixture f = fixture(sf::ForestSpec::single(3, sf::TreeShape::bsp(sf::SdfKind::kLine, 2)), 4);
  BlockTarget t = uniform_target(4, 4, 3, 0);
  for (int q = 0; q < 16; ++q) t.labels[q] = q % 3;
  std::vector<double> flat(f.layout.total());
  for (double& v : flat) v = n(rng);
  const auto r = sf::render_block<double>(f.spec, f.layout, flat, f.points, {});
  const auto rep = sf::loss_total<double>(f.spec, r, t, sf::LossWeights::cross_entropy_only());
  EXPECT_EQ(rep.total, sf::loss_cross_entropy<double>(r.logits, t).value);
}

TEST(LossesTest, IdealConfigurationVanishes) {
  // Two sharp halves of 32 pixels, both strongly predicting class 1.
  const Fixture f = fixture(sf::ForestSpec::single(2, sf::TreeShape::bsp(sf::SdfKind::kLine, 1)), 8);
  const BlockTarget t = uniform_target(8, 8, 2, 1);
  const std::vector<double> flat{200.0, 0.0, 0.0, -50.0, 50.0, -50.0, 50.0};
  const auto r = sf::render_block<double>(f.spec, f.layout, flat, f.points, {});
  const auto rep = sf::loss_total<double>(f.spec, r, t, {});
  EXPECT_LT(rep.total, 1e-6);
}

TEST(LossesTest, SubsetWeightedPurity) {
  const Fixture f = fixture(sf::ForestSpec::per_class(2, sf::TreeShape::bsp(sf::SdfKind::kLine, 1)), 2);
  BlockTarget t = uniform_target(2, 2, 2, 0);
  t.labels = {0, 1, 1, 1};
  const std::vector<double> flat{0.3, 0.1, 0.05, 0.2, -0.1, 0.7, 0.4, 0.0, -0.2, 0.9};
  ASSERT_EQ(static_cast<int>(flat.size()), f.layout.total());
  const auto r = sf::render_block<double>(f.spec, f.layout, flat, f.points, {});
  const auto rep = sf::loss_total<double>(f.spec, r, t, {});
  double expected = 0.0;
  for (int j = 0; j < 2; ++j) {
    const BlockTarget sub = sf::split_target_for_subset(t, f.spec.subsets[j].classes);
    expected += purity_of(sf::region_class_histogram<double>(r.region_maps[j], sub));
  }
  EXPECT_DOUBLE_EQ(f.spec.subset_weight(0), 0.5);
  EXPECT_NEAR(rep.purity, expected / 2.0, 1e-15);
}

TEST(LossesTest, ComponentRanges) {
  std::mt19937_64 rng(54);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> label(-1, 3);
  const Fixture f = fixture(sf::ForestSpec::single(4, sf::TreeShape::bsp(sf::SdfKind::kCircle, 2)), 4);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> flat(f.layout.total());
    for (double& v : flat) v = n(rng);
    BlockTarget t = uniform_target(4, 4, 4, 0);
    for (int& l : t.labels) l = label(rng);
    const auto r = sf::render_block<double>(f.spec, f.layout, flat, f.points, {});
    const auto rep = sf::loss_total<double>(f.spec, r, t, {});
    EXPECT_GE(rep.purity, 0.0);
    EXPECT_LE(rep.purity, 0.75 + 1e-12);
    EXPECT_GE(rep.sharpness, 0.0);
    EXPECT_LE(rep.sharpness, 0.75 + 1e-12);
    EXPECT_GE(rep.min_size, 0.0);
    EXPECT_LE(rep.min_size, 8.0);
  }
}

TEST(LossesTest, TotalRejectsBadMu) {
  const Fixture f = fixture(sf::ForestSpec::single(2, sf::TreeShape::bsp(sf::SdfKind::kLine, 1)), 2);
  const std::vector<double> flat(f.layout.total(), 0.1);
  const auto r = sf::render_block<double>(f.spec, f.layout, flat, f.points, {});
  sf::LossWeights w;
  w.mu = {0.5, 0.1, 0.1, 0.1};
  EXPECT_THROW(sf::loss_total<double>(f.spec, r, uniform_target(2, 2, 2, 0), w), sf::ContractError);
}

TEST(LossesTest, TotalGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> n(0.0, 0.7);
  std::uniform_real_distribution<double> cw(0.5, 2.0);
  std::uniform_int_distribution<int> label(0, 2);
  const std::vector<sf::ForestSpec> specs = {
      sf::ForestSpec::single(3, sf::TreeShape::bsp(sf::SdfKind::kLine, 2)),
      sf::ForestSpec::per_class(3, sf::TreeShape::bsp(sf::SdfKind::kCircle, 1)),
      sf::ForestSpec::single(3, sf::TreeShape::from_codes("Q BL L L L L L")),
  };
  for (const sf::ForestSpec& spec : specs) {
    const Fixture f = fixture(spec, 4);
    int checked = 0;
    double worst = 0.0;
    while (checked < 50) {
      std::vector<double> flat(f.layout.total());
      for (double& v : flat) v = n(rng);
      BlockTarget t = uniform_target(4, 4, 3, 0);
      for (int& l : t.labels) l = label(rng);
      t.labels[0] = -1;
      sf::LossWeights w;
      w.s_min = 3.0;
      w.class_weights = {cw(rng), cw(rng), cw(rng)};
      auto fn = [&](sf::Tape&, std::span<const sf::DiffValue> x) {
        const auto r = sf::render_block<sf::DiffValue>(f.spec, f.layout, x, f.points, {});
        return sf::loss_total<sf::DiffValue>(f.spec, r, t, w).total;
      };
      sf::Tape probe;
      std::vector<sf::DiffValue> vars;
      for (double v : flat) vars.push_back(probe.variable(v));
      (void)fn(probe, vars);
      if (probe.min_kink_distance() < 1e-4) continue;
      const auto res = sf::grad_check(fn, flat, 1e-5);
      ASSERT_EQ(res.failures, 0);
      worst = std::max(worst, res.max_rel_error);
      ++checked;
    }
    EXPECT_LT(worst, 1e-4);
  }
}

TEST(LossesTest, InverseFrequencyWeights) {
  sf::ClassMask m(4, 1);
  m.values = {0, 0, 0, 1};
  const auto w = sf::inverse_frequency_weights(m, 3);
  EXPECT_DOUBLE_EQ((w[0] + w[1]) / 2.0, 1.0);
  EXPECT_DOUBLE_EQ(w[1] / w[0], 3.0);
  EXPECT_EQ(w[2], 1.0);
}
