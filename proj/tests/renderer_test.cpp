// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "segforest/renderer.hpp"

namespace sf = segforest;
using sf::Point;
using sf::RenderMode;
using sf::RendererConfig;
using sf::SdfKind;
using sf::TreeShape;

namespace {

std::vector<double> random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

sf::RegionMap<double> render(const TreeShape& shape, const std::vector<double>& params,
                             const sf::Raster& raster, const RendererConfig& config = {}) {
  return sf::render_region_map<double>(shape, std::span<const double>(params), raster, config);
}

std::vector<TreeShape> bsp_shapes() {
  std::vector<TreeShape> out;
  for (SdfKind k : sf::kAllSdfKinds) {
    out.push_back(TreeShape::bsp(k, 1));
    out.push_back(TreeShape::bsp(k, 2));
  }
  out.push_back(TreeShape::kd(3));
  return out;
}

}  // namespace

TEST(RendererTest, RasterPoints) {
  const auto pts = sf::Raster{2, 1}.points();
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].p1, -0.5);
  EXPECT_EQ(pts[1].p1, 0.5);
  EXPECT_EQ(pts[0].p2, 0.0);
  EXPECT_THROW(sf::Raster({0, 3}).points(), sf::ContractError);
}

TEST(RendererTest, ConfigValidation) {
  RendererConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = 0.0;
  EXPECT_THROW(c.validate(), sf::ContractError);
  c = {};
  c.lambda2 = -1.0;
  EXPECT_THROW(c.validate(), sf::ContractError);
}

TEST(RendererTest, SingleLeafIsCertain) {
  const auto map = render(TreeShape(), {}, sf::Raster{3, 2});
  for (double v : map.prob) EXPECT_EQ(v, 1.0);
}

TEST(RendererTest, DepthOneLineExample) {
  const auto map = render(TreeShape::bsp(SdfKind::kLine, 1), {1.0, 0.0, 0.0}, sf::Raster{2, 1});
  const double lo = 1.0 / (1.0 + std::exp(0.5));
  EXPECT_NEAR(map.at(0, 0), lo, 1e-15);
  EXPECT_NEAR(map.at(1, 0), 1.0 - lo, 1e-15);
  EXPECT_NEAR(map.at(0, 1), 1.0 - lo, 1e-15);
  EXPECT_NEAR(map.at(1, 1), lo, 1e-15);
  EXPECT_NEAR(map.at(0, 0), 0.378, 5e-4);
}

TEST(RendererTest, QuadQuadrantsOnTwoByTwo) {
  const TreeShape q = TreeShape::quad(1);
  const std::vector<double> params{0.0, 0.0};
  const auto pts = sf::Raster{2, 2}.points();
  const auto map = render(q, params, sf::Raster{2, 2});
  for (int n = 0; n < 4; ++n) {
    std::vector<std::optional<double>> acc;
    sf::accumulate_regions<double>(q, params, pts[n], {}, acc);
    int positive = 0;
    for (const auto& a : acc) positive += *a > 0.0;
    EXPECT_EQ(positive, 1);
    int best = 0;
    for (int i = 1; i < 4; ++i) {
      if (map.at(i, n) > map.at(best, n)) best = i;
    }
    EXPECT_EQ(best, sf::hard_leaf(q, params, pts[n]));
  }
}

TEST(RendererTest, SoftmaxNormalizationAllShapesBothModes) {
  std::mt19937_64 rng(31);
  std::vector<TreeShape> shapes = bsp_shapes();
  shapes.push_back(TreeShape::quad(2));
  shapes.push_back(TreeShape::from_codes("Q BL L L BC L L L L"));
  const sf::Raster raster{5, 4};
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const TreeShape& shape = shapes[trial % shapes.size()];
    for (RenderMode mode : {RenderMode::kRefined, RenderMode::kLegacy}) {
      if (mode == RenderMode::kLegacy && shape.has_quad()) continue;
      RendererConfig cfg;
      cfg.mode = mode;
      cfg.lambda = 0.5 + trial % 4;
      const auto map = render(shape, random_vector(shape.inner_parameter_count(), rng, 2.0),
                              raster, cfg);
      for (int n = 0; n < map.points; ++n) {
        double total = 0.0;
        for (int i = 0; i < map.regions; ++i) {
          EXPECT_GE(map.at(i, n), 0.0);
          EXPECT_LE(map.at(i, n), 1.0);
          total += map.at(i, n);
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(RendererTest, LegacyQuadRejected) {
  RendererConfig cfg;
  cfg.mode = RenderMode::kLegacy;
  EXPECT_THROW(render(TreeShape::quad(1), {0.0, 0.0}, sf::Raster{2, 2}, cfg), sf::ContractError);
}

TEST(RendererTest, RefinedDepthOneExclusivity) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const SdfKind kind = sf::kAllSdfKinds[trial % sf::kAllSdfKinds.size()];
    const TreeShape shape = TreeShape::bsp(kind, 1);
    const auto params = random_vector(shape.inner_parameter_count(), rng);
    std::vector<std::optional<double>> acc;
    sf::accumulate_regions<double>(shape, params, {u(rng), u(rng)}, {}, acc);
    ASSERT_EQ(acc.size(), 2u);
    EXPECT_FALSE(*acc[0] > 0.0 && *acc[1] > 0.0);
  }
}

// Brute force over small rasters against the sign pattern of (t1, t2).
TEST(RendererTest, QuadExclusivity) {
  std::mt19937_64 rng(33);
  const TreeShape q = TreeShape::quad(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto params = random_vector(2, rng);
    const sf::Raster raster{1 + trial % 5, 1 + (trial / 5) % 5};
    for (const Point& p : raster.points()) {
      const double t1 = params[0] - p.p1, t2 = params[1] - p.p2;
      if (t1 == 0.0 || t2 == 0.0) continue;
      std::vector<std::optional<double>> acc;
      sf::accumulate_regions<double>(q, params, p, {}, acc);
      int positive = 0, which = -1;
      for (int i = 0; i < 4; ++i) {
        if (*acc[i] > 0.0) {
          ++positive;
          which = i;
        }
      }
      EXPECT_EQ(positive, 1);
      const int expected = (t1 < 0 && t2 > 0) ? 0 : (t1 > 0 && t2 > 0) ? 1 : (t1 < 0) ? 2 : 3;
      EXPECT_EQ(which, expected);
      EXPECT_EQ(which, sf::hard_leaf(q, params, p));
    }
  }
}

TEST(RendererTest, KdEqualsAxisAlignedBspExactly) {
  std::mt19937_64 rng(34);
  const TreeShape kd = TreeShape::kd(2);
  const TreeShape lines = TreeShape::bsp(SdfKind::kLine, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto t = random_vector(3, rng);
    // X root, Y children; a k-d node t − p_i equals a line node with n = −e_i, d = −t.
    const std::vector<double> as_lines{-1.0, 0.0, -t[0], 0.0, -1.0, -t[1], 0.0, -1.0, -t[2]};
    const sf::Raster raster{1 + trial % 8, 1 + (trial / 8) % 8};
    for (RenderMode mode : {RenderMode::kRefined, RenderMode::kLegacy}) {
      RendererConfig cfg;
      cfg.mode = mode;
      const auto a = render(kd, t, raster, cfg);
      const auto b = render(lines, as_lines, raster, cfg);
      ASSERT_EQ(a.prob, b.prob);
    }
  }
}

TEST(RendererTest, ConfidenceGrowsWithLambda) {
  std::mt19937_64 rng(35);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const SdfKind kind = sf::kAllSdfKinds[trial % sf::kAllSdfKinds.size()];
    const TreeShape shape = TreeShape::bsp(kind, 1);
    const auto params = random_vector(shape.inner_parameter_count(), rng);
    const Point p{u(rng), u(rng)};
    if (std::abs(sf::eval_sdf<double>(kind, params, p)) < 1e-6) continue;
    double prev = 0.0;
    for (double lambda : {0.25, 0.5, 1.0, 2.0, 4.0}) {
      RendererConfig cfg;
      cfg.lambda = lambda;
      const auto map = sf::render_region_map<double>(shape, params, std::vector<Point>{p}, cfg);
      const double top = std::max(map.at(0, 0), map.at(1, 0));
      EXPECT_GT(top, prev);
      prev = top;
    }
  }
}

TEST(RendererTest, LegacyFactorsInOpenInterval) {
  std::mt19937_64 rng(36);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RendererConfig cfg;
  cfg.mode = RenderMode::kLegacy;
  const TreeShape shape = TreeShape::bsp(SdfKind::kCircle, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto params = random_vector(3, rng, 3.0);
    std::vector<std::optional<double>> acc;
    sf::accumulate_regions<double>(shape, params, {u(rng), u(rng)}, cfg, acc);
    for (const auto& a : acc) {
      EXPECT_GT(*a, 0.0);
      EXPECT_LT(*a, 1.0);
    }
    EXPECT_NEAR(*acc[0] + *acc[1], 1.0, 1e-15);
  }
}

TEST(RendererTest, GradientsOfWeightedRegionMap) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto points = sf::Raster{3, 3}.points();
  for (RenderMode mode : {RenderMode::kRefined, RenderMode::kLegacy}) {
    RendererConfig cfg;
    cfg.mode = mode;
    for (SdfKind kind : sf::kAllSdfKinds) {
      const TreeShape shape = TreeShape::bsp(kind, 2);
      int checked = 0, attempts = 0;
      double worst = 0.0;
      while (checked < 200 && attempts < 20000) {
        ++attempts;
        const auto params = random_vector(shape.inner_parameter_count(), rng);
        const auto weights = random_vector(shape.leaf_count() * 9, rng);
        auto fn = [&](sf::Tape&, std::span<const sf::DiffValue> x) {
          const auto map = sf::render_region_map<sf::DiffValue>(shape, x, points, cfg);
          sf::DiffValue s = 0.0;
          for (std::size_t i = 0; i < map.prob.size(); ++i) s = s + map.prob[i] * weights[i];
          return s;
        };
        sf::Tape probe;
        std::vector<sf::DiffValue> vars;
        for (double v : params) vars.push_back(probe.variable(v));
        (void)fn(probe, vars);
        if (probe.min_kink_distance() < 1e-4) continue;
        const auto r = sf::grad_check(fn, params, 1e-5);
        ASSERT_EQ(r.failures, 0);
        worst = std::max(worst, r.max_rel_error);
        ++checked;
      }
      EXPECT_EQ(checked, 200) << sf::sdf_name(kind);
      EXPECT_LT(worst, 1e-4) << sf::sdf_name(kind);
    }
  }
}

TEST(RendererTest, LogitsExamples) {
  // One-hot region map selects that leaf's logits exactly.
  sf::RegionMap<double> onehot{2, 1, {0.0, 1.0}};
  const std::vector<double> v{1.0, 2.0, 3.0, -4.5, 0.25, 7.0};
  auto h = sf::render_logits<double>(onehot, v, 3);
  EXPECT_EQ(h.values, (std::vector<double>{-4.5, 0.25, 7.0}));

  // Uniform map with equal leaves returns the common vector.
  sf::RegionMap<double> uniform{4, 1, {0.25, 0.25, 0.25, 0.25}};
  const std::vector<double> same{0.5, -1.0, 0.5, -1.0, 0.5, -1.0, 0.5, -1.0};
  h = sf::render_logits<double>(uniform, same, 2);
  EXPECT_DOUBLE_EQ(h.values[0], 0.5);
  EXPECT_DOUBLE_EQ(h.values[1], -1.0);

  EXPECT_THROW(sf::render_logits<double>(uniform, v, 3), sf::ContractError);
}

// Two leaves can still produce three classes along an α sweep.
TEST(RendererTest, TwoRegionsThreeClasses) {
  const double v1 = 3.0, v2 = 2.0, v3 = 3.0;
  const std::vector<double> leaves{v1, v2, 0.0, 0.0, v2, v3};
  std::set<int> seen;
  for (double alpha = 0.0; alpha <= 1.0; alpha += 0.01) {
    sf::RegionMap<double> map{2, 1, {alpha, 1.0 - alpha}};
    const auto h = sf::render_logits<double>(map, leaves, 3);
    EXPECT_NEAR(h.values[0], alpha * v1, 1e-12);
    EXPECT_NEAR(h.values[1], v2, 1e-12);
    EXPECT_NEAR(h.values[2], (1.0 - alpha) * v3, 1e-12);
    seen.insert(sf::argmax_lowest(h.values));
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(RendererTest, ArgmaxTiesGoLow) {
  EXPECT_EQ(sf::argmax_lowest(std::vector<double>{1.0, 3.0, 3.0}), 1);
  EXPECT_EQ(sf::argmax_lowest(std::vector<double>{2.0}), 0);
}

namespace {

sf::ForestModel random_model(const sf::ForestSpec& spec, int gw, int gh, std::mt19937_64& rng) {
  sf::ForestModel m;
  m.spec = spec;
  m.grid_width = gw;
  m.grid_height = gh;
  const sf::ParamLayout layout = sf::param_layout(spec);
  for (int b = 0; b < gw * gh; ++b) {
    m.blocks.push_back(sf::BlockParams::unflatten(layout, random_vector(layout.total(), rng, 2.0)));
  }
  return m;
}

}  // namespace

TEST(RendererTest, ForestMatchesComposition) {
  std::mt19937_64 rng(38);
  const sf::ForestSpec spec = sf::ForestSpec::single(3, TreeShape::bsp(SdfKind::kLine, 2));
  const sf::ForestModel m = random_model(spec, 1, 1, rng);
  const sf::Raster raster{8, 8};
  const auto r = sf::render_forest_serial(m, raster, {});
  const auto& sp = m.blocks[0].subsets[0];
  const auto map = render(spec.subsets[0].shape, sp.inner, raster);
  const auto h = sf::render_logits<double>(map, sp.leaf_logits, 3);
  EXPECT_EQ(r.logits, h.values);
  for (int n = 0; n < 64; ++n) {
    EXPECT_EQ(r.mask.values[n],
              sf::argmax_lowest(std::span<const double>(h.values).subspan(n * 3, 3)));
  }
}

TEST(RendererTest, SubsetLogitsConcatenate) {
  sf::ForestModel m;
  m.spec = sf::ForestSpec::per_class(2, TreeShape::bsp(SdfKind::kLine, 1));
  m.grid_width = m.grid_height = 1;
  m.blocks.push_back({{{{0.3, 0.2, 0.1}, {5.0, 5.0}}, {{-0.4, 0.9, 0.0}, {1.0, 1.0}}}});
  const auto r = sf::render_forest(m, {8, 8}, {});
  for (auto v : r.mask.values) EXPECT_EQ(v, 0);
  EXPECT_EQ(r.logits[0], 5.0);
  EXPECT_EQ(r.logits[1], 1.0);
}

TEST(RendererTest, ArgmaxInvariantUnderCommonShift) {
  std::mt19937_64 rng(39);
  for (int trial = 0; trial < 50; ++trial) {
    const sf::ForestSpec spec =
        trial % 2 ? sf::ForestSpec::single(4, TreeShape::quad(1))
                  : sf::ForestSpec::per_class(4, TreeShape::bsp(SdfKind::kCircle, 1));
    sf::ForestModel m = random_model(spec, 2, 2, rng);
    const auto before = sf::render_forest_serial(m, {8, 8}, {});
    for (auto& b : m.blocks) {
      for (auto& s : b.subsets) {
        for (double& v : s.leaf_logits) v += 3.5;
      }
    }
    const auto after = sf::render_forest_serial(m, {8, 8}, {});
    EXPECT_EQ(before.mask, after.mask);
  }
}

TEST(RendererTest, ResolutionIndependentPointwise) {
  std::mt19937_64 rng(40);
  const sf::ForestSpec spec = sf::ForestSpec::single(3, TreeShape::bsp(SdfKind::kEllipse, 2));
  const sf::ForestModel m = random_model(spec, 2, 1, rng);
  // Odd scale factors share pixel centers: pixel x at scale 1 is pixel 3x+1 at scale 3.
  const auto coarse = sf::render_forest_serial(m, {8, 8}, {});
  const auto fine = sf::render_forest_serial(m, {24, 24}, {});
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 16; ++x) {
      const int bx = x / 8, lx = x % 8;
      const int fx = bx * 24 + 3 * lx + 1, fy = 3 * y + 1;
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(coarse.logits[(y * 16 + x) * 3 + c], fine.logits[(fy * 48 + fx) * 3 + c]);
      }
    }
  }
  // A 16×16 raster equals direct evaluation at its own points.
  const auto& sp = m.blocks[0].subsets[0];
  const auto pts = sf::Raster{16, 16}.points();
  const auto map = sf::render_region_map<double>(spec.subsets[0].shape, sp.inner, pts, {});
  const auto h = sf::render_logits<double>(map, sp.leaf_logits, 3);
  const auto r16 = sf::render_forest_serial(m, {16, 16}, {});
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(r16.logits[(y * 32 + x) * 3 + c], h.values[(y * 16 + x) * 3 + c]);
      }
    }
  }
}

TEST(RendererTest, ParallelMatchesSerial) {
  std::mt19937_64 rng(41);
  const sf::ForestSpec spec = sf::ForestSpec::single(5, TreeShape::from_codes("Q BL L L BC L L L L"));
  const sf::ForestModel m = random_model(spec, 5, 3, rng);
  const auto serial = sf::render_forest_serial(m, {8, 8}, {});
  for (int threads : {1, 2, 4}) {
    const auto par = sf::render_forest(m, {8, 8}, {}, threads);
    EXPECT_EQ(par.mask, serial.mask);
    EXPECT_EQ(par.logits, serial.logits);
  }
}

TEST(RendererTest, RegionVisualizationColors) {
  // Hard region map: pure palette colors.
  sf::RegionMap<double> onehot{4, 4, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1}};
  const auto palette = sf::default_region_palette();
  const sf::RgbImage img = sf::region_visualization(onehot, {2, 2}, palette);
  EXPECT_EQ(img.rgb, (std::vector<std::uint8_t>{255, 0, 0, 0, 255, 0, 0, 0, 255, 0, 255, 255}));

  // Small λ blurs a boundary into blended colors.
  RendererConfig cfg;
  cfg.lambda = 0.05;
  const auto soft = render(TreeShape::bsp(SdfKind::kLine, 1), {1.0, 0.0, 0.0}, {2, 1}, cfg);
  const sf::RgbImage blended = sf::region_visualization(soft, {2, 1}, palette);
  EXPECT_GT(blended.rgb[0], 100);
  EXPECT_GT(blended.rgb[1], 100);
  EXPECT_THROW(sf::region_visualization(onehot, {2, 2}, std::span(palette).first(2)),
               sf::ContractError);
}

TEST(RendererTest, HardLeafFollowsSigns) {
  const TreeShape t = TreeShape::bsp(SdfKind::kLine, 1);
  EXPECT_EQ(sf::hard_leaf(t, std::vector<double>{1.0, 0.0, 0.0}, {0.5, 0.0}), 0);
  EXPECT_EQ(sf::hard_leaf(t, std::vector<double>{1.0, 0.0, 0.0}, {-0.5, 0.0}), 1);
}
