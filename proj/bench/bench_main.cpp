// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference versus OpenMP kernels: per-block fitting and forest
// rendering.

#include <benchmark/benchmark.h>

#include "segforest/data.hpp"
#include "segforest/experiments.hpp"
#include "segforest/fitter.hpp"
#include "segforest/renderer.hpp"

namespace sf = segforest;

namespace {

const sf::ClassMask& scene() {
  static const sf::ClassMask mask = [] {
    sf::PolygonSceneConfig cfg;
    cfg.size = 64;
    cfg.radius_min = 10;
    cfg.radius_max = 25;
    return sf::gen_polygon_scene(cfg, 3);
  }();
  return mask;
}

sf::ForestSpec spec() {
  return sf::ForestSpec::single(6, sf::TreeShape::bsp(sf::SdfKind::kLine, 2), 8);
}

sf::FitConfig fit_config() {
  sf::FitConfig c;
  c.steps = 60;
  c.restarts = 1;
  return c;
}

void BM_FitImageSerial(benchmark::State& state) {
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::fit_image_serial(scene(), spec(), {}, fit_config()));
  }
}
BENCHMARK(BM_FitImageSerial)->Unit(benchmark::kMillisecond);

void BM_FitImageParallel(benchmark::State& state) {
  const int threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::fit_image(scene(), spec(), {}, fit_config(), threads));
  }
}
BENCHMARK(BM_FitImageParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

const sf::ForestModel& model() {
  static const sf::ForestModel m = sf::fit_image_serial(scene(), spec(), {}, fit_config()).model;
  return m;
}

void BM_RenderSerial(benchmark::State& state) {
  const sf::Raster raster{32, 32};
  const sf::ForestModel& m = model();
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::render_forest_serial(m, raster, {}));
  }
}
BENCHMARK(BM_RenderSerial)->Unit(benchmark::kMillisecond);

void BM_RenderParallel(benchmark::State& state) {
  const sf::Raster raster{32, 32};
  const int threads = static_cast<int>(state.range(0));
  const sf::ForestModel& m = model();
  for (auto _ : state) {
    benchmark::DoNotOptimize(sf::render_forest(m, raster, {}, threads));
  }
}
BENCHMARK(BM_RenderParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
