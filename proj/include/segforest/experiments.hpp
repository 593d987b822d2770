// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reusable experiment drivers shared by the command-line tool and the
// acceptance suite: the gradient-check table, the two toy experiments, the
// synthetic encoding suite and the loss-effect comparison.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segforest/data.hpp"
#include "segforest/fitter.hpp"
#include "segforest/forest.hpp"
#include "segforest/losses.hpp"

namespace segforest {

// ---------------------------------------------------------------------------
// Gradient checks.

struct GradCheckOptions {
  int trials = 1000;
  double step = 1e-5;
  double kink_radius = 1e-4;  // trials with a kink argument closer than this are excluded
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
};

struct GradCheckRow {
  std::string name;
  int trials = 0;
  int excluded = 0;  // kink rejections
  int failures = 0;  // non-finite evaluations
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Every SdfKind under both renderer modes, quadtree updates, each loss
/// component and the total, plus the forced-kink probe row.
std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& options);
std::string gradcheck_table(const std::vector<GradCheckRow>& rows);

// ---------------------------------------------------------------------------
// Toy experiments.

struct ToyExpOptions {
  int runs = 10;
  std::uint64_t seed = 1;
  int threads = 0;
  FitConfig fit;  // fit.seed is overridden per run
  bool inverse_class_weights = false;  // default: uniform class weights
};

struct ToyRun {
  std::string structure;
  int run = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double miou = 0.0;
  bool perfect = false;
  int steps_to_perfect = -1;  // slowest block; −1 unless every block became perfect
  long steps_used = 0;
  std::string model_bytes;    // serialized fit, for determinism checks
};

struct ToySummary {
  std::string structure;
  double mean_accuracy = 0.0;
  double mean_miou = 0.0;
  double std_miou = 0.0;
  double perfect_fraction = 0.0;
  double mean_steps_to_perfect = 0.0;  // over perfect runs
};

struct ToyExpResult {
  std::vector<ToyRun> runs;
  std::vector<ToySummary> summaries;
};

/// Depth-2 line-BSP versus depth-2 k-d tree on 128×128 partition toys, 8×8
/// blocks.
ToyExpResult toyexp_partition_trees(const ToyExpOptions& options);
/// Depth-1 line versus depth-1 circle trees on 128×128 circle toys, 32×32
/// blocks.
ToyExpResult toyexp_circles_sdf(const ToyExpOptions& options);
std::string toyexp_csv(const ToyExpResult& result);

// ---------------------------------------------------------------------------
// Encoding suite.

/// Ten 2×2 partition-toy composites and ten random convex polygon scenes,
/// 256×256, at most six classes.
std::vector<ClassMask> polygon_suite(std::uint64_t seed, int count = 20);

// ---------------------------------------------------------------------------
// Loss-effect comparison.

struct LossEffectResult {
  std::string label;
  double mean_gini = 0.0;       // purity_report mean
  double mean_sharpness = 0.0;  // L_R
  double accuracy = 0.0;
};

/// Gathers the first `blocks` 8×8 blocks holding at least two classes from
/// polygon scenes into one strip mask.
ClassMask multi_class_strip(int blocks, std::uint64_t seed, int block_size = 8);

/// Fits `strip` with the given loss weights (early stop disabled) and reports
/// region purity and sharpness of the result.
LossEffectResult loss_effect(const ClassMask& strip, int classes, const LossWeights& weights,
                             const std::string& label, FitConfig fit, int threads = 0);

}  // namespace segforest
