// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// The encoder: fits BlockParams to each block of a class mask by Adam with a
// cosine-annealed step size, keeping the best of several random restarts.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "segforest/data.hpp"
#include "segforest/forest.hpp"
#include "segforest/losses.hpp"
#include "segforest/renderer.hpp"

namespace segforest {

struct FitConfig {
  int steps = 300;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int restarts = 4;
  bool early_stop = true;  // stop the whole fit at 100% block accuracy
  std::uint64_t seed = 0;
  RendererConfig renderer;
  bool record_history = false;

  void validate() const;
};

struct LossValues {
  double total = 0, ce = 0, purity = 0, min_size = 0, sharpness = 0;
};

struct FitStats {
  LossValues losses;        // at the returned parameters
  double accuracy = 0.0;    // block pixel accuracy at the returned parameters
  int steps_used = 0;       // optimizer evaluations over all restarts
  int restart = 0;          // restart that produced the returned parameters
  int steps_to_perfect = -1;  // cumulative evaluation index of the first 100% state
  int aborted_restarts = 0;   // restarts dropped for a non-finite loss
  bool skipped = false;       // block had no labelled pixel
  std::vector<LossValues> history;  // chosen restart, per evaluation
};

struct BlockFit {
  BlockParams params;
  FitStats stats;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);
/// Seed of the RNG used for `restart` of block (bx, by).
std::uint64_t block_seed(std::uint64_t seed, int bx, int by, int restart);

/// Random parameters whose boundaries mostly cross the block.
BlockParams init_params(const ForestSpec& spec, std::mt19937_64& rng);

/// Fits one block. Deterministic in (config.seed, bx, by).
BlockFit fit_block(const BlockTarget& target, const ForestSpec& spec,
                   const LossWeights& weights, const FitConfig& config, int bx = 0,
                   int by = 0);

struct ImageFit {
  ForestModel model;
  std::vector<FitStats> blocks;  // row-major
  double accuracy = 0.0;         // rendered back at native resolution
  double miou = 0.0;
};

/// Fits every block of `mask` (dimensions must be multiples of the block
/// size) in parallel. Empty class weights are replaced by inverse-frequency
/// weights of `mask`. `threads` <= 0 uses the OpenMP default.
ImageFit fit_image(const ClassMask& mask, const ForestSpec& spec, const LossWeights& weights,
                   const FitConfig& config, int threads = 0);
/// Serial reference implementation of fit_image.
ImageFit fit_image_serial(const ClassMask& mask, const ForestSpec& spec,
                          const LossWeights& weights, const FitConfig& config);

/// Per-block report: bx, by, accuracy, loss components, steps.
std::string fit_report_csv(const ImageFit& fit);
/// Loss history of one block: step, L_total, L_CE, L_Y, L_s, L_R.
std::string loss_history_csv(const FitStats& stats);

}  // namespace segforest
