// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation: confusion matrices, accuracy, IoU, and region purity of fitted
// forests against ground truth.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "segforest/data.hpp"
#include "segforest/forest.hpp"
#include "segforest/losses.hpp"
#include "segforest/renderer.hpp"

namespace segforest {

/// Rows are ground truth, columns prediction.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<long> counts;

  long at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * classes + pred]; }
  long total() const;
};

/// Pixels with gt == 255 or gt == ignore_class are skipped. `classes` <= 0
/// sizes the matrix from the largest value present.
ConfusionMatrix confusion(const ClassMask& pred, const ClassMask& gt,
                          std::optional<int> ignore_class = std::nullopt, int classes = 0);

/// trace / total; throws DomainError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);

struct IouReport {
  std::vector<std::optional<double>> per_class;  // nullopt: excluded
  double miou = 0.0;
};

/// IoU per class. Classes absent from both gt and pred, and the ignore class,
/// are excluded from the mean. Throws DomainError when nothing is left.
IouReport iou(const ConfusionMatrix& cm, std::optional<int> ignore_class = std::nullopt);
double miou(const ConfusionMatrix& cm, std::optional<int> ignore_class = std::nullopt);

/// class,iou rows followed by accuracy and miou rows.
std::string metrics_csv(const ConfusionMatrix& cm, std::optional<int> ignore_class = std::nullopt);

struct PurityRow {
  int bx = 0, by = 0, subset = 0, region = 0;
  double mass = 0.0;  // s_B^i
  double impurity = 0.0;
  bool empty = false;
};

struct PurityReport {
  std::vector<PurityRow> rows;
  /// Subset-weighted mean impurity (equals L_Y summed the way loss_total does).
  double mean = 0.0;
};

/// Region impurity of every block of `model` against `gt` at native
/// resolution. Uses the same histogram code as the losses.
PurityReport purity_report(const ForestModel& model, const ClassMask& gt,
                           const RendererConfig& config = {},
                           std::optional<int> ignore_class = std::nullopt,
                           Impurity kind = Impurity::kGini);

/// Mean per-pixel region-distribution Gini (L_R) of a model at native
/// resolution, averaged over blocks with subset weights.
double mean_sharpness(const ForestModel& model, const RendererConfig& config = {});

std::string purity_csv(const PurityReport& report);

/// h evaluated with per-region Gini impurity in place of leaf logits, gray
/// level 255·H; subsets are combined with weights |C_j|/|C|.
RgbImage purity_visualization(const ForestModel& model, const ClassMask& gt,
                              const Raster& raster, const RendererConfig& config = {});

}  // namespace segforest
