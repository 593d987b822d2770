// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training objective for one block: weighted cross-entropy plus the three
// region-map losses (purity, minimum region size, sharpness). Each region-map
// loss is a sum over class subsets weighted by |C_j| / |C|.
//
// Like the renderer, everything is templated over the scalar type.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "segforest/data.hpp"
#include "segforest/errors.hpp"
#include "segforest/forest.hpp"
#include "segforest/grad.hpp"
#include "segforest/renderer.hpp"

namespace segforest {

enum class Impurity : std::uint8_t { kGini, kEntropy };

/// Regions whose pixel mass falls below this count as empty.
inline constexpr double kEmptyRegionMass = 1e-8;

struct LossWeights {
  std::array<double, 4> mu = {0.947, 0.034, 0.0095, 0.0095};  // CE, purity, size, sharpness
  double s_min = 8.0;
  std::vector<double> class_weights;  // empty: all ones
  std::optional<int> ignore_index;    // class excluded in addition to 255
  Impurity impurity = Impurity::kGini;

  static LossWeights cross_entropy_only() {
    LossWeights w;
    w.mu = {1.0, 0.0, 0.0, 0.0};
    return w;
  }
  void validate(int classes) const;
};

/// Labels of one block; −1 marks ignored pixels (all-zero target vector).
struct BlockTarget {
  int classes = 0;
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // row-major

  /// Cuts the w × h window at (x0, y0) from `mask`. Pixels equal to 255 or to
  /// `ignore` become −1.
  static BlockTarget from_mask(const ClassMask& mask, int x0, int y0, int w, int h,
                               int classes, std::optional<int> ignore = std::nullopt);

  int pixels() const { return width * height; }
  int valid_pixels() const;
  /// Y_yx as a dense vector (zeros for an ignored pixel).
  std::vector<double> one_hot(int pixel) const;
};

/// Re-labels `target` for the tree of subset `subset`: classes in the subset
/// keep their position within it and all other classes map to one extra
/// "other" slot. The slot is only present when the subset does not cover
/// every class.
BlockTarget split_target_for_subset(const BlockTarget& target, std::span<const int> subset);

// ---------------------------------------------------------------------------

template <class T>
struct RegionHistogram {
  int regions = 0;
  int classes = 0;
  std::vector<T> y;  // Y_B^i, region-major (regions × classes)
  std::vector<T> s;  // s_B^i
  std::vector<T> p;  // P_B^i, uniform for empty regions
  std::vector<bool> empty;

  int empty_count() const {
    return static_cast<int>(std::count(empty.begin(), empty.end(), true));
  }
};

template <class T>
RegionHistogram<T> region_class_histogram(const RegionMap<T>& map, const BlockTarget& target) {
  require(map.points == target.pixels(), "region histogram: map and target sizes differ");
  RegionHistogram<T> h;
  h.regions = map.regions;
  h.classes = target.classes;
  const int m = target.classes;
  std::vector<std::optional<T>> acc(static_cast<std::size_t>(map.regions) * m);
  for (int i = 0; i < map.regions; ++i) {
    for (int q = 0; q < map.points; ++q) {
      const int c = target.labels[q];
      if (c < 0) continue;
      auto& slot = acc[i * m + c];
      slot = slot ? *slot + map.at(i, q) : map.at(i, q);
    }
  }
  h.y.reserve(acc.size());
  for (auto& v : acc) h.y.push_back(v ? *v : T(0.0));
  for (int i = 0; i < map.regions; ++i) {
    T s = h.y[i * m];
    for (int c = 1; c < m; ++c) s = s + h.y[i * m + c];
    const bool empty = value_of(s) < kEmptyRegionMass;
    h.s.push_back(s);
    h.empty.push_back(empty);
    for (int c = 0; c < m; ++c) {
      h.p.push_back(empty ? T(1.0 / m) : h.y[i * m + c] / s);
    }
  }
  return h;
}

template <class T>
T gini(std::span<const T> p) {
  T sum = square(p[0]);
  for (std::size_t c = 1; c < p.size(); ++c) sum = sum + square(p[c]);
  return 1.0 - sum;
}

/// Natural-log entropy with the log floored at 1e-12.
template <class T>
T entropy(std::span<const T> p) {
  T sum = p[0] * log_guarded(p[0]);
  for (std::size_t c = 1; c < p.size(); ++c) sum = sum + p[c] * log_guarded(p[c]);
  return -sum;
}

template <class T>
T impurity(std::span<const T> p, Impurity kind) {
  return kind == Impurity::kGini ? gini<T>(p) : entropy<T>(p);
}

/// L_Y: mean impurity over every region of every histogram.
template <class T>
T loss_purity(std::span<const RegionHistogram<T>> histograms, Impurity kind = Impurity::kGini) {
  std::optional<T> sum;
  int n = 0;
  for (const auto& h : histograms) {
    for (int i = 0; i < h.regions; ++i) {
      const T v = impurity<T>(std::span<const T>(h.p).subspan(i * h.classes, h.classes), kind);
      sum = sum ? *sum + v : v;
      ++n;
    }
  }
  require(n > 0, "loss_purity: no regions");
  return *sum / static_cast<double>(n);
}

/// L_s: mean of max(s_min − s_B^i, 0).
template <class T>
T loss_min_region_size(std::span<const RegionHistogram<T>> histograms, double s_min) {
  std::optional<T> sum;
  int n = 0;
  for (const auto& h : histograms) {
    for (const T& s : h.s) {
      const T v = relu(s_min - s);
      sum = sum ? *sum + v : v;
      ++n;
    }
  }
  require(n > 0, "loss_min_region_size: no regions");
  return *sum / static_cast<double>(n);
}

/// L_R: mean Gini of the per-point region distributions over all maps.
template <class T>
T loss_sharpness(std::span<const RegionMap<T>> maps) {
  std::optional<T> sum;
  int n = 0;
  std::vector<T> column;
  for (const auto& map : maps) {
    column.resize(map.regions);
    for (int q = 0; q < map.points; ++q) {
      for (int i = 0; i < map.regions; ++i) column[i] = map.at(i, q);
      const T v = gini<T>(column);
      sum = sum ? *sum + v : v;
      ++n;
    }
  }
  require(n > 0, "loss_sharpness: no points");
  return *sum / static_cast<double>(n);
}

template <class T>
struct CrossEntropy {
  T value{0.0};
  bool all_ignored = false;
};

/// Class-weighted mean of −log softmax(h)[c] over non-ignored points,
/// normalized by the sum of the weights involved. `class_weights` may be empty
/// (unit weights).
template <class T>
CrossEntropy<T> loss_cross_entropy(const Logits<T>& logits, const BlockTarget& target,
                                   std::span<const double> class_weights = {}) {
  require(logits.points == target.pixels() && logits.classes == target.classes,
          "cross entropy: logits and target disagree");
  require(class_weights.empty() ||
              static_cast<int>(class_weights.size()) == logits.classes,
          "cross entropy: class weight count mismatch");
  CrossEntropy<T> out;
  std::optional<T> sum;
  double weight_total = 0.0;
  for (int q = 0; q < logits.points; ++q) {
    const int c = target.labels[q];
    if (c < 0) continue;
    // Only the true class's probability is needed.
    double shift = value_of(logits.at(q, 0));
    for (int k = 1; k < logits.classes; ++k) shift = max2(shift, value_of(logits.at(q, k)));
    T total = exp(logits.at(q, 0) - shift);
    for (int k = 1; k < logits.classes; ++k) total = total + exp(logits.at(q, k) - shift);
    const T p = exp(logits.at(q, c) - shift) / total;
    const double w = class_weights.empty() ? 1.0 : class_weights[c];
    const T term = w == 1.0 ? -log_guarded(p) : -log_guarded(p) * w;
    sum = sum ? *sum + term : term;
    weight_total += w;
  }
  if (!sum || weight_total <= 0.0) {
    out.all_ignored = true;
    return out;
  }
  out.value = *sum / weight_total;
  return out;
}

template <class T>
struct LossReport {
  T total{0.0};
  T ce{0.0};
  T purity{0.0};
  T min_size{0.0};
  T sharpness{0.0};
  bool ce_all_ignored = false;
  int empty_regions = 0;
};

/// μ1·L_CE + μ2·L_Y + μ3·L_s + μ4·L_R for one rendered block. Components whose
/// μ is zero are still reported but do not enter the total.
template <class T>
LossReport<T> loss_total(const ForestSpec& spec, const BlockRender<T>& render,
                         const BlockTarget& target, const LossWeights& weights) {
  require(render.region_maps.size() == spec.subsets.size(),
          "loss_total: one region map per subset required");
  const auto& mu = weights.mu;
  require(std::abs(mu[0] + mu[1] + mu[2] + mu[3] - 1.0) <= 1e-9,
          "loss weights must sum to 1");
  LossReport<T> r;
  const CrossEntropy<T> ce = loss_cross_entropy<T>(render.logits, target, weights.class_weights);
  r.ce = ce.value;
  r.ce_all_ignored = ce.all_ignored;

  std::optional<T> purity, size, sharp;
  for (std::size_t j = 0; j < spec.subsets.size(); ++j) {
    const double w = spec.subset_weight(static_cast<int>(j));
    const BlockTarget sub =
        spec.subsets.size() == 1 ? target : split_target_for_subset(target, spec.subsets[j].classes);
    const RegionHistogram<T> hist = region_class_histogram<T>(render.region_maps[j], sub);
    r.empty_regions += hist.empty_count();
    const std::span<const RegionHistogram<T>> hs(&hist, 1);
    auto add = [w](std::optional<T>& acc, const T& v) {
      const T x = w == 1.0 ? v : v * w;
      acc = acc ? *acc + x : x;
    };
    add(purity, loss_purity<T>(hs, weights.impurity));
    add(size, loss_min_region_size<T>(hs, weights.s_min));
    add(sharp, loss_sharpness<T>(std::span<const RegionMap<T>>(&render.region_maps[j], 1)));
  }
  r.purity = *purity;
  r.min_size = *size;
  r.sharpness = *sharp;

  std::optional<T> total;
  const std::array<const T*, 4> parts = {&r.ce, &r.purity, &r.min_size, &r.sharpness};
  for (int k = 0; k < 4; ++k) {
    if (mu[k] == 0.0) continue;
    const T x = mu[k] == 1.0 ? *parts[k] : *parts[k] * mu[k];
    total = total ? *total + x : x;
  }
  r.total = *total;
  return r;
}

/// w_c ∝ 1 / freq_c over classes present in `mask` (ignored pixels skipped),
/// normalized to mean 1 over those classes. Absent classes get weight 1.
std::vector<double> inverse_frequency_weights(const ClassMask& mask, int classes,
                                              std::optional<int> ignore = std::nullopt);

}  // namespace segforest
