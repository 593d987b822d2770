// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable region-map rendering of partitioning trees.
//
// Every inner node is evaluated at every sample point. In refined mode the
// region map starts at 0 and each BSP node adds ReLU(λ f(p)) to the leaves of
// its first child and ReLU(−λ f(p)) to the leaves of its second child; a quad
// node adds λ·t4·t5, λ·t3·t5, λ·t4·t6, λ·t3·t6 to its four children. Legacy mode
// starts at 1 and multiplies by λ2·σ(λ1 f) and λ2·(1 − σ(λ1 f)). A softmax over
// the region dimension follows in both modes.
//
// The kernels are templates over the scalar type: `double` for plain
// evaluation and `DiffValue` for taped evaluation. Both produce bit-identical
// forward values.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "segforest/data.hpp"
#include "segforest/forest.hpp"
#include "segforest/grad.hpp"
#include "segforest/sdf.hpp"

namespace segforest {

enum class RenderMode : std::uint8_t { kRefined, kLegacy };

struct RendererConfig {
  RenderMode mode = RenderMode::kRefined;
  double lambda = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;

  void validate() const;
};

/// Sample grid over one block: pixel centers of a width × height raster in
/// block-normalized coordinates.
struct Raster {
  int width = 8;
  int height = 8;

  std::vector<Point> points() const;
};

/// Per-point probability over the k leaf regions, region-major:
/// prob[i * points + n].
template <class T>
struct RegionMap {
  int regions = 0;
  int points = 0;
  std::vector<T> prob;

  const T& at(int region, int point) const { return prob[region * points + point]; }
};

/// Per-point class logits, point-major: values[n * classes + c].
template <class T>
struct Logits {
  int classes = 0;
  int points = 0;
  std::vector<T> values;

  const T& at(int point, int c) const { return values[point * classes + c]; }
};

namespace detail {

template <class T>
void accumulate(std::vector<std::optional<T>>& acc, int lo, int hi, const T& x) {
  for (int i = lo; i < hi; ++i) {
    if (acc[i]) *acc[i] = *acc[i] + x;
    else acc[i] = x;
  }
}

template <class T>
void scale(std::vector<std::optional<T>>& acc, int lo, int hi, const T& x) {
  for (int i = lo; i < hi; ++i) {
    if (acc[i]) *acc[i] = *acc[i] * x;
    else acc[i] = x;
  }
}

/// Softmax with max-subtraction. The shift is a plain constant; softmax is
/// invariant to it, so the gradient is exact.
template <class T>
void softmax_into(std::span<const T> x, std::span<T> out) {
  double shift = value_of(x[0]);
  for (const T& v : x) shift = max2(shift, value_of(v));
  T total = exp(x[0] - shift);
  out[0] = total;
  for (std::size_t i = 1; i < x.size(); ++i) {
    out[i] = exp(x[i] - shift);
    total = total + out[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = out[i] / total;
}

}  // namespace detail

/// Pre-softmax accumulation at one point into `acc` (resized to k). Entries
/// never touched by any node stay empty (only a single-leaf tree has those).
template <class T>
void accumulate_regions(const TreeShape& shape, std::span<const T> params, Point p,
                        const RendererConfig& config,
                        std::vector<std::optional<T>>& acc) {
  acc.assign(shape.leaf_count(), std::nullopt);
  const auto& nodes = shape.nodes();
  for (int idx : shape.inner_nodes()) {
    const TreeNode& node = nodes[idx];
    const auto node_params =
        params.subspan(node.param_offset, node_parameter_count(node));
    if (node.type == NodeType::kBsp) {
      const T f = eval_sdf<T>(node.sdf, node_params, p);
      const TreeNode& left = nodes[node.children[0]];
      const TreeNode& right = nodes[node.children[1]];
      if (config.mode == RenderMode::kRefined) {
        const T g = config.lambda == 1.0 ? f : f * config.lambda;
        detail::accumulate(acc, left.leaf_begin, left.leaf_end, relu(g));
        detail::accumulate(acc, right.leaf_begin, right.leaf_end, relu(-g));
      } else {
        const T g = sigmoid(f * config.lambda1);
        detail::scale(acc, left.leaf_begin, left.leaf_end, g * config.lambda2);
        detail::scale(acc, right.leaf_begin, right.leaf_end,
                      (1.0 - g) * config.lambda2);
      }
    } else {
      if (config.mode != RenderMode::kRefined) {
        throw ContractError("quadtree nodes require the refined renderer");
      }
      const T t1 = node_params[0] - p.p1;
      const T t2 = node_params[1] - p.p2;
      const T t3 = relu(t1);
      const T t4 = relu(-t1);
      const T t5 = relu(t2);
      const T t6 = relu(-t2);
      const std::array<T, 4> updates = {t4 * t5, t3 * t5, t4 * t6, t3 * t6};
      for (int slot = 0; slot < 4; ++slot) {
        const TreeNode& child = nodes[node.children[slot]];
        const T u = config.lambda == 1.0 ? updates[slot] : updates[slot] * config.lambda;
        detail::accumulate(acc, child.leaf_begin, child.leaf_end, u);
      }
    }
  }
}

template <class T>
RegionMap<T> render_region_map(const TreeShape& shape, std::span<const T> params,
                               std::span<const Point> points,
                               const RendererConfig& config) {
  require(static_cast<int>(params.size()) == shape.inner_parameter_count(),
          "render_region_map: parameter count does not match tree layout");
  const int k = shape.leaf_count();
  const int n = static_cast<int>(points.size());
  RegionMap<T> map{k, n, std::vector<T>(static_cast<std::size_t>(k) * n)};
  const double empty = config.mode == RenderMode::kRefined ? 0.0 : 1.0;
  std::vector<T> pre(k), post(k);
  std::vector<std::optional<T>> acc;
  for (int q = 0; q < n; ++q) {
    accumulate_regions<T>(shape, params, points[q], config, acc);
    for (int i = 0; i < k; ++i) pre[i] = acc[i] ? *acc[i] : T(empty);
    detail::softmax_into<T>(pre, post);
    for (int i = 0; i < k; ++i) map.prob[i * n + q] = post[i];
  }
  return map;
}

template <class T>
RegionMap<T> render_region_map(const TreeShape& shape, std::span<const T> params,
                               const Raster& raster, const RendererConfig& config) {
  const auto pts = raster.points();
  return render_region_map<T>(shape, params, pts, config);
}

/// h(p) = Σ_i R_i(p) · v_i, with v stored leaf-major (k × classes).
template <class T>
Logits<T> render_logits(const RegionMap<T>& map, std::span<const T> leaf_logits,
                        int classes) {
  require(classes >= 1 &&
              static_cast<long>(leaf_logits.size()) ==
                  static_cast<long>(map.regions) * classes,
          "render_logits: leaf logits do not match region count");
  Logits<T> out{classes, map.points, {}};
  out.values.reserve(static_cast<std::size_t>(map.points) * classes);
  for (int q = 0; q < map.points; ++q) {
    for (int c = 0; c < classes; ++c) {
      T h = map.at(0, q) * leaf_logits[c];
      for (int i = 1; i < map.regions; ++i) {
        h = h + map.at(i, q) * leaf_logits[i * classes + c];
      }
      out.values.push_back(h);
    }
  }
  return out;
}

/// Region maps of every subset plus the concatenated logits over all classes.
template <class T>
struct BlockRender {
  std::vector<RegionMap<T>> region_maps;
  Logits<T> logits;
};

/// Renders one block from a flat parameter vector in ParamLayout order.
template <class T>
BlockRender<T> render_block(const ForestSpec& spec, const ParamLayout& layout,
                            std::span<const T> flat, std::span<const Point> points,
                            const RendererConfig& config) {
  require(static_cast<int>(flat.size()) == layout.total(),
          "render_block: parameter vector does not match layout");
  BlockRender<T> out;
  const int n = static_cast<int>(points.size());
  out.logits.classes = spec.class_count;
  out.logits.points = n;
  out.logits.values.assign(static_cast<std::size_t>(n) * spec.class_count, T(0.0));
  for (std::size_t j = 0; j < spec.subsets.size(); ++j) {
    const SubsetLayout& sl = layout.subsets[j];
    const auto& classes = spec.subsets[j].classes;
    out.region_maps.push_back(render_region_map<T>(
        spec.subsets[j].shape, flat.subspan(sl.inner_offset, sl.inner_count), points,
        config));
    const Logits<T> sub = render_logits<T>(
        out.region_maps.back(), flat.subspan(sl.logit_offset, sl.logit_count),
        sl.classes);
    for (int q = 0; q < n; ++q) {
      for (int c = 0; c < sl.classes; ++c) {
        out.logits.values[q * spec.class_count + classes[c]] = sub.at(q, c);
      }
    }
  }
  return out;
}

/// Index of the largest entry, lowest index on ties.
int argmax_lowest(std::span<const double> values);

/// Discrete tree semantics: descend by the sign of each node (f > 0 → first
/// child; quad nodes pick the slot whose update product is positive).
int hard_leaf(const TreeShape& shape, std::span<const double> params, Point p);

// ---------------------------------------------------------------------------
// Whole-forest rendering.

struct ForestRender {
  ClassMask mask;
  std::vector<double> logits;  // (height × width) × classes
  int classes = 0;
};

/// Renders every block at `raster` resolution in parallel (OpenMP). `threads`
/// <= 0 uses the runtime default.
ForestRender render_forest(const ForestModel& model, const Raster& raster,
                           const RendererConfig& config, int threads = 0);
/// Serial reference implementation of render_forest.
ForestRender render_forest_serial(const ForestModel& model, const Raster& raster,
                                  const RendererConfig& config);

// ---------------------------------------------------------------------------
// Visualization.

struct Rgb {
  double r = 0, g = 0, b = 0;
};

/// red, green, blue, cyan
std::vector<Rgb> default_region_palette();

/// h evaluated with palette colors in place of leaf logits (values 0..255).
RgbImage region_visualization(const RegionMap<double>& map, const Raster& raster,
                              std::span<const Rgb> palette);

/// Region maps of subset 0 of every block, tiled into one image.
RgbImage forest_region_visualization(const ForestModel& model, const Raster& raster,
                                     const RendererConfig& config,
                                     std::span<const Rgb> palette);

}  // namespace segforest
