// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <omp.h>

namespace segforest {

void RendererConfig::validate() const {
  require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
  require(lambda1 > 0.0 && std::isfinite(lambda1), "lambda1 must be positive");
  require(lambda2 > 0.0 && std::isfinite(lambda2), "lambda2 must be positive");
}

std::vector<Point> Raster::points() const {
  require(width >= 1 && height >= 1, "raster dimensions must be positive");
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const double p2 = pixel_center(y, height);
    for (int x = 0; x < width; ++x) out.push_back({pixel_center(x, width), p2});
  }
  return out;
}

int argmax_lowest(std::span<const double> values) {
  require(!values.empty(), "argmax of an empty vector");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

int hard_leaf(const TreeShape& shape, std::span<const double> params, Point p) {
  require(static_cast<int>(params.size()) == shape.inner_parameter_count(),
          "hard_leaf: parameter count does not match tree layout");
  const auto& nodes = shape.nodes();
  int idx = 0;
  while (nodes[idx].type != NodeType::kLeaf) {
    const TreeNode& node = nodes[idx];
    const auto np = params.subspan(node.param_offset, node_parameter_count(node));
    int slot = 0;
    if (node.type == NodeType::kBsp) {
      slot = eval_sdf<double>(node.sdf, np, p) > 0.0 ? 0 : 1;
    } else {
      const double t1 = np[0] - p.p1;
      const double t2 = np[1] - p.p2;
      slot = (t1 > 0.0 ? 1 : 0) + (t2 > 0.0 ? 0 : 2);
    }
    idx = node.children[slot];
  }
  return nodes[idx].leaf_index;
}

namespace {

// Renders block (bx, by) into the output buffers of `out`.
void render_one_block(const ForestModel& model, const ParamLayout& layout,
                      std::span<const Point> points, const Raster& raster,
                      const RendererConfig& config, int bx, int by, ForestRender& out) {
  const std::vector<double> flat = model.block(bx, by).flatten();
  const BlockRender<double> r =
      render_block<double>(model.spec, layout, flat, points, config);
  const int classes = model.spec.class_count;
  const int full_width = model.grid_width * raster.width;
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const int q = y * raster.width + x;
      const std::span<const double> h(r.logits.values.data() + q * classes, classes);
      const int gx = bx * raster.width + x;
      const int gy = by * raster.height + y;
      out.mask.at(gx, gy) = static_cast<std::uint8_t>(argmax_lowest(h));
      std::copy(h.begin(), h.end(),
                out.logits.begin() + (static_cast<std::size_t>(gy) * full_width + gx) * classes);
    }
  }
}

ForestRender prepare(const ForestModel& model, const Raster& raster,
                     const RendererConfig& config) {
  model.validate();
  config.validate();
  ForestRender out;
  out.classes = model.spec.class_count;
  out.mask = ClassMask(model.grid_width * raster.width, model.grid_height * raster.height);
  out.logits.assign(out.mask.values.size() * out.classes, 0.0);
  return out;
}

}  // namespace

ForestRender render_forest(const ForestModel& model, const Raster& raster,
                           const RendererConfig& config, int threads) {
  ForestRender out = prepare(model, raster, config);
  const ParamLayout layout = param_layout(model.spec);
  const std::vector<Point> points = raster.points();
  const int blocks = model.grid_width * model.grid_height;
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
  for (int b = 0; b < blocks; ++b) {
    try {
      render_one_block(model, layout, points, raster, config, b % model.grid_width,
                       b / model.grid_width, out);
    } catch (...) {
#pragma omp critical(segforest_render_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

ForestRender render_forest_serial(const ForestModel& model, const Raster& raster,
                                  const RendererConfig& config) {
  ForestRender out = prepare(model, raster, config);
  const ParamLayout layout = param_layout(model.spec);
  const std::vector<Point> points = raster.points();
  for (int by = 0; by < model.grid_height; ++by) {
    for (int bx = 0; bx < model.grid_width; ++bx) {
      render_one_block(model, layout, points, raster, config, bx, by, out);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Rgb> default_region_palette() {
  return {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {0, 255, 255}};
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

void paint_regions(const RegionMap<double>& map, const Raster& raster,
                   std::span<const Rgb> palette, RgbImage& img, int ox, int oy) {
  require(static_cast<int>(palette.size()) >= map.regions,
          "palette has fewer colors than the tree has regions");
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const int q = y * raster.width + x;
      Rgb c;
      for (int i = 0; i < map.regions; ++i) {
        const double w = map.at(i, q);
        c.r += w * palette[i].r;
        c.g += w * palette[i].g;
        c.b += w * palette[i].b;
      }
      img.set(ox + x, oy + y, to_byte(c.r), to_byte(c.g), to_byte(c.b));
    }
  }
}

}  // namespace

RgbImage region_visualization(const RegionMap<double>& map, const Raster& raster,
                              std::span<const Rgb> palette) {
  require(map.points == raster.width * raster.height, "region map does not match raster");
  RgbImage img(raster.width, raster.height);
  paint_regions(map, raster, palette, img, 0, 0);
  return img;
}

RgbImage forest_region_visualization(const ForestModel& model, const Raster& raster,
                                     const RendererConfig& config,
                                     std::span<const Rgb> palette) {
  model.validate();
  config.validate();
  const ParamLayout layout = param_layout(model.spec);
  const std::vector<Point> points = raster.points();
  RgbImage img(model.grid_width * raster.width, model.grid_height * raster.height);
  const TreeShape& shape = model.spec.subsets[0].shape;
  for (int by = 0; by < model.grid_height; ++by) {
    for (int bx = 0; bx < model.grid_width; ++bx) {
      const auto& inner = model.block(bx, by).subsets[0].inner;
      const RegionMap<double> map =
          render_region_map<double>(shape, std::span<const double>(inner), points, config);
      paint_regions(map, raster, palette, img, bx * raster.width, by * raster.height);
    }
  }
  return img;
}

}  // namespace segforest
