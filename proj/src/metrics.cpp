// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace segforest {

long ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), 0L);
}

ConfusionMatrix confusion(const ClassMask& pred, const ClassMask& gt,
                          std::optional<int> ignore_class, int classes) {
  require(pred.width == gt.width && pred.height == gt.height,
          "confusion: prediction and ground truth dimensions differ");
  if (classes <= 0) classes = std::max({pred.class_count(), gt.class_count(), 1});
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(static_cast<std::size_t>(classes) * classes, 0);
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    const int g = gt.values[i];
    if (g == kIgnoreIndex || (ignore_class && g == *ignore_class)) continue;
    const int p = pred.values[i];
    require(g < classes && p < classes, "confusion: class index exceeds class count");
    ++cm.counts[static_cast<std::size_t>(g) * classes + p];
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  const long total = cm.total();
  if (total == 0) throw DomainError("accuracy of an empty confusion matrix is undefined");
  long trace = 0;
  for (int c = 0; c < cm.classes; ++c) trace += cm.at(c, c);
  return static_cast<double>(trace) / static_cast<double>(total);
}

IouReport iou(const ConfusionMatrix& cm, std::optional<int> ignore_class) {
  IouReport r;
  r.per_class.assign(cm.classes, std::nullopt);
  double sum = 0.0;
  int included = 0;
  for (int c = 0; c < cm.classes; ++c) {
    if (ignore_class && c == *ignore_class) continue;
    long row = 0, col = 0;
    for (int k = 0; k < cm.classes; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const long tp = cm.at(c, c);
    const long denom = row + col - tp;
    if (denom == 0) continue;  // absent from both
    const double v = static_cast<double>(tp) / static_cast<double>(denom);
    r.per_class[c] = v;
    sum += v;
    ++included;
  }
  if (included == 0) throw DomainError("mIoU of an empty confusion matrix is undefined");
  r.miou = sum / included;
  return r;
}

double miou(const ConfusionMatrix& cm, std::optional<int> ignore_class) {
  return iou(cm, ignore_class).miou;
}

std::string metrics_csv(const ConfusionMatrix& cm, std::optional<int> ignore_class) {
  const IouReport r = iou(cm, ignore_class);
  std::string out = "metric,value\n";
  char buf[64];
  for (int c = 0; c < cm.classes; ++c) {
    if (!r.per_class[c]) continue;
    std::snprintf(buf, sizeof buf, "iou_%d,%.17g\n", c, *r.per_class[c]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "accuracy,%.17g\nmiou,%.17g\n", accuracy(cm), r.miou);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Calls fn(bx, by, subset, region_map, histogram) for every block and subset.
template <class Fn>
void for_each_block_histogram(const ForestModel& model, const ClassMask& gt,
                              const RendererConfig& config, std::optional<int> ignore_class,
                              Fn&& fn) {
  model.validate();
  const ForestSpec& spec = model.spec;
  const int s = spec.block_size;
  require(gt.width == model.grid_width * s && gt.height == model.grid_height * s,
          "ground truth does not match the model grid");
  const ParamLayout layout = param_layout(spec);
  const std::vector<Point> points = Raster{s, s}.points();
  for (int by = 0; by < model.grid_height; ++by) {
    for (int bx = 0; bx < model.grid_width; ++bx) {
      const BlockTarget target =
          BlockTarget::from_mask(gt, bx * s, by * s, s, s, spec.class_count, ignore_class);
      const std::vector<double> flat = model.block(bx, by).flatten();
      const BlockRender<double> r = render_block<double>(spec, layout, flat, points, config);
      for (int j = 0; j < static_cast<int>(spec.subsets.size()); ++j) {
        const BlockTarget sub = spec.subsets.size() == 1
                                    ? target
                                    : split_target_for_subset(target, spec.subsets[j].classes);
        fn(bx, by, j, r.region_maps[j], region_class_histogram<double>(r.region_maps[j], sub));
      }
    }
  }
}

}  // namespace

PurityReport purity_report(const ForestModel& model, const ClassMask& gt,
                           const RendererConfig& config, std::optional<int> ignore_class,
                           Impurity kind) {
  PurityReport report;
  const int subsets = static_cast<int>(model.spec.subsets.size());
  std::vector<double> sums(subsets, 0.0);
  std::vector<long> counts(subsets, 0);
  for_each_block_histogram(
      model, gt, config, ignore_class,
      [&](int bx, int by, int j, const RegionMap<double>&, const RegionHistogram<double>& h) {
        for (int i = 0; i < h.regions; ++i) {
          const double v =
              impurity<double>(std::span<const double>(h.p).subspan(i * h.classes, h.classes), kind);
          report.rows.push_back({bx, by, j, i, h.s[i], v, static_cast<bool>(h.empty[i])});
          sums[j] += v;
          ++counts[j];
        }
      });
  for (int j = 0; j < subsets; ++j) {
    if (counts[j] > 0) report.mean += model.spec.subset_weight(j) * sums[j] / counts[j];
  }
  return report;
}

double mean_sharpness(const ForestModel& model, const RendererConfig& config) {
  model.validate();
  const ForestSpec& spec = model.spec;
  const ParamLayout layout = param_layout(spec);
  const std::vector<Point> points = Raster{spec.block_size, spec.block_size}.points();
  double total = 0.0;
  for (const BlockParams& b : model.blocks) {
    const std::vector<double> flat = b.flatten();
    const BlockRender<double> r = render_block<double>(spec, layout, flat, points, config);
    for (int j = 0; j < static_cast<int>(spec.subsets.size()); ++j) {
      total += spec.subset_weight(j) *
               loss_sharpness<double>(std::span<const RegionMap<double>>(&r.region_maps[j], 1));
    }
  }
  return model.blocks.empty() ? 0.0 : total / static_cast<double>(model.blocks.size());
}

std::string purity_csv(const PurityReport& report) {
  std::string out = "bx,by,subset,region,mass,impurity,empty\n";
  char buf[128];
  for (const PurityRow& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%.17g,%.17g,%d\n", r.bx, r.by, r.subset,
                  r.region, r.mass, r.impurity, r.empty ? 1 : 0);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "# mean,%.17g\n", report.mean);
  out += buf;
  return out;
}

RgbImage purity_visualization(const ForestModel& model, const ClassMask& gt,
                              const Raster& raster, const RendererConfig& config) {
  const ForestSpec& spec = model.spec;
  const int subsets = static_cast<int>(spec.subsets.size());
  // Region impurities per block and subset at native resolution.
  std::vector<std::vector<double>> gini_of(model.blocks.size() * subsets);
  for_each_block_histogram(
      model, gt, config, std::nullopt,
      [&](int bx, int by, int j, const RegionMap<double>&, const RegionHistogram<double>& h) {
        auto& g = gini_of[(static_cast<std::size_t>(by) * model.grid_width + bx) * subsets + j];
        for (int i = 0; i < h.regions; ++i) {
          g.push_back(gini<double>(std::span<const double>(h.p).subspan(i * h.classes, h.classes)));
        }
      });

  const std::vector<Point> points = raster.points();
  RgbImage img(model.grid_width * raster.width, model.grid_height * raster.height);
  for (int by = 0; by < model.grid_height; ++by) {
    for (int bx = 0; bx < model.grid_width; ++bx) {
      const BlockParams& b = model.block(bx, by);
      std::vector<double> shade(points.size(), 0.0);
      for (int j = 0; j < subsets; ++j) {
        const auto& inner = b.subsets[j].inner;
        const RegionMap<double> map = render_region_map<double>(
            spec.subsets[j].shape, std::span<const double>(inner), points, config);
        const auto& g = gini_of[(static_cast<std::size_t>(by) * model.grid_width + bx) * subsets + j];
        for (int q = 0; q < map.points; ++q) {
          double h = 0.0;
          for (int i = 0; i < map.regions; ++i) h += map.at(i, q) * g[i];
          shade[q] += spec.subset_weight(j) * h;
        }
      }
      for (int y = 0; y < raster.height; ++y) {
        for (int x = 0; x < raster.width; ++x) {
          const auto v = static_cast<std::uint8_t>(
              std::lround(std::clamp(255.0 * shade[y * raster.width + x], 0.0, 255.0)));
          img.set(bx * raster.width + x, by * raster.height + y, v, v, v);
        }
      }
    }
  }
  return img;
}

}  // namespace segforest
