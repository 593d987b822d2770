// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <set>

#include "segforest/metrics.hpp"
#include "segforest/renderer.hpp"

namespace segforest {

namespace {

// Builds `fn` at `point` and reports whether a kink argument lies too close.
bool near_kink(const TapeFunction& fn, std::span<const double> point, double radius) {
  Tape tape;
  std::vector<DiffValue> vars;
  for (double v : point) vars.push_back(tape.variable(v));
  fn(tape, vars);
  return tape.min_kink_distance() < radius;
}

// One table row: `trials` random instances drawn by `make`.
GradCheckRow check_row(const std::string& name, const GradCheckOptions& opt, std::uint64_t salt,
                       const std::function<std::pair<TapeFunction, std::vector<double>>(
                           std::mt19937_64&)>& make) {
  GradCheckRow row;
  row.name = name;
  row.trials = opt.trials;
  std::mt19937_64 rng(mix64(opt.seed ^ mix64(salt)));
  for (int t = 0; t < opt.trials; ++t) {
    auto [fn, point] = make(rng);
    if (near_kink(fn, point, opt.kink_radius)) {
      ++row.excluded;
      continue;
    }
    const GradCheckResult r = grad_check(fn, point, opt.step);
    row.failures += r.failures;
    row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
  }
  row.passed = row.failures == 0 && row.max_rel_error < opt.tolerance &&
               row.excluded < row.trials;
  return row;
}

std::vector<double> uniform_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

std::vector<Point> random_points(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Point> pts(n);
  for (Point& p : pts) {
    p.p1 = u(rng);
    p.p2 = u(rng);
  }
  return pts;
}

// Σ_q Σ_i w_iq R_i(p_q): ΣR alone is constant after the softmax.
auto region_map_case(const TreeShape& shape, RenderMode mode) {
  return [shape, mode](std::mt19937_64& rng) {
    const std::vector<Point> pts = random_points(rng, 4);
    const std::vector<double> w = uniform_vector(rng, shape.leaf_count() * 4, -1.0, 1.0);
    RendererConfig config;
    config.mode = mode;
    TapeFunction fn = [shape, pts, w, config](Tape&, std::span<const DiffValue> x) {
      const RegionMap<DiffValue> map = render_region_map<DiffValue>(shape, x, pts, config);
      DiffValue sum(0.0);
      for (std::size_t k = 0; k < map.prob.size(); ++k) sum = sum + map.prob[k] * w[k];
      return sum;
    };
    return std::make_pair(fn, uniform_vector(rng, shape.inner_parameter_count(), -1.0, 1.0));
  };
}

enum class LossPart { kCe, kPurity, kMinSize, kSharpness, kTotal };

auto loss_case(LossPart part, bool per_class, RenderMode mode, Impurity kind) {
  return [=](std::mt19937_64& rng) {
    constexpr int kClasses = 3;
    constexpr int kSize = 4;
    const TreeShape shape = TreeShape::bsp(SdfKind::kLine, 2);
    ForestSpec spec = per_class ? ForestSpec::per_class(kClasses, shape, kSize)
                                : ForestSpec::single(kClasses, shape, kSize);
    BlockTarget target;
    target.classes = kClasses;
    target.width = target.height = kSize;
    std::uniform_int_distribution<int> label(0, kClasses - 1);
    for (int q = 0; q < kSize * kSize; ++q) target.labels.push_back(label(rng));
    target.labels[0] = -1;
    LossWeights weights;
    weights.s_min = 3.0;
    weights.impurity = kind;
    weights.class_weights = uniform_vector(rng, kClasses, 0.5, 2.0);
    RendererConfig config;
    config.mode = mode;
    const ParamLayout layout = param_layout(spec);
    std::vector<double> point = uniform_vector(rng, layout.total(), -1.0, 1.0);
    const std::vector<Point> pts = Raster{kSize, kSize}.points();
    TapeFunction fn = [=](Tape&, std::span<const DiffValue> x) {
      const BlockRender<DiffValue> r = render_block<DiffValue>(spec, layout, x, pts, config);
      const LossReport<DiffValue> rep = loss_total<DiffValue>(spec, r, target, weights);
      switch (part) {
        case LossPart::kCe: return rep.ce;
        case LossPart::kPurity: return rep.purity;
        case LossPart::kMinSize: return rep.min_size;
        case LossPart::kSharpness: return rep.sharpness;
        case LossPart::kTotal: return rep.total;
      }
      return rep.total;
    };
    return std::make_pair(fn, point);
  };
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& opt) {
  require(opt.trials >= 1, "gradcheck needs at least one trial");
  require(opt.step > 0.0, "gradcheck step must be positive");
  std::vector<GradCheckRow> rows;
  std::uint64_t salt = 0;
  for (SdfKind kind : kAllSdfKinds) {
    const TreeShape shape = TreeShape::bsp(kind, 2);
    for (RenderMode mode : {RenderMode::kRefined, RenderMode::kLegacy}) {
      const std::string name = std::string("sdf:") + std::string(sdf_name(kind)) +
                               (mode == RenderMode::kRefined ? ":refined" : ":legacy");
      rows.push_back(check_row(name, opt, ++salt, region_map_case(shape, mode)));
    }
  }
  rows.push_back(check_row("quad:refined", opt, ++salt,
                           region_map_case(TreeShape::quad(1), RenderMode::kRefined)));
  rows.push_back(check_row("quad:mixed", opt, ++salt,
                           region_map_case(TreeShape::from_codes("Q BL L L BC L L L L"),
                                           RenderMode::kRefined)));

  const std::pair<const char*, LossPart> parts[] = {{"loss:ce", LossPart::kCe},
                                                    {"loss:purity", LossPart::kPurity},
                                                    {"loss:min_size", LossPart::kMinSize},
                                                    {"loss:sharpness", LossPart::kSharpness},
                                                    {"loss:total", LossPart::kTotal}};
  for (const auto& [name, part] : parts) {
    rows.push_back(check_row(name, opt, ++salt,
                             loss_case(part, false, RenderMode::kRefined, Impurity::kGini)));
  }
  rows.push_back(check_row("loss:total:per-class", opt, ++salt,
                           loss_case(LossPart::kTotal, true, RenderMode::kRefined,
                                     Impurity::kGini)));
  rows.push_back(check_row("loss:total:legacy", opt, ++salt,
                           loss_case(LossPart::kTotal, false, RenderMode::kLegacy,
                                     Impurity::kGini)));
  rows.push_back(check_row("loss:purity:entropy", opt, ++salt,
                           loss_case(LossPart::kPurity, false, RenderMode::kRefined,
                                     Impurity::kEntropy)));

  // Forced-kink probe: a pixel exactly on a line boundary must be rejected.
  {
    GradCheckRow row;
    row.name = "forced-kink probe";
    row.trials = opt.trials;
    const TreeShape shape = TreeShape::bsp(SdfKind::kLine, 1);
    std::mt19937_64 rng(mix64(opt.seed ^ mix64(++salt)));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < opt.trials; ++t) {
      const double a = u(rng) * std::numbers::pi;
      const Point on{u(rng), u(rng)};
      const std::vector<double> point = {std::cos(a), std::sin(a),
                                         std::cos(a) * on.p1 + std::sin(a) * on.p2};
      const TapeFunction fn = [shape, on](Tape&, std::span<const DiffValue> x) {
        const RegionMap<DiffValue> map =
            render_region_map<DiffValue>(shape, x, std::vector<Point>{on}, RendererConfig{});
        return map.prob[0];
      };
      if (near_kink(fn, point, opt.kink_radius)) ++row.excluded;
    }
    row.passed = row.excluded == row.trials;
    rows.push_back(row);
  }
  return rows;
}

std::string gradcheck_table(const std::vector<GradCheckRow>& rows) {
  std::string out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-24s %7s %9s %9s %12s  %s\n", "case", "trials", "excluded",
                "failures", "max_rel_err", "result");
  out += buf;
  for (const GradCheckRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%-24s %7d %9d %9d %12.3e  max rel err < 1e-4: %s\n",
                  r.name.c_str(), r.trials, r.excluded, r.failures, r.max_rel_error,
                  r.passed ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

ToyRun run_structure(const ClassMask& mask, const std::string& structure,
                     const ForestSpec& spec, const ToyExpOptions& opt, int run,
                     std::uint64_t seed) {
  FitConfig fit = opt.fit;
  fit.seed = seed;
  LossWeights weights;
  if (!opt.inverse_class_weights) weights.class_weights.assign(spec.class_count, 1.0);
  const ImageFit r = fit_image(mask, spec, weights, fit, opt.threads);
  ToyRun out;
  out.structure = structure;
  out.run = run;
  out.seed = seed;
  out.accuracy = r.accuracy;
  out.miou = r.miou;
  out.perfect = r.accuracy == 1.0;
  int slowest = 0;
  for (const FitStats& s : r.blocks) {
    out.steps_used += s.steps_used;
    if (s.skipped) continue;
    if (s.steps_to_perfect < 0) {
      slowest = -1;
    } else if (slowest >= 0) {
      slowest = std::max(slowest, s.steps_to_perfect);
    }
  }
  out.steps_to_perfect = slowest;
  out.model_bytes = serialize(r.model);
  return out;
}

void summarize(ToyExpResult& result, const std::vector<std::string>& structures) {
  for (const std::string& name : structures) {
    ToySummary s;
    s.structure = name;
    std::vector<double> mious;
    int perfect = 0;
    double steps = 0.0;
    for (const ToyRun& r : result.runs) {
      if (r.structure != name) continue;
      mious.push_back(r.miou);
      s.mean_accuracy += r.accuracy;
      if (r.perfect) {
        ++perfect;
        steps += r.steps_to_perfect;
      }
    }
    const double n = static_cast<double>(mious.size());
    if (n > 0) {
      s.mean_accuracy /= n;
      for (double m : mious) s.mean_miou += m / n;
      double var = 0.0;
      for (double m : mious) var += (m - s.mean_miou) * (m - s.mean_miou);
      s.std_miou = std::sqrt(var / n);
      s.perfect_fraction = perfect / n;
    }
    s.mean_steps_to_perfect = perfect > 0 ? steps / perfect : 0.0;
    result.summaries.push_back(s);
  }
}

}  // namespace

ToyExpResult toyexp_partition_trees(const ToyExpOptions& opt) {
  require(opt.runs >= 1, "toyexp needs at least one run");
  const std::vector<std::pair<std::string, TreeShape>> structures = {
      {"bsp:line:2", TreeShape::bsp(SdfKind::kLine, 2)}, {"kd:2", TreeShape::kd(2)}};
  ToyConfig toy;
  ToyExpResult result;
  for (int run = 0; run < opt.runs; ++run) {
    const std::uint64_t seed = mix64(opt.seed) + static_cast<std::uint64_t>(run);
    const PartitionToy img = gen_partition_toy(toy, seed);
    for (const auto& [name, shape] : structures) {
      const ForestSpec spec = ForestSpec::single(toy.classes, shape, 8);
      result.runs.push_back(run_structure(img.mask, name, spec, opt, run, seed));
    }
  }
  summarize(result, {"bsp:line:2", "kd:2"});
  return result;
}

ToyExpResult toyexp_circles_sdf(const ToyExpOptions& opt) {
  require(opt.runs >= 1, "toyexp needs at least one run");
  const std::vector<std::pair<std::string, TreeShape>> structures = {
      {"bsp:line:1", TreeShape::bsp(SdfKind::kLine, 1)},
      {"bsp:circle:1", TreeShape::bsp(SdfKind::kCircle, 1)}};
  ToyConfig toy;
  ToyExpResult result;
  for (int run = 0; run < opt.runs; ++run) {
    const std::uint64_t seed = mix64(opt.seed) + static_cast<std::uint64_t>(run);
    const CirclesToy img = gen_circles_toy(toy, seed);
    for (const auto& [name, shape] : structures) {
      const ForestSpec spec = ForestSpec::single(toy.classes, shape, 32);
      result.runs.push_back(run_structure(img.mask, name, spec, opt, run, seed));
    }
  }
  summarize(result, {"bsp:line:1", "bsp:circle:1"});
  return result;
}

std::string toyexp_csv(const ToyExpResult& result) {
  std::string out = "structure,run,seed,accuracy,miou,perfect,steps_to_perfect,steps_used\n";
  char buf[256];
  for (const ToyRun& r : result.runs) {
    std::snprintf(buf, sizeof buf, "%s,%d,%llu,%.17g,%.17g,%d,%d,%ld\n", r.structure.c_str(),
                  r.run, static_cast<unsigned long long>(r.seed), r.accuracy, r.miou,
                  r.perfect ? 1 : 0, r.steps_to_perfect, r.steps_used);
    out += buf;
  }
  out += "summary,structure,mean_accuracy,mean_miou,std_miou,perfect_fraction,mean_steps_to_perfect\n";
  for (const ToySummary& s : result.summaries) {
    std::snprintf(buf, sizeof buf, "summary,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  s.structure.c_str(), s.mean_accuracy, s.mean_miou, s.std_miou,
                  s.perfect_fraction, s.mean_steps_to_perfect);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ClassMask> polygon_suite(std::uint64_t seed, int count) {
  std::vector<ClassMask> out;
  PolygonSceneConfig scene;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = mix64(seed) + static_cast<std::uint64_t>(i);
    if (i < count / 2) out.push_back(gen_partition_composite(256, 6, s));
    else out.push_back(gen_polygon_scene(scene, s));
  }
  return out;
}

ClassMask multi_class_strip(int blocks, std::uint64_t seed, int block_size) {
  require(blocks >= 1, "strip needs at least one block");
  ClassMask strip(blocks * block_size, block_size);
  int found = 0;
  for (std::uint64_t scene_seed = seed; found < blocks; ++scene_seed) {
    const ClassMask scene = gen_polygon_scene(PolygonSceneConfig{}, scene_seed);
    for (int by = 0; by + block_size <= scene.height && found < blocks; by += block_size) {
      for (int bx = 0; bx + block_size <= scene.width && found < blocks; bx += block_size) {
        std::set<int> classes;
        for (int y = 0; y < block_size; ++y) {
          for (int x = 0; x < block_size; ++x) classes.insert(scene.at(bx + x, by + y));
        }
        if (classes.size() < 2) continue;
        for (int y = 0; y < block_size; ++y) {
          for (int x = 0; x < block_size; ++x) {
            strip.at(found * block_size + x, y) = scene.at(bx + x, by + y);
          }
        }
        ++found;
      }
    }
  }
  return strip;
}

LossEffectResult loss_effect(const ClassMask& strip, int classes, const LossWeights& weights,
                             const std::string& label, FitConfig fit, int threads) {
  fit.early_stop = false;
  const ForestSpec spec = ForestSpec::single(classes, TreeShape::bsp(SdfKind::kLine, 2), 8);
  const ImageFit r = fit_image(strip, spec, weights, fit, threads);
  LossEffectResult out;
  out.label = label;
  out.mean_gini = purity_report(r.model, strip, fit.renderer, weights.ignore_index).mean;
  out.mean_sharpness = mean_sharpness(r.model, fit.renderer);
  out.accuracy = r.accuracy;
  return out;
}

}  // namespace segforest
