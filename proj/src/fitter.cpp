// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/fitter.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numbers>
#include <optional>

#include <omp.h>

#include "segforest/metrics.hpp"

namespace segforest {

void FitConfig::validate() const {
  require(steps >= 1, "steps must be at least 1");
  require(restarts >= 1, "restarts must be at least 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning rate must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must be in [0, 1)");
  require(eps > 0.0, "Adam epsilon must be positive");
  renderer.validate();
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t block_seed(std::uint64_t seed, int bx, int by, int restart) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint32_t>(bx));
  h = mix64(h ^ static_cast<std::uint32_t>(by));
  return mix64(h ^ static_cast<std::uint32_t>(restart));
}

BlockParams init_params(const ForestSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> centered(-0.5, 0.5);
  std::uniform_real_distribution<double> size(0.2, 0.8);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gate(0.0, 0.1);
  std::normal_distribution<double> logit(0.0, 0.01);

  auto unit_normal = [&](std::vector<double>& out) {
    const double a = angle(rng);
    out.push_back(std::cos(a));
    out.push_back(std::sin(a));
  };
  auto focus_pair = [&](std::vector<double>& out) {
    const double x1 = centered(rng), x2 = centered(rng);
    const double y1 = centered(rng), y2 = centered(rng);
    out.insert(out.end(), {x1, x2, y1, y2});
    return std::hypot(x1 - y1, x2 - y2);
  };

  BlockParams block;
  for (const ClassSubset& subset : spec.subsets) {
    SubsetParams sp;
    const TreeShape& shape = subset.shape;
    for (int idx : shape.inner_nodes()) {
      const TreeNode& node = shape.nodes()[idx];
      auto& out = sp.inner;
      if (node.type == NodeType::kQuad) {
        out.push_back(centered(rng));
        out.push_back(centered(rng));
        continue;
      }
      switch (node.sdf) {
        case SdfKind::kLine:
          unit_normal(out);
          out.push_back(centered(rng));
          break;
        case SdfKind::kSquare:
        case SdfKind::kCircle:
          out.push_back(centered(rng));
          out.push_back(centered(rng));
          out.push_back(size(rng));
          break;
        case SdfKind::kEllipse: {
          const double dist = focus_pair(out);
          out.push_back(dist + size(rng));
          break;
        }
        case SdfKind::kHyperbola: {
          const double dist = focus_pair(out);
          out.push_back(size(rng) * dist);
          break;
        }
        case SdfKind::kParabola:
          out.push_back(centered(rng));
          out.push_back(centered(rng));
          unit_normal(out);
          out.push_back(centered(rng));
          break;
        case SdfKind::kKdX:
        case SdfKind::kKdY:
          out.push_back(centered(rng));
          break;
        case SdfKind::kDynKd:
          out.push_back(gate(rng));
          out.push_back(gate(rng));
          out.push_back(centered(rng));
          break;
      }
    }
    const std::size_t logits = static_cast<std::size_t>(shape.leaf_count()) * subset.classes.size();
    for (std::size_t k = 0; k < logits; ++k) sp.leaf_logits.push_back(logit(rng));
    block.subsets.push_back(std::move(sp));
  }
  return block;
}

// ---------------------------------------------------------------------------

namespace {

LossValues values_of(const LossReport<DiffValue>& r) {
  return {r.total.value(), r.ce.value(), r.purity.value(), r.min_size.value(),
          r.sharpness.value()};
}

double block_accuracy(const Logits<DiffValue>& logits, const BlockTarget& target) {
  int correct = 0;
  int valid = 0;
  for (int q = 0; q < logits.points; ++q) {
    const int c = target.labels[q];
    if (c < 0) continue;
    ++valid;
    int best = 0;
    for (int k = 1; k < logits.classes; ++k) {
      if (logits.at(q, k).value() > logits.at(q, best).value()) best = k;
    }
    correct += best == c;
  }
  return valid == 0 ? 1.0 : static_cast<double>(correct) / valid;
}

struct Candidate {
  bool valid = false;
  double accuracy = 0.0;
  LossValues losses;
  std::vector<double> params;

  bool worse_than(double acc, double total) const {
    return !valid || acc > accuracy || (acc == accuracy && total < losses.total);
  }
};

}  // namespace

BlockFit fit_block(const BlockTarget& target, const ForestSpec& spec,
                   const LossWeights& weights, const FitConfig& config, int bx, int by) {
  spec.validate();
  config.validate();
  weights.validate(spec.class_count);
  require(target.width == spec.block_size && target.height == spec.block_size,
          "fit_block: target does not match the block size");
  require(target.classes == spec.class_count, "fit_block: target class count mismatch");

  const ParamLayout layout = param_layout(spec);
  BlockFit result;

  if (target.valid_pixels() == 0) {
    std::mt19937_64 rng(block_seed(config.seed, bx, by, 0));
    result.params = init_params(spec, rng);
    result.stats.accuracy = 1.0;
    result.stats.skipped = true;
    return result;
  }

  const Raster raster{spec.block_size, spec.block_size};
  const std::vector<Point> points = raster.points();
  const int n = layout.total();

  Tape tape;
  std::vector<DiffValue> vars(n);
  std::vector<double> m(n), v(n);
  Candidate best;
  std::vector<LossValues> best_history;
  int evaluations = 0;
  bool perfect = false;

  for (int restart = 0; restart < config.restarts && !perfect; ++restart) {
    std::mt19937_64 rng(block_seed(config.seed, bx, by, restart));
    std::vector<double> params = init_params(spec, rng).flatten();
    std::fill(m.begin(), m.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    Candidate local;
    std::vector<LossValues> history;
    bool aborted = false;

    for (int step = 0; step <= config.steps; ++step) {
      tape.clear();
      std::optional<BlockRender<DiffValue>> rendered;
      std::optional<LossReport<DiffValue>> reported;
      ++evaluations;
      try {
        for (int k = 0; k < n; ++k) vars[k] = tape.variable(params[k]);
        rendered = render_block<DiffValue>(spec, layout, std::span<const DiffValue>(vars),
                                           points, config.renderer);
        reported = loss_total<DiffValue>(spec, *rendered, target, weights);
      } catch (const DomainError&) {
        // non-finite parameters or a guarded domain hit
      }
      const LossValues lv = reported ? values_of(*reported) : LossValues{std::numeric_limits<double>::quiet_NaN()};
      if (!std::isfinite(lv.total)) {
        aborted = true;
        std::fprintf(stderr,
                     "warning: block (%d, %d): restart %d aborted at step %d, non-finite loss\n",
                     bx, by, restart, step);
        break;
      }
      const BlockRender<DiffValue>& render = *rendered;
      const LossReport<DiffValue>& report = *reported;
      if (config.record_history) history.push_back(lv);
      const double acc = block_accuracy(render.logits, target);
      if (local.worse_than(acc, lv.total)) local = {true, acc, lv, params};
      if (acc == 1.0 && result.stats.steps_to_perfect < 0) {
        result.stats.steps_to_perfect = evaluations;
      }
      if (config.early_stop && acc == 1.0) {
        perfect = true;
        break;
      }
      if (step == config.steps) break;

      const Gradients grads = tape.backward(report.total);
      const auto g = grads.values();
      const double lr = config.learning_rate * 0.5 *
                        (1.0 + std::cos(std::numbers::pi * step / config.steps));
      const double c1 = 1.0 - std::pow(config.beta1, step + 1);
      const double c2 = 1.0 - std::pow(config.beta2, step + 1);
      for (int k = 0; k < n; ++k) {
        m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
        v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
        params[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config.eps);
      }
    }
    if (aborted) {
      ++result.stats.aborted_restarts;
      continue;
    }
    if (local.valid && best.worse_than(local.accuracy, local.losses.total)) {
      best = std::move(local);
      result.stats.restart = restart;
      best_history = std::move(history);
    }
  }

  result.stats.steps_used = evaluations;
  if (!best.valid) {
    // Every restart diverged: fall back to the first initialization.
    std::mt19937_64 rng(block_seed(config.seed, bx, by, 0));
    result.params = init_params(spec, rng);
    std::fprintf(stderr, "warning: block (%d, %d): all restarts aborted\n", bx, by);
    return result;
  }
  result.params = BlockParams::unflatten(layout, best.params);
  result.stats.accuracy = best.accuracy;
  result.stats.losses = best.losses;
  result.stats.history = std::move(best_history);
  return result;
}

// ---------------------------------------------------------------------------

namespace {

struct ImageJob {
  ForestSpec spec;
  LossWeights weights;
  int grid_w = 0;
  int grid_h = 0;
};

ImageJob prepare_image(const ClassMask& mask, const ForestSpec& spec,
                       const LossWeights& weights, const FitConfig& config) {
  spec.validate();
  config.validate();
  require(mask.width > 0 && mask.height > 0, "fit_image: empty mask");
  require(mask.width % spec.block_size == 0 && mask.height % spec.block_size == 0,
          "fit_image: mask dimensions must be multiples of the block size");
  mask.validate(spec.class_count);
  ImageJob job{spec, weights, mask.width / spec.block_size, mask.height / spec.block_size};
  if (job.weights.class_weights.empty()) {
    job.weights.class_weights =
        inverse_frequency_weights(mask, spec.class_count, weights.ignore_index);
  }
  job.weights.validate(spec.class_count);
  return job;
}

void fit_one(const ClassMask& mask, const ImageJob& job, const FitConfig& config, int b,
             ImageFit& out) {
  const int bx = b % job.grid_w;
  const int by = b / job.grid_w;
  const int s = job.spec.block_size;
  const BlockTarget target = BlockTarget::from_mask(mask, bx * s, by * s, s, s,
                                                    job.spec.class_count, job.weights.ignore_index);
  BlockFit fit = fit_block(target, job.spec, job.weights, config, bx, by);
  out.model.blocks[b] = std::move(fit.params);
  out.blocks[b] = std::move(fit.stats);
}

void finish_image(const ClassMask& mask, const ImageJob& job, const FitConfig& config,
                  ImageFit& out) {
  const ForestRender r =
      render_forest_serial(out.model, Raster{job.spec.block_size, job.spec.block_size},
                           config.renderer);
  const ConfusionMatrix cm = confusion(r.mask, mask, job.weights.ignore_index, job.spec.class_count);
  if (cm.total() == 0) {
    out.accuracy = 1.0;
    out.miou = 1.0;
    return;
  }
  out.accuracy = accuracy(cm);
  out.miou = miou(cm, job.weights.ignore_index);
}

ImageFit empty_fit(const ImageJob& job) {
  ImageFit out;
  out.model.spec = job.spec;
  out.model.grid_width = job.grid_w;
  out.model.grid_height = job.grid_h;
  out.model.blocks.resize(static_cast<std::size_t>(job.grid_w) * job.grid_h);
  out.blocks.resize(out.model.blocks.size());
  return out;
}

}  // namespace

ImageFit fit_image(const ClassMask& mask, const ForestSpec& spec, const LossWeights& weights,
                   const FitConfig& config, int threads) {
  const ImageJob job = prepare_image(mask, spec, weights, config);
  ImageFit out = empty_fit(job);
  const int blocks = job.grid_w * job.grid_h;
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
  for (int b = 0; b < blocks; ++b) {
    try {
      fit_one(mask, job, config, b, out);
    } catch (...) {
#pragma omp critical(segforest_fit_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  finish_image(mask, job, config, out);
  return out;
}

ImageFit fit_image_serial(const ClassMask& mask, const ForestSpec& spec,
                          const LossWeights& weights, const FitConfig& config) {
  const ImageJob job = prepare_image(mask, spec, weights, config);
  ImageFit out = empty_fit(job);
  for (int b = 0; b < job.grid_w * job.grid_h; ++b) fit_one(mask, job, config, b, out);
  finish_image(mask, job, config, out);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void append_fields(std::string& out, const LossValues& l) {
  char buf[160];
  std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g", l.total, l.ce, l.purity,
                l.min_size, l.sharpness);
  out += buf;
}

}  // namespace

std::string fit_report_csv(const ImageFit& fit) {
  std::string out =
      "bx,by,accuracy,L_total,L_CE,L_Y,L_s,L_R,steps,restart,steps_to_perfect,skipped\n";
  char buf[96];
  for (int b = 0; b < static_cast<int>(fit.blocks.size()); ++b) {
    const FitStats& s = fit.blocks[b];
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g", b % fit.model.grid_width,
                  b / fit.model.grid_width, s.accuracy);
    out += buf;
    append_fields(out, s.losses);
    std::snprintf(buf, sizeof buf, ",%d,%d,%d,%d\n", s.steps_used, s.restart,
                  s.steps_to_perfect, s.skipped ? 1 : 0);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "# accuracy,%.17g\n# miou,%.17g\n", fit.accuracy, fit.miou);
  out += buf;
  return out;
}

std::string loss_history_csv(const FitStats& stats) {
  std::string out = "step,L_total,L_CE,L_Y,L_s,L_R\n";
  for (std::size_t i = 0; i < stats.history.size(); ++i) {
    out += std::to_string(i);
    append_fields(out, stats.history[i]);
    out += '\n';
  }
  return out;
}

}  // namespace segforest
