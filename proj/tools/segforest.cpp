// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// segforest: encode class masks as partitioning-tree forests, render them
// back, evaluate, and run the built-in experiments.
//
// Exit codes: 0 ok, 2 input/parse error, 3 contract violation, 4 internal.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "segforest/data.hpp"
#include "segforest/errors.hpp"
#include "segforest/experiments.hpp"
#include "segforest/fitter.hpp"
#include "segforest/forest.hpp"
#include "segforest/metrics.hpp"
#include "segforest/renderer.hpp"

namespace sf = segforest;

namespace {

struct Globals {
  std::uint64_t seed = 1;
  int threads = 0;
  int block_size = 8;
  std::string tree = "bsp:line:2";
  std::string subsets = "single";
  std::vector<double> mu = {0.947, 0.034, 0.0095, 0.0095};
  double smin = 8.0;
  double lambda = 1.0;
  std::string mode = "refined";
};

sf::RendererConfig renderer_config(const Globals& g) {
  sf::RendererConfig c;
  c.mode = g.mode == "legacy" ? sf::RenderMode::kLegacy : sf::RenderMode::kRefined;
  c.lambda = g.lambda;
  c.validate();
  return c;
}

sf::LossWeights loss_weights(const Globals& g) {
  sf::LossWeights w;
  sf::require(g.mu.size() == 4, "--mu needs four comma-separated values");
  for (int k = 0; k < 4; ++k) w.mu[k] = g.mu[k];
  w.s_min = g.smin;
  return w;
}

sf::ForestSpec forest_spec(const Globals& g, int classes) {
  const sf::TreeShape shape = sf::parse_tree_dsl(g.tree);
  sf::ForestSpec spec;
  spec.block_size = g.block_size;
  spec.class_count = classes;
  for (auto& subset : sf::parse_subsets(g.subsets, classes)) {
    spec.subsets.push_back({std::move(subset), shape});
  }
  spec.validate();
  return spec;
}

void emit(const std::string& path, const std::string& bytes) {
  if (path.empty() || path == "-") {
    std::fwrite(bytes.data(), 1, bytes.size(), stdout);
  } else {
    sf::write_file(path, bytes);
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partitioning-tree forest codec for segmentation masks"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Global random seed");
  app.add_option("--threads", g.threads, "Worker threads for per-block fitting (0: default)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--block-size", g.block_size, "Block edge length in pixels")
      ->check(CLI::PositiveNumber);
  app.add_option("--tree", g.tree, "Tree DSL: bsp:<sdf>:<D>, kd:<D>, dkd:<D>, quad:<D>, mixed:<codes>");
  app.add_option("--subsets", g.subsets, "single | per-class | explicit 0,1|2,3");
  app.add_option("--mu", g.mu, "Loss weights mu1,mu2,mu3,mu4")->delimiter(',')->expected(4);
  app.add_option("--smin", g.smin, "Minimum region size in pixels")->check(CLI::NonNegativeNumber);
  app.add_option("--lambda", g.lambda, "Refined renderer sharpness")->check(CLI::PositiveNumber);
  app.add_option("--mode", g.mode, "Renderer mode")->check(CLI::IsMember({"refined", "legacy"}));

  // encode
  auto* encode = app.add_subcommand("encode", "Fit a forest to a PGM class mask");
  std::string enc_mask, enc_out = "model.sff", enc_report;
  int enc_classes = 0, enc_steps = 300, enc_restarts = 4;
  double enc_lr = 0.1;
  bool enc_no_early = false;
  std::string enc_weights = "uniform";
  std::optional<int> enc_ignore;
  encode->add_option("mask", enc_mask, "Input mask (binary PGM)")->required();
  encode->add_option("-o,--output", enc_out, "Output model (SFF1)");
  encode->add_option("--report", enc_report, "Per-block report CSV");
  encode->add_option("--classes", enc_classes, "Class count (default: from mask)");
  encode->add_option("--steps", enc_steps, "Optimizer steps per restart")->check(CLI::PositiveNumber);
  encode->add_option("--restarts", enc_restarts, "Random restarts")->check(CLI::PositiveNumber);
  encode->add_option("--lr", enc_lr, "Learning rate")->check(CLI::PositiveNumber);
  encode->add_flag("--no-early-stop", enc_no_early, "Run every step even after a perfect fit");
  encode->add_option("--class-weights", enc_weights, "uniform | inverse")
      ->check(CLI::IsMember({"inverse", "uniform"}));
  encode->add_option("--ignore-class", enc_ignore, "Class excluded from losses and metrics");

  // render
  auto* render = app.add_subcommand("render", "Render a fitted model to a mask");
  std::string ren_model, ren_out = "render.pgm", ren_regionvis, ren_purityvis, ren_gt;
  int ren_scale = 1;
  render->add_option("model", ren_model, "Model file (SFF1)")->required();
  render->add_option("-o,--output", ren_out, "Output mask (PGM)");
  render->add_option("--scale", ren_scale, "Samples per pixel edge")->check(CLI::PositiveNumber);
  render->add_option("--regionvis", ren_regionvis, "Region-map visualization (PPM)");
  render->add_option("--purityvis", ren_purityvis, "Gini visualization (PPM), needs --gt");
  render->add_option("--gt", ren_gt, "Ground-truth mask for --purityvis");

  // eval
  auto* eval = app.add_subcommand("eval", "Compare a predicted mask against ground truth");
  std::string ev_pred, ev_gt, ev_out;
  std::optional<int> ev_ignore;
  eval->add_option("pred", ev_pred, "Predicted mask (PGM)")->required();
  eval->add_option("gt", ev_gt, "Ground-truth mask (PGM)")->required();
  eval->add_option("--ignore-class", ev_ignore, "Class excluded from all metrics");
  eval->add_option("-o,--output", ev_out, "Metrics CSV (default stdout)");

  // toygen
  auto* toygen = app.add_subcommand("toygen", "Generate toy datasets");
  std::string tg_kind, tg_outdir = ".";
  int tg_n = 1;
  toygen->add_option("kind", tg_kind, "circles | partition")->required();
  toygen->add_option("--n", tg_n, "Number of images")->check(CLI::PositiveNumber);
  toygen->add_option("--outdir", tg_outdir, "Output directory");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  int gc_trials = 1000;
  gradcheck->add_option("--trials", gc_trials, "Random instances per row")
      ->check(CLI::PositiveNumber);

  // toyexp
  auto* toyexp = app.add_subcommand("toyexp", "Run a toy experiment");
  std::string te_kind, te_out;
  int te_runs = 10;
  toyexp->add_option("kind", te_kind, "circles-sdf | partition-trees")->required();
  toyexp->add_option("--runs", te_runs, "Generated images")->check(CLI::PositiveNumber);
  toyexp->add_option("-o,--output", te_out, "Summary CSV (default stdout)");
  int te_steps = 300, te_restarts = 4;
  std::optional<double> te_lr;
  std::string te_weights = "uniform";
  toyexp->add_option("--class-weights", te_weights, "uniform | inverse")
      ->check(CLI::IsMember({"inverse", "uniform"}));
  toyexp->add_option("--steps", te_steps, "Optimizer steps per restart")->check(CLI::PositiveNumber);
  toyexp->add_option("--restarts", te_restarts, "Random restarts")->check(CLI::PositiveNumber);
  toyexp->add_option("--lr", te_lr, "Learning rate (default: 1 for partition-trees, 0.1 otherwise)")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*encode) {
      const sf::ClassMask raw = sf::load_mask(sf::read_file(enc_mask));
      const int classes = enc_classes > 0 ? enc_classes : std::max(raw.class_count(), 1);
      const sf::ForestSpec spec = forest_spec(g, classes);
      const sf::ClassMask mask = sf::pad_to_blocks(raw, spec.block_size);
      sf::LossWeights weights = loss_weights(g);
      weights.ignore_index = enc_ignore;
      if (enc_weights == "uniform") weights.class_weights.assign(classes, 1.0);
      sf::FitConfig fit;
      fit.seed = g.seed;
      fit.steps = enc_steps;
      fit.restarts = enc_restarts;
      fit.learning_rate = enc_lr;
      fit.early_stop = !enc_no_early;
      fit.renderer = renderer_config(g);
      const sf::ImageFit result = sf::fit_image(mask, spec, weights, fit, g.threads);
      sf::write_file(enc_out, sf::serialize(result.model));
      if (!enc_report.empty()) sf::write_file(enc_report, sf::fit_report_csv(result));
      std::cout << "accuracy " << fmt("%.17g", result.accuracy) << "\nmiou "
                << fmt("%.17g", result.miou) << "\n";
    } else if (*render) {
      const sf::ForestModel model = sf::deserialize(sf::read_file(ren_model));
      const sf::RendererConfig config = renderer_config(g);
      const int s = model.spec.block_size * ren_scale;
      const sf::Raster raster{s, s};
      const sf::ForestRender r = sf::render_forest_serial(model, raster, config);
      sf::write_file(ren_out, sf::save_mask(r.mask));
      if (!ren_regionvis.empty()) {
        const auto palette = sf::default_region_palette();
        sf::write_file(ren_regionvis, sf::save_ppm(sf::forest_region_visualization(
                                          model, raster, config, palette)));
      }
      if (!ren_purityvis.empty()) {
        sf::require(!ren_gt.empty(), "--purityvis requires --gt");
        const sf::ClassMask gt =
            sf::pad_to_blocks(sf::load_mask(sf::read_file(ren_gt)), model.spec.block_size);
        sf::write_file(ren_purityvis,
                       sf::save_ppm(sf::purity_visualization(model, gt, raster, config)));
      }
    } else if (*eval) {
      const sf::ClassMask pred = sf::load_mask(sf::read_file(ev_pred));
      const sf::ClassMask gt = sf::load_mask(sf::read_file(ev_gt));
      const sf::ConfusionMatrix cm = sf::confusion(pred, gt, ev_ignore);
      emit(ev_out, sf::metrics_csv(cm, ev_ignore));
    } else if (*toygen) {
      if (tg_kind != "circles" && tg_kind != "partition") {
        throw sf::ParseError("unknown toy kind '" + tg_kind + "' (circles | partition)");
      }
      std::filesystem::create_directories(tg_outdir);
      sf::ToyConfig toy;
      for (int i = 0; i < tg_n; ++i) {
        const std::uint64_t seed = sf::mix64(g.seed) + static_cast<std::uint64_t>(i);
        char name[64];
        std::snprintf(name, sizeof name, "%s_%03d", tg_kind.c_str(), i);
        const std::string base = (std::filesystem::path(tg_outdir) / name).string();
        sf::ClassMask mask;
        sf::RgbImage image;
        if (tg_kind == "circles") {
          sf::CirclesToy t = sf::gen_circles_toy(toy, seed);
          mask = std::move(t.mask);
          image = std::move(t.image);
        } else {
          mask = sf::gen_partition_toy(toy, seed).mask;
          image = sf::colorize(mask);
        }
        sf::write_file(base + ".pgm", sf::save_mask(mask));
        sf::write_file(base + ".ppm", sf::save_ppm(image));
      }
    } else if (*gradcheck) {
      sf::GradCheckOptions opt;
      opt.trials = gc_trials;
      opt.seed = g.seed;
      const auto rows = sf::run_gradcheck(opt);
      std::cout << sf::gradcheck_table(rows);
      for (const auto& r : rows) {
        if (!r.passed) return 4;
      }
    } else if (*toyexp) {
      sf::ToyExpOptions opt;
      opt.runs = te_runs;
      opt.seed = g.seed;
      opt.threads = g.threads;
      opt.fit.renderer = renderer_config(g);
      opt.fit.steps = te_steps;
      opt.fit.restarts = te_restarts;
      opt.inverse_class_weights = te_weights == "inverse";
      opt.fit.learning_rate = te_lr.value_or(te_kind == "partition-trees" ? 1.0 : 0.1);
      sf::ToyExpResult result;
      if (te_kind == "partition-trees") {
        result = sf::toyexp_partition_trees(opt);
      } else if (te_kind == "circles-sdf") {
        result = sf::toyexp_circles_sdf(opt);
      } else {
        throw sf::ParseError("unknown experiment '" + te_kind +
                             "' (circles-sdf | partition-trees)");
      }
      emit(te_out, sf::toyexp_csv(result));
    }
  } catch (const sf::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const sf::ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 3;
  } catch (const sf::DomainError& e) {
    std::cerr << "domain error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
