// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "segforest/data.hpp"
#include "segforest/experiments.hpp"
#include "segforest/forest.hpp"
#include "segforest/renderer.hpp"

namespace sf = segforest;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(SEGFOREST_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

double value_after(const std::string& text, const std::string& key) {
  const auto at = text.find(key);
  return at == std::string::npos ? std::nan("") : std::stod(text.substr(at + key.size()));
}

struct Summary {
  double mean_miou = 0, std_miou = 0, perfect_fraction = 0, mean_steps = 0;
};

std::map<std::string, Summary> toy_summaries(const std::string& csv) {
  std::map<std::string, Summary> out;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("summary,", 0) != 0 || line.rfind("summary,structure", 0) == 0) continue;
    std::vector<std::string> f;
    std::istringstream cells(line);
    for (std::string c; std::getline(cells, c, ',');) f.push_back(c);
    if (f.size() < 7) continue;
    out[f[1]] = {std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6])};
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Determinism evidence collected while running criteria 1-3.
struct Outputs {
  std::vector<std::string> encode_models;
  std::string partition_csv;
  std::string circles_csv;
};

Outputs criterion_1_to_3(const fs::path& dir, int threads) {
  Outputs o;
  const std::string t = " --seed 1 --threads " + std::to_string(threads) + " ";
  const bool report = threads == 1;

  // 1. Encoding capacity over the polygon suite.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<sf::ClassMask> suite = sf::polygon_suite(1);
    double acc = 0, miou = 0;
    bool ok = true;
    for (std::size_t i = 0; i < suite.size(); ++i) {
      const std::string mask = (dir / ("suite_" + std::to_string(i) + ".pgm")).string();
      const std::string model = (dir / ("suite_" + std::to_string(i) + "_" +
                                        std::to_string(threads) + ".sff")).string();
      sf::write_file(mask, sf::save_mask(suite[i]));
      const Run r = cli(t + "encode " + mask + " --classes 6 -o " + model);
      ok = ok && r.code == 0;
      acc += value_after(r.out, "accuracy ");
      miou += value_after(r.out, "miou ");
      o.encode_models.push_back(r.code == 0 ? sf::read_file(model) : std::string());
    }
    acc /= suite.size();
    miou /= suite.size();
    if (report) {
      verdict(1, ok && acc >= 0.99 && miou >= 0.985,
              fmt("mean accuracy %.5f (>= 0.99), mean mIoU %.5f (>= 0.985), %zu masks, %.0f s",
                  acc, miou, suite.size(), seconds_since(t0)));
    }
  }

  // 2. Partition-toy perfection for both structures.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Run r = cli(t + "toyexp partition-trees --runs 10");
    o.partition_csv = r.out;
    auto s = toy_summaries(r.out);
    if (report) {
      const double bsp = s["bsp:line:2"].perfect_fraction;
      const double kd = s["kd:2"].perfect_fraction;
      verdict(2, r.code == 0 && bsp >= 0.95 && kd >= 0.95,
              fmt("perfect fraction bsp:line:2 %.2f, kd:2 %.2f (both >= 0.95), %.0f s", bsp, kd,
                  seconds_since(t0)));
    }
  }

  // 3. Circle toy: circle trees at least as good as line trees.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const Run r = cli(t + "toyexp circles-sdf --runs 10");
    o.circles_csv = r.out;
    auto s = toy_summaries(r.out);
    if (report) {
      const Summary line = s["bsp:line:1"];
      const Summary circle = s["bsp:circle:1"];
      verdict(3, r.code == 0 && s.size() == 2 && circle.mean_miou >= line.mean_miou,
              fmt("mean mIoU circle %.4f +- %.4f vs line %.4f +- %.4f, difference %+.4f, %.0f s",
                  circle.mean_miou, circle.std_miou, line.mean_miou, line.std_miou,
                  circle.mean_miou - line.mean_miou, seconds_since(t0)));
    }
  }
  return o;
}

void criterion_4() {
  const auto t0 = std::chrono::steady_clock::now();
  const Run r = cli("gradcheck --trials 1000");
  int rows = 0, failed = 0;
  std::istringstream in(r.out);
  for (std::string line; std::getline(in, line);) {
    if (line.find("max rel err < 1e-4:") == std::string::npos) continue;
    ++rows;
    failed += line.find("PASS") == std::string::npos;
  }
  verdict(4, r.code == 0 && rows > 0 && failed == 0,
          fmt("%d rows, %d failing, %.0f s", rows, failed, seconds_since(t0)));
}

std::vector<double> random_vector(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

void criterion_5() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int bad_softmax = 0, bad_depth1 = 0, bad_quad = 0, bad_kd = 0;

  std::vector<sf::TreeShape> shapes;
  for (sf::SdfKind k : sf::kAllSdfKinds) shapes.push_back(sf::TreeShape::bsp(k, 2));
  shapes.push_back(sf::TreeShape::quad(2));
  for (int trial = 0; trial < 1000; ++trial) {
    const sf::TreeShape& shape = shapes[trial % shapes.size()];
    for (sf::RenderMode mode : {sf::RenderMode::kRefined, sf::RenderMode::kLegacy}) {
      if (mode == sf::RenderMode::kLegacy && shape.has_quad()) continue;
      sf::RendererConfig cfg;
      cfg.mode = mode;
      const auto params = random_vector(shape.inner_parameter_count(), rng);
      const auto map = sf::render_region_map<double>(shape, std::span<const double>(params),
                                                     sf::Raster{4, 4}, cfg);
      for (int q = 0; q < map.points; ++q) {
        double sum = 0.0;
        for (int i = 0; i < map.regions; ++i) sum += map.at(i, q);
        bad_softmax += std::abs(sum - 1.0) > 1e-9;
      }
    }
  }

  for (int trial = 0; trial < 1000; ++trial) {
    const sf::TreeShape shape = sf::TreeShape::bsp(sf::kAllSdfKinds[trial % sf::kAllSdfKinds.size()], 1);
    const auto params = random_vector(shape.inner_parameter_count(), rng);
    std::vector<std::optional<double>> acc;
    sf::accumulate_regions<double>(shape, params, {u(rng), u(rng)}, {}, acc);
    bad_depth1 += *acc[0] > 0.0 && *acc[1] > 0.0;
  }

  const sf::TreeShape quad = sf::TreeShape::quad(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto params = random_vector(2, rng);
    for (const sf::Point& p : sf::Raster{1 + trial % 5, 1 + (trial / 5) % 5}.points()) {
      const double t1 = params[0] - p.p1, t2 = params[1] - p.p2;
      if (t1 == 0.0 || t2 == 0.0) continue;
      std::vector<std::optional<double>> acc;
      sf::accumulate_regions<double>(quad, params, p, {}, acc);
      int positive = 0;
      for (const auto& a : acc) positive += *a > 0.0;
      bad_quad += positive != 1;
    }
  }

  const sf::TreeShape kd = sf::TreeShape::kd(2);
  const sf::TreeShape lines = sf::TreeShape::bsp(sf::SdfKind::kLine, 2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto t = random_vector(3, rng);
    const std::vector<double> as_lines{-1.0, 0.0, -t[0], 0.0, -1.0, -t[1], 0.0, -1.0, -t[2]};
    for (sf::RenderMode mode : {sf::RenderMode::kRefined, sf::RenderMode::kLegacy}) {
      sf::RendererConfig cfg;
      cfg.mode = mode;
      const sf::Raster raster{1 + trial % 8, 1 + (trial / 8) % 8};
      const auto a = sf::render_region_map<double>(kd, std::span<const double>(t), raster, cfg);
      const auto b = sf::render_region_map<double>(lines, std::span<const double>(as_lines), raster, cfg);
      bad_kd += a.prob != b.prob;
    }
  }
  verdict(5, bad_softmax + bad_depth1 + bad_quad + bad_kd == 0,
          fmt("violations: softmax %d, depth-1 exclusivity %d, quad exclusivity %d, k-d vs BSP %d "
              "(1000 instances each)",
              bad_softmax, bad_depth1, bad_quad, bad_kd));
}

void criterion_6() {
  const auto t0 = std::chrono::steady_clock::now();
  const sf::ClassMask strip = sf::multi_class_strip(50, 1);
  sf::FitConfig fit;
  fit.seed = 1;
  sf::LossWeights full;
  full.class_weights.assign(6, 1.0);
  sf::LossWeights ce = sf::LossWeights::cross_entropy_only();
  ce.class_weights.assign(6, 1.0);
  const sf::LossEffectResult a = sf::loss_effect(strip, 6, full, "default", fit);
  const sf::LossEffectResult b = sf::loss_effect(strip, 6, ce, "ce-only", fit);
  verdict(6, a.mean_gini <= b.mean_gini && a.mean_sharpness <= b.mean_sharpness,
          fmt("Gini %.5f vs %.5f, L_R %.5f vs %.5f (default mu vs CE only), accuracy %.4f vs %.4f, "
              "%.0f s",
              a.mean_gini, b.mean_gini, a.mean_sharpness, b.mean_sharpness, a.accuracy,
              b.accuracy, seconds_since(t0)));
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / "segforest_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const Outputs serial = criterion_1_to_3(dir, 1);
  criterion_4();
  criterion_5();
  criterion_6();

  const auto t0 = std::chrono::steady_clock::now();
  const Outputs parallel = criterion_1_to_3(dir, 3);
  int differing = 0;
  for (std::size_t i = 0; i < serial.encode_models.size(); ++i) {
    differing += serial.encode_models[i].empty() ||
                 serial.encode_models[i] != parallel.encode_models[i];
  }
  const bool toys_same = !serial.partition_csv.empty() &&
                         serial.partition_csv == parallel.partition_csv &&
                         !serial.circles_csv.empty() && serial.circles_csv == parallel.circles_csv;
  verdict(7, differing == 0 && toys_same,
          fmt("--threads 1 vs 3: %d of %zu encoded models differ, toy CSVs %s, %.0f s", differing,
              serial.encode_models.size(), toys_same ? "identical" : "differ",
              seconds_since(t0)));

  fs::remove_all(dir);
  return failures == 0 ? 0 : 1;
}
