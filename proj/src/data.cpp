// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "segforest/errors.hpp"

namespace segforest {

int ClassMask::class_count() const {
  int best = -1;
  for (std::uint8_t v : values) {
    if (v != kIgnoreIndex) best = std::max(best, static_cast<int>(v));
  }
  return best + 1;
}

void ClassMask::validate(int classes) const {
  require(static_cast<long>(values.size()) == static_cast<long>(width) * height,
          "mask storage does not match its dimensions");
  for (std::uint8_t v : values) {
    if (v != kIgnoreIndex && v >= classes) {
      throw ContractError("mask value " + std::to_string(v) + " is not a class below " +
                          std::to_string(classes) + " nor the ignore index");
    }
  }
}

void RgbImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  rgb[i] = r;
  rgb[i + 1] = g;
  rgb[i + 2] = b;
}

// ---------------------------------------------------------------------------
// PNM

namespace {

struct PnmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

PnmHeader parse_pnm_header(std::string_view bytes, std::string_view magic) {
  auto fail = [](std::size_t offset, const std::string& what) -> void {
    throw ParseError("PNM byte " + std::to_string(offset) + ": " + what);
  };
  if (bytes.size() < 2 || bytes.substr(0, 2) != magic) {
    fail(0, "expected magic '" + std::string(magic) + "'");
  }
  std::size_t pos = 2;
  auto skip_space = [&]() {
    while (pos < bytes.size()) {
      const char ch = bytes[pos];
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    long value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1'000'000) fail(start, std::string(what) + " too large");
      ++pos;
    }
    if (pos == start) fail(start, std::string("expected ") + what);
    return static_cast<int>(value);
  };
  PnmHeader h;
  h.width = read_int("width");
  h.height = read_int("height");
  h.maxval = read_int("maxval");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    fail(pos, "expected a single whitespace byte after maxval");
  }
  h.data_offset = pos + 1;
  return h;
}

}  // namespace

ClassMask load_mask(std::string_view bytes) {
  const PnmHeader h = parse_pnm_header(bytes, "P5");
  if (h.maxval != 255) {
    throw ParseError("PGM maxval must be 255, found " + std::to_string(h.maxval));
  }
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.data_offset < need) {
    throw ParseError("PNM byte " + std::to_string(bytes.size()) + ": truncated pixel data (" +
                     std::to_string(need) + " bytes expected after offset " +
                     std::to_string(h.data_offset) + ")");
  }
  ClassMask mask(h.width, h.height);
  std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data() + h.data_offset), need,
              mask.values.begin());
  return mask;
}

std::string save_mask(const ClassMask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " +
                    std::to_string(mask.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(mask.values.data()), mask.values.size());
  return out;
}

std::string save_ppm(const RgbImage& image) {
  std::string out = "P6\n" + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
  return out;
}

RgbImage load_ppm(std::string_view bytes) {
  const PnmHeader h = parse_pnm_header(bytes, "P6");
  if (h.maxval != 255) throw ParseError("PPM maxval must be 255");
  const std::size_t need = static_cast<std::size_t>(h.width) * h.height * 3;
  if (bytes.size() - h.data_offset < need) {
    throw ParseError("PNM byte " + std::to_string(bytes.size()) + ": truncated pixel data");
  }
  RgbImage img(h.width, h.height);
  std::copy_n(reinterpret_cast<const std::uint8_t*>(bytes.data() + h.data_offset), need,
              img.rgb.begin());
  return img;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("write failed for '" + path + "'");
}

ClassMask pad_to_blocks(const ClassMask& mask, int block_size) {
  require(block_size >= 1, "block size must be positive");
  require(mask.width > 0 && mask.height > 0, "cannot pad an empty mask");
  const int w = (mask.width + block_size - 1) / block_size * block_size;
  const int h = (mask.height + block_size - 1) / block_size * block_size;
  if (w == mask.width && h == mask.height) return mask;
  ClassMask out(w, h, kIgnoreIndex);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) out.at(x, y) = mask.at(x, y);
  }
  return out;
}

std::array<std::uint8_t, 3> palette_color(int c) {
  if (c < 0 || c == kIgnoreIndex) return {128, 128, 128};
  if (c < 8) {
    return {static_cast<std::uint8_t>(c & 1 ? 255 : 0),
            static_cast<std::uint8_t>(c & 2 ? 255 : 0),
            static_cast<std::uint8_t>(c & 4 ? 255 : 0)};
  }
  // Beyond the cube corners: a fixed scramble of the class index.
  const unsigned h = static_cast<unsigned>(c) * 2654435761u;
  return {static_cast<std::uint8_t>(h >> 24), static_cast<std::uint8_t>(h >> 16),
          static_cast<std::uint8_t>(h >> 8)};
}

RgbImage colorize(const ClassMask& mask) {
  RgbImage img(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const auto col = palette_color(mask.at(x, y));
      img.set(x, y, col[0], col[1], col[2]);
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Generators

void ToyConfig::validate() const {
  require(image_size >= 1, "toy image size must be positive");
  require(classes >= 2 && classes <= 254, "toy class count must be in [2, 254]");
  require(circles_min >= 0 && circles_max >= circles_min, "invalid circle count range");
  require(radius_min >= 0.0 && radius_max >= radius_min, "invalid radius range");
  require(split_min >= 0.0 && split_max <= 1.0 && split_min <= split_max,
          "invalid split range");
}

ClassMask draw_circles(int size, const std::vector<Circle>& circles) {
  ClassMask mask(size, size, 0);
  for (const Circle& c : circles) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - c.cx;
        const double dy = y + 0.5 - c.cy;
        if (dx * dx + dy * dy <= c.radius * c.radius) {
          mask.at(x, y) = static_cast<std::uint8_t>(c.cls);
        }
      }
    }
  }
  return mask;
}

CirclesToy gen_circles_toy(const ToyConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(config.circles_min, config.circles_max);
  std::uniform_real_distribution<double> pos(0.0, config.image_size);
  std::uniform_real_distribution<double> radius(config.radius_min, config.radius_max);
  std::uniform_int_distribution<int> cls(1, config.classes - 1);
  CirclesToy toy;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    Circle c;
    c.cx = pos(rng);
    c.cy = pos(rng);
    c.radius = radius(rng);
    c.cls = cls(rng);
    toy.circles.push_back(c);
  }
  toy.mask = draw_circles(config.image_size, toy.circles);
  toy.image = colorize(toy.mask);
  return toy;
}

ClassMask draw_partition(int size, int split_x, int split_y_left, int split_y_right,
                         const std::array<int, 4>& classes) {
  ClassMask mask(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool left = x < split_x;
      const bool top = y < (left ? split_y_left : split_y_right);
      const int idx = (left ? 0 : 2) + (top ? 0 : 1);
      mask.at(x, y) = static_cast<std::uint8_t>(classes[idx]);
    }
  }
  return mask;
}

PartitionToy gen_partition_toy(const ToyConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> frac(config.split_min, config.split_max);
  std::uniform_int_distribution<int> cls(0, config.classes - 1);
  PartitionToy toy;
  const auto split = [&]() {
    return static_cast<int>(std::floor(frac(rng) * config.image_size));
  };
  toy.split_x = split();
  toy.split_y_left = split();
  toy.split_y_right = split();
  for (;;) {
    for (int& c : toy.classes) c = cls(rng);
    std::array<int, 4> sorted = toy.classes;
    std::sort(sorted.begin(), sorted.end());
    const auto distinct = std::unique(sorted.begin(), sorted.end()) - sorted.begin();
    if (toy.classes[0] != toy.classes[1] && toy.classes[2] != toy.classes[3] &&
        distinct >= 3) {
      break;
    }
  }
  toy.mask = draw_partition(config.image_size, toy.split_x, toy.split_y_left,
                            toy.split_y_right, toy.classes);
  return toy;
}

ClassMask gen_polygon_scene(const PolygonSceneConfig& config, std::uint64_t seed) {
  require(config.size >= 1 && config.classes >= 2, "invalid polygon scene config");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(config.polygons_min, config.polygons_max);
  std::uniform_int_distribution<int> vertices(config.vertices_min, config.vertices_max);
  std::uniform_real_distribution<double> pos(0.0, config.size);
  std::uniform_real_distribution<double> radius(config.radius_min, config.radius_max);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> cls(1, config.classes - 1);

  ClassMask mask(config.size, config.size, 0);
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const double cx = pos(rng);
    const double cy = pos(rng);
    const double r = radius(rng);
    const int nv = vertices(rng);
    std::vector<double> angles(nv);
    for (double& a : angles) a = angle(rng);
    std::sort(angles.begin(), angles.end());
    std::vector<std::array<double, 2>> poly;
    for (double a : angles) poly.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
    const auto c = static_cast<std::uint8_t>(cls(rng));
    // Vertices on a circle sorted by angle form a convex polygon with
    // counter-clockwise orientation (in a y-down frame: clockwise on screen).
    for (int y = 0; y < config.size; ++y) {
      for (int x = 0; x < config.size; ++x) {
        const double px = x + 0.5;
        const double py = y + 0.5;
        bool inside = nv >= 3;
        for (int v = 0; v < nv && inside; ++v) {
          const auto& a = poly[v];
          const auto& b = poly[(v + 1) % nv];
          const double cross = (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
          inside = cross >= 0.0;
        }
        if (inside) mask.at(x, y) = c;
      }
    }
  }
  return mask;
}

ClassMask gen_partition_composite(int size, int classes, std::uint64_t seed) {
  require(size >= 2 && size % 2 == 0, "composite size must be even");
  ToyConfig cfg;
  cfg.image_size = size / 2;
  cfg.classes = classes;
  ClassMask out(size, size);
  for (int tile = 0; tile < 4; ++tile) {
    const PartitionToy toy = gen_partition_toy(cfg, seed * 4 + tile);
    const int ox = (tile % 2) * cfg.image_size;
    const int oy = (tile / 2) * cfg.image_size;
    for (int y = 0; y < cfg.image_size; ++y) {
      for (int x = 0; x < cfg.image_size; ++x) out.at(ox + x, oy + y) = toy.mask.at(x, y);
    }
  }
  return out;
}

}  // namespace segforest
