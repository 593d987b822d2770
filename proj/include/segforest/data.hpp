// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Class masks, PGM/PPM I/O, block padding and synthetic mask generators.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace segforest {

inline constexpr std::uint8_t kIgnoreIndex = 255;

/// Grid of class indices; 255 marks ignored pixels.
struct ClassMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // row-major

  ClassMask() = default;
  ClassMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

  /// 1 + largest non-ignored value (0 for an all-ignored mask).
  int class_count() const;
  /// Throws ContractError if any value is neither < classes nor 255.
  void validate(int classes) const;

  bool operator==(const ClassMask&) const = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// Binary PGM (P5, maxval 255); pixel value = class index.
ClassMask load_mask(std::string_view bytes);  // throws ParseError
std::string save_mask(const ClassMask& mask);
/// Binary PPM (P6).
std::string save_ppm(const RgbImage& image);
RgbImage load_ppm(std::string_view bytes);  // throws ParseError

std::string read_file(const std::string& path);  // throws ParseError
void write_file(const std::string& path, std::string_view bytes);  // throws ParseError

/// Pads right/bottom with the ignore index up to the next multiple of
/// block_size. Rejects empty masks.
ClassMask pad_to_blocks(const ClassMask& mask, int block_size);

/// Class c ↦ RGB-cube corner: bit 0 → red, bit 1 → green, bit 2 → blue.
std::array<std::uint8_t, 3> palette_color(int c);
/// Palette rendering of a mask; ignored pixels are drawn mid-gray.
RgbImage colorize(const ClassMask& mask);

// ---------------------------------------------------------------------------
// Synthetic data.

struct ToyConfig {
  int image_size = 128;
  int classes = 8;  // palette size; class 0 is the circle toy's background
  int circles_min = 5;
  int circles_max = 12;
  double radius_min = 8.0;
  double radius_max = 32.0;
  double split_min = 0.25;  // fraction of the image extent
  double split_max = 0.75;

  void validate() const;
};

struct Circle {
  double cx = 0, cy = 0, radius = 0;
  int cls = 1;
};

struct CirclesToy {
  ClassMask mask;
  RgbImage image;
  std::vector<Circle> circles;
};

/// Draws circles in order onto background class 0; later circles overdraw
/// earlier ones. Membership is decided at pixel centers.
ClassMask draw_circles(int size, const std::vector<Circle>& circles);
CirclesToy gen_circles_toy(const ToyConfig& config, std::uint64_t seed);

struct PartitionToy {
  ClassMask mask;
  int split_x = 0;        // columns [0, split_x) form the left segment
  int split_y_left = 0;   // rows [0, split_y_left) form the top of the left segment
  int split_y_right = 0;
  std::array<int, 4> classes{};  // left-top, left-bottom, right-top, right-bottom
};

/// Vertical split, then an independent horizontal split of each segment;
/// 3–4 distinct classes.
PartitionToy gen_partition_toy(const ToyConfig& config, std::uint64_t seed);
ClassMask draw_partition(int size, int split_x, int split_y_left, int split_y_right,
                         const std::array<int, 4>& classes);

struct PolygonSceneConfig {
  int size = 256;
  int classes = 6;  // class 0 is background
  int polygons_min = 3;
  int polygons_max = 6;
  double radius_min = 30.0;
  double radius_max = 80.0;
  int vertices_min = 3;
  int vertices_max = 8;
};

/// Random convex polygons over a background, drawn in order.
ClassMask gen_polygon_scene(const PolygonSceneConfig& config, std::uint64_t seed);

/// 2×2 tiling of partition toys of half the size, all using `classes` classes.
ClassMask gen_partition_composite(int size, int classes, std::uint64_t seed);

}  // namespace segforest
