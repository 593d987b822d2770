// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Signed distance functions used by BSP and k-d inner nodes. All functions are
// evaluated in block-normalized coordinates: pixel (x, y) of an S×S block has
// center ((2x+1)/S − 1, (2y+1)/S − 1), so both axes span [−1, 1].

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "segforest/errors.hpp"
#include "segforest/grad.hpp"

namespace segforest {

enum class SdfKind : std::uint8_t {
  kLine,
  kSquare,
  kCircle,
  kEllipse,
  kHyperbola,
  kParabola,
  kKdX,
  kKdY,
  kDynKd,
};

inline constexpr std::array<SdfKind, 9> kAllSdfKinds = {
    SdfKind::kLine,    SdfKind::kSquare,   SdfKind::kCircle,
    SdfKind::kEllipse, SdfKind::kHyperbola, SdfKind::kParabola,
    SdfKind::kKdX,     SdfKind::kKdY,      SdfKind::kDynKd};

struct Point {
  double p1 = 0.0;
  double p2 = 0.0;
};

/// Center of pixel `index` on an axis sampled with `extent` pixels.
inline double pixel_center(int index, int extent) {
  return (2.0 * index + 1.0) / extent - 1.0;
}

int parameter_count(SdfKind kind);

/// One-byte codes used by the SFF1 forest format.
char sdf_code(SdfKind kind);
SdfKind sdf_from_code(char code);  // throws ParseError

/// Lower-case name used by the tree DSL ("line", "circle", ...).
std::string_view sdf_name(SdfKind kind);
SdfKind sdf_from_name(std::string_view name);  // throws ParseError

// Parameter orders:
//   Line      n1 n2 d            f = n·p − d
//   Square    x1 x2 s            f = max(|x1−p1|, |x2−p2|) − s
//   Circle    x1 x2 r            f = ‖x−p‖² − r
//   Ellipse   x1 x2 y1 y2 c      f = ‖x−p‖ + ‖y−p‖ − c
//   Hyperbola x1 x2 y1 y2 c      f = |‖x−p‖ − ‖y−p‖| − c
//   Parabola  x1 x2 n1 n2 d      f = ‖x−p‖ − (n·p − d)
//   KdX/KdY   t                  f = t − p_i
//   DynKd     g1 g2 t            f = t − (a1 p1 + a2 p2), a = softmax(g)
template <class T>
T eval_sdf(SdfKind kind, std::span<const T> params, Point p) {
  if (static_cast<int>(params.size()) != parameter_count(kind)) {
    throw ContractError("eval_sdf: wrong parameter count");
  }
  auto norm = [&](const T& cx, const T& cy) {
    return sqrt(square(cx - p.p1) + square(cy - p.p2));
  };
  switch (kind) {
    case SdfKind::kLine:
      return params[0] * p.p1 + params[1] * p.p2 - params[2];
    case SdfKind::kSquare:
      return max2(abs(params[0] - p.p1), abs(params[1] - p.p2)) - params[2];
    case SdfKind::kCircle:
      return square(params[0] - p.p1) + square(params[1] - p.p2) - params[2];
    case SdfKind::kEllipse:
      return norm(params[0], params[1]) + norm(params[2], params[3]) - params[4];
    case SdfKind::kHyperbola:
      return abs(norm(params[0], params[1]) - norm(params[2], params[3])) -
             params[4];
    case SdfKind::kParabola:
      return norm(params[0], params[1]) -
             (params[2] * p.p1 + params[3] * p.p2 - params[4]);
    case SdfKind::kKdX:
      return params[0] - p.p1;
    case SdfKind::kKdY:
      return params[0] - p.p2;
    case SdfKind::kDynKd: {
      const double shift = max2(value_of(params[0]), value_of(params[1]));
      const T e1 = exp(params[0] - shift);
      const T e2 = exp(params[1] - shift);
      const T total = e1 + e2;
      return params[2] - (e1 / total * p.p1 + e2 / total * p.p2);
    }
  }
  throw ContractError("eval_sdf: unknown kind");
}

}  // namespace segforest
