// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/sdf.hpp"

#include <string>

namespace segforest {

int parameter_count(SdfKind kind) {
  switch (kind) {
    case SdfKind::kLine:
    case SdfKind::kSquare:
    case SdfKind::kCircle:
    case SdfKind::kDynKd:
      return 3;
    case SdfKind::kEllipse:
    case SdfKind::kHyperbola:
    case SdfKind::kParabola:
      return 5;
    case SdfKind::kKdX:
    case SdfKind::kKdY:
      return 1;
  }
  throw ContractError("parameter_count: unknown kind");
}

char sdf_code(SdfKind kind) {
  switch (kind) {
    case SdfKind::kLine: return 'L';
    case SdfKind::kSquare: return 'S';
    case SdfKind::kCircle: return 'C';
    case SdfKind::kEllipse: return 'E';
    case SdfKind::kHyperbola: return 'H';
    case SdfKind::kParabola: return 'P';
    case SdfKind::kKdX: return 'X';
    case SdfKind::kKdY: return 'Y';
    case SdfKind::kDynKd: return 'D';
  }
  throw ContractError("sdf_code: unknown kind");
}

SdfKind sdf_from_code(char code) {
  for (SdfKind k : kAllSdfKinds) {
    if (sdf_code(k) == code) return k;
  }
  throw ParseError(std::string("unknown SDF code '") + code + "'");
}

std::string_view sdf_name(SdfKind kind) {
  switch (kind) {
    case SdfKind::kLine: return "line";
    case SdfKind::kSquare: return "square";
    case SdfKind::kCircle: return "circle";
    case SdfKind::kEllipse: return "ellipse";
    case SdfKind::kHyperbola: return "hyperbola";
    case SdfKind::kParabola: return "parabola";
    case SdfKind::kKdX: return "kdx";
    case SdfKind::kKdY: return "kdy";
    case SdfKind::kDynKd: return "dynkd";
  }
  return "?";
}

SdfKind sdf_from_name(std::string_view name) {
  for (SdfKind k : kAllSdfKinds) {
    if (sdf_name(k) == name) return k;
  }
  throw ParseError("unknown SDF name '" + std::string(name) + "'");
}

}  // namespace segforest
