// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalar reverse-mode automatic differentiation.
//
// A Tape records every operation as a node holding its forward value. Node
// operands always precede the node itself, so a single reverse sweep
// propagates adjoints. DiffValue is a lightweight handle (tape, index, value).
// A DiffValue without a tape is a plain constant; combining it with a taped
// value emits a constant-operand node instead of a separate constant node.
//
// The free functions relu/sigmoid/exp/... are overloaded for double as well,
// so numerical kernels can be written once as templates over the scalar type
// and evaluated either plainly or on a tape with bit-identical forward values.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "segforest/errors.hpp"

namespace segforest {

enum class OpKind : std::uint8_t {
  kConst,
  kVar,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAbs,
  kMax2,
  kRelu,
  kSigmoid,
  kSquare,
  kSqrt,
  kLogGuarded,
  kExp,
  // Constant-operand forms; the constant lives in the node's aux slot.
  kAddConst,
  kMulConst,
  kDivConst,
  kConstSub,
  kConstDiv,
};

const char* op_name(OpKind kind);

/// Floor applied by log_guarded.
inline constexpr double kLogFloor = 1e-12;

class Tape;

class DiffValue {
 public:
  DiffValue() = default;
  // Implicit on purpose: lets templated kernels write `T(1.0)` and mix
  // literals with taped values.
  DiffValue(double constant) : value_(constant) {}  // NOLINT

  double value() const { return value_; }
  Tape* tape() const { return tape_; }
  std::uint32_t index() const { return index_; }
  bool is_constant() const { return tape_ == nullptr; }

 private:
  friend class Tape;
  DiffValue(Tape* tape, std::uint32_t index, double value)
      : tape_(tape), index_(index), value_(value) {}

  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  double value_ = 0.0;
};

/// Adjoints of the variable nodes of a tape, in variable creation order.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<std::uint32_t> nodes, std::vector<double> grads)
      : nodes_(std::move(nodes)), grads_(std::move(grads)) {}

  std::size_t size() const { return grads_.size(); }
  bool empty() const { return grads_.empty(); }
  /// Gradient with respect to a variable; 0 for non-variables.
  double wrt(const DiffValue& variable) const;
  std::span<const double> values() const { return grads_; }
  std::span<const std::uint32_t> nodes() const { return nodes_; }

 private:
  std::vector<std::uint32_t> nodes_;
  std::vector<double> grads_;
};

class Tape {
 public:
  struct Node {
    double value;
    double aux;
    std::uint32_t a;
    std::uint32_t b;
    OpKind kind;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Drops all nodes but keeps the allocation.
  void clear();
  void reserve(std::size_t nodes) { nodes_.reserve(nodes); }

  DiffValue lift(double constant);
  DiffValue variable(double initial);

  /// Generic entry point; operator overloads and the free functions below
  /// route through the same node constructors.
  DiffValue apply(OpKind kind, std::span<const DiffValue> operands);

  Gradients backward(const DiffValue& output) const;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::uint32_t index) const { return nodes_[index]; }
  std::span<const std::uint32_t> variables() const { return variables_; }

  /// Smallest |argument| over all non-smooth nodes (relu, abs, sqrt, and the
  /// operand difference of max2). Infinity when there are none.
  double min_kink_distance() const;

  // Node constructors used by the operators. Operands must live on this tape.
  DiffValue unary(OpKind kind, const DiffValue& x);
  DiffValue binary(OpKind kind, const DiffValue& x, const DiffValue& y);
  DiffValue with_const(OpKind kind, const DiffValue& x, double c);

 private:
  DiffValue push(OpKind kind, double value, std::uint32_t a, std::uint32_t b,
                 double aux);
  [[noreturn]] void domain_failure(const char* what) const;

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> variables_;
};

// ---------------------------------------------------------------------------
// Operators on DiffValue.

DiffValue operator+(const DiffValue& x, const DiffValue& y);
DiffValue operator-(const DiffValue& x, const DiffValue& y);
DiffValue operator*(const DiffValue& x, const DiffValue& y);
DiffValue operator/(const DiffValue& x, const DiffValue& y);
DiffValue operator-(const DiffValue& x);

inline DiffValue operator+(const DiffValue& x, double c) { return x + DiffValue(c); }
inline DiffValue operator+(double c, const DiffValue& x) { return DiffValue(c) + x; }
inline DiffValue operator-(const DiffValue& x, double c) { return x - DiffValue(c); }
inline DiffValue operator-(double c, const DiffValue& x) { return DiffValue(c) - x; }
inline DiffValue operator*(const DiffValue& x, double c) { return x * DiffValue(c); }
inline DiffValue operator*(double c, const DiffValue& x) { return DiffValue(c) * x; }
inline DiffValue operator/(const DiffValue& x, double c) { return x / DiffValue(c); }
inline DiffValue operator/(double c, const DiffValue& x) { return DiffValue(c) / x; }

inline DiffValue& operator+=(DiffValue& x, const DiffValue& y) { return x = x + y; }

DiffValue abs(const DiffValue& x);
DiffValue max2(const DiffValue& x, const DiffValue& y);
DiffValue relu(const DiffValue& x);
DiffValue sigmoid(const DiffValue& x);
DiffValue square(const DiffValue& x);
DiffValue sqrt(const DiffValue& x);
DiffValue log_guarded(const DiffValue& x);
DiffValue exp(const DiffValue& x);

// ---------------------------------------------------------------------------
// The same vocabulary on plain doubles, with identical rounding.

inline double value_of(double x) { return x; }
inline double value_of(const DiffValue& x) { return x.value(); }

inline double max2(double x, double y) { return x >= y ? x : y; }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double square(double x) { return x * x; }
inline double log_guarded(double x) { return std::log(x > kLogFloor ? x : kLogFloor); }
double checked_sqrt(double x);
inline double sqrt(double x) { return checked_sqrt(x); }
using std::abs;
using std::exp;

// ---------------------------------------------------------------------------
// Finite-difference verification.

/// A scalar function of a parameter vector, written against the tape.
using TapeFunction =
    std::function<DiffValue(Tape&, std::span<const DiffValue>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  /// Coordinates whose central difference or analytic value was non-finite.
  int failures = 0;
  bool passed(double tolerance) const {
    return failures == 0 && max_rel_error < tolerance;
  }
};

/// Compares reverse-mode gradients against central differences:
/// max over coordinates of |analytic − fd| / max(1, |analytic|, |fd|).
GradCheckResult grad_check(const TapeFunction& function,
                           std::span<const double> point, double step);

}  // namespace segforest
