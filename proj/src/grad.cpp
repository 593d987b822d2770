// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#include "segforest/grad.hpp"

#include <algorithm>
#include <cstdio>

namespace segforest {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConst: return "const";
    case OpKind::kVar: return "var";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kAbs: return "abs";
    case OpKind::kMax2: return "max2";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kLogGuarded: return "log_guarded";
    case OpKind::kExp: return "exp";
    case OpKind::kAddConst: return "add_const";
    case OpKind::kMulConst: return "mul_const";
    case OpKind::kDivConst: return "div_const";
    case OpKind::kConstSub: return "const_sub";
    case OpKind::kConstDiv: return "const_div";
  }
  return "?";
}

double checked_sqrt(double x) {
  if (!(x >= 0.0)) throw DomainError("sqrt of negative operand");
  return std::sqrt(x);
}

double Gradients::wrt(const DiffValue& variable) const {
  if (variable.is_constant()) return 0.0;
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), variable.index());
  if (it == nodes_.end() || *it != variable.index()) return 0.0;
  return grads_[static_cast<std::size_t>(it - nodes_.begin())];
}

void Tape::clear() {
  nodes_.clear();
  variables_.clear();
}

DiffValue Tape::push(OpKind kind, double value, std::uint32_t a,
                     std::uint32_t b, double aux) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{value, aux, a, b, kind});
  return DiffValue(this, index, value);
}

void Tape::domain_failure(const char* what) const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "domain error at node %zu: %s",
                nodes_.size(), what);
  throw DomainError(buf);
}

DiffValue Tape::lift(double constant) {
  if (!std::isfinite(constant)) domain_failure("non-finite constant");
  return push(OpKind::kConst, constant, 0, 0, 0.0);
}

DiffValue Tape::variable(double initial) {
  if (!std::isfinite(initial)) domain_failure("non-finite variable");
  DiffValue v = push(OpKind::kVar, initial, 0, 0, 0.0);
  variables_.push_back(v.index());
  return v;
}

DiffValue Tape::unary(OpKind kind, const DiffValue& x) {
  const double a = x.value();
  double y = 0.0;
  switch (kind) {
    case OpKind::kNeg: y = -a; break;
    case OpKind::kAbs: y = std::abs(a); break;
    case OpKind::kRelu: y = relu(a); break;
    case OpKind::kSigmoid: y = sigmoid(a); break;
    case OpKind::kSquare: y = a * a; break;
    case OpKind::kSqrt:
      if (!(a >= 0.0)) domain_failure("sqrt of negative operand");
      y = std::sqrt(a);
      break;
    case OpKind::kLogGuarded: y = log_guarded(a); break;
    case OpKind::kExp: y = std::exp(a); break;
    default: throw ContractError(std::string("not a unary op: ") + op_name(kind));
  }
  return push(kind, y, x.index(), 0, 0.0);
}

DiffValue Tape::binary(OpKind kind, const DiffValue& x, const DiffValue& y) {
  const double a = x.value();
  const double b = y.value();
  double r = 0.0;
  switch (kind) {
    case OpKind::kAdd: r = a + b; break;
    case OpKind::kSub: r = a - b; break;
    case OpKind::kMul: r = a * b; break;
    case OpKind::kDiv:
      if (b == 0.0) domain_failure("division by zero");
      r = a / b;
      break;
    case OpKind::kMax2: r = max2(a, b); break;
    default: throw ContractError(std::string("not a binary op: ") + op_name(kind));
  }
  return push(kind, r, x.index(), y.index(), 0.0);
}

DiffValue Tape::with_const(OpKind kind, const DiffValue& x, double c) {
  const double a = x.value();
  double r = 0.0;
  switch (kind) {
    case OpKind::kAddConst: r = a + c; break;
    case OpKind::kMulConst: r = a * c; break;
    case OpKind::kDivConst:
      if (c == 0.0) domain_failure("division by zero");
      r = a / c;
      break;
    case OpKind::kConstSub: r = c - a; break;
    case OpKind::kConstDiv:
      if (a == 0.0) domain_failure("division by zero");
      r = c / a;
      break;
    default: throw ContractError(std::string("not a constant op: ") + op_name(kind));
  }
  return push(kind, r, x.index(), 0, c);
}

namespace {

Tape* common_tape(const DiffValue& x, const DiffValue& y) {
  Tape* t = x.tape() ? x.tape() : y.tape();
  if (x.tape() && y.tape() && x.tape() != y.tape()) {
    throw ContractError("operands reference different tapes");
  }
  return t;
}

DiffValue on_tape(Tape* tape, const DiffValue& x) {
  return x.is_constant() ? tape->lift(x.value()) : x;
}

}  // namespace

DiffValue Tape::apply(OpKind kind, std::span<const DiffValue> operands) {
  auto need = [&](std::size_t n) {
    if (operands.size() != n) {
      throw ContractError(std::string("wrong operand count for ") + op_name(kind));
    }
  };
  for (const auto& op : operands) {
    if (!op.is_constant() && op.tape() != this) {
      throw ContractError("operand belongs to another tape");
    }
  }
  switch (kind) {
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv:
    case OpKind::kMax2:
      need(2);
      return binary(kind, on_tape(this, operands[0]), on_tape(this, operands[1]));
    case OpKind::kNeg:
    case OpKind::kAbs:
    case OpKind::kRelu:
    case OpKind::kSigmoid:
    case OpKind::kSquare:
    case OpKind::kSqrt:
    case OpKind::kLogGuarded:
    case OpKind::kExp:
      need(1);
      return unary(kind, on_tape(this, operands[0]));
    default:
      throw ContractError(std::string("apply does not accept ") + op_name(kind));
  }
}

Gradients Tape::backward(const DiffValue& output) const {
  if (output.is_constant()) return {};
  if (output.tape() != this) throw ContractError("output is not on this tape");
  std::vector<double> adj(output.index() + 1, 0.0);
  adj[output.index()] = 1.0;
  for (std::uint32_t i = output.index() + 1; i-- > 0;) {
    const double g = adj[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    switch (n.kind) {
      case OpKind::kConst:
      case OpKind::kVar:
        break;
      case OpKind::kAdd:
        adj[n.a] += g;
        adj[n.b] += g;
        break;
      case OpKind::kSub:
        adj[n.a] += g;
        adj[n.b] -= g;
        break;
      case OpKind::kMul:
        adj[n.a] += g * nodes_[n.b].value;
        adj[n.b] += g * nodes_[n.a].value;
        break;
      case OpKind::kDiv: {
        const double den = nodes_[n.b].value;
        adj[n.a] += g / den;
        adj[n.b] -= g * n.value / den;
        break;
      }
      case OpKind::kNeg:
        adj[n.a] -= g;
        break;
      case OpKind::kAbs: {
        const double a = nodes_[n.a].value;
        if (a > 0.0) adj[n.a] += g;
        else if (a < 0.0) adj[n.a] -= g;
        break;
      }
      case OpKind::kMax2:
        if (nodes_[n.a].value >= nodes_[n.b].value) adj[n.a] += g;
        else adj[n.b] += g;
        break;
      case OpKind::kRelu:
        if (nodes_[n.a].value > 0.0) adj[n.a] += g;
        break;
      case OpKind::kSigmoid:
        adj[n.a] += g * n.value * (1.0 - n.value);
        break;
      case OpKind::kSquare:
        adj[n.a] += 2.0 * nodes_[n.a].value * g;
        break;
      case OpKind::kSqrt:
        if (n.value > 0.0) adj[n.a] += g * 0.5 / n.value;
        break;
      case OpKind::kLogGuarded: {
        const double a = nodes_[n.a].value;
        if (a > kLogFloor) adj[n.a] += g / a;
        break;
      }
      case OpKind::kExp:
        adj[n.a] += g * n.value;
        break;
      case OpKind::kAddConst:
      case OpKind::kConstSub:
        adj[n.a] += n.kind == OpKind::kAddConst ? g : -g;
        break;
      case OpKind::kMulConst:
        adj[n.a] += g * n.aux;
        break;
      case OpKind::kDivConst:
        adj[n.a] += g / n.aux;
        break;
      case OpKind::kConstDiv:
        adj[n.a] -= g * n.value / nodes_[n.a].value;
        break;
    }
  }
  std::vector<std::uint32_t> vars;
  std::vector<double> grads;
  vars.reserve(variables_.size());
  grads.reserve(variables_.size());
  for (std::uint32_t v : variables_) {
    if (v > output.index()) break;
    vars.push_back(v);
    grads.push_back(adj[v]);
  }
  return Gradients(std::move(vars), std::move(grads));
}

double Tape::min_kink_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (const Node& n : nodes_) {
    switch (n.kind) {
      case OpKind::kRelu:
      case OpKind::kAbs:
      case OpKind::kSqrt:
        best = std::min(best, std::abs(nodes_[n.a].value));
        break;
      case OpKind::kMax2:
        best = std::min(best, std::abs(nodes_[n.a].value - nodes_[n.b].value));
        break;
      default:
        break;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

DiffValue operator+(const DiffValue& x, const DiffValue& y) {
  Tape* t = common_tape(x, y);
  if (!t) return DiffValue(x.value() + y.value());
  if (x.is_constant()) return t->with_const(OpKind::kAddConst, y, x.value());
  if (y.is_constant()) return t->with_const(OpKind::kAddConst, x, y.value());
  return t->binary(OpKind::kAdd, x, y);
}

DiffValue operator-(const DiffValue& x, const DiffValue& y) {
  Tape* t = common_tape(x, y);
  if (!t) return DiffValue(x.value() - y.value());
  if (x.is_constant()) return t->with_const(OpKind::kConstSub, y, x.value());
  if (y.is_constant()) return t->with_const(OpKind::kAddConst, x, -y.value());
  return t->binary(OpKind::kSub, x, y);
}

DiffValue operator*(const DiffValue& x, const DiffValue& y) {
  Tape* t = common_tape(x, y);
  if (!t) return DiffValue(x.value() * y.value());
  if (x.is_constant()) return t->with_const(OpKind::kMulConst, y, x.value());
  if (y.is_constant()) return t->with_const(OpKind::kMulConst, x, y.value());
  return t->binary(OpKind::kMul, x, y);
}

DiffValue operator/(const DiffValue& x, const DiffValue& y) {
  Tape* t = common_tape(x, y);
  if (!t) {
    if (y.value() == 0.0) throw DomainError("division by zero");
    return DiffValue(x.value() / y.value());
  }
  if (x.is_constant()) return t->with_const(OpKind::kConstDiv, y, x.value());
  if (y.is_constant()) return t->with_const(OpKind::kDivConst, x, y.value());
  return t->binary(OpKind::kDiv, x, y);
}

DiffValue operator-(const DiffValue& x) {
  if (x.is_constant()) return DiffValue(-x.value());
  return x.tape()->unary(OpKind::kNeg, x);
}

namespace {

template <class F>
DiffValue unary_or_const(OpKind kind, const DiffValue& x, F&& plain) {
  if (x.is_constant()) return DiffValue(plain(x.value()));
  return x.tape()->unary(kind, x);
}

}  // namespace

DiffValue abs(const DiffValue& x) {
  return unary_or_const(OpKind::kAbs, x, [](double a) { return std::abs(a); });
}
DiffValue relu(const DiffValue& x) {
  return unary_or_const(OpKind::kRelu, x, [](double a) { return relu(a); });
}
DiffValue sigmoid(const DiffValue& x) {
  return unary_or_const(OpKind::kSigmoid, x, [](double a) { return sigmoid(a); });
}
DiffValue square(const DiffValue& x) {
  return unary_or_const(OpKind::kSquare, x, [](double a) { return a * a; });
}
DiffValue sqrt(const DiffValue& x) {
  return unary_or_const(OpKind::kSqrt, x, [](double a) { return checked_sqrt(a); });
}
DiffValue log_guarded(const DiffValue& x) {
  return unary_or_const(OpKind::kLogGuarded, x,
                        [](double a) { return log_guarded(a); });
}
DiffValue exp(const DiffValue& x) {
  return unary_or_const(OpKind::kExp, x, [](double a) { return std::exp(a); });
}

DiffValue max2(const DiffValue& x, const DiffValue& y) {
  Tape* t = common_tape(x, y);
  if (!t) return DiffValue(max2(x.value(), y.value()));
  return t->binary(OpKind::kMax2, on_tape(t, x), on_tape(t, y));
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const TapeFunction& function,
                           std::span<const double> point, double step) {
  require(step > 0.0, "grad_check step must be positive");
  GradCheckResult result;

  auto evaluate = [&](std::span<const double> x) {
    Tape tape;
    std::vector<DiffValue> vars;
    vars.reserve(x.size());
    for (double v : x) vars.push_back(tape.variable(v));
    return function(tape, vars).value();
  };

  Tape tape;
  std::vector<DiffValue> vars;
  vars.reserve(point.size());
  for (double v : point) vars.push_back(tape.variable(v));
  const DiffValue out = function(tape, vars);
  const Gradients grads = tape.backward(out);

  std::vector<double> x(point.begin(), point.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double analytic = grads.wrt(vars[i]);
    const double saved = x[i];
    x[i] = saved + step;
    const double up = evaluate(x);
    x[i] = saved - step;
    const double down = evaluate(x);
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
      ++result.failures;
      continue;
    }
    const double scale =
        std::max({1.0, std::abs(analytic), std::abs(numeric)});
    result.max_rel_error =
        std::max(result.max_rel_error, std::abs(analytic - numeric) / scale);
  }
  return result;
}

}  // namespace segforest
