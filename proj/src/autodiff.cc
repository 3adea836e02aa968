/* Copyright 2026 The locdistill Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "locdistill/autodiff.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "locdistill/errors.h"

namespace locdistill {

std::span<const double> Var::value() const { return tape_->value_of(id_); }
std::size_t Var::size() const { return value().size(); }

double Var::scalar() const {
  auto v = value();
  if (v.size() != 1) throw DomainError("scalar() on a non-scalar node");
  return v[0];
}

std::vector<double> Gradients::of(Var leaf) const {
  auto it = adjoints_.find(leaf.id());
  if (it != adjoints_.end()) return it->second;
  return std::vector<double>(leaf.size(), 0.0);
}

Var Tape::leaf(std::vector<double> value, bool requires_grad, bool frozen) {
  Node node;
  node.op = Op::kLeaf;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.frozen = frozen;
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(std::vector<double> value) {
  return leaf(std::move(value), true, false);
}

Var Tape::frozen(std::vector<double> value) {
  return leaf(std::move(value), false, true);
}

Var Tape::constant(std::vector<double> value) {
  return leaf(std::move(value), false, false);
}

Var Tape::record(Op op, std::vector<double> value,
                 std::initializer_list<Var> args, double param,
                 std::size_t offset) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.param = param;
  node.offset = offset;
  for (Var a : args) {
    if (&a.tape() != this) throw DomainError("operands live on another tape");
    node.args[node.nargs++] = a.id();
    node.requires_grad = node.requires_grad || nodes_[a.id()].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

namespace {

void check_finite(std::span<const double> v, std::size_t id,
                  const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite ") + what + " at node " +
                         std::to_string(id));
    }
  }
}

// Accumulates a broadcast adjoint back into an operand of size 1 or n.
void accumulate(std::vector<double>& dst, std::size_t i, double g) {
  if (dst.size() == 1) {
    dst[0] += g;
  } else {
    dst[i] += g;
  }
}

inline double at(std::span<const double> v, std::size_t i) {
  return v.size() == 1 ? v[0] : v[i];
}

}  // namespace

void Tape::propagate(const Node& node, std::span<const double> g,
                     std::vector<std::vector<double>>& adj) const {
  auto grad_of = [&](std::size_t k) -> std::vector<double>* {
    const std::size_t id = node.args[k];
    if (!nodes_[id].requires_grad) return nullptr;
    auto& slot = adj[id];
    if (slot.empty()) slot.assign(nodes_[id].value.size(), 0.0);
    return &slot;
  };
  auto val = [&](std::size_t k) -> std::span<const double> {
    return nodes_[node.args[k]].value;
  };
  const std::size_t n = g.size();

  switch (node.op) {
    case Op::kLeaf:
      return;
    case Op::kAdd:
    case Op::kSub: {
      const double sign = node.op == Op::kAdd ? 1.0 : -1.0;
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) accumulate(*da, i, g[i]);
      }
      if (auto* db = grad_of(1)) {
        for (std::size_t i = 0; i < n; ++i) accumulate(*db, i, sign * g[i]);
      }
      return;
    }
    case Op::kMul: {
      auto a = val(0), b = val(1);
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) accumulate(*da, i, g[i] * at(b, i));
      }
      if (auto* db = grad_of(1)) {
        for (std::size_t i = 0; i < n; ++i) accumulate(*db, i, g[i] * at(a, i));
      }
      return;
    }
    case Op::kDiv: {
      auto a = val(0), b = val(1);
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) accumulate(*da, i, g[i] / at(b, i));
      }
      if (auto* db = grad_of(1)) {
        for (std::size_t i = 0; i < n; ++i) {
          const double bi = at(b, i);
          accumulate(*db, i, -g[i] * at(a, i) / (bi * bi));
        }
      }
      return;
    }
    case Op::kScale: {
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) (*da)[i] += g[i] * node.param;
      }
      return;
    }
    case Op::kShift: {
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) (*da)[i] += g[i];
      }
      return;
    }
    case Op::kExp: {
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) (*da)[i] += g[i] * node.value[i];
      }
      return;
    }
    case Op::kLog: {
      auto a = val(0);
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) (*da)[i] += g[i] / a[i];
      }
      return;
    }
    case Op::kRelu: {
      auto a = val(0);
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) {
          if (a[i] > 0.0) (*da)[i] += g[i];
        }
      }
      return;
    }
    case Op::kMaximum:
    case Op::kMinimum: {
      auto a = val(0), b = val(1);
      auto* da = grad_of(0);
      auto* db = grad_of(1);
      for (std::size_t i = 0; i < n; ++i) {
        const double ai = at(a, i), bi = at(b, i);
        const bool pick_a = node.op == Op::kMaximum ? ai >= bi : ai <= bi;
        if (pick_a) {
          if (da) accumulate(*da, i, g[i]);
        } else if (db) {
          accumulate(*db, i, g[i]);
        }
      }
      return;
    }
    case Op::kClampMin: {
      auto a = val(0);
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) {
          if (a[i] >= node.param) (*da)[i] += g[i];
        }
      }
      return;
    }
    case Op::kSum: {
      if (auto* da = grad_of(0)) {
        for (double& d : *da) d += g[0];
      }
      return;
    }
    case Op::kMaxReduce: {
      auto a = val(0);
      if (auto* da = grad_of(0)) {
        const auto it = std::max_element(a.begin(), a.end());
        (*da)[static_cast<std::size_t>(it - a.begin())] += g[0];
      }
      return;
    }
    case Op::kDot: {
      auto a = val(0), b = val(1);
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < a.size(); ++i) (*da)[i] += g[0] * b[i];
      }
      if (auto* db = grad_of(1)) {
        for (std::size_t i = 0; i < b.size(); ++i) (*db)[i] += g[0] * a[i];
      }
      return;
    }
    case Op::kAffine: {
      auto w = val(0), x = val(1);
      const std::size_t rows = n, cols = x.size();
      if (auto* dw = grad_of(0)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          double* row = dw->data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) row[c] += gr * x[c];
        }
      }
      if (auto* dx = grad_of(1)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double gr = g[r];
          if (gr == 0.0) continue;
          const double* row = w.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) (*dx)[c] += gr * row[c];
        }
      }
      if (auto* db = grad_of(2)) {
        for (std::size_t r = 0; r < rows; ++r) (*db)[r] += g[r];
      }
      return;
    }
    case Op::kSlice: {
      if (auto* da = grad_of(0)) {
        for (std::size_t i = 0; i < n; ++i) (*da)[node.offset + i] += g[i];
      }
      return;
    }
  }
}

Gradients Tape::backward(Var root) const {
  if (&root.tape() != this) throw DomainError("root lives on another tape");
  const Node& rnode = nodes_[root.id()];
  if (rnode.value.size() != 1) {
    throw DomainError("backward() needs a scalar root");
  }
  check_finite(rnode.value, root.id(), "value");

  std::vector<std::vector<double>> adj(root.id() + 1);
  Gradients out;
  if (rnode.requires_grad) adj[root.id()] = {1.0};

  for (std::size_t id = root.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || adj[id].empty()) continue;
    check_finite(node.value, id, "value");
    check_finite(adj[id], id, "adjoint");
    if (node.leaf) {
      out.adjoints_[id] = std::move(adj[id]);
      continue;
    }
    propagate(node, adj[id], adj);
    adj[id].clear();
    adj[id].shrink_to_fit();
  }
  return out;
}

namespace {

std::size_t broadcast_size(Var a, Var b) {
  const std::size_t sa = a.size(), sb = b.size();
  if (sa == sb || sb == 1) return sa;
  if (sa == 1) return sb;
  throw DomainError("operand sizes " + std::to_string(sa) + " and " +
                    std::to_string(sb) + " do not broadcast");
}

template <typename F>
Var binary(Op op, Var a, Var b, F f) {
  const std::size_t n = broadcast_size(a, b);
  auto va = a.value(), vb = b.value();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(at(va, i), at(vb, i));
  return a.tape().record(op, std::move(out), {a, b});
}

template <typename F>
Var unary(Op op, Var a, F f, double param = 0.0) {
  auto va = a.value();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = f(va[i]);
  return a.tape().record(op, std::move(out), {a}, param);
}

}  // namespace

Var operator+(Var a, Var b) {
  return binary(Op::kAdd, a, b, [](double x, double y) { return x + y; });
}
Var operator-(Var a, Var b) {
  return binary(Op::kSub, a, b, [](double x, double y) { return x - y; });
}
Var operator*(Var a, Var b) {
  return binary(Op::kMul, a, b, [](double x, double y) { return x * y; });
}
Var operator/(Var a, Var b) {
  return binary(Op::kDiv, a, b, [](double x, double y) { return x / y; });
}
Var operator*(Var a, double c) {
  return unary(Op::kScale, a, [c](double x) { return x * c; }, c);
}
Var operator*(double c, Var a) { return a * c; }
Var operator+(Var a, double c) {
  return unary(Op::kShift, a, [c](double x) { return x + c; }, c);
}
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (a * -1.0) + c; }
Var operator-(Var a) { return a * -1.0; }

Var exp(Var a) {
  return unary(Op::kExp, a, [](double x) { return std::exp(x); });
}
Var log(Var a) {
  return unary(Op::kLog, a, [](double x) { return std::log(x); });
}
Var relu(Var a) {
  return unary(Op::kRelu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Var maximum(Var a, Var b) {
  return binary(Op::kMaximum, a, b,
                [](double x, double y) { return x >= y ? x : y; });
}
Var minimum(Var a, Var b) {
  return binary(Op::kMinimum, a, b,
                [](double x, double y) { return x <= y ? x : y; });
}
Var clamp_min(Var a, double floor) {
  return unary(
      Op::kClampMin, a, [floor](double x) { return x >= floor ? x : floor; },
      floor);
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value()) total += v;
  return a.tape().record(Op::kSum, {total}, {a});
}

Var max_reduce(Var a) {
  auto v = a.value();
  if (v.empty()) throw DomainError("max_reduce of an empty vector");
  return a.tape().record(Op::kMaxReduce, {*std::max_element(v.begin(), v.end())},
                         {a});
}

Var dot(Var a, Var b) {
  auto va = a.value(), vb = b.value();
  if (va.size() != vb.size()) throw DomainError("dot length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) total += va[i] * vb[i];
  return a.tape().record(Op::kDot, {total}, {a, b});
}

Var affine(Var weights, Var x, Var bias) {
  auto w = weights.value(), vx = x.value(), vb = bias.value();
  const std::size_t rows = vb.size(), cols = vx.size();
  if (w.size() != rows * cols) {
    throw DomainError("affine weight shape does not match input/bias");
  }
  std::vector<double> out(vb.begin(), vb.end());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * vx[c];
    out[r] += acc;
  }
  return weights.tape().record(Op::kAffine, std::move(out), {weights, x, bias});
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  auto v = a.value();
  if (offset + length > v.size()) throw DomainError("slice out of range");
  std::vector<double> out(v.begin() + offset, v.begin() + offset + length);
  return a.tape().record(Op::kSlice, std::move(out), {a}, 0.0, offset);
}

Var log_softmax(Var logits, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  Var scaled = logits * (1.0 / temperature);
  Var shifted = scaled - max_reduce(scaled);
  return shifted - log(sum(exp(shifted)));
}

Var softmax(Var logits, double temperature) {
  return exp(log_softmax(logits, temperature));
}

double relative_error(double analytic, double numeric) {
  const double scale =
      std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport finite_difference_check(const ScalarFunction& f,
                                        std::span<const double> x, double h) {
  if (!(h > 0.0)) throw DomainError("finite-difference step must be > 0");
  GradCheckReport report;
  {
    Tape tape;
    Var in = tape.input(std::vector<double>(x.begin(), x.end()));
    Var out = f(tape, in);
    report.analytic = tape.backward(out).of(in);
  }

  auto evaluate = [&](const std::vector<double>& point) {
    Tape tape;
    Var in = tape.input(point);
    const double v = f(tape, in).scalar();
    if (!std::isfinite(v)) {
      throw NumericError("function value is not finite during gradient check");
    }
    return v;
  };

  std::vector<double> point(x.begin(), x.end());
  report.numeric.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + h;
    const double up = evaluate(point);
    point[i] = orig - h;
    const double down = evaluate(point);
    point[i] = orig;
    report.numeric[i] = (up - down) / (2.0 * h);

    const double err = relative_error(report.analytic[i], report.numeric[i]);
    if (i == 0 || err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
      report.analytic_at_worst = report.analytic[i];
      report.numeric_at_worst = report.numeric[i];
    }
  }
  return report;
}

}  // namespace locdistill
