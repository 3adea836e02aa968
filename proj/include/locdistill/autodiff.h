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
#ifndef LOCDISTILL_AUTODIFF_H_
#define LOCDISTILL_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace locdistill {

class Tape;

// Handle to a vector-valued node recorded on a Tape. Cheap to copy; only
// valid while the owning tape is alive and not cleared.
class Var {
 public:
  Var() = default;

  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }
  std::span<const double> value() const;
  std::size_t size() const;
  // Value of a size-1 node.
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Adjoints of every differentiable leaf reachable from the root.
class Gradients {
 public:
  // Zero vector of the right size for leaves the root does not depend on.
  std::vector<double> of(Var leaf) const;
  bool contains(Var leaf) const { return adjoints_.count(leaf.id()) > 0; }

 private:
  friend class Tape;
  std::unordered_map<std::size_t, std::vector<double>> adjoints_;
};

enum class Op {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kShift,
  kExp,
  kLog,
  kRelu,
  kMaximum,
  kMinimum,
  kClampMin,
  kSum,
  kMaxReduce,
  kDot,
  kAffine,
  kSlice,
};

// Dynamic reverse-mode tape over double-precision vectors. Binary
// elementwise ops broadcast size-1 operands. Rebuilt for every evaluation;
// single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable leaf.
  Var input(std::vector<double> value);
  // Leaf that never receives an adjoint (e.g. teacher parameters).
  Var frozen(std::vector<double> value);
  Var constant(std::vector<double> value);
  Var constant(double value) { return constant(std::vector<double>{value}); }

  // Reverse sweep from a size-1 root. Throws DomainError for a non-scalar
  // root and NumericError naming the node when a NaN/inf value or adjoint
  // is met.
  Gradients backward(Var root) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  bool is_frozen(Var v) const { return nodes_[v.id()].frozen; }

  // Recording primitives; prefer the free functions below.
  Var record(Op op, std::vector<double> value, std::initializer_list<Var> args,
             double param = 0.0, std::size_t offset = 0);
  std::span<const double> value_of(std::size_t id) const {
    return nodes_[id].value;
  }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<double> value;
    std::size_t args[3] = {0, 0, 0};
    std::size_t nargs = 0;
    double param = 0.0;
    std::size_t offset = 0;
    bool requires_grad = false;
    bool frozen = false;
    bool leaf = false;
  };

  Var leaf(std::vector<double> value, bool requires_grad, bool frozen);
  void propagate(const Node& node, std::span<const double> adjoint,
                 std::vector<std::vector<double>>& adj) const;

  std::vector<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator-(Var a);

Var exp(Var a);
Var log(Var a);
Var relu(Var a);
Var maximum(Var a, Var b);
Var minimum(Var a, Var b);
// max(a, floor) elementwise; zero gradient where clamped.
Var clamp_min(Var a, double floor);
Var sum(Var a);
Var max_reduce(Var a);
Var dot(Var a, Var b);
// weights (rows x cols, row-major) * x + bias.
Var affine(Var weights, Var x, Var bias);
Var slice(Var a, std::size_t offset, std::size_t length);

// log SoftMax(z / temperature), stabilised by subtracting the max.
Var log_softmax(Var logits, double temperature = 1.0);
Var softmax(Var logits, double temperature = 1.0);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Relative error |a - n| / max(1, |a|, |n|).
double relative_error(double analytic, double numeric);

using ScalarFunction = std::function<Var(Tape&, Var)>;

// Compares backward() against central differences
// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate of x.
GradCheckReport finite_difference_check(const ScalarFunction& f,
                                        std::span<const double> x,
                                        double h = 1e-5);

}  // namespace locdistill

#endif  // LOCDISTILL_AUTODIFF_H_
