// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gengs {

class Tape;

// Handle to one tape node. Values are float64 scalars (length 1) or small
// dense vectors; adjoints mirror the value shape after Tape::backward.
class Var {
 public:
  Var() = default;

  double value() const;
  const std::vector<double>& values() const;
  double adjoint() const;
  const std::vector<double>& adjoints() const;
  std::size_t size() const;
  bool is_scalar() const { return size() == 1; }

  int id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Record-and-replay reverse-mode tape. Nodes are appended in evaluation
// order, which is already a topological order, so the backward pass is a
// single reverse sweep. A tape is built fresh per gradient query and
// discarded; nothing is reused across invocations.
class Tape {
 public:
  // Leaves. Inputs are differentiated; constants never receive gradient.
  Var input(double value);
  Var input(std::vector<double> values);
  Var constant(double value);
  Var constant(std::vector<double> values);

  // Elementwise arithmetic; operands must share a shape.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var log(Var a);
  Var exp(Var a);
  Var softplus(Var a);
  Var sigmoid(Var a);
  Var lgamma(Var a);
  // max(a, floor) elementwise; gradient flows only where a > floor.
  Var clamp_min(Var a, double floor);

  // Shape-changing primitives.
  Var sum(Var a);                          // vector -> scalar
  Var dot(Var a, Var b);                   // vector x vector -> scalar
  Var scale(Var s, Var v);                 // scalar * vector -> vector
  Var stack(std::span<const Var> parts);   // scalars -> vector
  Var index(Var v, int k);                 // vector -> scalar
  Var gather(Var v, std::span<const int> idx);

  // softmax(logits / tau). Backward applies the exact Jacobian-vector
  // product (1/tau) * (diag(s) - s s^T) v.
  Var softmax_with_temperature(Var logits, double tau);

  // Forward value is discrete_value; backward passes the adjoint through
  // to the relaxed input unchanged (straight-through routing).
  Var st_passthrough(Var relaxed, double discrete_value);

  // Reverse sweep from a scalar root: zeroes every adjoint, seeds the root
  // with 1, accumulates d(root)/d(node) into all ancestors. Calling it
  // again on the same root reproduces identical adjoints.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    kInput,
    kConstant,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kLog,
    kExp,
    kSoftplus,
    kSigmoid,
    kLgamma,
    kClampMin,
    kSum,
    kDot,
    kScale,
    kStack,
    kIndex,
    kGather,
    kSoftmaxTemp,
    kStPassthrough,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double aux = 0.0;           // tau, clamp floor, or ST forward value
    std::vector<int> list;      // stack operands or gather indices
    std::vector<double> value;
  };

  friend class Var;

  Var emit(Node node);
  const Node& at(Var v) const;
  void check_same_shape(const Var& a, const Var& b, const char* op) const;
  void check_vector(const Var& a, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> adjoints_;
};

// Operator sugar; each forwards to the owning tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(double a, Var b);
Var operator+(Var a, double b);
Var operator-(double a, Var b);
Var operator-(Var a, double b);
Var operator*(double a, Var b);
Var operator*(Var a, double b);
Var operator/(double a, Var b);
Var operator/(Var a, double b);

}  // namespace gengs
