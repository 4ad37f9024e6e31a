// SPDX-License-Identifier: Apache-2.0
#include "gengs/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gengs/numerics.hpp"

namespace gengs {
namespace {

std::string node_tag(const char* op, int id) {
  return std::string(op) + " (node " + std::to_string(id) + ")";
}

}  // namespace

double Var::value() const {
  const auto& v = values();
  if (v.size() != 1) {
    throw std::invalid_argument("Var::value: node is not a scalar");
  }
  return v[0];
}

const std::vector<double>& Var::values() const {
  if (tape_ == nullptr) {
    throw std::invalid_argument("Var: empty handle");
  }
  return tape_->nodes_[static_cast<std::size_t>(id_)].value;
}

double Var::adjoint() const {
  const auto& a = adjoints();
  if (a.size() != 1) {
    throw std::invalid_argument("Var::adjoint: node is not a scalar");
  }
  return a[0];
}

const std::vector<double>& Var::adjoints() const {
  if (tape_ == nullptr) {
    throw std::invalid_argument("Var: empty handle");
  }
  if (tape_->adjoints_.size() != tape_->nodes_.size()) {
    throw std::invalid_argument("Var::adjoints: backward has not run");
  }
  return tape_->adjoints_[static_cast<std::size_t>(id_)];
}

std::size_t Var::size() const { return values().size(); }

Var Tape::emit(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Tape::Node& Tape::at(Var v) const {
  if (v.tape() != this) {
    throw std::invalid_argument("Tape: operand belongs to a different tape");
  }
  return nodes_[static_cast<std::size_t>(v.id())];
}

void Tape::check_same_shape(const Var& a, const Var& b, const char* op) const {
  if (at(a).value.size() != at(b).value.size()) {
    throw std::invalid_argument(std::string(op) + ": operand shapes differ");
  }
}

void Tape::check_vector(const Var& a, const char* op) const {
  if (at(a).value.empty()) {
    throw std::invalid_argument(std::string(op) + ": empty operand");
  }
}

Var Tape::input(double value) { return input(std::vector<double>{value}); }

Var Tape::input(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("input: empty value");
  }
  Node n;
  n.op = Op::kInput;
  n.value = std::move(values);
  return emit(std::move(n));
}

Var Tape::constant(double value) {
  return constant(std::vector<double>{value});
}

Var Tape::constant(std::vector<double> values) {
  if (values.empty()) {
    throw std::invalid_argument("constant: empty value");
  }
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(values);
  return emit(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id();
  n.b = b.id();
  const auto& va = at(a).value;
  const auto& vb = at(b).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] + vb[i];
  return emit(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id();
  n.b = b.id();
  const auto& va = at(a).value;
  const auto& vb = at(b).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] - vb[i];
  return emit(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Node n;
  n.op = Op::kMul;
  n.a = a.id();
  n.b = b.id();
  const auto& va = at(a).value;
  const auto& vb = at(b).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] * vb[i];
  return emit(std::move(n));
}

Var Tape::div(Var a, Var b) {
  check_same_shape(a, b, "div");
  const auto& vb = at(b).value;
  for (double x : vb) {
    if (x == 0.0) {
      throw std::domain_error(node_tag("div: zero divisor", b.id()));
    }
  }
  Node n;
  n.op = Op::kDiv;
  n.a = a.id();
  n.b = b.id();
  const auto& va = at(a).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = va[i] / vb[i];
  return emit(std::move(n));
}

Var Tape::neg(Var a) {
  Node n;
  n.op = Op::kNeg;
  n.a = a.id();
  const auto& va = at(a).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = -va[i];
  return emit(std::move(n));
}

Var Tape::log(Var a) {
  const auto& va = at(a).value;
  for (double x : va) {
    if (!(x > 0.0)) {
      throw std::domain_error(node_tag("log: non-positive input", a.id()));
    }
  }
  Node n;
  n.op = Op::kLog;
  n.a = a.id();
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::log(va[i]);
  return emit(std::move(n));
}

Var Tape::exp(Var a) {
  Node n;
  n.op = Op::kExp;
  n.a = a.id();
  const auto& va = at(a).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::exp(va[i]);
  return emit(std::move(n));
}

Var Tape::softplus(Var a) {
  Node n;
  n.op = Op::kSoftplus;
  n.a = a.id();
  const auto& va = at(a).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    n.value[i] = gengs::softplus(va[i]);
  }
  return emit(std::move(n));
}

Var Tape::sigmoid(Var a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id();
  const auto& va = at(a).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    n.value[i] = gengs::sigmoid(va[i]);
  }
  return emit(std::move(n));
}

Var Tape::lgamma(Var a) {
  const auto& va = at(a).value;
  for (double x : va) {
    if (!(x > 0.0)) {
      throw std::domain_error(node_tag("lgamma: non-positive input", a.id()));
    }
  }
  Node n;
  n.op = Op::kLgamma;
  n.a = a.id();
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) n.value[i] = std::lgamma(va[i]);
  return emit(std::move(n));
}

Var Tape::clamp_min(Var a, double floor) {
  Node n;
  n.op = Op::kClampMin;
  n.a = a.id();
  n.aux = floor;
  const auto& va = at(a).value;
  n.value.resize(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    n.value[i] = std::max(va[i], floor);
  }
  return emit(std::move(n));
}

Var Tape::sum(Var a) {
  check_vector(a, "sum");
  Node n;
  n.op = Op::kSum;
  n.a = a.id();
  double acc = 0.0;
  for (double x : at(a).value) acc += x;
  n.value = {acc};
  return emit(std::move(n));
}

Var Tape::dot(Var a, Var b) {
  check_same_shape(a, b, "dot");
  check_vector(a, "dot");
  Node n;
  n.op = Op::kDot;
  n.a = a.id();
  n.b = b.id();
  const auto& va = at(a).value;
  const auto& vb = at(b).value;
  double acc = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) acc += va[i] * vb[i];
  n.value = {acc};
  return emit(std::move(n));
}

Var Tape::scale(Var s, Var v) {
  if (at(s).value.size() != 1) {
    throw std::invalid_argument("scale: first operand must be a scalar");
  }
  Node n;
  n.op = Op::kScale;
  n.a = s.id();
  n.b = v.id();
  const double sv = at(s).value[0];
  const auto& vv = at(v).value;
  n.value.resize(vv.size());
  for (std::size_t i = 0; i < vv.size(); ++i) n.value[i] = sv * vv[i];
  return emit(std::move(n));
}

Var Tape::stack(std::span<const Var> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("stack: no operands");
  }
  Node n;
  n.op = Op::kStack;
  n.list.reserve(parts.size());
  n.value.reserve(parts.size());
  for (const Var& p : parts) {
    if (at(p).value.size() != 1) {
      throw std::invalid_argument("stack: operands must be scalars");
    }
    n.list.push_back(p.id());
    n.value.push_back(at(p).value[0]);
  }
  return emit(std::move(n));
}

Var Tape::index(Var v, int k) {
  check_vector(v, "index");
  const auto& vv = at(v).value;
  if (k < 0 || static_cast<std::size_t>(k) >= vv.size()) {
    throw std::invalid_argument("index: out of range");
  }
  Node n;
  n.op = Op::kIndex;
  n.a = v.id();
  n.aux = static_cast<double>(k);
  n.value = {vv[static_cast<std::size_t>(k)]};
  return emit(std::move(n));
}

Var Tape::gather(Var v, std::span<const int> idx) {
  check_vector(v, "gather");
  if (idx.empty()) {
    throw std::invalid_argument("gather: empty index list");
  }
  const auto& vv = at(v).value;
  Node n;
  n.op = Op::kGather;
  n.a = v.id();
  n.list.assign(idx.begin(), idx.end());
  n.value.reserve(idx.size());
  for (int k : idx) {
    if (k < 0 || static_cast<std::size_t>(k) >= vv.size()) {
      throw std::invalid_argument("gather: index out of range");
    }
    n.value.push_back(vv[static_cast<std::size_t>(k)]);
  }
  return emit(std::move(n));
}

Var Tape::softmax_with_temperature(Var logits, double tau) {
  check_vector(logits, "softmax_with_temperature");
  if (!(tau > 0.0)) {
    throw std::invalid_argument("softmax_with_temperature: tau must be > 0");
  }
  const auto& y = at(logits).value;
  Node n;
  n.op = Op::kSoftmaxTemp;
  n.a = logits.id();
  n.aux = tau;
  n.value.resize(y.size());
  const double y_max = *std::max_element(y.begin(), y.end());
  double denom = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    n.value[i] = std::exp((y[i] - y_max) / tau);
    denom += n.value[i];
  }
  for (double& s : n.value) s /= denom;
  return emit(std::move(n));
}

Var Tape::st_passthrough(Var relaxed, double discrete_value) {
  if (at(relaxed).value.size() != 1) {
    throw std::invalid_argument("st_passthrough: relaxed value must be scalar");
  }
  Node n;
  n.op = Op::kStPassthrough;
  n.a = relaxed.id();
  n.aux = discrete_value;
  n.value = {discrete_value};
  return emit(std::move(n));
}

void Tape::backward(Var root) {
  if (root.tape() != this) {
    throw std::invalid_argument("backward: root belongs to a different tape");
  }
  if (at(root).value.size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar");
  }

  adjoints_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    adjoints_[i].assign(nodes_[i].value.size(), 0.0);
  }
  adjoints_[static_cast<std::size_t>(root.id())][0] = 1.0;

  for (int i = root.id(); i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    const auto& out = adjoints_[static_cast<std::size_t>(i)];
    bool live = false;
    for (double a : out) {
      if (a != 0.0) {
        live = true;
        break;
      }
    }
    if (!live) continue;

    switch (n.op) {
      case Op::kInput:
      case Op::kConstant:
        break;
      case Op::kAdd: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        auto& gb = adjoints_[static_cast<std::size_t>(n.b)];
        for (std::size_t j = 0; j < out.size(); ++j) {
          ga[j] += out[j];
          gb[j] += out[j];
        }
        break;
      }
      case Op::kSub: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        auto& gb = adjoints_[static_cast<std::size_t>(n.b)];
        for (std::size_t j = 0; j < out.size(); ++j) {
          ga[j] += out[j];
          gb[j] -= out[j];
        }
        break;
      }
      case Op::kMul: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        auto& gb = adjoints_[static_cast<std::size_t>(n.b)];
        const auto& va = nodes_[static_cast<std::size_t>(n.a)].value;
        const auto& vb = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t j = 0; j < out.size(); ++j) {
          ga[j] += out[j] * vb[j];
          gb[j] += out[j] * va[j];
        }
        break;
      }
      case Op::kDiv: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        auto& gb = adjoints_[static_cast<std::size_t>(n.b)];
        const auto& va = nodes_[static_cast<std::size_t>(n.a)].value;
        const auto& vb = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t j = 0; j < out.size(); ++j) {
          ga[j] += out[j] / vb[j];
          gb[j] -= out[j] * va[j] / (vb[j] * vb[j]);
        }
        break;
      }
      case Op::kNeg: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t j = 0; j < out.size(); ++j) ga[j] -= out[j];
        break;
      }
      case Op::kLog: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        const auto& va = nodes_[static_cast<std::size_t>(n.a)].value;
        for (std::size_t j = 0; j < out.size(); ++j) ga[j] += out[j] / va[j];
        break;
      }
      case Op::kExp: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t j = 0; j < out.size(); ++j) {
          ga[j] += out[j] * n.value[j];
        }
        break;
      }
      case Op::kSoftplus: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        const auto& va = nodes_[static_cast<std::size_t>(n.a)].value;
        for (std::size_t j = 0; j < out.size(); ++j) {
          ga[j] += out[j] * gengs::sigmoid(va[j]);
        }
        break;
      }
      case Op::kSigmoid: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t j = 0; j < out.size(); ++j) {
          ga[j] += out[j] * n.value[j] * (1.0 - n.value[j]);
        }
        break;
      }
      case Op::kLgamma: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        const auto& va = nodes_[static_cast<std::size_t>(n.a)].value;
        for (std::size_t j = 0; j < out.size(); ++j) {
          ga[j] += out[j] * digamma(va[j]);
        }
        break;
      }
      case Op::kClampMin: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        const auto& va = nodes_[static_cast<std::size_t>(n.a)].value;
        for (std::size_t j = 0; j < out.size(); ++j) {
          if (va[j] > n.aux) ga[j] += out[j];
        }
        break;
      }
      case Op::kSum: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        for (double& g : ga) g += out[0];
        break;
      }
      case Op::kDot: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        auto& gb = adjoints_[static_cast<std::size_t>(n.b)];
        const auto& va = nodes_[static_cast<std::size_t>(n.a)].value;
        const auto& vb = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t j = 0; j < va.size(); ++j) {
          ga[j] += out[0] * vb[j];
          gb[j] += out[0] * va[j];
        }
        break;
      }
      case Op::kScale: {
        auto& gs = adjoints_[static_cast<std::size_t>(n.a)];
        auto& gv = adjoints_[static_cast<std::size_t>(n.b)];
        const double sv = nodes_[static_cast<std::size_t>(n.a)].value[0];
        const auto& vv = nodes_[static_cast<std::size_t>(n.b)].value;
        for (std::size_t j = 0; j < out.size(); ++j) {
          gs[0] += out[j] * vv[j];
          gv[j] += out[j] * sv;
        }
        break;
      }
      case Op::kStack: {
        for (std::size_t j = 0; j < n.list.size(); ++j) {
          adjoints_[static_cast<std::size_t>(n.list[j])][0] += out[j];
        }
        break;
      }
      case Op::kIndex: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        ga[static_cast<std::size_t>(n.aux)] += out[0];
        break;
      }
      case Op::kGather: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        for (std::size_t j = 0; j < n.list.size(); ++j) {
          ga[static_cast<std::size_t>(n.list[j])] += out[j];
        }
        break;
      }
      case Op::kSoftmaxTemp: {
        auto& ga = adjoints_[static_cast<std::size_t>(n.a)];
        const auto& s = n.value;
        double dot_sv = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) dot_sv += s[j] * out[j];
        const double inv_tau = 1.0 / n.aux;
        for (std::size_t j = 0; j < s.size(); ++j) {
          ga[j] += inv_tau * s[j] * (out[j] - dot_sv);
        }
        break;
      }
      case Op::kStPassthrough: {
        adjoints_[static_cast<std::size_t>(n.a)][0] += out[0];
        break;
      }
    }
  }
}

namespace {

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) {
    throw std::invalid_argument("Var operator: empty handle");
  }
  return *a.tape();
}

Var lift(double x, Var like) { return tape_of(like).constant(x); }

}  // namespace

Var operator+(Var a, Var b) { return tape_of(a).add(a, b); }
Var operator-(Var a, Var b) { return tape_of(a).sub(a, b); }
Var operator*(Var a, Var b) { return tape_of(a).mul(a, b); }
Var operator/(Var a, Var b) { return tape_of(a).div(a, b); }
Var operator-(Var a) { return tape_of(a).neg(a); }
Var operator+(double a, Var b) { return lift(a, b) + b; }
Var operator+(Var a, double b) { return a + lift(b, a); }
Var operator-(double a, Var b) { return lift(a, b) - b; }
Var operator-(Var a, double b) { return a - lift(b, a); }
Var operator*(double a, Var b) { return lift(a, b) * b; }
Var operator*(Var a, double b) { return a * lift(b, a); }
Var operator/(double a, Var b) { return lift(a, b) / b; }
Var operator/(Var a, double b) { return a / lift(b, a); }

}  // namespace gengs
