// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "doctest.h"
#include "gengs/tape.hpp"

using namespace gengs;

namespace {

// Central finite difference of a scalar function of one input slot.
template <typename F>
double fd(F f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double grad_of(double x, Var (*build)(Tape&, Var)) {
  Tape tape;
  Var in = tape.input(x);
  Var out = build(tape, in);
  tape.backward(out);
  return in.adjoint();
}

double value_of(double x, Var (*build)(Tape&, Var)) {
  Tape tape;
  Var in = tape.input(x);
  return build(tape, in).value();
}

}  // namespace

TEST_CASE("scalar primitives match central finite differences") {
  struct Case {
    const char* name;
    Var (*build)(Tape&, Var);
    double at;
  };
  const Case cases[] = {
      {"log", [](Tape& t, Var x) { return t.log(x); }, 1.7},
      {"exp", [](Tape& t, Var x) { return t.exp(x); }, 0.3},
      {"softplus", [](Tape& t, Var x) { return t.softplus(x); }, -0.8},
      {"softplus_large", [](Tape& t, Var x) { return t.softplus(x); }, 25.0},
      {"sigmoid", [](Tape& t, Var x) { return t.sigmoid(x); }, 0.4},
      {"lgamma", [](Tape& t, Var x) { return t.lgamma(x); }, 3.6},
      {"neg", [](Tape& t, Var x) { return t.neg(x); }, 1.1},
      {"square", [](Tape& t, Var x) { return t.mul(x, x); }, 1.9},
      {"recip", [](Tape& t, Var x) { return t.div(t.constant(1.0), x); }, 2.2},
  };
  for (const Case& c : cases) {
    CAPTURE(c.name);
    const double g = grad_of(c.at, c.build);
    const double ref = fd([&](double x) { return value_of(x, c.build); }, c.at);
    CHECK(g == doctest::Approx(ref).epsilon(1e-5));
  }
}

TEST_CASE("x log x gradient is log x + 1") {
  Tape tape;
  Var x = tape.input(2.0);
  Var y = x * tape.log(x);
  tape.backward(y);
  CHECK(y.value() == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(x.adjoint() == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-12));
}

TEST_CASE("reused nodes accumulate adjoints") {
  Tape tape;
  Var x = tape.input(3.0);
  Var y = x * x + x;  // d/dx = 2x + 1
  tape.backward(y);
  CHECK(x.adjoint() == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("operator sugar matches explicit tape calls") {
  Tape tape;
  Var x = tape.input(1.5);
  Var y = 2.0 * x + 1.0 - x / 3.0;
  tape.backward(y);
  CHECK(y.value() == doctest::Approx(2.0 * 1.5 + 1.0 - 0.5).epsilon(1e-12));
  CHECK(x.adjoint() == doctest::Approx(2.0 - 1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("clamp_min passes gradient above the floor and blocks it below") {
  {
    Tape tape;
    Var x = tape.input(2.0);
    Var y = tape.clamp_min(x, 1.0);
    tape.backward(y);
    CHECK(y.value() == 2.0);
    CHECK(x.adjoint() == 1.0);
  }
  {
    Tape tape;
    Var x = tape.input(0.5);
    Var y = tape.clamp_min(x, 1.0);
    tape.backward(y);
    CHECK(y.value() == 1.0);
    CHECK(x.adjoint() == 0.0);
  }
}

TEST_CASE("st_passthrough snaps the forward value and keeps the adjoint") {
  Tape tape;
  Var x = tape.input(0.3);
  Var relaxed = x * x;
  Var hard = tape.st_passthrough(relaxed, 7.0);
  Var loss = 5.0 * hard;
  tape.backward(loss);
  CHECK(hard.value() == 7.0);
  CHECK(loss.value() == 35.0);
  // Backward treats st_passthrough as identity: d loss / dx = 5 * 2x.
  CHECK(x.adjoint() == doctest::Approx(5.0 * 2.0 * 0.3).epsilon(1e-12));
}

TEST_CASE("vector sum and dot match hand values and gradients") {
  Tape tape;
  Var v = tape.input(std::vector<double>{1.0, 2.0, 3.0});
  Var w = tape.constant(std::vector<double>{0.5, -1.0, 2.0});
  Var s = tape.sum(v);
  CHECK(s.value() == doctest::Approx(6.0).epsilon(1e-12));
  Var d = tape.dot(v, w);
  tape.backward(d);
  CHECK(d.value() == doctest::Approx(1.0 * 0.5 - 2.0 + 6.0).epsilon(1e-12));
  const std::vector<double> adj = v.adjoints();
  REQUIRE(adj.size() == 3);
  CHECK(adj[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(adj[1] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(adj[2] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("scale stack index gather compose correctly") {
  Tape tape;
  Var a = tape.input(2.0);
  Var b = tape.input(5.0);
  Var vec = tape.stack(std::vector<Var>{a, b});
  REQUIRE(vec.size() == 2);
  Var scaled = tape.scale(a, vec);  // (a^2, a b)
  Var first = tape.index(scaled, 0);
  Var second = tape.index(scaled, 1);
  Var out = first + second;  // a^2 + a b
  tape.backward(out);
  CHECK(out.value() == doctest::Approx(4.0 + 10.0).epsilon(1e-12));
  CHECK(a.adjoint() == doctest::Approx(2.0 * 2.0 + 5.0).epsilon(1e-12));
  CHECK(b.adjoint() == doctest::Approx(2.0).epsilon(1e-12));

  Tape tape2;
  Var v = tape2.input(std::vector<double>{1.0, 4.0, 9.0, 16.0});
  const std::vector<int> idx = {3, 1};
  Var picked = tape2.gather(v, idx);
  Var s = tape2.sum(picked);
  tape2.backward(s);
  CHECK(s.value() == doctest::Approx(20.0).epsilon(1e-12));
  const std::vector<double> adj = v.adjoints();
  CHECK(adj[0] == 0.0);
  CHECK(adj[1] == 1.0);
  CHECK(adj[2] == 0.0);
  CHECK(adj[3] == 1.0);
}

TEST_CASE("softmax_with_temperature produces a simplex point") {
  Tape tape;
  Var logits = tape.input(std::vector<double>{0.2, -1.0, 3.0});
  Var s = tape.softmax_with_temperature(logits, 0.7);
  const std::vector<double> vals = s.values();
  double total = 0.0;
  for (double x : vals) {
    CHECK(x > 0.0);
    total += x;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  // Matches the hand-rolled softmax of logits / tau.
  double norm = 0.0;
  std::vector<double> expect(3);
  for (int i = 0; i < 3; ++i) {
    expect[i] = std::exp(logits.values()[i] / 0.7);
    norm += expect[i];
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(vals[i] == doctest::Approx(expect[i] / norm).epsilon(1e-12));
  }
}

TEST_CASE("softmax gradient matches the analytic Jacobian") {
  // d s_i / d l_j = (1/tau) s_i (delta_ij - s_j); backward of dot(s, w)
  // gives (1/tau) s_i (w_i - <s, w>).
  const double tau = 0.6;
  const std::vector<double> l = {0.5, 1.5, -0.3};
  const std::vector<double> w = {2.0, -1.0, 0.7};
  Tape tape;
  Var logits = tape.input(l);
  Var s = tape.softmax_with_temperature(logits, tau);
  Var out = tape.dot(s, tape.constant(w));
  tape.backward(out);
  const std::vector<double> sv = s.values();
  double sw = 0.0;
  for (int i = 0; i < 3; ++i) sw += sv[i] * w[i];
  const std::vector<double> adj = logits.adjoints();
  for (int i = 0; i < 3; ++i) {
    CHECK(adj[i] ==
          doctest::Approx(sv[i] * (w[i] - sw) / tau).epsilon(1e-10));
  }
}

TEST_CASE("softmax gradient matches finite differences") {
  const double tau = 0.85;
  const std::vector<double> base = {0.1, -0.4, 1.2, 0.9};
  const std::vector<double> w = {1.0, 2.0, -0.5, 0.25};
  auto eval = [&](const std::vector<double>& l) {
    Tape tape;
    Var logits = tape.input(l);
    Var s = tape.softmax_with_temperature(logits, tau);
    return tape.dot(s, tape.constant(w)).value();
  };
  Tape tape;
  Var logits = tape.input(base);
  Var s = tape.softmax_with_temperature(logits, tau);
  Var out = tape.dot(s, tape.constant(w));
  tape.backward(out);
  const std::vector<double> adj = logits.adjoints();
  for (std::size_t j = 0; j < base.size(); ++j) {
    std::vector<double> up = base, dn = base;
    up[j] += 1e-6;
    dn[j] -= 1e-6;
    const double ref = (eval(up) - eval(dn)) / 2e-6;
    CHECK(adj[j] == doctest::Approx(ref).epsilon(1e-5));
  }
}

TEST_CASE("shape violations throw") {
  Tape tape;
  Var v = tape.input(std::vector<double>{1.0, 2.0});
  Var w = tape.input(std::vector<double>{1.0, 2.0, 3.0});
  CHECK_THROWS(tape.add(v, w));
  CHECK_THROWS(tape.dot(v, w));
  CHECK_THROWS(tape.index(v, 5));
  CHECK_THROWS(tape.index(v, -1));
}

TEST_CASE("backward from an intermediate leaves later nodes untouched") {
  Tape tape;
  Var x = tape.input(2.0);
  Var mid = x * x;
  Var later = mid * x;
  (void)later;
  tape.backward(mid);
  CHECK(x.adjoint() == doctest::Approx(4.0).epsilon(1e-12));
}
