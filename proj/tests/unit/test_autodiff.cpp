#include "support.hpp"

#include "ropinn/autodiff/jet.hpp"
#include "ropinn/autodiff/tape.hpp"
#include "ropinn/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace ropinn;
using ad::Tape;
using ad::Var;

namespace {

Var param(Tape& tape, double v, std::size_t offset) {
  return {tape, tape.parameter(Eigen::MatrixXd::Constant(1, 1, v), offset)};
}

// mean over 5 points of (u_theta(p) - target)^2 for a 2-16-1 tanh net, built
// straight from tape primitives.
struct SmallNet {
  Eigen::MatrixXd points = test::uniform(2, 5, 101);
  Eigen::RowVectorXd target = Eigen::RowVectorXd(test::uniform(1, 5, 102));

  double loss(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    Tape tape;
    auto W1 = Var(tape, tape.parameter(Eigen::Map<const Eigen::MatrixXd>(theta.data(), 16, 2), 0));
    auto b1 = Var(tape, tape.parameter(theta.segment(32, 16), 32));
    auto W2 = Var(tape, tape.parameter(Eigen::Map<const Eigen::MatrixXd>(theta.data() + 48, 1, 16), 48));
    auto b2 = Var(tape, tape.parameter(theta.segment(64, 1), 64));
    Var x(tape, tape.input(points));
    Var y = add_bias(matmul(W2, tanh(add_bias(matmul(W1, x), b1))), b2);
    Var r = y - Var(tape, tape.constant(Eigen::MatrixXd(target)));
    Var L = mean(square(r));
    if (grad) *grad = ad::backward(tape, L.id(), 65);
    return L.scalar();
  }
};

} // namespace

TEST_SUITE("autodiff") {

TEST_CASE("square at 3 has gradient 6") {
  Tape tape;
  Var th = param(tape, 3.0, 0);
  const auto g = ad::backward(tape, square(th).id());
  REQUIRE(g.size() == 1);
  CHECK(g[0] == 6.0);
}

TEST_CASE("product rule") {
  Tape tape;
  Var a = param(tape, 2.0, 0);
  Var b = param(tape, 5.0, 1);
  const auto g = ad::backward(tape, (a * b).id());
  CHECK(g[0] == 5.0);
  CHECK(g[1] == 2.0);
}

TEST_CASE("every primitive against central differences") {
  // f(a, b) built from each op once; FD in double with h = 1e-6.
  auto f = [](double av, double bv, Eigen::VectorXd* grad) {
    Tape tape;
    Var a = param(tape, av, 0);
    Var b = param(tape, bv, 1);
    Var y = sin(a) * cos(b) + exp(0.3 * a) - tanh(b) * reciprocal(a) + square(a - b);
    y = y + (-a) + (2.0 - b) + (b - 0.5);
    Var m = mean(matmul(Var(tape, tape.constant(Eigen::MatrixXd::Ones(3, 1))), y));
    Var s = sum(add_bias(m, Var(tape, tape.constant(1.0))));
    if (grad) *grad = ad::backward(tape, s.id(), 2);
    return s.scalar();
  };
  Eigen::VectorXd g;
  f(0.7, -0.4, &g);
  const double h = 1e-6;
  const double ga = (f(0.7 + h, -0.4, nullptr) - f(0.7 - h, -0.4, nullptr)) / (2 * h);
  const double gb = (f(0.7, -0.4 + h, nullptr) - f(0.7, -0.4 - h, nullptr)) / (2 * h);
  CHECK(g[0] == doctest::Approx(ga).epsilon(1e-7));
  CHECK(g[1] == doctest::Approx(gb).epsilon(1e-7));
}

TEST_CASE("2-16-1 tanh net, mean squared error on 5 points, vs finite differences") {
  SmallNet net;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 0.5);
  Eigen::VectorXd theta(65);
  for (auto& v : theta) v = n(rng);
  Eigen::VectorXd g;
  net.loss(theta, &g);
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd p = theta, m = theta;
    p[i] += h;
    m[i] -= h;
    const double fd = (net.loss(p, nullptr) - net.loss(m, nullptr)) / (2 * h);
    if (std::abs(g[i]) > 1e-8) worst = std::max(worst, std::abs(g[i] - fd) / std::abs(fd));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("parents precede children and re-evaluation is bit-exact") {
  SmallNet net;
  Tape tape;
  Var W(tape, tape.parameter(test::uniform(4, 2, 103), 0));
  Var b(tape, tape.parameter(Eigen::VectorXd(test::uniform(4, 1, 104)), 8));
  Var x(tape, tape.input(net.points));
  mean(square(sin(add_bias(matmul(W, x), b)) * tanh(matmul(W, x))));
  for (const auto& node : tape.nodes()) {
    for (int k = 0; k < node.arity; ++k) CHECK(node.parents[static_cast<std::size_t>(k)] < node.id);
    const Eigen::MatrixXd again = tape.reevaluate(node.id);
    CHECK((again.array() == node.value.array()).all());
  }
}

TEST_CASE("parameter leaves map to distinct coordinates") {
  Tape tape;
  param(tape, 1.0, 0);
  Var w(tape, tape.parameter(Eigen::MatrixXd::Ones(2, 3), 1));
  param(tape, 1.0, 7);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& leaf : tape.parameter_leaves()) {
    const auto& v = tape.value(leaf.node);
    for (Eigen::Index i = 0; i < v.size(); ++i) seen.insert(leaf.offset + static_cast<std::size_t>(i));
    total += static_cast<std::size_t>(v.size());
  }
  CHECK(seen.size() == total);
  CHECK(tape.parameter_extent() == 8);
}

TEST_CASE("unknown node id is a structural error") {
  Tape tape;
  param(tape, 1.0, 0);
  CHECK_THROWS_AS(ad::backward(tape, ad::NodeId{42}), StructuralError);
  CHECK_THROWS_AS(tape.node(ad::NodeId{}), StructuralError);
}

TEST_CASE("non-root scalar check") {
  Tape tape;
  Var w(tape, tape.parameter(Eigen::MatrixXd::Ones(2, 2), 0));
  CHECK_THROWS_AS(ad::backward(tape, w.id()), StructuralError);
}

TEST_CASE("non-finite values raise a numeric error naming a node") {
  Tape tape;
  Var z = param(tape, 0.0, 0);
  Var r = reciprocal(z);
  Var y = sum(r * z + square(z));
  try {
    ad::backward(tape, y.id());
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.node() < tape.size());
  }
}

TEST_CASE("shape mismatch") {
  Tape tape;
  Var a(tape, tape.constant(Eigen::MatrixXd::Ones(2, 2)));
  Var b(tape, tape.constant(Eigen::MatrixXd::Ones(3, 2)));
  CHECK_THROWS_AS(a + b, DimensionError);
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
}

TEST_CASE("identical construction gives bit-identical gradients") {
  SmallNet net;
  Eigen::VectorXd theta = Eigen::VectorXd::LinSpaced(65, -1.0, 1.0);
  Eigen::VectorXd g1, g2;
  const double l1 = net.loss(theta, &g1);
  const double l2 = net.loss(theta, &g2);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("backward is linear") {
  Tape tape;
  Var a = param(tape, 0.3, 0);
  Var b = param(tape, -1.1, 1);
  Var f = sin(a * b) + square(a);
  Var g = tanh(b) * exp(a);
  const Eigen::VectorXd gf = ad::backward(tape, f.id());
  const Eigen::VectorXd gg = ad::backward(tape, g.id());
  const Eigen::VectorXd gc = ad::backward(tape, (2.5 * f + (-0.75) * g).id());
  const Eigen::VectorXd expect = 2.5 * gf - 0.75 * gg;
  CHECK((gc - expect).norm() <= 1e-12 * expect.norm());
}

TEST_CASE("tanh stays accurate across its range") {
  Eigen::MatrixXd x(1, 9);
  x << -30.0, -5.0, -0.7, -0.624, 0.0, 1e-9, 0.3, 0.626, 19.0;
  Tape tape;
  Var v(tape, tape.input(x));
  const Eigen::MatrixXd y = tanh(v).value();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double ref = std::tanh(x(0, i));
    CHECK(std::abs(y(0, i) - ref) <= 1e-15 * std::max(std::abs(ref), 1e-300));
  }
}

} // TEST_SUITE
