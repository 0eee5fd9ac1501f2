#include "ropinn/errors.hpp"
#include "ropinn/optim.hpp"

#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

using namespace ropinn;

namespace {

double rosenbrock(const Eigen::VectorXd& v, Eigen::VectorXd& g) {
  const double a = v[0], b = v[1];
  g.resize(2);
  g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
  g[1] = 200.0 * (b - a * a);
  return (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a);
}

} // namespace

TEST_SUITE("optimizers") {

TEST_CASE("Adam: zero gradient is a fixed point") {
  AdamState s;
  Eigen::VectorXd p = Eigen::Vector2d(1.5, -0.25);
  const Eigen::VectorXd p0 = p;
  for (int i = 0; i < 10; ++i) p = adam_step(s, p, Eigen::VectorXd::Zero(2), 0.1);
  CHECK(p == p0);
}

TEST_CASE("Adam: first step is lr in size") {
  AdamState s;
  const Eigen::VectorXd p = adam_step(s, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), 0.1);
  CHECK(p[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(s.step == 1);
}

TEST_CASE("Adam: constant gradient steps never grow") {
  AdamState s;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd g = Eigen::VectorXd::Constant(1, 0.3);
  double previous = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd next = adam_step(s, p, g, 0.01);
    const double step = std::abs(next[0] - p[0]);
    CHECK(step <= previous * (1.0 + 1e-12));
    previous = step;
    p = next;
  }
}

TEST_CASE("Adam: errors") {
  AdamState s;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2);
  p = adam_step(s, p, Eigen::VectorXd::Ones(2), 0.1);
  CHECK_THROWS_AS(adam_step(s, Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(3), 0.1), DimensionError);
  Eigen::VectorXd bad = Eigen::VectorXd::Ones(2);
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(s, p, bad, 0.1), NumericError);
}

TEST_CASE("L-BFGS: empty history direction is the scaled negative gradient") {
  LbfgsState s;
  const Eigen::Vector2d small(0.3, -0.4);
  CHECK(lbfgs_direction(s, small) == Eigen::VectorXd(-small));
  const Eigen::Vector2d big(3.0, 4.0);
  CHECK((lbfgs_direction(s, big) + big / 5.0).norm() < 1e-15);
}

TEST_CASE("L-BFGS: SPD quadratic within 10 steps") {
  Eigen::Matrix2d A;
  A << 4.0, 1.5, 1.5, 1.0;
  const Eigen::Vector2d b(1.0, -2.0);
  const Eigen::Vector2d xs = A.ldlt().solve(b);
  // Written about the minimizer so f* = 0 and rounding in f stays below the descent.
  const LossAndGrad f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const Eigen::VectorXd e = x - xs;
    g = A * e;
    return 0.5 * e.dot(A * e);
  };
  LbfgsState s;
  Eigen::VectorXd x = Eigen::Vector2d(-3.0, 5.0);
  int steps = 0;
  Eigen::VectorXd g = A * (x - xs);
  while (g.norm() >= 1e-10 && steps < 10) {
    const LbfgsStep st = lbfgs_step(s, x, f);
    CHECK(st.f1 <= st.f0);
    x = st.params;
    g = st.g1;
    ++steps;
  }
  CHECK(g.norm() < 1e-10);
  CHECK((A * x - b).norm() < 1e-9);
}

TEST_CASE("L-BFGS: Rosenbrock within 100 steps") {
  LbfgsState s;
  Eigen::VectorXd x = Eigen::Vector2d(-1.2, 1.0);
  double f = 24.2;
  int steps = 0;
  while (f >= 1e-8 && steps < 100) {
    const LbfgsStep st = lbfgs_step(s, x, rosenbrock);
    CHECK(st.wolfe);
    x = st.params;
    f = st.f1;
    ++steps;
  }
  CHECK(f < 1e-8);
  CHECK(s.s.size() <= s.memory);
}

TEST_CASE("L-BFGS: a failed search falls back and clears history") {
  // The callback reports an ascent direction as the gradient, so no step
  // along -g can lower f and every search must fail.
  const LossAndGrad liar = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -2.0 * x;
    return x.squaredNorm();
  };
  LbfgsState s;
  const Eigen::VectorXd x0 = Eigen::Vector2d(1.0, 1.0);
  const LbfgsStep st = lbfgs_step(s, x0, liar);
  CHECK_FALSE(st.wolfe);
  CHECK(s.fallbacks == 1);
  CHECK(s.s.empty());
  // x0, every trial, then the fallback point.
  CHECK(st.evaluations <= s.max_trials + 2);
  const Eigen::VectorXd expect = x0 - 1e-3 / std::max(st.g0.norm(), 1.0) * st.g0;
  CHECK((st.params - expect).norm() < 1e-15);
}

TEST_CASE("L-BFGS: memory bound") {
  LbfgsState s;
  s.memory = 3;
  Eigen::VectorXd x = Eigen::Vector2d(-1.2, 1.0);
  for (int i = 0; i < 12; ++i) x = lbfgs_step(s, x, rosenbrock).params;
  CHECK(s.s.size() <= 3);
  CHECK(s.s.size() == s.y.size());
}

} // TEST_SUITE
