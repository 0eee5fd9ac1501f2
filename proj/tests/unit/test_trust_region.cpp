#include "ropinn/errors.hpp"
#include "ropinn/pde.hpp"
#include "ropinn/trust_region.hpp"

#include <doctest.h>

#include <random>

using namespace ropinn;

TEST_SUITE("trust-region") {

TEST_CASE("population std of {(1,0), (-1,0)} has norm 1") {
  const std::vector<Eigen::VectorXd> g{Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0)};
  CHECK(gradient_spread(g) == 1.0);
  TrustRegionState s;
  for (const auto& v : g) s.calibrate(v);
  CHECK(s.sigma() == 1.0);
  CHECK(s.effective_width() == s.config().r0);
}

TEST_CASE("spread matches a direct two-pass computation") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<Eigen::VectorXd> g(7, Eigen::VectorXd(5));
  for (auto& v : g) for (auto& e : v) e = n(rng);
  double total = 0.0;
  for (int j = 0; j < 5; ++j) {
    double m = 0.0, v = 0.0;
    for (const auto& x : g) m += x[j] / 7.0;
    for (const auto& x : g) v += (x[j] - m) * (x[j] - m) / 7.0;
    total += v;
  }
  CHECK(gradient_spread(g) == doctest::Approx(std::sqrt(total)).epsilon(1e-14));
}

TEST_CASE("ring buffer keeps the last T0 in order") {
  TrustRegionConfig c;
  c.T0 = 5;
  TrustRegionState s(c);
  for (int t = 1; t <= 12; ++t) {
    s.calibrate(Eigen::VectorXd::Constant(3, t));
    const auto& buf = s.buffer();
    REQUIRE(buf.size() == static_cast<std::size_t>(std::min(t, 5)));
    for (std::size_t i = 0; i < buf.size(); ++i) {
      CHECK(buf[i][0] == t - static_cast<int>(buf.size()) + 1 + static_cast<int>(i));
    }
    CHECK(s.sigma() > 0.0);
  }
}

TEST_CASE("six pushes into T0 = 5 evict the first") {
  TrustRegionConfig c;
  c.T0 = 5;
  TrustRegionState s(c);
  for (int t = 0; t < 6; ++t) s.calibrate(Eigen::VectorXd::Constant(1, t));
  CHECK(s.buffer().front()[0] == 1.0);
}

TEST_CASE("zero variance: sigma floored, width capped") {
  TrustRegionState s = TrustRegionState::for_problem(make_problem("reaction"), 1e-4, 10);
  CHECK(s.config().width_cap == 1.0);
  s.calibrate(Eigen::Vector3d(1.0, 2.0, 3.0));
  CHECK(s.sigma() == 1e-12);
  CHECK(s.effective_width() == 1.0);
  s.calibrate(Eigen::Vector3d(1.0, 2.0, 3.0));
  CHECK(s.sigma() == 1e-12);
}

TEST_CASE("huge spread hits the width floor") {
  TrustRegionState s;
  s.calibrate(Eigen::VectorXd::Constant(1, 1e12));
  s.calibrate(Eigen::VectorXd::Constant(1, -1e12));
  CHECK(s.effective_width() == s.config().width_floor);
}

TEST_CASE("r0 = 0 gives width exactly 0") {
  TrustRegionConfig c;
  c.r0 = 0.0;
  TrustRegionState s(c);
  CHECK(s.effective_width() == 0.0);
  s.calibrate(Eigen::Vector2d(1.0, 1.0));
  CHECK(s.effective_width() == 0.0);
}

TEST_CASE("initial width is r0 / sigma0") {
  TrustRegionConfig c;
  c.r0 = 0.3;
  c.sigma0 = 2.0;
  CHECK(TrustRegionState(c).effective_width() == 0.15);
}

TEST_CASE("errors") {
  TrustRegionState s;
  s.calibrate(Eigen::Vector2d(1.0, 1.0));
  CHECK_THROWS_AS(s.calibrate(Eigen::Vector3d(1.0, 1.0, 1.0)), DimensionError);
  TrustRegionConfig c;
  c.r0 = -1.0;
  CHECK_THROWS_AS(TrustRegionState{c}, ConfigError);
  c = {};
  c.T0 = 0;
  CHECK_THROWS_AS(TrustRegionState{c}, ConfigError);
  CHECK_THROWS_AS(gradient_spread(std::vector<Eigen::VectorXd>{}), DimensionError);
}

TEST_CASE("mean-normalized variant") {
  TrustRegionConfig c;
  c.mean_normalized = true;
  TrustRegionState s(c);
  s.calibrate(Eigen::Vector2d(2.0, 0.0));
  s.calibrate(Eigen::Vector2d(4.0, 0.0));
  // std = (1, 0); mean |g| = (3, 0)
  CHECK(s.sigma() == doctest::Approx((1.0 / (3.0 + 1e-6) + 0.0) / 2.0).epsilon(1e-14));
}

} // TEST_SUITE
