#include "support.hpp"

#include "ropinn/checks/oracles.hpp"
#include "ropinn/errors.hpp"
#include "ropinn/objectives.hpp"
#include "ropinn/trust_region.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace ropinn;
using std::numbers::pi;

namespace {

ObjectiveSpec kind(ObjectiveKind k) {
  ObjectiveSpec s;
  s.kind = k;
  return s;
}

LossValues point_values(const PdeProblem& p, const ModelConfig& c, const FlatParams& params,
                        const CollocationSet& set, const ObjectiveSpec& spec) {
  ad::Tape tape;
  return values(point_loss(tape, p, bind(tape, c, params), set, spec));
}

CollocationSet only_interior(Eigen::Matrix2Xd pts) {
  CollocationSet s;
  s.interior = std::move(pts);
  s.initial.resize(2, 0);
  s.boundary_lo.resize(2, 0);
  s.boundary_hi.resize(2, 0);
  return s;
}

ObjectiveSpec equation_only() {
  ObjectiveSpec s = kind(ObjectiveKind::point);
  s.lambda_ic = 0.0;
  s.lambda_bc = 0.0;
  return s;
}

} // namespace

TEST_SUITE("objectives") {

TEST_CASE("affine exact solution of u_t + u_x = 0 has zero equation term") {
  const PdeProblem p = make_problem("convection", {{"beta", 1.0}});
  const ModelConfig c = test::net({2, 1});
  FlatParams params = zeros(c);
  weight(params, 0) << 1.0, -1.0; // u = x - t
  const LossValues v = point_values(p, c, params, uniform_mesh(p, 11, 2, 2), equation_only());
  CHECK(v.equation == 0.0);
  CHECK(v.total == 0.0);
}

TEST_CASE("zero network on convection: initial term is the mean of sin^2") {
  const PdeProblem p = make_problem("convection");
  const ModelConfig c = test::net({2, 8, 1});
  const CollocationSet mesh = uniform_mesh(p, 5, 101, 5);
  double oracle = 0.0;
  for (int i = 0; i < 101; ++i) oracle += std::pow(std::sin(2 * pi * i / 100.0), 2);
  oracle /= 101.0;
  const LossValues v = point_values(p, c, zeros(c), mesh, kind(ObjectiveKind::point));
  CHECK(v.initial == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(v.initial == doctest::Approx(0.5).epsilon(0.02));
  CHECK(v.boundary == 0.0);
  CHECK(v.equation == 0.0);
}

TEST_CASE("single point with residual 2 gives equation term 4") {
  const PdeProblem p = make_problem("convection");
  const ModelConfig c = test::net({2, 1});
  FlatParams params = zeros(c);
  weight(params, 0) << 0.0, 2.0; // u_t = 2, u_x = 0
  const LossValues v = point_values(p, c, params, only_interior(Eigen::Vector2d(1.0, 0.5)), equation_only());
  CHECK(v.equation == 4.0);
}

TEST_CASE("positive weight on an empty term is a configuration error") {
  const PdeProblem p = make_problem("reaction");
  const ModelConfig c = test::net({2, 3, 1});
  CHECK_THROWS_AS(point_values(p, c, zeros(c), only_interior(Eigen::Vector2d(1.0, 0.5)),
                               kind(ObjectiveKind::point)),
                  ConfigError);
  ObjectiveSpec none = equation_only();
  none.lambda_eq = 0.0;
  CHECK_THROWS_AS(point_values(p, c, zeros(c), only_interior(Eigen::Vector2d(1.0, 0.5)), none), ConfigError);
}

TEST_CASE("point loss matches the long-double reference loss") {
  for (const char* name : {"reaction", "wave", "convection"}) {
    const PdeProblem p = make_problem(name);
    const ModelConfig c = test::net({2, 6, 6, 1});
    const FlatParams params = test::random_params(c, 31);
    const CollocationSet mesh = uniform_mesh(p, 6, 7, 5);
    const double ref = static_cast<double>(
        checks::reference_loss<long double>(p, c, checks::widen<long double>(params.values), mesh));
    CHECK(point_values(p, c, params, mesh, kind(ObjectiveKind::point)).total ==
          doctest::Approx(ref).epsilon(1e-13));
  }
}

TEST_CASE("spec validation") {
  const PdeProblem r = make_problem("reaction");
  ObjectiveSpec s;
  s.lambda_bc = -1.0;
  CHECK_THROWS_AS(validate(s, r), ConfigError);
  s = {};
  s.samples = 0;
  CHECK_THROWS_AS(validate(s, r), ConfigError);
  CHECK(parse_region_mode("centered") == RegionMode::centered);
  CHECK(parse_objective_kind("gpinn") == ObjectiveKind::gpinn);
  CHECK_THROWS_AS(parse_objective_kind("rar"), ConfigError);
  if (!ad::jet3_enabled()) CHECK_THROWS_AS(validate(kind(ObjectiveKind::gpinn), make_problem("wave")), CapabilityError);
  else CHECK_NOTHROW(validate(kind(ObjectiveKind::gpinn), make_problem("wave")));
}

TEST_CASE("sample_region") {
  const PdeProblem p = make_problem("reaction");
  const CollocationSet s = uniform_mesh(p, 9, 9, 9);
  std::mt19937_64 rng(1);

  SUBCASE("h = 0 returns the set untouched") {
    std::mt19937_64 before = rng;
    const PerturbedSet z = sample_region(p, s, 0.0, RegionMode::one_sided, true, rng);
    CHECK(z.points.interior == s.interior);
    CHECK(z.points.initial == s.initial);
    CHECK(z.points.boundary_lo == s.boundary_lo);
    CHECK(z.points.boundary_hi == s.boundary_hi);
    CHECK(rng == before);
  }
  SUBCASE("one-sided offsets lie in [0, h]") {
    const PerturbedSet d = sample_region(p, s, 1e-4, RegionMode::one_sided, true, rng);
    CHECK((d.offsets.interior.array() >= 0.0).all());
    CHECK((d.offsets.interior.array() <= 1e-4).all());
    CHECK(d.width == 1e-4);
  }
  SUBCASE("centered offsets lie in [-h/2, h/2]") {
    const PerturbedSet d = sample_region(p, s, 0.2, RegionMode::centered, true, rng);
    CHECK((d.offsets.interior.array().abs() <= 0.1).all());
    CHECK((d.offsets.interior.array() < 0.0).any());
  }
  SUBCASE("manifolds are preserved and periodic pairs share t") {
    const PerturbedSet d = sample_region(p, s, 0.3, RegionMode::one_sided, true, rng);
    CHECK((d.points.initial.row(1).array() == p.domain().t_lo).all());
    CHECK((d.points.boundary_lo.row(0).array() == p.domain().x_lo).all());
    CHECK((d.points.boundary_hi.row(0).array() == p.domain().x_hi).all());
    CHECK(d.points.boundary_lo.row(1) == d.points.boundary_hi.row(1));
    for (const auto* m : {&d.points.interior, &d.points.initial, &d.points.boundary_lo}) {
      for (Eigen::Index i = 0; i < m->cols(); ++i) CHECK(p.domain().contains((*m)(0, i), (*m)(1, i)));
    }
  }
  SUBCASE("Dirichlet faces draw their own t offsets and clamp") {
    const PdeProblem w = make_problem("wave");
    const PerturbedSet d = sample_region(w, uniform_mesh(w, 5, 5, 5), 0.5, RegionMode::one_sided, true, rng);
    CHECK(d.offsets.boundary_lo.row(1) != d.offsets.boundary_hi.row(1));
    CHECK((d.points.interior.array() <= 1.0).all());
  }
  SUBCASE("constraint points stay put when asked") {
    const PerturbedSet d = sample_region(p, s, 0.3, RegionMode::one_sided, false, rng);
    CHECK(d.points.initial == s.initial);
    CHECK(d.points.boundary_lo == s.boundary_lo);
    CHECK(d.points.interior != s.interior);
  }
}

TEST_CASE("initial point near 2 pi wraps into [0, 2 pi) and keeps t = 0") {
  const PdeProblem p = make_problem("reaction");
  CollocationSet s = only_interior(Eigen::Matrix2Xd(2, 0));
  s.initial = Eigen::Vector2d(6.28, 0.0);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    const PerturbedSet d = sample_region(p, s, 1.0, RegionMode::one_sided, true, rng);
    const double x = d.points.initial(0, 0);
    CHECK(x >= 0.0);
    CHECK(x < 2 * pi);
    CHECK(d.points.initial(1, 0) == 0.0);
    const double moved = 6.28 + d.offsets.initial(0, 0);
    CHECK(x == doctest::Approx(moved < 2 * pi ? moved : moved - 2 * pi).epsilon(1e-14));
  }
}

TEST_CASE("region loss at zero width is the point loss") {
  const PdeProblem p = make_problem("wave");
  const ModelConfig c = test::net({2, 5, 1});
  const FlatParams params = test::random_params(c, 4);
  const CollocationSet mesh = uniform_mesh(p, 7, 7, 7);
  const ObjectiveSpec spec = kind(ObjectiveKind::region);

  ad::Tape t1;
  const LossValues point = values(point_loss(t1, p, bind(t1, c, params), mesh, spec));
  TrustRegionConfig tc;
  tc.r0 = 0.0;
  const TrustRegionState state(tc);
  CHECK(state.sigma() == 1.0);
  ad::Tape t2;
  std::mt19937_64 rng(8);
  const RegionLoss region = region_loss(t2, p, bind(t2, c, params), mesh, spec, state, rng);
  CHECK(values(region.terms).total == point.total);

  ad::Tape t3, t4;
  std::mt19937_64 a(5), b(5);
  const double la = values(region_loss(t3, p, bind(t3, c, params), mesh, spec, 0.05, a).terms).total;
  const double lb = values(region_loss(t4, p, bind(t4, c, params), mesh, spec, 0.05, b).terms).total;
  CHECK(la == lb);
  CHECK(la != point.total);
}

TEST_CASE("several samples average their losses") {
  const PdeProblem p = make_problem("reaction");
  const ModelConfig c = test::net({2, 4, 1});
  const FlatParams params = test::random_params(c, 6);
  const CollocationSet mesh = uniform_mesh(p, 5, 5, 5);
  ObjectiveSpec spec = kind(ObjectiveKind::region);
  spec.samples = 3;
  ad::Tape tape;
  std::mt19937_64 rng(2);
  const RegionLoss r = region_loss(tape, p, bind(tape, c, params), mesh, spec, 0.1, rng);
  REQUIRE(r.draws.size() == 3);
  double mean = 0.0;
  for (const auto& d : r.draws) mean += point_values(p, c, params, d.points, spec).total / 3.0;
  CHECK(values(r.terms).total == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("gpinn regularizer") {
  const ModelConfig affine = test::net({2, 1});
  const PdeProblem conv = make_problem("convection");
  const CollocationSet mesh = uniform_mesh(conv, 6, 6, 6);
  const ObjectiveSpec spec = kind(ObjectiveKind::gpinn);

  ad::Tape t1;
  CHECK(values(gpinn_loss(t1, conv, bind(t1, affine, zeros(affine)), mesh, spec)).regularizer == 0.0);

  FlatParams lin = zeros(affine);
  weight(lin, 0) << 0.3, -2.0;
  ad::Tape t2;
  CHECK(values(gpinn_loss(t2, conv, bind(t2, affine, lin), mesh, spec)).regularizer == 0.0);

  // Random tiny network on reaction: gradient of the regularizer vs differences.
  const PdeProblem r = make_problem("reaction");
  const ModelConfig c = test::net({2, 4, 1});
  const FlatParams params = test::random_params(c, 10);
  const CollocationSet rm = uniform_mesh(r, 4, 4, 4);
  auto reg = [&](const FlatParams& q, Eigen::VectorXd* g) {
    ad::Tape tape;
    const LossTerms t = gpinn_loss(tape, r, bind(tape, c, q), rm, spec);
    if (g) *g = ad::backward(tape, t.regularizer.id(), q.size());
    return values(t).regularizer;
  };
  Eigen::VectorXd g;
  CHECK(reg(params, &g) > 0.0);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    FlatParams a = params, b = params;
    a.values[i] += 1e-6;
    b.values[i] -= 1e-6;
    const double fd = (reg(a, nullptr) - reg(b, nullptr)) / 2e-6;
    if (std::abs(fd) > 1e-8) CHECK(std::abs(g[i] - fd) < 1e-4 * std::abs(fd));
  }
}

TEST_CASE("quadrature oracle") {
  const PdeProblem p = make_problem("reaction");
  const ModelConfig c = test::net({2, 2, 1});
  const FlatParams params = test::random_params(c, 7);
  const Eigen::Vector2d x(1.0, 0.3);
  const ObjectiveSpec spec = kind(ObjectiveKind::region);

  SUBCASE("collapsing region gives the point gradient") {
    const Eigen::VectorXd q = region_gradient_quadrature(p, c, params, x, 1e-12, spec);
    const Eigen::VectorXd g = point_gradient(p, c, params, x, spec);
    CHECK((q - g).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, g.cwiseAbs().maxCoeff()));
  }
  SUBCASE("16 and 32 nodes agree") {
    const Eigen::VectorXd q16 = region_gradient_quadrature(p, c, params, x, 0.2, spec, 16);
    const Eigen::VectorXd q32 = region_gradient_quadrature(p, c, params, x, 0.2, spec, 32);
    CHECK((q16 - q32).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("closed form (theta (x + xi))^2") {
    const Eigen::VectorXd m = region_mean_quadrature(
        [](const Eigen::VectorXd& v) { return Eigen::VectorXd::Constant(1, 2.0 * v[0] * v[0]); },
        Eigen::VectorXd::Constant(1, 0.5), 0.2, RegionMode::one_sided);
    CHECK(m[0] == doctest::Approx(2.0 * (0.25 + 0.1 + 0.04 / 3.0)).epsilon(1e-14));
    CHECK(m[0] == doctest::Approx(0.72667).epsilon(1e-5));
  }
  SUBCASE("Gauss-Legendre weights sum to 2") {
    for (int n : {8, 16, 32}) {
      double w = 0.0;
      for (const auto& [node, weight] : gauss_legendre(n)) w += weight;
      CHECK(w == doctest::Approx(2.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(gauss_legendre(7), CapabilityError);
  }
  SUBCASE("refuses big models") {
    const ModelConfig big = test::net({2, 16, 16, 1});
    CHECK_THROWS_AS(region_gradient_quadrature(p, big, zeros(big), x, 0.1, spec), GuardError);
  }
}

TEST_CASE("sampled region gradients: column count and determinism") {
  const PdeProblem p = make_problem("reaction");
  const ModelConfig c = test::net({2, 3, 1});
  const FlatParams params = test::random_params(c, 2);
  std::mt19937_64 a(9), b(9);
  const ObjectiveSpec spec = kind(ObjectiveKind::region);
  const Eigen::MatrixXd ga = sampled_region_gradients(p, c, params, Eigen::Vector2d(2.0, 0.5), 0.1, spec, 25, a);
  const Eigen::MatrixXd gb = sampled_region_gradients(p, c, params, Eigen::Vector2d(2.0, 0.5), 0.1, spec, 25, b);
  CHECK(ga.rows() == static_cast<Eigen::Index>(params.size()));
  CHECK(ga.cols() == 25);
  CHECK(ga == gb);
}

} // TEST_SUITE
