#include "ropinn/checks/acceptance.hpp"

#include "ropinn/checks/oracles.hpp"
#include "ropinn/errors.hpp"
#include "ropinn/experiment.hpp"
#include "ropinn/objectives.hpp"
#include "ropinn/optim.hpp"
#include "ropinn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace ropinn::checks {

namespace {

using Clock = std::chrono::steady_clock;

// Runs `body` and stamps the elapsed time; a check over its time budget fails.
CheckResult timed(int id, std::string name, double budget_seconds,
                  const std::function<bool(std::ostringstream&)>& body) {
  CheckResult r;
  r.id = id;
  r.name = std::move(name);
  std::ostringstream detail;
  detail << std::setprecision(3);
  const auto start = Clock::now();
  try {
    r.passed = body(detail);
  } catch (const std::exception& e) {
    r.passed = false;
    detail << " exception: " << e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (r.seconds > budget_seconds) {
    r.passed = false;
    detail << " over the " << budget_seconds << " s budget";
  }
  r.detail = detail.str();
  return r;
}

// Glorot weights plus nonzero biases, so every coordinate has a generic gradient.
FlatParams random_params(const ModelConfig& config, std::uint64_t seed) {
  ModelConfig c = config;
  c.init_seed = seed;
  FlatParams p = init(c);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> b(-0.5, 0.5);
  for (std::size_t l = 0; l + 1 < c.layer_widths.size(); ++l) {
    auto bl = bias(p, l);
    for (Eigen::Index k = 0; k < bl.size(); ++k) bl[k] = b(rng);
  }
  return p;
}

ModelConfig tanh_net(std::vector<std::size_t> widths) {
  ModelConfig c;
  c.arch = Arch::mlp_tanh;
  c.layer_widths = std::move(widths);
  return c;
}

ObjectiveSpec unit_point() {
  ObjectiveSpec s;
  s.kind = ObjectiveKind::point;
  return s;
}

Eigen::VectorXd tape_gradient(const PdeProblem& problem, const ModelConfig& config,
                              const FlatParams& params, const CollocationSet& set) {
  ad::Tape tape;
  const BoundModel m = bind(tape, config, params);
  const LossTerms terms = point_loss(tape, problem, m, set, unit_point());
  return ad::backward(tape, terms.total.id(), params.size());
}

const char* kProblems[] = {"reaction", "wave", "convection"};

// Sampled region gradients and the quadrature mean for the tiny model.
struct RegionSamples {
  Eigen::MatrixXd draws;
  Eigen::VectorXd quadrature;
};

RegionSamples tiny_region_samples(std::size_t count) {
  const PdeProblem problem = make_problem("reaction");
  const ModelConfig config = tanh_net({2, 2, 1});
  const FlatParams params = random_params(config, 7);
  ObjectiveSpec spec;
  spec.kind = ObjectiveKind::region;
  const Eigen::Vector2d point(1.0, 0.3);
  std::mt19937_64 rng(2024);
  RegionSamples s;
  s.draws = sampled_region_gradients(problem, config, params, point, 0.2, spec, count, rng);
  s.quadrature = region_gradient_quadrature(problem, config, params, point, 0.2, spec, 16);
  return s;
}

} // namespace

std::string format(const CheckResult& r) {
  std::ostringstream out;
  out << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << " " << r.name << " (" << std::fixed
      << std::setprecision(2) << r.seconds << " s): " << r.detail;
  return out.str();
}

CheckResult check_gradients() {
  return timed(1, "gradient oracle", 10.0, [](std::ostringstream& d) {
    const ModelConfig config = tanh_net({2, 8, 8, 1});
    double worst = 0.0;
    std::size_t compared = 0;
    for (std::uint64_t net = 0; net < 20; ++net) {
      const PdeProblem problem = make_problem(kProblems[net % 3]);
      const CollocationSet set = uniform_mesh(problem, 5, 5, 5);
      const FlatParams params = random_params(config, 100 + net);
      const Eigen::VectorXd g = tape_gradient(problem, config, params, set);
      const Eigen::VectorXd fd = finite_difference_gradient(problem, config, params, set, 1e-6);
      const auto [err, n] = max_relative_error(g, fd, 1e-8);
      worst = std::max(worst, err);
      compared += n;
    }
    d << "20 nets [2,8,8,1], 5x5 mesh, " << compared << " coordinates, max rel err " << worst
      << " (limit 1e-5)";
    return worst < 1e-5 && compared > 0;
  });
}

CheckResult check_jets() {
  return timed(2, "jet oracle", 5.0, [](std::ostringstream& d) {
    double worst1 = 0.0, worst2 = 0.0;
    std::size_t compared = 0;
    const auto layout = ad::JetLayout::full(2, 2);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> coord(-1.0, 1.0);
    for (std::uint64_t net = 0; net < 10; ++net) {
      ModelConfig config = tanh_net(net % 2 ? std::vector<std::size_t>{2, 8, 8, 1}
                                            : std::vector<std::size_t>{2, 8, 1});
      if (net >= 8) config.arch = Arch::fls;
      const FlatParams params = random_params(config, 300 + net);
      Eigen::MatrixXd pts(2, 25);
      for (Eigen::Index i = 0; i < pts.cols(); ++i) pts.col(i) << coord(rng), coord(rng);
      ad::Tape tape;
      const ad::Jet u = forward_jet(config, params, pts, layout, tape);
      for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const auto fd = finite_difference_jet(config, params, pts(0, i), pts(1, i));
        const double jet[5] = {u.d(kSpace).value()(0, i), u.d(kTime).value()(0, i),
                               u.d(kSpace, kSpace).value()(0, i), u.d(kSpace, kTime).value()(0, i),
                               u.d(kTime, kTime).value()(0, i)};
        for (int k = 0; k < 5; ++k) {
          if (std::abs(fd[k]) <= 1e-8) continue;
          const double rel = std::abs(jet[k] - fd[k]) / std::abs(fd[k]);
          (k < 2 ? worst1 : worst2) = std::max(k < 2 ? worst1 : worst2, rel);
          ++compared;
        }
      }
    }
    d << compared << " entries; first order max rel " << worst1 << " (limit 1e-6), second order "
      << worst2 << " (limit 1e-4)";
    return worst1 < 1e-6 && worst2 < 1e-4;
  });
}

CheckResult check_analytic_residual() {
  return timed(3, "analytic residual", 1.0, [](std::ostringstream& d) {
    bool ok = true;
    for (const char* name : kProblems) {
      const PdeProblem problem = make_problem(name);
      const CollocationSet mesh = uniform_mesh(problem, 21, 2, 2);
      ad::Tape tape;
      const ad::Jet u = analytic_jet(problem, mesh.interior, ad::JetLayout::full(2, 2), tape);
      const double worst = problem.residual(u).value().cwiseAbs().maxCoeff();
      d << name << " " << worst << "; ";
      ok = ok && worst <= 1e-9;
    }
    d << "limit 1e-9 on 21x21";
    return ok;
  });
}

CheckResult check_unbiased_region() {
  return timed(4, "region gradient unbiased", 30.0, [](std::ostringstream& d) {
    const std::size_t n = 100000;
    const RegionSamples s = tiny_region_samples(n);
    const Eigen::VectorXd mean = s.draws.rowwise().mean();
    const Eigen::MatrixXd centered = s.draws.colwise() - mean;
    const Eigen::VectorXd se =
        (centered.rowwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt() / std::sqrt(double(n));
    const double worst_z = ((mean - s.quadrature).cwiseAbs().array() / se.array()).maxCoeff();

    // One parameter, one dimension: L = (theta (x + xi))^2, theta = 1, x = 0.5.
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> xi(0.0, 0.2);
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      ad::Tape tape;
      const ad::Var theta(tape, tape.parameter(Eigen::MatrixXd::Constant(1, 1, 1.0), 0));
      const ad::Var x(tape, tape.constant(0.5 + xi(rng)));
      const ad::Var loss = square(theta * x);
      const double g = ad::backward(tape, loss.id(), 1)[0];
      sum += g;
      sum2 += g * g;
    }
    const double mc = sum / double(n);
    const double mc_se = std::sqrt((sum2 / double(n) - mc * mc) / double(n - 1));
    const Eigen::VectorXd quad = region_mean_quadrature(
        [](const Eigen::VectorXd& p) { return Eigen::VectorXd::Constant(1, 2.0 * p[0] * p[0]); },
        Eigen::VectorXd::Constant(1, 0.5), 0.2, RegionMode::one_sided, 16);
    const double closed = 2.0 * (0.25 + 0.1 + 0.04 / 3.0);

    d << "[2,2,1] reaction at (1, 0.3), h=0.2, 1e5 draws: max |mean-quad|/SE " << worst_z
      << " (limit 4); 1-param case MC " << std::setprecision(6) << mc << " +- " << mc_se
      << ", quadrature " << quad[0] << ", closed form " << closed;
    return worst_z < 4.0 && std::abs(mc - closed) < 4.0 * mc_se && std::abs(quad[0] - closed) < 1e-12;
  });
}

CheckResult check_spread_identity() {
  return timed(5, "estimation error = gradient std", 30.0, [](std::ostringstream& d) {
    const std::size_t n = 100000;
    const RegionSamples s = tiny_region_samples(n);
    const Eigen::MatrixXd dev = s.draws.colwise() - s.quadrature;
    const double rms = std::sqrt(dev.colwise().squaredNorm().mean());
    const Eigen::VectorXd mean = s.draws.rowwise().mean();
    const Eigen::MatrixXd centered = s.draws.colwise() - mean;
    const double spread = (centered.rowwise().squaredNorm() / double(n)).cwiseSqrt().norm();
    const double rel = std::abs(rms / spread - 1.0);
    d << "RMS deviation " << rms << ", std norm " << spread << ", rel diff " << rel << " (limit 0.02)";
    return rel < 0.02;
  });
}

CheckResult check_trust_region() {
  return timed(6, "trust-region suite", 5.0, [](std::ostringstream& d) {
    bool ok = true;

    // Buffer law: after t pushes the buffer holds the last min(t, T0) in order.
    TrustRegionConfig c5;
    c5.T0 = 5;
    TrustRegionState ring(c5);
    bool law = true;
    for (int t = 1; t <= 6; ++t) {
      ring.calibrate(Eigen::VectorXd::Constant(2, double(t)));
      const auto& buf = ring.buffer();
      law = law && buf.size() == static_cast<std::size_t>(std::min(t, 5));
      for (std::size_t i = 0; i < buf.size(); ++i) {
        law = law && buf[i][0] == double(t - static_cast<int>(buf.size()) + 1 + static_cast<int>(i));
      }
    }
    law = law && ring.buffer().front()[0] == 2.0;
    d << "eviction " << (law ? "ok" : "BAD") << "; ";
    ok = ok && law;

    TrustRegionState pair;
    pair.calibrate(Eigen::Vector2d(1.0, 0.0));
    pair.calibrate(Eigen::Vector2d(-1.0, 0.0));
    d << "sigma{(1,0),(-1,0)} = " << std::setprecision(17) << pair.sigma() << std::setprecision(3) << "; ";
    ok = ok && pair.sigma() == 1.0;

    TrustRegionConfig cap;
    cap.width_cap = 2.0 * 3.141592653589793;
    TrustRegionState flat(cap);
    for (int i = 0; i < 3; ++i) flat.calibrate(Eigen::Vector3d(0.5, -1.0, 2.0));
    const bool clamp = flat.sigma() == cap.sigma_floor && flat.effective_width() == cap.width_cap;
    d << "zero variance: sigma " << flat.sigma() << ", width " << flat.effective_width() << "; ";
    ok = ok && clamp;

    RunConfig rc;
    rc.problem = "reaction";
    rc.model = tanh_net({2, 8, 8, 1});
    rc.iterations = 20;
    rc.mesh = {11, 11, 11, 21};
    rc.eval_every = 1;
    rc.seed = 5;
    rc.deterministic_trace = true;
    rc.objective.kind = ObjectiveKind::point;
    const std::string point = trace_to_csv(train(rc).trace);
    rc.objective.kind = ObjectiveKind::region;
    rc.r0 = 0.0;
    const std::string region = trace_to_csv(train(rc).trace);
    d << "point vs region(r0=0) trace " << (point == region ? "identical" : "DIFFERENT") << "; ";
    ok = ok && point == region;

    rc.r0 = 1e-4;
    rc.iterations = 1;
    const RunArtifacts one = train(rc);
    d << "T=1 sigma " << one.trust_region.sigma();
    ok = ok && one.trust_region.sigma() == one.trust_region.config().sigma_floor;
    return ok;
  });
}

CheckResult check_sigma_limit() {
  return timed(7, "sigma limit at lr=0", 5.0, [](std::ostringstream& d) {
    RunConfig rc;
    rc.problem = "reaction";
    rc.model = tanh_net({2, 8, 8, 1});
    rc.iterations = 10;
    rc.T0 = 10;
    rc.r0 = 1e-2;
    rc.mesh = {11, 11, 11, 21};
    rc.eval_every = 10;
    rc.optimizer.lr = 0.0;
    rc.seed = 3;
    rc.objective.kind = ObjectiveKind::region;

    std::vector<std::vector<PerturbedSet>> draws;
    std::vector<Eigen::VectorXd> thetas;
    const RunArtifacts run = train(rc, [&](const IterationView& v) {
      draws.push_back(*v.draws);
      thetas.push_back(v.theta->values);
    });
    bool frozen = true;
    for (const auto& th : thetas) frozen = frozen && th == thetas.front();

    // Fixed theta, same draws, gradients rebuilt from scratch.
    const PdeProblem problem = make_problem(rc.problem);
    ModelConfig model = rc.model;
    model.init_seed = rc.seed;
    const FlatParams theta = unflatten(model, thetas.front());
    std::vector<Eigen::VectorXd> fixed;
    for (const auto& dr : draws) fixed.push_back(tape_gradient(problem, model, theta, dr.front().points));
    const double sigma_fixed = std::max(gradient_spread(fixed), 1e-12);
    const double diff = std::abs(sigma_fixed - run.trust_region.sigma());
    d << "theta frozen " << (frozen ? "yes" : "NO") << ", sigma trainer " << std::setprecision(17)
      << run.trust_region.sigma() << ", fixed-theta " << sigma_fixed << std::setprecision(3)
      << ", |diff| " << diff << " (limit 1e-12)";
    return frozen && diff < 1e-12;
  });
}

CheckResult check_optimizers() {
  return timed(8, "optimizer oracles", 2.0, [](std::ostringstream& d) {
    Eigen::Matrix2d A;
    A << 3.0, 1.0, 1.0, 2.0;
    const LossAndGrad quad = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      g = A * x;
      return 0.5 * x.dot(A * x);
    };
    LbfgsState qs;
    Eigen::VectorXd x = Eigen::Vector2d(4.0, -3.0);
    std::size_t qsteps = 0;
    Eigen::VectorXd g = A * x;
    while (g.norm() >= 1e-10 && qsteps < 10) {
      x = lbfgs_step(qs, x, quad).params;
      g = A * x;
      ++qsteps;
    }
    const bool q_ok = g.norm() < 1e-10;
    d << "quadratic |grad| " << g.norm() << " after " << qsteps << " steps; ";

    const LossAndGrad rosen = [](const Eigen::VectorXd& v, Eigen::VectorXd& gr) {
      const double a = v[0], b = v[1];
      gr.resize(2);
      gr[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
      gr[1] = 200.0 * (b - a * a);
      return (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a);
    };
    LbfgsState rs;
    Eigen::VectorXd r = Eigen::Vector2d(-1.2, 1.0);
    Eigen::VectorXd scratch;
    double f = rosen(r, scratch);
    std::size_t rsteps = 0;
    while (f >= 1e-8 && rsteps < 100) {
      const LbfgsStep step = lbfgs_step(rs, r, rosen);
      r = step.params;
      f = step.f1;
      ++rsteps;
    }
    const bool r_ok = f < 1e-8;
    d << "Rosenbrock f " << f << " after " << rsteps << " steps; ";

    AdamState adam;
    Eigen::VectorXd p = Eigen::Vector3d(0.3, -1.5, 2.0);
    const Eigen::VectorXd p0 = p;
    for (int i = 0; i < 5; ++i) p = adam_step(adam, p, Eigen::VectorXd::Zero(3), 0.1);
    const bool a_ok = p == p0;
    d << "Adam zero-gradient fixed point " << (a_ok ? "exact" : "MOVED");
    return q_ok && r_ok && a_ok;
  });
}

CheckResult check_taylor_order() {
  return timed(10, "first-order bias in h", 30.0, [](std::ostringstream& d) {
    const PdeProblem problem = make_problem("reaction");
    const ModelConfig config = tanh_net({2, 4, 1});
    const FlatParams params = random_params(config, 17);
    ObjectiveSpec spec;
    spec.kind = ObjectiveKind::region;
    const Eigen::Vector2d point(1.0, 0.3);
    const Eigen::VectorXd g0 = point_gradient(problem, config, params, point, spec);
    const double hs[] = {4e-2, 2e-2, 1e-2};
    double dev[3];
    for (int i = 0; i < 3; ++i) {
      // Same seed for every h: the draws are the same unit offsets scaled by h.
      std::mt19937_64 rng(31);
      const Eigen::MatrixXd g = sampled_region_gradients(problem, config, params, point, hs[i], spec, 20000, rng);
      dev[i] = (g.rowwise().mean() - g0).norm();
    }
    const double r1 = dev[0] / dev[1];
    const double r2 = dev[1] / dev[2];
    d << "deviation " << dev[0] << ", " << dev[1] << ", " << dev[2] << "; ratios " << r1 << ", " << r2
      << " (want [1.6, 2.4])";
    return r1 >= 1.6 && r1 <= 2.4 && r2 >= 1.6 && r2 <= 2.4;
  });
}

CheckResult check_metrics() {
  return timed(11, "metric formulas", 1.0, [](std::ostringstream& d) {
    bool ok = true;
    for (const char* name : kProblems) {
      const PdeProblem problem = make_problem(name);
      const CollocationSet mesh = uniform_mesh(problem, 101, 101, 101);
      const Eigen::RowVectorXd exact = problem.exact(mesh.interior);
      const ModelConfig config = tanh_net({2, 8, 1});
      const RelativeErrors zero = relative_errors(forward(config, zeros(config), mesh.interior), exact);
      const RelativeErrors same = relative_errors(exact, exact);
      d << name << " zero rMSE " << std::setprecision(17) << zero.rmse << std::setprecision(3)
        << ", exact rMSE " << same.rmse << "; ";
      ok = ok && std::abs(zero.rmse - 1.0) <= 1e-12 && std::abs(zero.rmae - 1.0) <= 1e-12 &&
           same.rmse == 0.0 && same.rmae == 0.0;
    }
    return ok;
  });
}

CheckResult check_desk_trend(const DeskTrendOptions& options) {
  return timed(9, "desk-scale trend", 900.0, [&](std::ostringstream& d) {
    ExperimentSpec spec;
    spec.base.problem = "reaction";
    spec.base.model = desk_preset();
    spec.base.optimizer.kind = OptimizerKind::adam;
    spec.base.optimizer.lr = 1e-3;
    spec.base.iterations = options.iterations;
    spec.base.mesh = {51, 51, 51, 101};
    spec.base.eval_every = 250;
    spec.base.r0 = 1e-4;
    spec.base.T0 = 10;
    ArmSpec point;
    point.name = "point";
    point.kind = ObjectiveKind::point;
    ArmSpec region;
    region.name = "region";
    region.kind = ObjectiveKind::region;
    spec.arms = {point, region};
    spec.seeds = options.seeds;
    spec.output = options.output.empty()
                      ? std::filesystem::temp_directory_path() / "ropinn-desk-trend"
                      : options.output;

    ExperimentOptions eo;
    eo.threads = options.threads;
    const ExperimentResult result = run_experiment(spec, eo);
    const SummaryRow& p = result.summary.rows[0];
    const SummaryRow& r = result.summary.rows[1];
    d << "median rMSE point " << p.rmse.median << " region " << r.rmse.median
      << "; point runs in failure mode " << p.failure_modes << "/" << p.runs << "; per seed:";
    for (const RunOutcome& o : result.summary.runs) d << " " << o.arm << "#" << o.seed << "=" << o.rmse;
    d << "; output " << spec.output.string();
    const bool ordering = r.completed == r.runs && p.completed == p.runs && r.rmse.median < p.rmse.median;
    const bool failures = p.failure_modes * 3 >= 2 * p.runs;
    return ordering && failures;
  });
}

std::vector<std::function<CheckResult()>> fast_checks() {
  return {check_gradients,   check_jets,        check_analytic_residual, check_unbiased_region,
          check_spread_identity, check_trust_region, check_sigma_limit, check_optimizers,
          check_taylor_order, check_metrics};
}

} // namespace ropinn::checks
