#include "support.hpp"

#include "ropinn/errors.hpp"
#include "ropinn/optim.hpp"
#include "ropinn/trainer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ropinn;
namespace fs = std::filesystem;

namespace {

RunConfig small(ObjectiveKind kind, std::size_t iterations = 15) {
  RunConfig c;
  c.problem = "reaction";
  c.model = test::net({2, 6, 6, 1});
  c.objective.kind = kind;
  c.iterations = iterations;
  c.mesh = {8, 8, 8, 11};
  c.eval_every = 1;
  c.seed = 2;
  c.deterministic_trace = true;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ropinn-trainer-tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string read(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("identical configs give identical traces") {
  const RunConfig c = small(ObjectiveKind::region);
  const RunArtifacts a = train(c);
  const RunArtifacts b = train(c);
  CHECK(a.trace == b.trace);
  CHECK(a.params.values == b.params.values);
  CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
}

TEST_CASE("point run equals region run at r0 = 0") {
  RunConfig c = small(ObjectiveKind::point);
  const std::string point = trace_to_csv(train(c).trace);
  c.objective.kind = ObjectiveKind::region;
  c.r0 = 0.0;
  CHECK(trace_to_csv(train(c).trace) == point);
}

TEST_CASE("one iteration leaves sigma floored") {
  const RunArtifacts r = train(small(ObjectiveKind::region, 1));
  CHECK(r.trust_region.sigma() == 1e-12);
  CHECK(r.trust_region.buffer().size() == 1);
}

TEST_CASE("trace rows") {
  RunConfig c = small(ObjectiveKind::region, 23);
  c.eval_every = 5;
  const RunArtifacts r = train(c);
  std::vector<std::size_t> iters;
  for (const TraceRow& row : r.trace) iters.push_back(row.iter);
  CHECK(iters == std::vector<std::size_t>{0, 5, 10, 15, 20, 22});
  CHECK(r.trace.front().sigma == 1.0); // sigma0 before the first calibration
  CHECK(r.trace.front().eff_width == c.r0);
  for (const TraceRow& row : r.trace) {
    CHECK(row.eff_width >= 1e-10);
    CHECK(row.eff_width <= 1.0);
    CHECK(row.loss_total == doctest::Approx(row.loss_eq + row.loss_ic + row.loss_bc));
    CHECK(row.wall_ms == 0.0);
  }
  CHECK(r.trace.back().rmse == doctest::Approx(r.metrics.rmse).epsilon(1e-14));
}

TEST_CASE("hook sees theta_t, g_t and the draws") {
  RunConfig c = small(ObjectiveKind::region, 4);
  c.r0 = 1e-2;
  std::vector<std::size_t> seen;
  std::vector<Eigen::VectorXd> thetas;
  const RunArtifacts r = train(c, [&](const IterationView& v) {
    seen.push_back(v.iter);
    thetas.push_back(v.theta->values);
    CHECK(v.draws->size() == 1);
    CHECK(v.draws->front().width == v.width);
    CHECK(v.state->buffer().back() == *v.gradient);
  });
  CHECK(seen == std::vector<std::size_t>{0, 1, 2, 3});
  ModelConfig m = c.model;
  m.init_seed = c.seed;
  CHECK(thetas.front() == init(m).values);
  CHECK(thetas.back() != r.params.values);
}

TEST_CASE("L-BFGS and gpinn runs complete") {
  RunConfig c = small(ObjectiveKind::region, 5);
  c.optimizer.kind = OptimizerKind::lbfgs;
  const RunArtifacts l = train(c);
  CHECK(l.status == RunStatus::completed);
  CHECK(l.trace.back().loss_total < l.trace.front().loss_total);

  c = small(ObjectiveKind::gpinn, 5);
  c.problem = "convection";
  const RunArtifacts g = train(c);
  CHECK(g.status == RunStatus::completed);
  CHECK(g.trace.front().eff_width == 0.0);
}

TEST_CASE("numeric blow-up aborts with the last good parameters") {
  RunConfig c = small(ObjectiveKind::point, 50);
  c.optimizer.lr = 1e200;
  c.checkpoint_path = scratch("abort.json");
  std::vector<Eigen::VectorXd> thetas;
  const RunArtifacts r = train(c, [&](const IterationView& v) { thetas.push_back(v.theta->values); });
  REQUIRE(r.status == RunStatus::aborted);
  REQUIRE(r.abort_iteration.has_value());
  CHECK(*r.abort_iteration < 50);
  CHECK(r.params.values.allFinite());
  CHECK_FALSE(r.abort_message.empty());
  const Checkpoint cp = load_checkpoint(c.checkpoint_path);
  CHECK(cp.iteration == *r.abort_iteration);
  CHECK(cp.params.values == r.params.values);
}

TEST_CASE("trace CSV round trip") {
  const RunArtifacts r = train(small(ObjectiveKind::region, 6));
  const fs::path p = scratch("trace.csv");
  write_trace_csv(p, r.trace);
  CHECK(read(p).rfind(std::string(kTraceHeader), 0) == 0);
  CHECK(read_trace_csv(p) == r.trace);
}

TEST_CASE("run config JSON round trip and checkpoints") {
  RunConfig c = small(ObjectiveKind::gpinn);
  c.problem_params = {{"rho", 3.0}};
  c.objective.gpinn_lambda = {0.5, 2.0};
  c.optimizer = {OptimizerKind::lbfgs, 0.01, 4};
  c.trace_path = "a/b.csv";
  c.mean_normalized_sigma = true;
  CHECK(run_config_from_json(run_config_to_json(c)) == c);

  const FlatParams p = test::random_params(c.model, 1);
  const fs::path path = scratch("ckpt.json");
  save_checkpoint(path, c, p, 17);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.config == c);
  CHECK(back.params.values == p.values);
  CHECK(back.iteration == 17);
}

TEST_CASE("periodic checkpoints") {
  RunConfig c = small(ObjectiveKind::region, 10);
  c.checkpoint_every = 4;
  c.checkpoint_path = scratch("periodic.json");
  const RunArtifacts r = train(c);
  const Checkpoint cp = load_checkpoint(c.checkpoint_path);
  CHECK(cp.iteration == 10);
  CHECK(cp.params.values == r.params.values);
}

TEST_CASE("validation") {
  RunConfig c = small(ObjectiveKind::region);
  c.iterations = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = small(ObjectiveKind::region);
  c.r0 = -1.0;
  CHECK_THROWS_AS(train(c), ConfigError);
  c = small(ObjectiveKind::region);
  c.model = test::net({2, 1});
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = small(ObjectiveKind::region);
  c.problem = "heat";
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("convex smoke: running mean of |grad|^2 decays after burn-in") {
  Eigen::Matrix3d A;
  A << 3, 1, 0, 1, 2, 0.5, 0, 0.5, 1;
  AdamState s;
  Eigen::VectorXd x = Eigen::Vector3d(2.0, -1.0, 1.5);
  double sum = 0.0, previous = 0.0;
  for (int t = 1; t <= 300; ++t) {
    const Eigen::VectorXd g = A * x;
    sum += g.squaredNorm();
    const double running = sum / t;
    if (t > 10) CHECK(running < previous);
    previous = running;
    x = adam_step(s, x, g, 1e-2);
  }
}

} // TEST_SUITE
