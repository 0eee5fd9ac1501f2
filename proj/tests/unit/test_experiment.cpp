#include "ropinn/errors.hpp"
#include "ropinn/experiment.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ropinn;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(schema_version: 1
problem: reaction
model:
  arch: mlp-tanh
  layers: [2, 6, 6, 1]
optimizer: {kind: adam, lr: 1.0e-3}
iterations: 12
mesh: {interior: 8, initial: 8, boundary: 8, test: 11}
eval_every: 4
arms:
  - {name: point, kind: point}
  - {name: region, kind: region, r0: 1.0e-3, T0: 5}
seeds: [0, 1, 2]
)";

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ropinn-experiment-tests" / name;
  fs::remove_all(dir);
  return dir;
}

bool has_issue(const ConfigValidation& v, const std::string& field) {
  for (const ConfigIssue& i : v.issues) {
    if (i.field.find(field) != std::string::npos) return true;
  }
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

} // namespace

TEST_SUITE("cli-report") {

TEST_CASE("empty document lists the required fields and fills defaults") {
  const ConfigValidation v = validate_config("");
  CHECK_FALSE(v.ok());
  CHECK(has_issue(v, "problem"));
  CHECK(has_issue(v, "model"));
  CHECK(v.spec.base.r0 == 1e-4);
  CHECK(v.spec.base.T0 == 10);
  CHECK(v.spec.base.sigma0 == 1.0);
  CHECK(v.spec.base.objective.samples == 1);
  CHECK_THROWS_AS(parse_experiment(""), ConfigError);
}

TEST_CASE("negative r0 is rejected, T0 = 5 is accepted") {
  std::string text = std::string(kSmall) + "trust_region: {r0: -1}\n";
  const ConfigValidation bad = validate_config(text);
  CHECK_FALSE(bad.ok());
  CHECK(has_issue(bad, "r0"));

  const ExperimentSpec ok = parse_experiment(std::string(kSmall) + "trust_region: {T0: 5}\n");
  CHECK(ok.base.T0 == 5);
}

TEST_CASE("unknown keys carry a line number") {
  const ConfigValidation v = validate_config(std::string(kSmall) + "learning_rate: 0.1\n");
  REQUIRE_FALSE(v.ok());
  bool located = false;
  for (const ConfigIssue& i : v.issues) located = located || (i.field.find("learning_rate") != std::string::npos && i.line == 14);
  CHECK(located);
  CHECK(v.describe().find("line 14") != std::string::npos);
}

TEST_CASE("arm names unique, seeds non-empty") {
  std::string dup = kSmall;
  dup.replace(dup.find("name: region"), 12, "name: point ");
  CHECK_FALSE(validate_config(dup).ok());
  std::string none = kSmall;
  none.replace(none.find("seeds: [0, 1, 2]"), 16, "seeds: []");
  CHECK_FALSE(validate_config(none).ok());
}

TEST_CASE("presets and defaults") {
  const ExperimentSpec s = parse_experiment("problem: wave\nmodel: {arch: fls, preset: desk}\n");
  CHECK(s.base.model.layer_widths == std::vector<std::size_t>{2, 64, 64, 64, 1});
  CHECK(s.base.model.arch == Arch::fls);
  REQUIRE(s.arms.size() == 1);
  CHECK(s.arms[0].name == "main");
  CHECK(s.arms[0].kind == ObjectiveKind::region);
}

TEST_CASE("render round trip") {
  ExperimentSpec s = parse_experiment(kSmall);
  CHECK(parse_experiment(render(s)) == s);

  s.base.problem = "convection";
  s.base.problem_params = {{"beta", 30.0}};
  s.base.objective.region_mode = RegionMode::centered;
  s.base.objective.perturb_constraints = false;
  s.base.objective.lambda_ic = 0.125;
  s.base.mean_normalized_sigma = true;
  s.base.r0 = 3.3e-5;
  s.arms[1].samples = 4;
  s.arms[1].gpinn_lambda = std::array<double, 2>{0.1, 1.0 / 3.0};
  s.arms[1].optimizer = OptimizerKind::lbfgs;
  s.arms[1].lr = 0.1;
  s.arms.push_back({});
  s.arms.back().name = "g-pinn_v2.1";
  s.arms.back().kind = ObjectiveKind::gpinn;
  s.seeds = {7, 18446744073709551615ull};
  s.output = "out dir/with: \"quotes\"";
  s.report = ReportFormat::json;
  const ConfigValidation v = validate_config(render(s));
  INFO(v.describe());
  CHECK(v.ok());
  CHECK(v.spec == s);
}

TEST_CASE("resolve fills per-run paths and overrides") {
  const ExperimentSpec s = parse_experiment(kSmall);
  const RunConfig rc = resolve(s, s.arms[1], 2);
  CHECK(rc.seed == 2);
  CHECK(rc.r0 == 1e-3);
  CHECK(rc.T0 == 5);
  CHECK(rc.objective.kind == ObjectiveKind::region);
  CHECK(rc.trace_path == s.output / "traces" / "region__seed2.csv");
  CHECK(run_stem("point", 0) == "point__seed0");
}

TEST_CASE("statistics") {
  const Stats s = summarize({3.0, 1.0, 2.0, 10.0});
  CHECK(s.median == 2.5);
  CHECK(s.mean == 4.0);
  CHECK(s.std == doctest::Approx(std::sqrt((1.0 + 9.0 + 4.0 + 36.0) / 3.0)));
  CHECK(s.count == 4);
  CHECK(summarize({5.0}).std == 0.0);
}

TEST_CASE("promotion and failure flag") {
  CHECK(*promotion(0.4, 0.4) == 0.0);
  CHECK_FALSE(promotion(0.0, 0.1).has_value());
  CHECK(failure_mode("reaction", 0.95));
  CHECK(failure_mode("convection", 0.91));
  CHECK_FALSE(failure_mode("reaction", 0.9));
  CHECK_FALSE(failure_mode("wave", 0.99));

  const auto ref = nlohmann::json::parse(slurp(fs::path(ROPINN_DOCS_DIR) / "reference_row.json"));
  const double p = *promotion(ref["point"].get<double>(), ref["region"].get<double>());
  CHECK(p == doctest::Approx(ref["promotion"].get<double>()).epsilon(0.01));
}

TEST_CASE("two arms x three seeds: artifacts, summary, report") {
  ExperimentSpec s = parse_experiment(kSmall);
  s.output = fresh_dir("basic");
  const ExperimentResult r = run_experiment(s, {2});
  CHECK(r.exit_code == 0);
  CHECK(r.summary.runs.size() == 6);
  CHECK(r.summary.baseline_arm == "point");
  REQUIRE(r.summary.rows.size() == 2);
  CHECK(*r.summary.rows[0].promotion_rmse == 0.0);
  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(s.output / "traces")) traces += e.path().extension() == ".csv";
  CHECK(traces == 6);
  CHECK(fs::exists(s.output / "summary.json"));
  CHECK(fs::exists(s.output / "summary.txt"));
  CHECK(fs::exists(s.output / "checkpoints" / "region__seed1.json"));

  const auto j = nlohmann::json::parse(slurp(s.output / "summary.json"));
  CHECK(j["arms"][1]["settings"]["T0"] == 5);

  // The report is rebuilt from the traces alone.
  const std::string before = slurp(s.output / "summary.json");
  const SummaryTable again = report_directory(s.output);
  CHECK(summary_to_json(s, again) == summary_to_json(s, r.summary));
  CHECK(slurp(s.output / "summary.json") == before);
  CHECK(render_table(again).find("region") != std::string::npos);
}

TEST_CASE("thread count does not change results") {
  ExperimentSpec s = parse_experiment(kSmall);
  s.seeds = {4, 5};
  s.output = fresh_dir("serial");
  const ExperimentResult a = run_experiment(s, {1});
  s.output = fresh_dir("parallel");
  const ExperimentResult b = run_experiment(s, {3});
  REQUIRE(a.summary.runs.size() == b.summary.runs.size());
  for (std::size_t i = 0; i < a.summary.runs.size(); ++i) CHECK(a.summary.runs[i].rmse == b.summary.runs[i].rmse);
}

TEST_CASE("an aborted run gives a partial summary and a nonzero exit") {
  ExperimentSpec s = parse_experiment(kSmall);
  s.seeds = {0};
  s.arms[1].lr = 1e200;
  s.output = fresh_dir("abort");
  const ExperimentResult r = run_experiment(s, {1});
  CHECK(r.exit_code != 0);
  REQUIRE(r.summary.rows.size() == 2);
  CHECK(r.summary.rows[0].completed == 1);
  CHECK(r.summary.rows[1].completed == 0);
  CHECK_FALSE(r.summary.runs[1].message.empty());
}

} // TEST_SUITE
