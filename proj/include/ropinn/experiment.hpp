#pragma once

// Experiments: several arms (objective variants) times several seeds on one
// problem, described by a YAML document.
//
//   schema_version: 1
//   problem: reaction            # required
//   problem_params: {rho: 5}
//   model:                       # required
//     arch: mlp-tanh
//     layers: [2, 64, 64, 64, 1] # or preset: desk | paper
//   optimizer: {kind: adam, lr: 1.0e-3}
//   iterations: 5000
//   mesh: {interior: 51, initial: 51, boundary: 51, test: 101}
//   eval_every: 100
//   checkpoint_every: 0
//   trust_region: {r0: 1.0e-4, T0: 10, sigma0: 1, mean_normalized: false}
//   objective: {lambda_eq: 1, lambda_ic: 1, lambda_bc: 1, gpinn_lambda: [1, 1],
//               region_mode: one-sided, perturb_constraints: true, samples: 1}
//   arms:
//     - {name: point, kind: point}
//     - {name: region, kind: region, r0: 1.0e-4, T0: 5}
//   seeds: [0, 1, 2]
//   output: runs/reaction
//   report: text                 # text | json
//
// Arms may override r0, T0, sigma0, samples, region_mode, gpinn_lambda,
// optimizer and lr. Without an arms list there is a single region arm
// called "main".

#include "ropinn/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ropinn {

struct ArmSpec {
  std::string name;
  ObjectiveKind kind = ObjectiveKind::region;
  std::optional<double> r0;
  std::optional<std::size_t> T0;
  std::optional<double> sigma0;
  std::optional<std::size_t> samples;
  std::optional<RegionMode> region_mode;
  std::optional<std::array<double, 2>> gpinn_lambda;
  std::optional<OptimizerKind> optimizer;
  std::optional<double> lr;

  bool operator==(const ArmSpec&) const = default;
};

enum class ReportFormat { text, json };

struct ExperimentSpec {
  int schema_version = 1;
  /// Shared settings; seed, paths and objective kind are filled per run.
  RunConfig base;
  std::vector<ArmSpec> arms;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output = "runs";
  ReportFormat report = ReportFormat::text;

  bool operator==(const ExperimentSpec&) const = default;
};

struct ConfigIssue {
  std::size_t line = 0; // 1-based; 0 when the issue has no location
  std::string field;
  std::string message;
};

struct ConfigValidation {
  ExperimentSpec spec; // defaults filled in wherever the document was silent or wrong
  std::vector<ConfigIssue> issues;

  bool ok() const noexcept { return issues.empty(); }
  std::string describe() const;
};

ConfigValidation validate_config(std::string_view text);

/// validate_config that throws ConfigError listing every issue.
ExperimentSpec parse_experiment(std::string_view text);

/// YAML text that validate_config maps back to an equal spec.
std::string render(const ExperimentSpec& spec);

/// The run config of one (arm, seed), with output paths under spec.output.
RunConfig resolve(const ExperimentSpec& spec, const ArmSpec& arm, std::uint64_t seed);

std::string run_stem(const std::string& arm, std::uint64_t seed); // "<arm>__seed<k>"

struct Stats {
  double median = 0.0;
  double mean = 0.0;
  double std = 0.0; // sample standard deviation (n - 1); 0 for a single value
  std::size_t count = 0;
};

Stats summarize(std::vector<double> values);

struct RunOutcome {
  std::string arm;
  std::uint64_t seed = 0;
  bool completed = false;
  std::string message;          // abort or error text
  double final_loss = 0.0;
  double rmae = 0.0;
  double rmse = 0.0;
  bool failure_mode = false;    // rMSE > 0.9 on reaction or convection
};

struct SummaryRow {
  std::string arm;
  std::string kind;
  std::string problem;
  std::size_t runs = 0;
  std::size_t completed = 0;
  std::size_t failure_modes = 0;
  Stats loss;
  Stats rmae;
  Stats rmse;
  /// (point - arm) / point on the medians; absent without a positive point baseline.
  std::optional<double> promotion_loss;
  std::optional<double> promotion_rmae;
  std::optional<double> promotion_rmse;
};

struct SummaryTable {
  std::string problem;
  std::string baseline_arm; // first point-kind arm, empty if none
  std::vector<SummaryRow> rows;
  std::vector<RunOutcome> runs;
};

/// Relative promotion (point - arm) / point; nullopt unless point > 0.
std::optional<double> promotion(double point, double arm);

/// True when rMSE > 0.9 on a problem with a known failure mode.
bool failure_mode(std::string_view problem, double rmse);

SummaryTable build_summary(const ExperimentSpec& spec, const std::vector<RunOutcome>& runs);
std::string summary_to_json(const ExperimentSpec& spec, const SummaryTable& table);
std::string render_table(const SummaryTable& table);

struct ExperimentOptions {
  std::size_t threads = 1;
};

struct ExperimentResult {
  SummaryTable summary;
  int exit_code = 0; // 0 iff every run completed
};

/// Trains every (arm, seed) on a bounded worker pool and writes
///   experiment.yaml, traces/<stem>.csv, runs/<stem>.json,
///   checkpoints/<stem>.json, summary.json, summary.txt
/// under spec.output.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options = {});

/// Rebuilds the summary of a finished experiment directory from
/// experiment.yaml and the trace CSVs, and rewrites summary.json/.txt.
SummaryTable report_directory(const std::filesystem::path& dir);

} // namespace ropinn
