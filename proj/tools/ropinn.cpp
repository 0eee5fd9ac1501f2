// ropinn: run experiments, rebuild reports, run the oracle suite.
//
//   ropinn run experiment.yaml --threads 4 --out runs/reaction
//   ropinn report runs/reaction
//   ropinn check [--trend]

#include "ropinn/checks/acceptance.hpp"
#include "ropinn/errors.hpp"
#include "ropinn/experiment.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void print_summary(const ropinn::ExperimentSpec& spec, const ropinn::SummaryTable& table) {
  if (spec.report == ropinn::ReportFormat::json) std::cout << ropinn::summary_to_json(spec, table) << "\n";
  else std::cout << ropinn::render_table(table);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-optimized PINN training lab"};
  app.require_subcommand(1);

  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  std::filesystem::path config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::size_t threads = 1;
  std::string preset;

  auto* run = app.add_subcommand("run", "Train every (arm, seed) of an experiment file");
  run->add_option("config", config_path, "Experiment YAML")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Run this single seed instead of the seed list");
  run->add_option("--out", out, "Output directory (overrides the file)");
  run->add_option("--threads", threads, "Concurrent runs")->check(CLI::PositiveNumber);
  run->add_option("--preset", preset, "Replace the model widths")->check(CLI::IsMember({"desk", "paper"}));

  std::filesystem::path report_dir;
  auto* report = app.add_subcommand("report", "Rebuild the summary of a finished experiment");
  report->add_option("dir", report_dir, "Experiment output directory")->required()->check(CLI::ExistingDirectory);

  bool trend = false;
  std::size_t trend_iterations = 5000;
  auto* check = app.add_subcommand("check", "Run the oracle and property suite");
  check->add_flag("--trend", trend, "Also run the desk-scale point vs region comparison (minutes)");
  check->add_option("--trend-iterations", trend_iterations, "Iterations per trend run");
  check->add_option("--threads", threads, "Concurrent trend runs")->check(CLI::PositiveNumber);
  check->add_option("--out", out, "Output directory of the trend runs");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*run) {
      ropinn::ExperimentSpec spec = ropinn::parse_experiment(slurp(config_path));
      if (seed) spec.seeds = {*seed};
      if (out) spec.output = *out;
      if (preset == "desk") spec.base.model.layer_widths = ropinn::desk_preset().layer_widths;
      if (preset == "paper") spec.base.model.layer_widths = ropinn::paper_preset().layer_widths;
      const ropinn::ExperimentResult result = ropinn::run_experiment(spec, {threads});
      print_summary(spec, result.summary);
      return result.exit_code;
    }
    if (*report) {
      const ropinn::ExperimentSpec spec = ropinn::parse_experiment(slurp(report_dir / "experiment.yaml"));
      print_summary(spec, ropinn::report_directory(report_dir));
      return 0;
    }
    if (*check) {
      bool ok = true;
      for (const auto& c : ropinn::checks::fast_checks()) {
        const auto r = c();
        std::cout << ropinn::checks::format(r) << std::endl;
        ok = ok && r.passed;
      }
      if (trend) {
        ropinn::checks::DeskTrendOptions opts;
        opts.iterations = trend_iterations;
        opts.threads = threads;
        if (out) opts.output = *out;
        const auto r = ropinn::checks::check_desk_trend(opts);
        std::cout << ropinn::checks::format(r) << std::endl;
        ok = ok && r.passed;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
