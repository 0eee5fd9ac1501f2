#pragma once

// The training loop.
//
// Every kind runs through the same loop. Per iteration t:
//
//   h_t   = r0 / sigma_t (clamped), or 0 for point and gpinn runs
//   S'_t  = sample_region(S, h_t)            (drawn once, frozen for L-BFGS)
//   g_t   = grad L(theta_t; S'_t)
//   theta_{t+1} from the optimizer
//   sigma_{t+1} from the buffer after pushing g_t
//
// Point and gpinn runs keep the buffer and sigma as diagnostics only; the
// width they sample with stays 0.

#include "ropinn/model.hpp"
#include "ropinn/objectives.hpp"
#include "ropinn/pde.hpp"
#include "ropinn/trust_region.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ropinn {

enum class OptimizerKind { adam, lbfgs };

std::string_view to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view text);

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;                // Adam only; L-BFGS starts each search at a unit step
  std::size_t lbfgs_memory = 10;

  bool operator==(const OptimizerSpec&) const = default;
};

struct MeshSpec {
  std::size_t interior = 101; // points per axis
  std::size_t initial = 101;
  std::size_t boundary = 101;
  std::size_t test = 101;     // per axis, unperturbed, metrics only

  bool operator==(const MeshSpec&) const = default;
};

struct RunConfig {
  std::string problem = "reaction";
  std::map<std::string, double> problem_params;
  ModelConfig model;
  ObjectiveSpec objective;
  OptimizerSpec optimizer;
  std::size_t iterations = 1000;
  double r0 = 1e-4;
  std::size_t T0 = 10;
  double sigma0 = 1.0;
  bool mean_normalized_sigma = false;
  std::uint64_t seed = 0;
  MeshSpec mesh;
  std::size_t eval_every = 100;
  /// Write a checkpoint every this many iterations (0: only at the end).
  std::size_t checkpoint_every = 0;
  std::filesystem::path trace_path;
  std::filesystem::path checkpoint_path;
  /// Write wall_ms as 0 so that traces of equal runs compare byte for byte.
  bool deterministic_trace = false;

  bool operator==(const RunConfig&) const = default;
};

/// Throws ConfigError (or CapabilityError) describing the first problem.
void validate(const RunConfig& config);

std::string run_config_to_json(const RunConfig& config);
RunConfig run_config_from_json(std::string_view text);

struct TraceRow {
  std::size_t iter = 0;
  double loss_total = 0.0;
  double loss_eq = 0.0;
  double loss_ic = 0.0;
  double loss_bc = 0.0;
  double sigma = 0.0;
  double eff_width = 0.0;
  double rmae = 0.0;
  double rmse = 0.0;
  double wall_ms = 0.0;

  bool operator==(const TraceRow&) const = default;
};

inline constexpr std::string_view kTraceHeader =
    "iter,loss_total,loss_eq,loss_ic,loss_bc,sigma,eff_width,rmae,rmse,wall_ms";

std::string trace_to_csv(const std::vector<TraceRow>& rows);
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows);
std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path);

/// What the loop exposes after each iteration, before the trace row is made.
struct IterationView {
  std::size_t iter = 0;
  const FlatParams* theta = nullptr;        // theta_t
  const Eigen::VectorXd* gradient = nullptr; // g_t
  const std::vector<PerturbedSet>* draws = nullptr;
  double width = 0.0;                       // h_t
  const TrustRegionState* state = nullptr;  // after calibrating with g_t
};

enum class RunStatus { completed, aborted };

struct RunArtifacts {
  RunStatus status = RunStatus::completed;
  FlatParams params;                 // final, or last good when aborted
  std::vector<TraceRow> trace;
  MetricsReport metrics;             // at the returned params
  TrustRegionState trust_region;
  std::optional<std::size_t> abort_iteration;
  std::string abort_message;
  double wall_seconds = 0.0;
};

using IterationHook = std::function<void(const IterationView&)>;

/// Runs the loop. Numeric failures do not throw: the result is marked
/// aborted, carries the failing iteration and the parameters from before it,
/// and a checkpoint of those is written when a checkpoint path is set.
RunArtifacts train(const RunConfig& config, const IterationHook& hook = {});

/// Checkpoint file: {"iteration", "run_config", "params"}.
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const FlatParams& params, std::size_t iteration);

struct Checkpoint {
  RunConfig config;
  FlatParams params;
  std::size_t iteration = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace ropinn
