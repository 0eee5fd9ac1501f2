#include "ropinn/trainer.hpp"

#include "ropinn/errors.hpp"
#include "ropinn/optim.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace ropinn {

using nlohmann::json;

std::string_view to_string(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::lbfgs ? "lbfgs" : "adam";
}

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::adam;
  if (text == "lbfgs" || text == "l-bfgs") return OptimizerKind::lbfgs;
  throw ConfigError("unknown optimizer '" + std::string(text) + "' (expected adam or lbfgs)");
}

void validate(const RunConfig& c) {
  const PdeProblem problem = make_problem(c.problem, c.problem_params);
  validate(c.model);
  validate(c.objective, problem);
  if (c.iterations == 0) throw ConfigError("iterations must be >= 1");
  if (!(c.r0 >= 0.0) || !std::isfinite(c.r0)) throw ConfigError("r0 must be finite and >= 0");
  if (c.T0 == 0) throw ConfigError("T0 must be >= 1");
  if (!(c.sigma0 > 0.0) || !std::isfinite(c.sigma0)) throw ConfigError("sigma0 must be positive");
  if (!(c.optimizer.lr >= 0.0) || !std::isfinite(c.optimizer.lr)) {
    throw ConfigError("learning rate must be finite and >= 0");
  }
  if (c.optimizer.lbfgs_memory == 0) throw ConfigError("lbfgs memory must be >= 1");
  if (c.mesh.interior < 2 || c.mesh.initial < 2 || c.mesh.boundary < 2 || c.mesh.test < 2) {
    throw ConfigError("mesh sizes must be >= 2");
  }
  if (c.eval_every == 0) throw ConfigError("eval_every must be >= 1");
}

// ---------------------------------------------------------------------------
// RunConfig <-> JSON

namespace {

json to_json(const RunConfig& c) {
  json widths = json::array();
  for (std::size_t w : c.model.layer_widths) widths.push_back(w);
  return {
      {"problem", c.problem},
      {"problem_params", c.problem_params},
      {"model",
       {{"arch", to_string(c.model.arch)}, {"layer_widths", widths}, {"init_seed", c.model.init_seed}}},
      {"objective",
       {{"kind", to_string(c.objective.kind)},
        {"lambda_eq", c.objective.lambda_eq},
        {"lambda_ic", c.objective.lambda_ic},
        {"lambda_bc", c.objective.lambda_bc},
        {"gpinn_lambda", {c.objective.gpinn_lambda[0], c.objective.gpinn_lambda[1]}},
        {"region_mode", to_string(c.objective.region_mode)},
        {"perturb_constraints", c.objective.perturb_constraints},
        {"samples", c.objective.samples}}},
      {"optimizer",
       {{"kind", to_string(c.optimizer.kind)},
        {"lr", c.optimizer.lr},
        {"lbfgs_memory", c.optimizer.lbfgs_memory}}},
      {"iterations", c.iterations},
      {"r0", c.r0},
      {"T0", c.T0},
      {"sigma0", c.sigma0},
      {"mean_normalized_sigma", c.mean_normalized_sigma},
      {"seed", c.seed},
      {"mesh",
       {{"interior", c.mesh.interior},
        {"initial", c.mesh.initial},
        {"boundary", c.mesh.boundary},
        {"test", c.mesh.test}}},
      {"eval_every", c.eval_every},
      {"checkpoint_every", c.checkpoint_every},
      {"trace_path", c.trace_path.string()},
      {"checkpoint_path", c.checkpoint_path.string()},
      {"deterministic_trace", c.deterministic_trace},
  };
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.problem = j.at("problem").get<std::string>();
  c.problem_params = j.at("problem_params").get<std::map<std::string, double>>();
  const json& m = j.at("model");
  c.model.arch = parse_arch(m.at("arch").get<std::string>());
  c.model.layer_widths = m.at("layer_widths").get<std::vector<std::size_t>>();
  c.model.init_seed = m.at("init_seed").get<std::uint64_t>();
  const json& o = j.at("objective");
  c.objective.kind = parse_objective_kind(o.at("kind").get<std::string>());
  c.objective.lambda_eq = o.at("lambda_eq").get<double>();
  c.objective.lambda_ic = o.at("lambda_ic").get<double>();
  c.objective.lambda_bc = o.at("lambda_bc").get<double>();
  c.objective.gpinn_lambda = o.at("gpinn_lambda").get<std::array<double, 2>>();
  c.objective.region_mode = parse_region_mode(o.at("region_mode").get<std::string>());
  c.objective.perturb_constraints = o.at("perturb_constraints").get<bool>();
  c.objective.samples = o.at("samples").get<std::size_t>();
  const json& opt = j.at("optimizer");
  c.optimizer.kind = parse_optimizer(opt.at("kind").get<std::string>());
  c.optimizer.lr = opt.at("lr").get<double>();
  c.optimizer.lbfgs_memory = opt.at("lbfgs_memory").get<std::size_t>();
  c.iterations = j.at("iterations").get<std::size_t>();
  c.r0 = j.at("r0").get<double>();
  c.T0 = j.at("T0").get<std::size_t>();
  c.sigma0 = j.at("sigma0").get<double>();
  c.mean_normalized_sigma = j.at("mean_normalized_sigma").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const json& mesh = j.at("mesh");
  c.mesh.interior = mesh.at("interior").get<std::size_t>();
  c.mesh.initial = mesh.at("initial").get<std::size_t>();
  c.mesh.boundary = mesh.at("boundary").get<std::size_t>();
  c.mesh.test = mesh.at("test").get<std::size_t>();
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
  c.trace_path = j.at("trace_path").get<std::string>();
  c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
  c.deterministic_trace = j.at("deterministic_trace").get<bool>();
  return c;
}

} // namespace

std::string run_config_to_json(const RunConfig& config) { return to_json(config).dump(2); }

RunConfig run_config_from_json(std::string_view text) {
  try {
    return from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Trace CSV

namespace {

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double parse_number(std::string_view field, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    // from_chars rejects "inf"/"nan" spellings on some libraries; fall back.
    try {
      std::size_t used = 0;
      v = std::stod(std::string(field), &used);
      if (used == field.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("trace line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

} // namespace

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const TraceRow& r : rows) {
    out += std::to_string(r.iter);
    for (double v : {r.loss_total, r.loss_eq, r.loss_ic, r.loss_bc, r.sigma, r.eff_width, r.rmae,
                     r.rmse, r.wall_ms}) {
      out += ',';
      append_number(out, v);
    }
    out += '\n';
  }
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << trace_to_csv(rows);
}

std::vector<TraceRow> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader) {
    throw ConfigError(path.string() + ": not a trace file (header mismatch)");
  }
  std::vector<TraceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 10) {
      throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": expected 10 fields");
    }
    TraceRow r;
    r.iter = static_cast<std::size_t>(parse_number(fields[0], lineno));
    double* slots[] = {&r.loss_total, &r.loss_eq, &r.loss_ic, &r.loss_bc, &r.sigma,
                       &r.eff_width,  &r.rmae,    &r.rmse,    &r.wall_ms};
    for (std::size_t k = 0; k < 9; ++k) *slots[k] = parse_number(fields[k + 1], lineno);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const FlatParams& params, std::size_t iteration) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  json j;
  j["iteration"] = iteration;
  j["run_config"] = to_json(config);
  j["params"] = json::parse(params_to_json(config.model, params));
  // Write then rename so a crash never leaves a torn checkpoint behind.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << j.dump(1) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    const json j = json::parse(buffer.str());
    Checkpoint c;
    c.iteration = j.at("iteration").get<std::size_t>();
    c.config = from_json(j.at("run_config"));
    c.params = params_from_json(j.at("params").dump()).second;
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Loop

namespace {

struct Evaluation {
  LossValues losses;
  Eigen::VectorXd gradient;
};

Evaluation evaluate(const PdeProblem& problem, const ModelConfig& model_config,
                    const FlatParams& theta, const CollocationSet& points,
                    const ObjectiveSpec& spec) {
  ad::Tape tape;
  const BoundModel model = bind(tape, model_config, theta);
  const LossTerms terms = spec.kind == ObjectiveKind::gpinn
                              ? gpinn_loss(tape, problem, model, points, spec)
                              : point_loss(tape, problem, model, points, spec);
  Evaluation e;
  e.losses = values(terms);
  e.gradient = ad::backward(tape, terms.total.id(), theta.size());
  return e;
}

// Mean of the per-draw evaluations for k > 1 samples.
Evaluation evaluate_draws(const PdeProblem& problem, const ModelConfig& model_config,
                          const FlatParams& theta, const std::vector<PerturbedSet>& draws,
                          const ObjectiveSpec& spec) {
  if (draws.size() == 1) return evaluate(problem, model_config, theta, draws.front().points, spec);
  // One tape for all draws keeps the sum order fixed and the gradient exact.
  ad::Tape tape;
  const BoundModel model = bind(tape, model_config, theta);
  const double w = 1.0 / static_cast<double>(draws.size());
  LossTerms sum;
  for (const PerturbedSet& d : draws) {
    const LossTerms t = spec.kind == ObjectiveKind::gpinn
                            ? gpinn_loss(tape, problem, model, d.points, spec)
                            : point_loss(tape, problem, model, d.points, spec);
    sum.total = sum.total + w * t.total;
    sum.equation = sum.equation + w * t.equation;
    sum.initial = sum.initial + w * t.initial;
    sum.boundary = sum.boundary + w * t.boundary;
    sum.regularizer = sum.regularizer + w * t.regularizer;
  }
  Evaluation e;
  e.losses = values(sum);
  e.gradient = ad::backward(tape, sum.total.id(), theta.size());
  return e;
}

bool width_within_clamps(double width, const TrustRegionConfig& c) {
  if (width == 0.0) return c.r0 == 0.0;
  return width >= c.width_floor && width <= c.width_cap;
}

} // namespace

RunArtifacts train(const RunConfig& config, const IterationHook& hook) {
  validate(config);
  const auto started = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    if (config.deterministic_trace) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
        .count();
  };

  const PdeProblem problem = make_problem(config.problem, config.problem_params);
  const CollocationSet train_set =
      uniform_mesh(problem, config.mesh.interior, config.mesh.initial, config.mesh.boundary);
  const CollocationSet test_set =
      uniform_mesh(problem, config.mesh.test, config.mesh.initial, config.mesh.boundary);
  const Eigen::RowVectorXd reference = problem.exact(test_set.interior);

  ModelConfig model_config = config.model;
  model_config.init_seed = config.seed;
  // Initialization and sampling draw from separate streams so changing the
  // objective never changes the starting point.
  std::seed_seq sampling_seed{static_cast<std::uint32_t>(config.seed),
                              static_cast<std::uint32_t>(config.seed >> 32), std::uint32_t{0x5eed}};
  std::mt19937_64 rng(sampling_seed);

  TrustRegionConfig tr;
  tr.r0 = config.r0;
  tr.T0 = config.T0;
  tr.sigma0 = config.sigma0;
  tr.width_cap = std::min(problem.domain().width(), problem.domain().duration());
  tr.mean_normalized = config.mean_normalized_sigma;

  RunArtifacts run;
  run.params = init(model_config);
  run.trust_region = TrustRegionState(tr);
  TrustRegionState& state = run.trust_region;
  const bool regional = config.objective.kind == ObjectiveKind::region;

  AdamState adam(run.params.size());
  LbfgsState lbfgs;
  lbfgs.memory = config.optimizer.lbfgs_memory;

  spdlog::info("train: {} {} {} T={} seed={} params={}", config.problem,
               to_string(config.objective.kind), to_string(config.optimizer.kind),
               config.iterations, config.seed, run.params.size());

  for (std::size_t t = 0; t < config.iterations; ++t) {
    const double width = regional ? state.effective_width() : 0.0;
    if (!width_within_clamps(width, state.config()) && regional) {
      throw GuardError("effective width " + std::to_string(width) + " left its clamps");
    }
    const double sigma_used = state.sigma();

    std::vector<PerturbedSet> draws;
    for (std::size_t k = 0; k < config.objective.samples; ++k) {
      draws.push_back(sample_region(problem, train_set, width, config.objective.region_mode,
                                    config.objective.perturb_constraints, rng));
    }

    Evaluation now;
    FlatParams next = run.params;
    try {
      if (config.optimizer.kind == OptimizerKind::adam) {
        now = evaluate_draws(problem, model_config, run.params, draws, config.objective);
        if (!std::isfinite(now.losses.total)) throw NumericError(0, "non-finite loss");
        next.values = adam_step(adam, run.params.values, now.gradient, config.optimizer.lr);
      } else {
        FlatParams probe = run.params;
        const LossAndGrad fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
          probe.values = x;
          Evaluation e = evaluate_draws(problem, model_config, probe, draws, config.objective);
          g = std::move(e.gradient);
          return e.losses.total;
        };
        const LbfgsStep step = lbfgs_step(lbfgs, run.params.values, fn);
        // Loss terms at theta_t; the line search kept only the total.
        now = evaluate_draws(problem, model_config, run.params, draws, config.objective);
        next.values = step.params;
      }
      if (!next.values.allFinite()) throw NumericError(0, "optimizer produced non-finite parameters");
    } catch (const NumericError& e) {
      run.status = RunStatus::aborted;
      run.abort_iteration = t;
      run.abort_message = e.what();
      spdlog::error("train: aborted at iteration {}: {}", t, e.what());
      break;
    }

    state.calibrate(now.gradient);
    if (hook) {
      hook(IterationView{t, &run.params, &now.gradient, &draws, width, &state});
    }
    run.params = std::move(next);

    const bool last = t + 1 == config.iterations;
    if (t % config.eval_every == 0 || last) {
      const RelativeErrors err =
          relative_errors(forward(model_config, run.params, test_set.interior), reference);
      run.trace.push_back(TraceRow{t, now.losses.total, now.losses.equation, now.losses.initial,
                                   now.losses.boundary, sigma_used, width, err.rmae, err.rmse,
                                   elapsed_ms()});
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() &&
        (t + 1) % config.checkpoint_every == 0 && !last) {
      save_checkpoint(config.checkpoint_path, config, run.params, t + 1);
    }
  }

  run.metrics = evaluate_metrics(problem, model_config, run.params, test_set);
  run.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!config.trace_path.empty()) write_trace_csv(config.trace_path, run.trace);
  if (!config.checkpoint_path.empty()) {
    const std::size_t reached = run.abort_iteration.value_or(config.iterations);
    save_checkpoint(config.checkpoint_path, config, run.params, reached);
  }
  spdlog::info("train: done status={} rMAE={:.4g} rMSE={:.4g} in {:.1f}s",
               run.status == RunStatus::completed ? "completed" : "aborted", run.metrics.rmae,
               run.metrics.rmse, run.wall_seconds);
  return run;
}

} // namespace ropinn
