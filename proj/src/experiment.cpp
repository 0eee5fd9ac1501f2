#include "ropinn/experiment.hpp"

#include "ropinn/errors.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace ropinn {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  // Keep floats recognisable as floats to a YAML reader.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string yaml_quoted(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

bool valid_arm_name(const std::string& name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

class Reader {
public:
  std::vector<ConfigIssue> issues;

  void issue(const YAML::Node& at, std::string field, std::string message) {
    const std::size_t line = at.IsDefined() && at.Mark().line >= 0 ? at.Mark().line + 1 : 0;
    issues.push_back({line, std::move(field), std::move(message)});
  }

  // Rejects keys outside `allowed`; false if `node` is not a map.
  bool map(const YAML::Node& node, const std::string& field, std::initializer_list<std::string_view> allowed) {
    if (!node.IsMap()) {
      issue(node, field, "expected a mapping");
      return false;
    }
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        issue(kv.first, join(field, key), "unknown key");
      }
    }
    return true;
  }

  static std::string join(const std::string& field, std::string_view key) {
    return field.empty() ? std::string(key) : field + "." + std::string(key);
  }

  template <class T>
  bool scalar(const YAML::Node& node, const std::string& field, T& out) {
    if (!node.IsScalar()) {
      issue(node, field, "expected a scalar");
      return false;
    }
    try {
      out = node.as<T>();
      return true;
    } catch (const YAML::Exception&) {
      issue(node, field, "cannot read '" + node.Scalar() + "' as " + type_name<T>());
      return false;
    }
  }

  bool count(const YAML::Node& node, const std::string& field, std::size_t& out, std::size_t min) {
    long long v = 0;
    if (!scalar(node, field, v)) return false;
    if (v < static_cast<long long>(min)) {
      issue(node, field, "must be an integer >= " + std::to_string(min));
      return false;
    }
    out = static_cast<std::size_t>(v);
    return true;
  }

  bool nonnegative(const YAML::Node& node, const std::string& field, double& out) {
    double v = 0.0;
    if (!scalar(node, field, v)) return false;
    if (!(v >= 0.0) || !std::isfinite(v)) {
      issue(node, field, "must be finite and >= 0");
      return false;
    }
    out = v;
    return true;
  }

  bool positive(const YAML::Node& node, const std::string& field, double& out) {
    double v = 0.0;
    if (!scalar(node, field, v)) return false;
    if (!(v > 0.0) || !std::isfinite(v)) {
      issue(node, field, "must be finite and > 0");
      return false;
    }
    out = v;
    return true;
  }

  template <class Parse, class T>
  bool choice(const YAML::Node& node, const std::string& field, Parse parse, T& out) {
    std::string text;
    if (!scalar(node, field, text)) return false;
    try {
      out = parse(text);
      return true;
    } catch (const Error& e) {
      issue(node, field, e.what());
      return false;
    }
  }

  bool pair(const YAML::Node& node, const std::string& field, std::array<double, 2>& out) {
    if (!node.IsSequence() || node.size() != 2) {
      issue(node, field, "expected a list of two numbers");
      return false;
    }
    std::array<double, 2> v{};
    for (std::size_t i = 0; i < 2; ++i) {
      if (!nonnegative(node[i], field + "[" + std::to_string(i) + "]", v[i])) return false;
    }
    out = v;
    return true;
  }

private:
  template <class T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, double>) return "a number";
    else if constexpr (std::is_same_v<T, bool>) return "true/false";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else return "text";
  }
};

ReportFormat parse_report(std::string_view text) {
  if (text == "text") return ReportFormat::text;
  if (text == "json") return ReportFormat::json;
  throw ConfigError("unknown report format '" + std::string(text) + "' (expected text or json)");
}

std::string_view to_string(ReportFormat f) { return f == ReportFormat::json ? "json" : "text"; }

void read_model(Reader& r, const YAML::Node& node, ModelConfig& model) {
  if (!r.map(node, "model", {"arch", "layers", "preset"})) return;
  if (node["arch"]) r.choice(node["arch"], "model.arch", parse_arch, model.arch);
  if (node["preset"] && node["layers"]) {
    r.issue(node["layers"], "model.layers", "give either layers or preset, not both");
    return;
  }
  if (node["preset"]) {
    std::string preset;
    if (!r.scalar(node["preset"], "model.preset", preset)) return;
    if (preset == "desk") model.layer_widths = desk_preset().layer_widths;
    else if (preset == "paper") model.layer_widths = paper_preset().layer_widths;
    else r.issue(node["preset"], "model.preset", "unknown preset '" + preset + "' (expected desk or paper)");
    return;
  }
  if (!node["layers"]) {
    r.issue(node, "model.layers", "required field missing");
    return;
  }
  const YAML::Node layers = node["layers"];
  if (!layers.IsSequence()) {
    r.issue(layers, "model.layers", "expected a list of widths");
    return;
  }
  std::vector<std::size_t> widths;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::size_t w = 0;
    if (!r.count(layers[i], "model.layers[" + std::to_string(i) + "]", w, 1)) return;
    widths.push_back(w);
  }
  ModelConfig candidate = model;
  candidate.layer_widths = widths;
  try {
    validate(candidate);
    model.layer_widths = widths;
  } catch (const ConfigError& e) {
    r.issue(layers, "model.layers", e.what());
  }
}

void read_objective(Reader& r, const YAML::Node& node, ObjectiveSpec& o) {
  if (!r.map(node, "objective",
             {"lambda_eq", "lambda_ic", "lambda_bc", "gpinn_lambda", "region_mode",
              "perturb_constraints", "samples"})) {
    return;
  }
  if (node["lambda_eq"]) r.nonnegative(node["lambda_eq"], "objective.lambda_eq", o.lambda_eq);
  if (node["lambda_ic"]) r.nonnegative(node["lambda_ic"], "objective.lambda_ic", o.lambda_ic);
  if (node["lambda_bc"]) r.nonnegative(node["lambda_bc"], "objective.lambda_bc", o.lambda_bc);
  if (node["gpinn_lambda"]) r.pair(node["gpinn_lambda"], "objective.gpinn_lambda", o.gpinn_lambda);
  if (node["region_mode"]) r.choice(node["region_mode"], "objective.region_mode", parse_region_mode, o.region_mode);
  if (node["perturb_constraints"]) {
    r.scalar(node["perturb_constraints"], "objective.perturb_constraints", o.perturb_constraints);
  }
  if (node["samples"]) r.count(node["samples"], "objective.samples", o.samples, 1);
}

void read_arm(Reader& r, const YAML::Node& node, const std::string& field, ArmSpec& arm) {
  if (!r.map(node, field,
             {"name", "kind", "r0", "T0", "sigma0", "samples", "region_mode", "gpinn_lambda",
              "optimizer", "lr"})) {
    return;
  }
  if (!node["name"]) r.issue(node, field + ".name", "required field missing");
  else if (r.scalar(node["name"], field + ".name", arm.name) && !valid_arm_name(arm.name)) {
    r.issue(node["name"], field + ".name", "use letters, digits, '_', '-' or '.'");
  }
  if (!node["kind"]) r.issue(node, field + ".kind", "required field missing");
  else r.choice(node["kind"], field + ".kind", parse_objective_kind, arm.kind);

  double d = 0.0;
  std::size_t n = 0;
  if (node["r0"] && r.nonnegative(node["r0"], field + ".r0", d)) arm.r0 = d;
  if (node["T0"] && r.count(node["T0"], field + ".T0", n, 1)) arm.T0 = n;
  if (node["sigma0"] && r.positive(node["sigma0"], field + ".sigma0", d)) arm.sigma0 = d;
  if (node["samples"] && r.count(node["samples"], field + ".samples", n, 1)) arm.samples = n;
  RegionMode mode{};
  if (node["region_mode"] && r.choice(node["region_mode"], field + ".region_mode", parse_region_mode, mode)) {
    arm.region_mode = mode;
  }
  std::array<double, 2> lam{};
  if (node["gpinn_lambda"] && r.pair(node["gpinn_lambda"], field + ".gpinn_lambda", lam)) arm.gpinn_lambda = lam;
  OptimizerKind opt{};
  if (node["optimizer"] && r.choice(node["optimizer"], field + ".optimizer", parse_optimizer, opt)) {
    arm.optimizer = opt;
  }
  if (node["lr"] && r.nonnegative(node["lr"], field + ".lr", d)) arm.lr = d;
}

} // namespace

std::string ConfigValidation::describe() const {
  std::ostringstream out;
  for (const ConfigIssue& i : issues) {
    if (i.line > 0) out << "line " << i.line << ": ";
    out << i.field << ": " << i.message << '\n';
  }
  return out.str();
}

ConfigValidation validate_config(std::string_view text) {
  ConfigValidation result;
  ExperimentSpec& spec = result.spec;
  Reader r;

  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    result.issues.push_back({static_cast<std::size_t>(e.mark.line + 1), "", e.msg});
    return result;
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);

  RunConfig& base = spec.base;
  if (r.map(root, "",
            {"schema_version", "problem", "problem_params", "model", "optimizer", "iterations",
             "mesh", "eval_every", "checkpoint_every", "trust_region", "objective", "arms",
             "seeds", "output", "report"})) {
    if (root["schema_version"]) {
      int v = 0;
      if (r.scalar(root["schema_version"], "schema_version", v) && v != 1) {
        r.issue(root["schema_version"], "schema_version", "unsupported schema version " + std::to_string(v));
      }
    }

    bool have_problem = false;
    if (!root["problem"]) {
      r.issue(root, "problem", "required field missing");
    } else if (r.scalar(root["problem"], "problem", base.problem)) {
      try {
        base.problem = std::string(to_string(parse_problem(base.problem)));
        have_problem = true;
      } catch (const ConfigError& e) {
        r.issue(root["problem"], "problem", e.what());
      }
    }
    if (root["problem_params"]) {
      const YAML::Node pp = root["problem_params"];
      if (!pp.IsMap()) {
        r.issue(pp, "problem_params", "expected a mapping");
      } else {
        std::map<std::string, double> params;
        for (const auto& kv : pp) {
          const std::string key = kv.first.as<std::string>();
          double v = 0.0;
          if (r.scalar(kv.second, "problem_params." + key, v)) params[key] = v;
        }
        if (have_problem) {
          try {
            make_problem(base.problem, params);
            base.problem_params = params;
          } catch (const ConfigError& e) {
            r.issue(pp, "problem_params", e.what());
          }
        }
      }
    }

    if (!root["model"]) {
      r.issue(root, "model", "required field missing");
    } else {
      read_model(r, root["model"], base.model);
    }

    if (root["optimizer"]) {
      const YAML::Node o = root["optimizer"];
      if (r.map(o, "optimizer", {"kind", "lr", "lbfgs_memory"})) {
        if (o["kind"]) r.choice(o["kind"], "optimizer.kind", parse_optimizer, base.optimizer.kind);
        if (o["lr"]) r.nonnegative(o["lr"], "optimizer.lr", base.optimizer.lr);
        if (o["lbfgs_memory"]) r.count(o["lbfgs_memory"], "optimizer.lbfgs_memory", base.optimizer.lbfgs_memory, 1);
      }
    }
    if (root["iterations"]) r.count(root["iterations"], "iterations", base.iterations, 1);
    if (root["eval_every"]) r.count(root["eval_every"], "eval_every", base.eval_every, 1);
    if (root["checkpoint_every"]) r.count(root["checkpoint_every"], "checkpoint_every", base.checkpoint_every, 0);

    if (root["mesh"]) {
      const YAML::Node m = root["mesh"];
      if (r.map(m, "mesh", {"interior", "initial", "boundary", "test"})) {
        if (m["interior"]) r.count(m["interior"], "mesh.interior", base.mesh.interior, 2);
        if (m["initial"]) r.count(m["initial"], "mesh.initial", base.mesh.initial, 2);
        if (m["boundary"]) r.count(m["boundary"], "mesh.boundary", base.mesh.boundary, 2);
        if (m["test"]) r.count(m["test"], "mesh.test", base.mesh.test, 2);
      }
    }

    if (root["trust_region"]) {
      const YAML::Node t = root["trust_region"];
      if (r.map(t, "trust_region", {"r0", "T0", "sigma0", "mean_normalized"})) {
        if (t["r0"]) r.nonnegative(t["r0"], "trust_region.r0", base.r0);
        if (t["T0"]) r.count(t["T0"], "trust_region.T0", base.T0, 1);
        if (t["sigma0"]) r.positive(t["sigma0"], "trust_region.sigma0", base.sigma0);
        if (t["mean_normalized"]) r.scalar(t["mean_normalized"], "trust_region.mean_normalized", base.mean_normalized_sigma);
      }
    }

    if (root["objective"]) read_objective(r, root["objective"], base.objective);

    if (root["arms"]) {
      const YAML::Node arms = root["arms"];
      if (!arms.IsSequence() || arms.size() == 0) {
        r.issue(arms, "arms", "expected a non-empty list");
      } else {
        std::set<std::string> names;
        for (std::size_t i = 0; i < arms.size(); ++i) {
          const std::string field = "arms[" + std::to_string(i) + "]";
          ArmSpec arm;
          read_arm(r, arms[i], field, arm);
          if (!arm.name.empty() && !names.insert(arm.name).second) {
            r.issue(arms[i], field + ".name", "duplicate arm name '" + arm.name + "'");
          }
          spec.arms.push_back(arm);
        }
      }
    }

    if (root["seeds"]) {
      const YAML::Node s = root["seeds"];
      if (!s.IsSequence() || s.size() == 0) {
        r.issue(s, "seeds", "expected a non-empty list of integers");
      } else {
        std::vector<std::uint64_t> seeds;
        std::set<std::uint64_t> seen;
        for (std::size_t i = 0; i < s.size(); ++i) {
          std::uint64_t v = 0;
          const std::string field = "seeds[" + std::to_string(i) + "]";
          if (!r.scalar(s[i], field, v)) continue;
          if (!seen.insert(v).second) r.issue(s[i], field, "duplicate seed");
          seeds.push_back(v);
        }
        if (!seeds.empty()) spec.seeds = seeds;
      }
    }
    if (root["output"]) {
      std::string out;
      if (r.scalar(root["output"], "output", out)) {
        if (out.empty()) r.issue(root["output"], "output", "must not be empty");
        else spec.output = out;
      }
    }
    if (root["report"]) r.choice(root["report"], "report", parse_report, spec.report);
  }

  if (spec.arms.empty()) {
    ArmSpec main;
    main.name = "main";
    spec.arms.push_back(main);
  }

  // Cross-field checks that need the finished base config.
  if (r.issues.empty()) {
    for (std::size_t i = 0; i < spec.arms.size(); ++i) {
      try {
        validate(resolve(spec, spec.arms[i], spec.seeds.front()));
      } catch (const Error& e) {
        r.issue(root["arms"] ? root["arms"][i] : root, "arms[" + std::to_string(i) + "]", e.what());
      }
    }
  }
  result.issues = std::move(r.issues);
  return result;
}

ExperimentSpec parse_experiment(std::string_view text) {
  ConfigValidation v = validate_config(text);
  if (!v.ok()) throw ConfigError("invalid experiment config:\n" + v.describe());
  return v.spec;
}

std::string render(const ExperimentSpec& spec) {
  const RunConfig& b = spec.base;
  std::ostringstream out;
  out << "schema_version: " << spec.schema_version << '\n';
  out << "problem: " << b.problem << '\n';
  if (!b.problem_params.empty()) {
    out << "problem_params:\n";
    for (const auto& [k, v] : b.problem_params) out << "  " << k << ": " << number(v) << '\n';
  }
  out << "model:\n  arch: " << to_string(b.model.arch) << "\n  layers: [";
  for (std::size_t i = 0; i < b.model.layer_widths.size(); ++i) {
    out << (i ? ", " : "") << b.model.layer_widths[i];
  }
  out << "]\n";
  out << "optimizer:\n  kind: " << to_string(b.optimizer.kind) << "\n  lr: " << number(b.optimizer.lr)
      << "\n  lbfgs_memory: " << b.optimizer.lbfgs_memory << '\n';
  out << "iterations: " << b.iterations << '\n';
  out << "mesh:\n  interior: " << b.mesh.interior << "\n  initial: " << b.mesh.initial
      << "\n  boundary: " << b.mesh.boundary << "\n  test: " << b.mesh.test << '\n';
  out << "eval_every: " << b.eval_every << '\n';
  out << "checkpoint_every: " << b.checkpoint_every << '\n';
  out << "trust_region:\n  r0: " << number(b.r0) << "\n  T0: " << b.T0
      << "\n  sigma0: " << number(b.sigma0)
      << "\n  mean_normalized: " << (b.mean_normalized_sigma ? "true" : "false") << '\n';
  const ObjectiveSpec& o = b.objective;
  out << "objective:\n  lambda_eq: " << number(o.lambda_eq) << "\n  lambda_ic: " << number(o.lambda_ic)
      << "\n  lambda_bc: " << number(o.lambda_bc) << "\n  gpinn_lambda: [" << number(o.gpinn_lambda[0])
      << ", " << number(o.gpinn_lambda[1]) << "]\n  region_mode: " << to_string(o.region_mode)
      << "\n  perturb_constraints: " << (o.perturb_constraints ? "true" : "false")
      << "\n  samples: " << o.samples << '\n';
  out << "arms:\n";
  for (const ArmSpec& a : spec.arms) {
    out << "  - name: " << yaml_quoted(a.name) << "\n    kind: " << to_string(a.kind) << '\n';
    if (a.r0) out << "    r0: " << number(*a.r0) << '\n';
    if (a.T0) out << "    T0: " << *a.T0 << '\n';
    if (a.sigma0) out << "    sigma0: " << number(*a.sigma0) << '\n';
    if (a.samples) out << "    samples: " << *a.samples << '\n';
    if (a.region_mode) out << "    region_mode: " << to_string(*a.region_mode) << '\n';
    if (a.gpinn_lambda) {
      out << "    gpinn_lambda: [" << number((*a.gpinn_lambda)[0]) << ", " << number((*a.gpinn_lambda)[1]) << "]\n";
    }
    if (a.optimizer) out << "    optimizer: " << to_string(*a.optimizer) << '\n';
    if (a.lr) out << "    lr: " << number(*a.lr) << '\n';
  }
  out << "seeds: [";
  for (std::size_t i = 0; i < spec.seeds.size(); ++i) out << (i ? ", " : "") << spec.seeds[i];
  out << "]\n";
  out << "output: " << yaml_quoted(spec.output.string()) << '\n';
  out << "report: " << to_string(spec.report) << '\n';
  return out.str();
}

std::string run_stem(const std::string& arm, std::uint64_t seed) {
  return arm + "__seed" + std::to_string(seed);
}

RunConfig resolve(const ExperimentSpec& spec, const ArmSpec& arm, std::uint64_t seed) {
  RunConfig c = spec.base;
  c.objective.kind = arm.kind;
  if (arm.r0) c.r0 = *arm.r0;
  if (arm.T0) c.T0 = *arm.T0;
  if (arm.sigma0) c.sigma0 = *arm.sigma0;
  if (arm.samples) c.objective.samples = *arm.samples;
  if (arm.region_mode) c.objective.region_mode = *arm.region_mode;
  if (arm.gpinn_lambda) c.objective.gpinn_lambda = *arm.gpinn_lambda;
  if (arm.optimizer) c.optimizer.kind = *arm.optimizer;
  if (arm.lr) c.optimizer.lr = *arm.lr;
  c.seed = seed;
  const std::string stem = run_stem(arm.name, seed);
  c.trace_path = spec.output / "traces" / (stem + ".csv");
  c.checkpoint_path = spec.output / "checkpoints" / (stem + ".json");
  return c;
}

// ---------------------------------------------------------------------------
// Summaries

Stats summarize(std::vector<double> values) {
  Stats s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

std::optional<double> promotion(double point, double arm) {
  if (!(point > 0.0)) return std::nullopt;
  return (point - arm) / point;
}

bool failure_mode(std::string_view problem, double rmse) {
  const ProblemKind kind = parse_problem(problem);
  return (kind == ProblemKind::reaction1d || kind == ProblemKind::convection) && rmse > 0.9;
}

SummaryTable build_summary(const ExperimentSpec& spec, const std::vector<RunOutcome>& runs) {
  SummaryTable table;
  table.problem = spec.base.problem;
  table.runs = runs;
  for (const ArmSpec& a : spec.arms) {
    if (a.kind == ObjectiveKind::point) {
      table.baseline_arm = a.name;
      break;
    }
  }
  for (const ArmSpec& a : spec.arms) {
    SummaryRow row;
    row.arm = a.name;
    row.kind = std::string(to_string(a.kind));
    row.problem = spec.base.problem;
    std::vector<double> loss, rmae, rmse;
    for (const RunOutcome& r : runs) {
      if (r.arm != a.name) continue;
      ++row.runs;
      if (!r.completed) continue;
      ++row.completed;
      row.failure_modes += r.failure_mode ? 1 : 0;
      loss.push_back(r.final_loss);
      rmae.push_back(r.rmae);
      rmse.push_back(r.rmse);
    }
    row.loss = summarize(loss);
    row.rmae = summarize(rmae);
    row.rmse = summarize(rmse);
    table.rows.push_back(row);
  }
  if (!table.baseline_arm.empty()) {
    const auto base = std::find_if(table.rows.begin(), table.rows.end(),
                                   [&](const SummaryRow& r) { return r.arm == table.baseline_arm; });
    if (base->completed > 0) {
      for (SummaryRow& row : table.rows) {
        if (row.completed == 0) continue;
        row.promotion_loss = promotion(base->loss.median, row.loss.median);
        row.promotion_rmae = promotion(base->rmae.median, row.rmae.median);
        row.promotion_rmse = promotion(base->rmse.median, row.rmse.median);
      }
    }
  }
  return table;
}

namespace {

json stats_json(const Stats& s) {
  return {{"median", s.median}, {"mean", s.mean}, {"std", s.std}, {"count", s.count}};
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

} // namespace

std::string summary_to_json(const ExperimentSpec& spec, const SummaryTable& table) {
  json rows = json::array();
  for (const SummaryRow& r : table.rows) {
    const auto arm = std::find_if(spec.arms.begin(), spec.arms.end(),
                                  [&](const ArmSpec& a) { return a.name == r.arm; });
    const RunConfig rc = resolve(spec, *arm, spec.seeds.front());
    rows.push_back({{"arm", r.arm},
                    {"kind", r.kind},
                    {"problem", r.problem},
                    {"runs", r.runs},
                    {"completed", r.completed},
                    {"failure_modes", r.failure_modes},
                    {"final_loss", stats_json(r.loss)},
                    {"rmae", stats_json(r.rmae)},
                    {"rmse", stats_json(r.rmse)},
                    {"promotion", {{"loss", optional_json(r.promotion_loss)},
                                   {"rmae", optional_json(r.promotion_rmae)},
                                   {"rmse", optional_json(r.promotion_rmse)}}},
                    {"settings", {{"r0", rc.r0},
                                  {"T0", rc.T0},
                                  {"sigma0", rc.sigma0},
                                  {"samples", rc.objective.samples},
                                  {"region_mode", to_string(rc.objective.region_mode)},
                                  {"optimizer", to_string(rc.optimizer.kind)},
                                  {"lr", rc.optimizer.lr},
                                  {"iterations", rc.iterations}}}});
  }
  json runs = json::array();
  for (const RunOutcome& r : table.runs) {
    runs.push_back({{"arm", r.arm},
                    {"seed", r.seed},
                    {"completed", r.completed},
                    {"message", r.message},
                    {"final_loss", r.final_loss},
                    {"rmae", r.rmae},
                    {"rmse", r.rmse},
                    {"failure_mode", r.failure_mode}});
  }
  json j = {{"schema_version", spec.schema_version},
            {"problem", table.problem},
            {"baseline_arm", table.baseline_arm},
            {"seeds", spec.seeds},
            {"arms", rows},
            {"runs", runs}};
  return j.dump(2);
}

std::string render_table(const SummaryTable& table) {
  std::ostringstream out;
  auto pct = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << 100.0 * *v << "%";
    return s.str();
  };
  auto sci = [](double v) {
    std::ostringstream s;
    s << std::scientific << std::setprecision(3) << v;
    return s.str();
  };
  auto fixed = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << v;
    return s.str();
  };

  out << "problem: " << table.problem;
  if (!table.baseline_arm.empty()) out << "   baseline: " << table.baseline_arm;
  out << "\n\n";
  out << std::left << std::setw(14) << "arm" << std::setw(8) << "kind" << std::setw(7) << "runs"
      << std::setw(12) << "loss" << std::setw(9) << "rMAE" << std::setw(9) << "rMSE"
      << std::setw(17) << "rMSE mean+-std" << std::setw(10) << "promo" << "failure\n";
  for (const SummaryRow& r : table.rows) {
    const std::string runs = std::to_string(r.completed) + "/" + std::to_string(r.runs);
    out << std::left << std::setw(14) << r.arm << std::setw(8) << r.kind << std::setw(7) << runs;
    if (r.completed == 0) {
      out << "(no completed runs)\n";
      continue;
    }
    out << std::setw(12) << sci(r.loss.median) << std::setw(9) << fixed(r.rmae.median)
        << std::setw(9) << fixed(r.rmse.median)
        << std::setw(17) << (fixed(r.rmse.mean) + "+-" + fixed(r.rmse.std))
        << std::setw(10) << pct(r.promotion_rmse) << r.failure_modes << "/" << r.completed << '\n';
  }
  out << "\nloss, rMAE and rMSE are medians over seeds; promo is the relative rMSE\n"
         "promotion over the baseline; failure counts runs with rMSE > 0.9.\n";

  bool any_abort = false;
  for (const RunOutcome& r : table.runs) {
    if (r.completed) continue;
    if (!any_abort) out << "\naborted runs:\n";
    any_abort = true;
    out << "  " << run_stem(r.arm, r.seed) << ": " << r.message << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

RunOutcome outcome_from_trace(const std::string& problem, const std::string& arm,
                              std::uint64_t seed, const std::vector<TraceRow>& trace) {
  RunOutcome o;
  o.arm = arm;
  o.seed = seed;
  if (trace.empty()) {
    o.message = "empty trace";
    return o;
  }
  o.completed = true;
  o.final_loss = trace.back().loss_total;
  o.rmae = trace.back().rmae;
  o.rmse = trace.back().rmse;
  o.failure_mode = failure_mode(problem, o.rmse);
  return o;
}

void write_summary(const ExperimentSpec& spec, const std::filesystem::path& dir,
                   const SummaryTable& table) {
  write_text(dir / "summary.json", summary_to_json(spec, table) + "\n");
  write_text(dir / "summary.txt", render_table(table));
}

} // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const ExperimentOptions& options) {
  std::filesystem::create_directories(spec.output);
  write_text(spec.output / "experiment.yaml", render(spec));

  struct Job {
    const ArmSpec* arm;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const ArmSpec& a : spec.arms) {
    for (std::uint64_t s : spec.seeds) jobs.push_back({&a, s});
  }
  std::vector<RunOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      RunOutcome& o = outcomes[i];
      o.arm = job.arm->name;
      o.seed = job.seed;
      const std::string stem = run_stem(job.arm->name, job.seed);
      json record = {{"arm", o.arm}, {"seed", o.seed}};
      try {
        const RunConfig rc = resolve(spec, *job.arm, job.seed);
        const RunArtifacts run = train(rc);
        o.completed = run.status == RunStatus::completed;
        o.message = run.abort_message;
        if (!run.trace.empty()) {
          o.final_loss = run.trace.back().loss_total;
          o.rmae = run.trace.back().rmae;
          o.rmse = run.trace.back().rmse;
          o.failure_mode = failure_mode(rc.problem, o.rmse);
        }
        record["status"] = o.completed ? "completed" : "aborted";
        if (run.abort_iteration) record["abort_iteration"] = *run.abort_iteration;
        record["message"] = run.abort_message;
        record["final_sigma"] = run.trust_region.sigma();
        record["wall_seconds"] = run.wall_seconds;
        record["metrics"] = json::parse(metrics_to_json(run.metrics));
        record["run_config"] = json::parse(run_config_to_json(rc));
      } catch (const std::exception& e) {
        o.completed = false;
        o.message = e.what();
        record["status"] = "error";
        record["message"] = o.message;
        spdlog::error("{}: {}", stem, e.what());
      }
      record["failure_mode"] = o.failure_mode;
      write_text(spec.output / "runs" / (stem + ".json"), record.dump(2) + "\n");
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(jobs.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  } // join barrier

  ExperimentResult result;
  result.summary = build_summary(spec, outcomes);
  write_summary(spec, spec.output, result.summary);
  result.exit_code =
      std::all_of(outcomes.begin(), outcomes.end(), [](const RunOutcome& o) { return o.completed; }) ? 0 : 1;
  return result;
}

SummaryTable report_directory(const std::filesystem::path& dir) {
  ExperimentSpec spec = parse_experiment(read_text(dir / "experiment.yaml"));
  spec.output = dir;
  std::vector<RunOutcome> outcomes;
  for (const ArmSpec& a : spec.arms) {
    for (std::uint64_t s : spec.seeds) {
      const std::string stem = run_stem(a.name, s);
      const std::filesystem::path trace = dir / "traces" / (stem + ".csv");
      RunOutcome o;
      if (!std::filesystem::exists(trace)) {
        o.arm = a.name;
        o.seed = s;
        o.message = "missing trace";
      } else {
        o = outcome_from_trace(spec.base.problem, a.name, s, read_trace_csv(trace));
      }
      // The run record only says whether the loop stopped early.
      const std::filesystem::path record = dir / "runs" / (stem + ".json");
      if (o.completed && std::filesystem::exists(record)) {
        const json r = json::parse(read_text(record));
        if (r.value("status", "completed") != "completed") {
          o.completed = false;
          o.message = r.value("message", "aborted");
        }
      }
      outcomes.push_back(o);
    }
  }
  SummaryTable table = build_summary(spec, outcomes);
  write_summary(spec, dir, table);
  return table;
}

} // namespace ropinn
