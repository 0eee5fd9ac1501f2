#include "ropinn/model.hpp"

#include "ropinn/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace ropinn {

using nlohmann::json;

std::string_view to_string(Arch arch) noexcept {
  return arch == Arch::fls ? "fls" : "mlp-tanh";
}

Arch parse_arch(std::string_view text) {
  if (text == "mlp-tanh") return Arch::mlp_tanh;
  if (text == "fls") return Arch::fls;
  throw ConfigError("unknown architecture '" + std::string(text) + "' (expected mlp-tanh or fls)");
}

namespace {

// Layout-level check. A bare affine map [d+1, 1] is fine here; training
// configs additionally need a hidden layer (validate).
void check_widths(const std::vector<std::size_t>& w) {
  if (w.size() < 2) throw ConfigError("model needs an input and an output width");
  for (std::size_t width : w) {
    if (width == 0) throw ConfigError("layer widths must be positive");
  }
  if (w.back() != 1) throw ConfigError("model output width must be 1");
}

} // namespace

void validate(const ModelConfig& config) {
  check_widths(config.layer_widths);
  if (config.layer_widths.size() < 3) throw ConfigError("model needs at least one hidden layer");
}

ModelConfig desk_preset(std::uint64_t seed) { return {Arch::mlp_tanh, {2, 64, 64, 64, 1}, seed}; }

ModelConfig paper_preset(std::uint64_t seed) {
  return {Arch::mlp_tanh, {2, 512, 512, 512, 1}, seed};
}

std::vector<ParamSlice> make_layout(const ModelConfig& config) {
  check_widths(config.layer_widths);
  std::vector<ParamSlice> layout;
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < config.layer_widths.size(); ++l) {
    const std::size_t in = config.layer_widths[l];
    const std::size_t out = config.layer_widths[l + 1];
    layout.push_back({l, ParamSlice::Kind::weight, offset, out, in});
    offset += out * in;
    layout.push_back({l, ParamSlice::Kind::bias, offset, out, 1});
    offset += out;
  }
  return layout;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t n = 0;
  for (const ParamSlice& s : make_layout(config)) n += s.size();
  return n;
}

FlatParams zeros(const ModelConfig& config) {
  FlatParams p;
  p.layout = make_layout(config);
  p.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(config)));
  return p;
}

FlatParams init(const ModelConfig& config) {
  FlatParams p = zeros(config);
  std::mt19937_64 rng(config.init_seed);
  for (const ParamSlice& s : p.layout) {
    if (s.kind != ParamSlice::Kind::weight) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < s.size(); ++i) p.values[static_cast<Eigen::Index>(s.offset + i)] = dist(rng);
  }
  return p;
}

FlatParams unflatten(const ModelConfig& config, Eigen::VectorXd values) {
  FlatParams p;
  p.layout = make_layout(config);
  if (static_cast<std::size_t>(values.size()) != parameter_count(config)) {
    throw DimensionError("parameter vector has " + std::to_string(values.size()) +
                         " entries, model needs " + std::to_string(parameter_count(config)));
  }
  p.values = std::move(values);
  return p;
}

namespace {

const ParamSlice& slice(const FlatParams& p, std::size_t layer, ParamSlice::Kind kind) {
  const std::size_t k = 2 * layer + (kind == ParamSlice::Kind::bias ? 1 : 0);
  if (k >= p.layout.size()) throw DimensionError("layer " + std::to_string(layer) + " out of range");
  return p.layout[k];
}

} // namespace

Eigen::Map<const Eigen::MatrixXd> weight(const FlatParams& p, std::size_t layer) {
  const ParamSlice& s = slice(p, layer, ParamSlice::Kind::weight);
  return {p.values.data() + s.offset, static_cast<Eigen::Index>(s.rows),
          static_cast<Eigen::Index>(s.cols)};
}

Eigen::Map<const Eigen::VectorXd> bias(const FlatParams& p, std::size_t layer) {
  const ParamSlice& s = slice(p, layer, ParamSlice::Kind::bias);
  return {p.values.data() + s.offset, static_cast<Eigen::Index>(s.rows)};
}

Eigen::Map<Eigen::MatrixXd> weight(FlatParams& p, std::size_t layer) {
  const ParamSlice& s = slice(p, layer, ParamSlice::Kind::weight);
  return {p.values.data() + s.offset, static_cast<Eigen::Index>(s.rows),
          static_cast<Eigen::Index>(s.cols)};
}

Eigen::Map<Eigen::VectorXd> bias(FlatParams& p, std::size_t layer) {
  const ParamSlice& s = slice(p, layer, ParamSlice::Kind::bias);
  return {p.values.data() + s.offset, static_cast<Eigen::Index>(s.rows)};
}

BoundModel bind(ad::Tape& tape, const ModelConfig& config, const FlatParams& params) {
  if (params.size() != parameter_count(config)) {
    throw DimensionError("parameters do not match the model configuration");
  }
  BoundModel m{config, {}, {}};
  const std::size_t layers = config.layer_widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const ParamSlice& ws = slice(params, l, ParamSlice::Kind::weight);
    const ParamSlice& bs = slice(params, l, ParamSlice::Kind::bias);
    m.weights.emplace_back(tape, tape.parameter(weight(params, l), ws.offset));
    m.biases.emplace_back(tape, tape.parameter(bias(params, l), bs.offset));
  }
  return m;
}

ad::Jet forward_jet(const BoundModel& model, const Eigen::MatrixXd& points,
                    std::shared_ptr<const ad::JetLayout> layout) {
  const auto& widths = model.config.layer_widths;
  if (static_cast<std::size_t>(points.rows()) != widths.front()) {
    throw DimensionError("model expects " + std::to_string(widths.front()) +
                         " input coordinates, got " + std::to_string(points.rows()));
  }
  if (layout->dim() != widths.front()) throw DimensionError("jet layout dimension mismatch");

  ad::Tape& tape = model.weights.front().tape();
  ad::Jet h = ad::Jet::input(tape, std::move(layout), points);
  const std::size_t layers = model.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    ad::Jet a = add_bias(matmul(model.weights[l], h), model.biases[l]);
    if (l + 1 == layers) return a;
    h = (l == 0 && model.config.arch == Arch::fls) ? sin(a) : tanh(a);
  }
  return h; // unreachable: the last layer returns above
}

ad::Jet forward_jet(const ModelConfig& config, const FlatParams& params,
                    const Eigen::MatrixXd& points, std::shared_ptr<const ad::JetLayout> layout,
                    ad::Tape& tape) {
  return forward_jet(bind(tape, config, params), points, std::move(layout));
}

Eigen::RowVectorXd forward(const ModelConfig& config, const FlatParams& params,
                           const Eigen::MatrixXd& points) {
  if (static_cast<std::size_t>(points.rows()) != config.layer_widths.front()) {
    throw DimensionError("model expects " + std::to_string(config.layer_widths.front()) +
                         " input coordinates, got " + std::to_string(points.rows()));
  }
  const std::size_t layers = config.layer_widths.size() - 1;
  Eigen::MatrixXd h = points;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd a = weight(params, l) * h;
    a.colwise() += bias(params, l);
    if (l + 1 == layers) return a.row(0);
    if (l == 0 && config.arch == Arch::fls) {
      h = a.array().sin();
    } else {
      h = a.array().tanh();
    }
  }
  return h.row(0);
}

// ---------------------------------------------------------------------------
// Serialization

std::string params_to_json(const ModelConfig& config, const FlatParams& params) {
  json j;
  j["format"] = "ropinn-params";
  j["version"] = 1;
  j["model"] = {{"arch", std::string(to_string(config.arch))},
                {"layer_widths", config.layer_widths},
                {"init_seed", config.init_seed}};
  json layout = json::array();
  for (const ParamSlice& s : params.layout) {
    layout.push_back({{"layer", s.layer},
                      {"kind", s.kind == ParamSlice::Kind::weight ? "weight" : "bias"},
                      {"offset", s.offset},
                      {"rows", s.rows},
                      {"cols", s.cols}});
  }
  j["layout"] = std::move(layout);
  j["values"] = std::vector<double>(params.values.data(), params.values.data() + params.values.size());
  return j.dump(1);
}

std::pair<ModelConfig, FlatParams> params_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("params file: ") + e.what());
  }
  if (j.value("format", "") != "ropinn-params") throw ConfigError("params file: unknown format");
  if (j.value("version", 0) != 1) throw ConfigError("params file: unsupported version");
  ModelConfig config;
  config.arch = parse_arch(j.at("model").at("arch").get<std::string>());
  config.layer_widths = j.at("model").at("layer_widths").get<std::vector<std::size_t>>();
  config.init_seed = j.at("model").value("init_seed", std::uint64_t{0});
  const auto values = j.at("values").get<std::vector<double>>();
  FlatParams p = unflatten(config, Eigen::Map<const Eigen::VectorXd>(
                                       values.data(), static_cast<Eigen::Index>(values.size())));
  // The header is informational, but it must agree with the model.
  const json& layout = j.at("layout");
  if (layout.size() != p.layout.size()) throw ConfigError("params file: layout header mismatch");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].at("offset").get<std::size_t>() != p.layout[i].offset ||
        layout[i].at("rows").get<std::size_t>() != p.layout[i].rows ||
        layout[i].at("cols").get<std::size_t>() != p.layout[i].cols) {
      throw ConfigError("params file: layout header mismatch at entry " + std::to_string(i));
    }
  }
  return {config, std::move(p)};
}

void save_params(const std::filesystem::path& path, const ModelConfig& config,
                 const FlatParams& params) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << params_to_json(config, params) << '\n';
}

std::pair<ModelConfig, FlatParams> load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return params_from_json(buffer.str());
}

} // namespace ropinn
