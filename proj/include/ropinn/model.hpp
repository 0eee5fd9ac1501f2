#pragma once

// Fully connected scalar fields u_theta : R^(d+1) -> R.
//
// Parameters live in one flat vector. Layer l contributes its weight matrix
// (out x in, column-major) followed by its bias (out). The same layout is used
// by the tape, the optimizers and the on-disk format.

#include "ropinn/autodiff/jet.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ropinn {

enum class Arch {
  mlp_tanh, // tanh on every hidden layer
  fls,      // sine on the first hidden layer, tanh afterwards
};

std::string_view to_string(Arch arch) noexcept;
Arch parse_arch(std::string_view text);

struct ModelConfig {
  Arch arch = Arch::mlp_tanh;
  std::vector<std::size_t> layer_widths;
  std::uint64_t init_seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

/// Throws ConfigError unless there is at least one hidden layer and every
/// width is positive. Layout-level functions (init, zeros, forward, ...) also
/// take a bare affine map such as [2, 1].
void validate(const ModelConfig& config);

ModelConfig desk_preset(std::uint64_t seed = 0);  // [2, 64, 64, 64, 1]
ModelConfig paper_preset(std::uint64_t seed = 0); // [2, 512, 512, 512, 1]

struct ParamSlice {
  enum class Kind { weight, bias };
  std::size_t layer = 0;
  Kind kind = Kind::weight;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  bool operator==(const ParamSlice&) const = default;
};

struct FlatParams {
  Eigen::VectorXd values;
  std::vector<ParamSlice> layout;

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
};

std::vector<ParamSlice> make_layout(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);

/// Glorot-uniform weights, zero biases. Deterministic in config.init_seed.
FlatParams init(const ModelConfig& config);

/// Zero parameters with the config's layout.
FlatParams zeros(const ModelConfig& config);

/// Re-attach a raw vector to the config's layout.
FlatParams unflatten(const ModelConfig& config, Eigen::VectorXd values);

Eigen::Map<const Eigen::MatrixXd> weight(const FlatParams& params, std::size_t layer);
Eigen::Map<const Eigen::VectorXd> bias(const FlatParams& params, std::size_t layer);
Eigen::Map<Eigen::MatrixXd> weight(FlatParams& params, std::size_t layer);
Eigen::Map<Eigen::VectorXd> bias(FlatParams& params, std::size_t layer);

/// Parameters registered once on a tape, reusable across several batches so
/// that every use accumulates into the same flat gradient coordinates.
struct BoundModel {
  ModelConfig config;
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

BoundModel bind(ad::Tape& tape, const ModelConfig& config, const FlatParams& params);

/// Jet of u_theta over a batch of points (one column per point).
ad::Jet forward_jet(const BoundModel& model, const Eigen::MatrixXd& points,
                    std::shared_ptr<const ad::JetLayout> layout);

ad::Jet forward_jet(const ModelConfig& config, const FlatParams& params,
                    const Eigen::MatrixXd& points, std::shared_ptr<const ad::JetLayout> layout,
                    ad::Tape& tape);

/// Plain evaluation without a tape.
Eigen::RowVectorXd forward(const ModelConfig& config, const FlatParams& params,
                           const Eigen::MatrixXd& points);

// On-disk format: JSON object
//   { "format": "ropinn-params", "version": 1,
//     "model": { "arch": ..., "layer_widths": [...], "init_seed": ... },
//     "layout": [ { "layer", "kind", "offset", "rows", "cols" }, ... ],
//     "values": [ ... ] }
// Values are written with round-trip precision.
std::string params_to_json(const ModelConfig& config, const FlatParams& params);
std::pair<ModelConfig, FlatParams> params_from_json(std::string_view text);
void save_params(const std::filesystem::path& path, const ModelConfig& config,
                 const FlatParams& params);
std::pair<ModelConfig, FlatParams> load_params(const std::filesystem::path& path);

} // namespace ropinn
