#include "ropinn/trust_region.hpp"

#include "ropinn/errors.hpp"
#include "ropinn/pde.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ropinn {

namespace {

Eigen::VectorXd coordinate_std(std::span<const Eigen::VectorXd> gradients) {
  const auto n = static_cast<double>(gradients.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(gradients[0].size());
  for (const auto& g : gradients) mean += g;
  mean /= n;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(mean.size());
  for (const auto& g : gradients) var.array() += (g - mean).array().square();
  return (var / n).cwiseSqrt();
}

void require_consistent(std::span<const Eigen::VectorXd> gradients) {
  if (gradients.empty()) throw DimensionError("gradient spread of an empty buffer");
  for (const auto& g : gradients) {
    if (g.size() != gradients[0].size()) throw DimensionError("gradient buffer lengths differ");
  }
}

} // namespace

double gradient_spread(std::span<const Eigen::VectorXd> gradients) {
  require_consistent(gradients);
  return coordinate_std(gradients).norm();
}

double normalized_gradient_spread(std::span<const Eigen::VectorXd> gradients) {
  require_consistent(gradients);
  const Eigen::VectorXd sd = coordinate_std(gradients);
  Eigen::VectorXd mean_abs = Eigen::VectorXd::Zero(sd.size());
  for (const auto& g : gradients) mean_abs += g.cwiseAbs();
  mean_abs /= static_cast<double>(gradients.size());
  return (sd.array() / (mean_abs.array() + 1e-6)).mean();
}

TrustRegionState::TrustRegionState(TrustRegionConfig config)
    : config_(config), sigma_(config.sigma0) {
  if (config_.r0 < 0.0 || !std::isfinite(config_.r0)) throw ConfigError("r0 must be finite and >= 0");
  if (config_.T0 == 0) throw ConfigError("T0 must be positive");
  if (!(config_.sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
  if (!(config_.width_floor > 0.0) || config_.width_cap < config_.width_floor) {
    throw ConfigError("width clamps must satisfy 0 < floor <= cap");
  }
}

TrustRegionState TrustRegionState::for_problem(const PdeProblem& problem, double r0,
                                               std::size_t T0, bool mean_normalized) {
  TrustRegionConfig c;
  c.r0 = r0;
  c.T0 = T0;
  c.width_cap = std::min(problem.domain().width(), problem.domain().duration());
  c.mean_normalized = mean_normalized;
  return TrustRegionState(c);
}

void TrustRegionState::calibrate(const Eigen::VectorXd& gradient) {
  if (!buffer_.empty() && gradient.size() != buffer_.front().size()) {
    throw DimensionError("calibrate: gradient has " + std::to_string(gradient.size()) +
                         " entries, buffer holds " + std::to_string(buffer_.front().size()));
  }
  buffer_.push_back(gradient);
  while (buffer_.size() > config_.T0) buffer_.pop_front();

  const std::vector<Eigen::VectorXd> view(buffer_.begin(), buffer_.end());
  const double spread = config_.mean_normalized ? normalized_gradient_spread(view) : gradient_spread(view);
  sigma_ = std::max(spread, config_.sigma_floor);
}

double TrustRegionState::effective_width() const noexcept {
  if (config_.r0 == 0.0) return 0.0;
  return std::clamp(config_.r0 / sigma_, config_.width_floor, config_.width_cap);
}

} // namespace ropinn
