#include "ropinn/checks/oracles.hpp"

#include <algorithm>

namespace ropinn::checks {

using Ld = long double;

Eigen::VectorXd finite_difference_gradient(const PdeProblem& problem, const ModelConfig& config,
                                           const FlatParams& params, const CollocationSet& set,
                                           double step) {
  std::vector<Ld> theta = widen<Ld>(params.values);
  Eigen::VectorXd out(params.values.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const Ld saved = theta[i];
    theta[i] = saved + step;
    const Ld plus = reference_loss<Ld>(problem, config, theta, set);
    theta[i] = saved - step;
    const Ld minus = reference_loss<Ld>(problem, config, theta, set);
    theta[i] = saved;
    out[static_cast<Eigen::Index>(i)] = static_cast<double>((plus - minus) / (2 * Ld(step)));
  }
  return out;
}

std::array<double, 5> finite_difference_jet(const ModelConfig& config, const FlatParams& params,
                                            double x, double t) {
  const std::vector<Ld> theta = widen<Ld>(params.values);
  auto u = [&](Ld dx, Ld dt) { return reference_forward<Ld>(config, theta, Ld(x) + dx, Ld(t) + dt).v; };
  const Ld h1 = 1e-5L;
  const Ld h2 = 1e-4L;
  const Ld u0 = u(0, 0);
  std::array<double, 5> d{};
  d[0] = static_cast<double>((u(h1, 0) - u(-h1, 0)) / (2 * h1));
  d[1] = static_cast<double>((u(0, h1) - u(0, -h1)) / (2 * h1));
  d[2] = static_cast<double>((u(h2, 0) - 2 * u0 + u(-h2, 0)) / (h2 * h2));
  d[3] = static_cast<double>((u(h2, h2) - u(h2, -h2) - u(-h2, h2) + u(-h2, -h2)) / (4 * h2 * h2));
  d[4] = static_cast<double>((u(0, h2) - 2 * u0 + u(0, -h2)) / (h2 * h2));
  return d;
}

std::pair<double, std::size_t> max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                                  double floor) {
  double worst = 0.0;
  std::size_t compared = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::abs(a[i]) <= floor) continue;
    ++compared;
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::abs(b[i]));
  }
  return {worst, compared};
}

} // namespace ropinn::checks
