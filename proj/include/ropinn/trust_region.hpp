#pragma once

// Gradient-variance calibration of the sampling region.
//
// The state keeps the last T0 parameter gradients. After every push, sigma is
// the L2 norm of the per-coordinate population standard deviation over the
// buffer, and the region width used for sampling is r0 / sigma.

#include <Eigen/Core>

#include <cstddef>
#include <deque>
#include <span>

namespace ropinn {

class PdeProblem;

struct TrustRegionConfig {
  double r0 = 1e-4;
  std::size_t T0 = 10;
  double sigma0 = 1.0;
  double sigma_floor = 1e-12;
  double width_floor = 1e-10;
  double width_cap = 1.0;
  /// Use the coordinate-averaged coefficient of variation instead of the raw
  /// norm of the standard deviation. Experimental.
  bool mean_normalized = false;

  bool operator==(const TrustRegionConfig&) const = default;
};

/// L2 norm of the per-coordinate population standard deviation.
double gradient_spread(std::span<const Eigen::VectorXd> gradients);

/// Mean over coordinates of std_j / (mean_j |g| + 1e-6).
double normalized_gradient_spread(std::span<const Eigen::VectorXd> gradients);

class TrustRegionState {
public:
  explicit TrustRegionState(TrustRegionConfig config = {});

  /// Width cap set to the smallest side of the problem's domain.
  static TrustRegionState for_problem(const PdeProblem& problem, double r0, std::size_t T0,
                                      bool mean_normalized = false);

  /// Push a gradient (evicting the oldest beyond T0) and recompute sigma.
  void calibrate(const Eigen::VectorXd& gradient);

  double sigma() const noexcept { return sigma_; }
  /// r0 / sigma clamped to [width_floor, width_cap]; exactly zero when r0 is.
  double effective_width() const noexcept;
  const std::deque<Eigen::VectorXd>& buffer() const noexcept { return buffer_; }
  const TrustRegionConfig& config() const noexcept { return config_; }

private:
  TrustRegionConfig config_;
  double sigma_;
  std::deque<Eigen::VectorXd> buffer_;
};

} // namespace ropinn
