#pragma once

// First-order and quasi-Newton optimizers over flat parameter vectors.

#include <Eigen/Core>

#include <cstddef>
#include <deque>
#include <functional>

namespace ropinn {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::size_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n);
};

/// One bias-corrected Adam update. Moments are sized on first use; a length
/// change afterwards is a DimensionError, a non-finite gradient a NumericError.
Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& params,
                          const Eigen::VectorXd& grad, double lr);

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using LossAndGrad = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsState {
  std::size_t memory = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  std::size_t max_trials = 20;

  std::deque<Eigen::VectorXd> s;
  std::deque<Eigen::VectorXd> y;
  std::size_t fallbacks = 0;
  std::size_t skipped_pairs = 0;
};

struct LbfgsStep {
  Eigen::VectorXd params;  // x_{k+1}
  double f0 = 0.0;         // f(x_k)
  Eigen::VectorXd g0;      // grad f(x_k)
  double f1 = 0.0;         // f(x_{k+1})
  Eigen::VectorXd g1;      // grad f(x_{k+1})
  double alpha = 0.0;
  std::size_t evaluations = 0;
  bool wolfe = false;      // false when the fallback step was taken
};

/// Search direction from the two-loop recursion. With an empty history this
/// is -g scaled by min(1, 1/|g|).
Eigen::VectorXd lbfgs_direction(const LbfgsState& state, const Eigen::VectorXd& g);

/// One L-BFGS iteration: direction, strong Wolfe line search (unit initial
/// step, at most max_trials evaluations), history update. When the search
/// fails the best point seen is taken if it lowered f, otherwise a short
/// normalized gradient step. Pairs with s'y <= 0 are not stored.
LbfgsStep lbfgs_step(LbfgsState& state, const Eigen::VectorXd& params, const LossAndGrad& fn);

} // namespace ropinn
