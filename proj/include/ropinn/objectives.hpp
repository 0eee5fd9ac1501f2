#pragma once

// Training objectives over collocation sets.
//
//   point   lambda_eq * mean F^2 + lambda_ic * mean I^2 + lambda_bc * mean B^2
//   gpinn   point + sum_j lambda_j * mean (dF/dx_j)^2 over interior points
//   region  point loss on a copy of the set where every point is moved by a
//           uniform offset inside a box of side h (one draw per point per call)
//
// The region objective is the Monte Carlo surrogate of the loss averaged over
// each point's neighbourhood box. Its gradient is an unbiased estimate of the
// gradient of that average; region_gradient_quadrature() computes the average
// directly and exists as a test oracle.

#include "ropinn/autodiff/tape.hpp"
#include "ropinn/model.hpp"
#include "ropinn/pde.hpp"
#include "ropinn/trust_region.hpp"

#include <Eigen/Core>

#include <array>
#include <functional>
#include <random>
#include <string_view>
#include <vector>

namespace ropinn {

enum class ObjectiveKind { point, region, gpinn };
enum class RegionMode { one_sided, centered };

std::string_view to_string(ObjectiveKind kind) noexcept;
std::string_view to_string(RegionMode mode) noexcept;
ObjectiveKind parse_objective_kind(std::string_view text);
RegionMode parse_region_mode(std::string_view text);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::region;
  double lambda_eq = 1.0;
  double lambda_ic = 1.0;
  double lambda_bc = 1.0;
  std::array<double, 2> gpinn_lambda{1.0, 1.0}; // (x, t)
  RegionMode region_mode = RegionMode::one_sided;
  /// Move initial and boundary points along their manifold too.
  bool perturb_constraints = true;
  /// Independent perturbed copies averaged per call.
  std::size_t samples = 1;

  bool operator==(const ObjectiveSpec&) const = default;
};

/// Throws ConfigError on negative weights or zero samples, CapabilityError for
/// gpinn on a second-order problem when third-order jets are unavailable.
void validate(const ObjectiveSpec& spec, const PdeProblem& problem);

struct LossTerms {
  ad::Var total;
  ad::Var equation;
  ad::Var initial;
  ad::Var boundary;
  ad::Var regularizer;
};

struct LossValues {
  double total = 0.0;
  double equation = 0.0;
  double initial = 0.0;
  double boundary = 0.0;
  double regularizer = 0.0;
};

/// Scalar values of the terms; structural zeros read as 0.
LossValues values(const LossTerms& terms);

LossTerms point_loss(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                     const CollocationSet& set, const ObjectiveSpec& spec);

LossTerms gpinn_loss(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                     const CollocationSet& set, const ObjectiveSpec& spec);

/// A collocation set with every point moved, plus the raw offsets drawn.
/// Offsets have the shape of the points; coordinates held fixed by the
/// manifold rule have offset 0.
struct PerturbedSet {
  CollocationSet points;
  CollocationSet offsets;
  double width = 0.0;
};

/// Offsets are U[0, h] (one-sided) or U[-h/2, h/2] (centered) per coordinate.
/// Interior points move in x and t, initial points in x only, boundary points
/// in t only (a periodic pair shares one t offset). Points leaving the box
/// wrap around in a periodic x and are clamped otherwise. h = 0 returns the
/// set unchanged without consuming random numbers.
PerturbedSet sample_region(const PdeProblem& problem, const CollocationSet& set, double h,
                           RegionMode mode, bool perturb_constraints, std::mt19937_64& rng);

struct RegionLoss {
  LossTerms terms;
  std::vector<PerturbedSet> draws;
};

/// Point loss on spec.samples perturbed copies of `set`, averaged.
RegionLoss region_loss(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                       const CollocationSet& set, const ObjectiveSpec& spec, double width,
                       std::mt19937_64& rng);

RegionLoss region_loss(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                       const CollocationSet& set, const ObjectiveSpec& spec,
                       const TrustRegionState& state, std::mt19937_64& rng);

/// Parameter gradient of the unit-weight squared residual (plus the gpinn
/// regularizer for gpinn specs) at a single interior point.
Eigen::VectorXd point_gradient(const PdeProblem& problem, const ModelConfig& config,
                               const FlatParams& params, const Eigen::Vector2d& point,
                               const ObjectiveSpec& spec);

/// Gradients at `count` points drawn uniformly from the region of side h at
/// `point`, one column per draw. Uses sample_region, so offsets follow its
/// rules (including wrap and clamp at the domain edge).
Eigen::MatrixXd sampled_region_gradients(const PdeProblem& problem, const ModelConfig& config,
                                         const FlatParams& params, const Eigen::Vector2d& point,
                                         double h, const ObjectiveSpec& spec, std::size_t count,
                                         std::mt19937_64& rng);

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
/// Supported n: 8, 16, 32.
std::vector<std::pair<double, double>> gauss_legendre(int n);

/// Tensor-product Gauss-Legendre mean of f over the box of side h anchored at
/// `origin` (one-sided: [o, o + h]; centered: [o - h/2, o + h/2]).
Eigen::VectorXd region_mean_quadrature(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& origin, double h, RegionMode mode, int nodes = 16);

/// Test oracle: quadrature of point_gradient over the region of side h at an
/// interior point. Refuses models with more than 100 parameters.
Eigen::VectorXd region_gradient_quadrature(const PdeProblem& problem, const ModelConfig& config,
                                           const FlatParams& params, const Eigen::Vector2d& point,
                                           double h, const ObjectiveSpec& spec, int nodes = 16);

} // namespace ropinn
