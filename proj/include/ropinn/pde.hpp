#pragma once

// Benchmark problems on a (x, t) box: residual operators, initial and
// boundary constraints, closed-form reference solutions, collocation meshes
// and the relative error metrics.
//
// Inputs are ordered (x, t): direction 0 is space, direction 1 is time.

#include "ropinn/autodiff/jet.hpp"
#include "ropinn/model.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace ropinn {

inline constexpr std::size_t kSpace = 0;
inline constexpr std::size_t kTime = 1;

struct DomainBox {
  double x_lo = 0.0;
  double x_hi = 1.0;
  double t_lo = 0.0;
  double t_hi = 1.0;

  double width() const noexcept { return x_hi - x_lo; }
  double duration() const noexcept { return t_hi - t_lo; }
  bool contains(double x, double t) const noexcept {
    return x >= x_lo && x <= x_hi && t >= t_lo && t <= t_hi;
  }
  bool operator==(const DomainBox&) const = default;
};

enum class ProblemKind { reaction1d, wave1d, convection };
enum class BoundaryKind { periodic, dirichlet_zero };

std::string_view to_string(ProblemKind kind) noexcept;
ProblemKind parse_problem(std::string_view name);

/// Closed-form reference solution and its partial derivatives at one point.
struct AnalyticJet {
  double u = 0.0;
  double u_x = 0.0;
  double u_t = 0.0;
  double u_xx = 0.0;
  double u_xt = 0.0;
  double u_tt = 0.0;
};

/// Which derivative entries a loss term reads from the network jet.
struct JetNeeds {
  int order = 0;
  bool space = false;
  bool time = false;

  std::shared_ptr<const ad::JetLayout> layout() const;
};

class PdeProblem {
public:
  PdeProblem(ProblemKind kind, double coefficient);

  ProblemKind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return to_string(kind_); }
  const DomainBox& domain() const noexcept { return domain_; }
  BoundaryKind boundary() const noexcept { return boundary_; }
  /// rho for reaction, beta for wave and convection.
  double coefficient() const noexcept { return coefficient_; }
  /// Highest derivative order appearing in the residual.
  int residual_order() const noexcept { return kind_ == ProblemKind::wave1d ? 2 : 1; }

  /// Derivatives needed to evaluate the residual (plus `extra_order` more
  /// orders, for gradient-enhanced terms).
  JetNeeds interior_needs(int extra_order = 0) const;
  JetNeeds initial_needs() const;
  JetNeeds boundary_needs() const;

  /// Residual F(u) evaluated entrywise over a batch jet.
  ad::Var residual(const ad::Jet& u) const;
  /// dF/dx_j over a batch jet; needs one more order than residual().
  ad::Var residual_derivative(const ad::Jet& u, std::size_t direction) const;

  double initial_value(double x) const;
  /// Wave carries u_t(x, t_lo) = 0 in addition to the value constraint.
  bool has_initial_velocity() const noexcept { return kind_ == ProblemKind::wave1d; }

  AnalyticJet analytic(double x, double t) const;
  double exact(double x, double t) const { return analytic(x, t).u; }
  Eigen::RowVectorXd exact(const Eigen::MatrixXd& points) const;

private:
  ProblemKind kind_;
  double coefficient_;
  DomainBox domain_;
  BoundaryKind boundary_;
};

/// Known overrides: "rho" (reaction) and "beta" (wave, convection).
PdeProblem make_problem(std::string_view name, const std::map<std::string, double>& overrides = {});

/// Build a jet whose entries are the closed-form derivatives at the given
/// points, as constants on `tape`.
ad::Jet analytic_jet(const PdeProblem& problem, const Eigen::MatrixXd& points,
                     std::shared_ptr<const ad::JetLayout> layout, ad::Tape& tape);

/// Collocation points, one column per point in (x, t) order.
///
/// Boundary points come in two aligned matrices: column i of boundary_lo sits
/// on x = x_lo and column i of boundary_hi on x = x_hi, both at the same t.
/// Periodic problems compare the two columns; Dirichlet problems constrain
/// each of them on its own.
struct CollocationSet {
  Eigen::Matrix2Xd interior;
  Eigen::Matrix2Xd initial;
  Eigen::Matrix2Xd boundary_lo;
  Eigen::Matrix2Xd boundary_hi;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(interior.cols() + initial.cols() + boundary_lo.cols() +
                                    boundary_hi.cols());
  }
};

/// n x n grid over the closed box, n_ic initial points in x at t_lo, and
/// n_bc times on each x-face.
CollocationSet uniform_mesh(const PdeProblem& problem, std::size_t n_interior_per_axis,
                            std::size_t n_ic, std::size_t n_bc);

struct MetricsReport {
  double train_loss = 0.0;
  double loss_eq = 0.0;
  double loss_ic = 0.0;
  double loss_bc = 0.0;
  double rmae = 0.0;
  double rmse = 0.0;
};

struct RelativeErrors {
  double rmae = 0.0;
  double rmse = 0.0;
};

/// rMAE = sqrt(sum|u - u*| / sum|u*|), rMSE = sqrt(sum (u - u*)^2 / sum u*^2).
RelativeErrors relative_errors(const Eigen::RowVectorXd& predicted,
                               const Eigen::RowVectorXd& reference);

/// Relative errors of the model over the interior points of `test_mesh`, plus
/// the unit-weight point loss on the whole mesh.
MetricsReport evaluate_metrics(const PdeProblem& problem, const ModelConfig& config,
                               const FlatParams& params, const CollocationSet& test_mesh);

/// CSV with header x,t,u_pred,u_true; one row per interior mesh point.
void write_prediction_csv(const std::filesystem::path& path, const PdeProblem& problem,
                          const ModelConfig& config, const FlatParams& params,
                          const CollocationSet& mesh);

std::string metrics_to_json(const MetricsReport& report);

} // namespace ropinn
