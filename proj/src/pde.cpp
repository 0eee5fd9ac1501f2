#include "ropinn/pde.hpp"

#include "ropinn/errors.hpp"

#include <cmath>
#include <numbers>

namespace ropinn {

using std::numbers::pi;

std::string_view to_string(ProblemKind kind) noexcept {
  switch (kind) {
  case ProblemKind::reaction1d: return "reaction";
  case ProblemKind::wave1d: return "wave";
  case ProblemKind::convection: return "convection";
  }
  return "unknown";
}

ProblemKind parse_problem(std::string_view name) {
  if (name == "reaction" || name == "reaction1d") return ProblemKind::reaction1d;
  if (name == "wave" || name == "wave1d") return ProblemKind::wave1d;
  if (name == "convection") return ProblemKind::convection;
  throw ConfigError("unknown problem '" + std::string(name) +
                    "' (expected reaction, wave or convection)");
}

std::shared_ptr<const ad::JetLayout> JetNeeds::layout() const {
  return ad::JetLayout::make(2, order, {space, time});
}

PdeProblem::PdeProblem(ProblemKind kind, double coefficient)
    : kind_(kind), coefficient_(coefficient) {
  switch (kind) {
  case ProblemKind::reaction1d:
    domain_ = {0.0, 2.0 * pi, 0.0, 1.0};
    boundary_ = BoundaryKind::periodic;
    break;
  case ProblemKind::wave1d:
    domain_ = {0.0, 1.0, 0.0, 1.0};
    boundary_ = BoundaryKind::dirichlet_zero;
    break;
  case ProblemKind::convection:
    domain_ = {0.0, 2.0 * pi, 0.0, 1.0};
    boundary_ = BoundaryKind::periodic;
    break;
  }
}

PdeProblem make_problem(std::string_view name, const std::map<std::string, double>& overrides) {
  const ProblemKind kind = parse_problem(name);
  double coefficient = 0.0;
  std::string key;
  switch (kind) {
  case ProblemKind::reaction1d:
    coefficient = 5.0;
    key = "rho";
    break;
  case ProblemKind::wave1d:
    coefficient = 3.0;
    key = "beta";
    break;
  case ProblemKind::convection:
    coefficient = 50.0;
    key = "beta";
    break;
  }
  for (const auto& [k, v] : overrides) {
    if (k != key) throw ConfigError("problem " + std::string(name) + " has no parameter '" + k + "'");
    if (!std::isfinite(v)) throw ConfigError("problem parameter '" + k + "' must be finite");
    coefficient = v;
  }
  return PdeProblem(kind, coefficient);
}

JetNeeds PdeProblem::interior_needs(int extra_order) const {
  switch (kind_) {
  case ProblemKind::reaction1d:
    // u_t alone; gradient-enhanced terms also differentiate along x.
    return {1 + extra_order, extra_order > 0, true};
  case ProblemKind::wave1d:
    return {2 + extra_order, true, true};
  case ProblemKind::convection:
    return {1 + extra_order, true, true};
  }
  return {};
}

JetNeeds PdeProblem::initial_needs() const {
  if (has_initial_velocity()) return {1, false, true};
  return {0, false, false};
}

JetNeeds PdeProblem::boundary_needs() const { return {0, false, false}; }

ad::Var PdeProblem::residual(const ad::Jet& u) const {
  const double c = coefficient_;
  switch (kind_) {
  case ProblemKind::reaction1d:
    return u.d(kTime) - c * (u.value() - square(u.value()));
  case ProblemKind::wave1d:
    return u.d(kTime, kTime) - 4.0 * u.d(kSpace, kSpace);
  case ProblemKind::convection:
    return u.d(kTime) + c * u.d(kSpace);
  }
  throw StructuralError("residual: unknown problem");
}

ad::Var PdeProblem::residual_derivative(const ad::Jet& u, std::size_t j) const {
  if (j > kTime) throw DimensionError("residual_derivative: direction out of range");
  const double c = coefficient_;
  switch (kind_) {
  case ProblemKind::reaction1d:
    // d/dx_j [u_t - c u + c u^2] = u_tj - c u_j + 2 c u u_j
    return u.d(kTime, j) - c * u.d(j) + (2.0 * c) * (u.value() * u.d(j));
  case ProblemKind::wave1d:
    return u.d(kTime, kTime, j) - 4.0 * u.d(kSpace, kSpace, j);
  case ProblemKind::convection:
    return u.d(kTime, j) + c * u.d(kSpace, j);
  }
  throw StructuralError("residual_derivative: unknown problem");
}

double PdeProblem::initial_value(double x) const {
  switch (kind_) {
  case ProblemKind::reaction1d: {
    const double s = pi / 4.0;
    return std::exp(-(x - pi) * (x - pi) / (2.0 * s * s));
  }
  case ProblemKind::wave1d:
    return std::sin(pi * x) + 0.5 * std::sin(coefficient_ * pi * x);
  case ProblemKind::convection:
    return std::sin(x);
  }
  return 0.0;
}

AnalyticJet PdeProblem::analytic(double x, double t) const {
  AnalyticJet a;
  const double c = coefficient_;
  switch (kind_) {
  case ProblemKind::reaction1d: {
    // u = h e^{ct} / (h e^{ct} + 1 - h), h the initial Gaussian bump.
    const double s2 = (pi / 4.0) * (pi / 4.0);
    const double h = initial_value(x);
    const double h1 = -(x - pi) / s2 * h;
    const double h2 = ((x - pi) * (x - pi) / (s2 * s2) - 1.0 / s2) * h;
    const double e = std::exp(c * t);
    const double d = h * e + 1.0 - h;
    const double d2 = d * d;
    const double d3 = d2 * d;
    a.u = h * e / d;
    a.u_t = c * h * e * (1.0 - h) / d2;
    a.u_tt = c * c * h * (1.0 - h) * e * (d - 2.0 * h * e) / d3;
    a.u_x = e * h1 / d2;
    a.u_xx = e * h2 / d2 - 2.0 * e * h1 * h1 * (e - 1.0) / d3;
    a.u_xt = c * e * h1 * (d - 2.0 * h * e) / d3;
    break;
  }
  case ProblemKind::wave1d: {
    const double sa = std::sin(pi * x), ca = std::cos(pi * x);
    const double sb = std::sin(c * pi * x), cb = std::cos(c * pi * x);
    const double s1 = std::sin(2.0 * pi * t), c1 = std::cos(2.0 * pi * t);
    const double s2 = std::sin(2.0 * c * pi * t), c2 = std::cos(2.0 * c * pi * t);
    const double p2 = pi * pi;
    a.u = sa * c1 + 0.5 * sb * c2;
    a.u_x = pi * ca * c1 + 0.5 * c * pi * cb * c2;
    a.u_t = -2.0 * pi * sa * s1 - c * pi * sb * s2;
    a.u_xx = -p2 * sa * c1 - 0.5 * c * c * p2 * sb * c2;
    a.u_xt = -2.0 * p2 * ca * s1 - c * c * p2 * cb * s2;
    a.u_tt = -4.0 * p2 * sa * c1 - 2.0 * c * c * p2 * sb * c2;
    break;
  }
  case ProblemKind::convection: {
    const double phase = x - c * t;
    const double s = std::sin(phase), co = std::cos(phase);
    a.u = s;
    a.u_x = co;
    a.u_t = -c * co;
    a.u_xx = -s;
    a.u_xt = c * s;
    a.u_tt = -c * c * s;
    break;
  }
  }
  return a;
}

Eigen::RowVectorXd PdeProblem::exact(const Eigen::MatrixXd& points) const {
  if (points.rows() != 2) throw DimensionError("exact: points must be 2 x N");
  Eigen::RowVectorXd u(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) u[i] = exact(points(0, i), points(1, i));
  return u;
}

ad::Jet analytic_jet(const PdeProblem& problem, const Eigen::MatrixXd& points,
                     std::shared_ptr<const ad::JetLayout> layout, ad::Tape& tape) {
  if (layout->order() > 2) throw CapabilityError("analytic_jet: closed forms stop at order two");
  if (layout->dim() != 2 || points.rows() != 2) throw DimensionError("analytic_jet: expects (x, t)");
  const Eigen::Index n = points.cols();
  std::vector<Eigen::MatrixXd> values(layout->size(), Eigen::MatrixXd(1, n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const AnalyticJet a = problem.analytic(points(0, i), points(1, i));
    for (std::size_t e = 0; e < layout->size(); ++e) {
      const ad::MultiIndex& m = layout->index(e);
      double v = a.u;
      if (m.size() == 1) v = m[0] == kSpace ? a.u_x : a.u_t;
      if (m.size() == 2) {
        const int times = (m[0] == kTime) + (m[1] == kTime);
        v = times == 0 ? a.u_xx : (times == 1 ? a.u_xt : a.u_tt);
      }
      values[e](0, i) = v;
    }
  }
  std::vector<ad::Var> entries;
  for (auto& v : values) entries.emplace_back(tape, tape.constant(std::move(v)));
  return {std::move(layout), std::move(entries)};
}

CollocationSet uniform_mesh(const PdeProblem& problem, std::size_t n, std::size_t n_ic,
                            std::size_t n_bc) {
  if (n < 2 || n_ic < 2 || n_bc < 2) throw ConfigError("uniform_mesh: every count must be >= 2");
  const DomainBox& box = problem.domain();
  const auto nn = static_cast<Eigen::Index>(n);
  const Eigen::VectorXd xs = Eigen::VectorXd::LinSpaced(nn, box.x_lo, box.x_hi);
  const Eigen::VectorXd ts = Eigen::VectorXd::LinSpaced(nn, box.t_lo, box.t_hi);

  CollocationSet s;
  s.interior.resize(2, nn * nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    for (Eigen::Index k = 0; k < nn; ++k) {
      s.interior(0, i * nn + k) = xs[i];
      s.interior(1, i * nn + k) = ts[k];
    }
  }

  const auto nic = static_cast<Eigen::Index>(n_ic);
  s.initial.resize(2, nic);
  s.initial.row(0) = Eigen::RowVectorXd::LinSpaced(nic, box.x_lo, box.x_hi);
  s.initial.row(1).setConstant(box.t_lo);

  const auto nbc = static_cast<Eigen::Index>(n_bc);
  const Eigen::RowVectorXd tb = Eigen::RowVectorXd::LinSpaced(nbc, box.t_lo, box.t_hi);
  s.boundary_lo.resize(2, nbc);
  s.boundary_hi.resize(2, nbc);
  s.boundary_lo.row(0).setConstant(box.x_lo);
  s.boundary_hi.row(0).setConstant(box.x_hi);
  s.boundary_lo.row(1) = tb;
  s.boundary_hi.row(1) = tb;
  return s;
}

RelativeErrors relative_errors(const Eigen::RowVectorXd& predicted,
                               const Eigen::RowVectorXd& reference) {
  if (predicted.size() != reference.size()) throw DimensionError("relative_errors: size mismatch");
  if (reference.size() == 0) throw DimensionError("relative_errors: empty mesh");
  const double abs_ref = reference.cwiseAbs().sum();
  const double sq_ref = reference.squaredNorm();
  if (abs_ref == 0.0 || sq_ref == 0.0) {
    throw DegenerateReferenceError("relative_errors: reference solution vanishes on the mesh");
  }
  const Eigen::RowVectorXd diff = predicted - reference;
  return {std::sqrt(diff.cwiseAbs().sum() / abs_ref), std::sqrt(diff.squaredNorm() / sq_ref)};
}

} // namespace ropinn
