#include "ropinn/objectives.hpp"

#include "ropinn/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>

namespace ropinn {

std::string_view to_string(ObjectiveKind kind) noexcept {
  switch (kind) {
  case ObjectiveKind::point: return "point";
  case ObjectiveKind::region: return "region";
  case ObjectiveKind::gpinn: return "gpinn";
  }
  return "unknown";
}

std::string_view to_string(RegionMode mode) noexcept {
  return mode == RegionMode::centered ? "centered" : "one-sided";
}

ObjectiveKind parse_objective_kind(std::string_view text) {
  if (text == "point") return ObjectiveKind::point;
  if (text == "region") return ObjectiveKind::region;
  if (text == "gpinn") return ObjectiveKind::gpinn;
  throw ConfigError("unknown objective kind '" + std::string(text) + "'");
}

RegionMode parse_region_mode(std::string_view text) {
  if (text == "one-sided") return RegionMode::one_sided;
  if (text == "centered") return RegionMode::centered;
  throw ConfigError("unknown region mode '" + std::string(text) + "'");
}

void validate(const ObjectiveSpec& spec, const PdeProblem& problem) {
  for (double w : {spec.lambda_eq, spec.lambda_ic, spec.lambda_bc, spec.gpinn_lambda[0],
                   spec.gpinn_lambda[1]}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  }
  if (spec.samples == 0) throw ConfigError("region samples must be >= 1");
  if (spec.kind == ObjectiveKind::gpinn && problem.residual_order() >= 2 && !ad::jet3_enabled()) {
    throw CapabilityError("gpinn on " + std::string(problem.name()) +
                          " needs third-order jets, which this build excludes");
  }
}

LossValues values(const LossTerms& t) {
  auto read = [](const ad::Var& v) { return v ? v.scalar() : 0.0; };
  return {read(t.total), read(t.equation), read(t.initial), read(t.boundary), read(t.regularizer)};
}

namespace {

void require_points(const Eigen::Matrix2Xd& points, double weight, const char* term) {
  if (weight > 0.0 && points.cols() == 0) {
    throw ConfigError(std::string("loss term '") + term + "' has positive weight but no points");
  }
}

// Shared body of point_loss and gpinn_loss.
LossTerms assemble(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                   const CollocationSet& set, const ObjectiveSpec& spec, bool gradient_enhanced) {
  (void)tape;
  require_points(set.interior, spec.lambda_eq, "equation");
  require_points(set.initial, spec.lambda_ic, "initial");
  require_points(set.boundary_lo, spec.lambda_bc, "boundary");
  if (set.boundary_lo.cols() != set.boundary_hi.cols()) {
    throw DimensionError("boundary point sets are not paired");
  }

  const bool any_gpinn_weight = spec.gpinn_lambda[0] > 0.0 || spec.gpinn_lambda[1] > 0.0;
  if (gradient_enhanced && any_gpinn_weight) require_points(set.interior, 1.0, "gpinn regularizer");

  LossTerms out;
  const bool need_interior = spec.lambda_eq > 0.0 || (gradient_enhanced && any_gpinn_weight);
  if (need_interior) {
    const ad::Jet u = forward_jet(model, set.interior,
                                  problem.interior_needs(gradient_enhanced ? 1 : 0).layout());
    if (spec.lambda_eq > 0.0) out.equation = mean(square(problem.residual(u)));
    if (gradient_enhanced) {
      for (std::size_t j = 0; j < 2; ++j) {
        if (spec.gpinn_lambda[j] == 0.0) continue;
        out.regularizer = out.regularizer +
                          spec.gpinn_lambda[j] * mean(square(problem.residual_derivative(u, j)));
      }
    }
  }

  if (spec.lambda_ic > 0.0) {
    const ad::Jet u = forward_jet(model, set.initial, problem.initial_needs().layout());
    Eigen::MatrixXd target(1, set.initial.cols());
    for (Eigen::Index i = 0; i < target.cols(); ++i) target(0, i) = problem.initial_value(set.initial(0, i));
    const ad::Var g(tape, tape.constant(std::move(target)));
    out.initial = mean(square(u.value() - g));
    if (problem.has_initial_velocity()) out.initial = out.initial + mean(square(u.d(kTime)));
  }

  if (spec.lambda_bc > 0.0) {
    const auto layout = problem.boundary_needs().layout();
    if (problem.boundary() == BoundaryKind::periodic) {
      const ad::Jet lo = forward_jet(model, set.boundary_lo, layout);
      const ad::Jet hi = forward_jet(model, set.boundary_hi, layout);
      out.boundary = mean(square(lo.value() - hi.value()));
    } else {
      Eigen::MatrixXd both(2, set.boundary_lo.cols() + set.boundary_hi.cols());
      both << set.boundary_lo, set.boundary_hi;
      const ad::Jet u = forward_jet(model, both, layout);
      out.boundary = mean(square(u.value()));
    }
  }

  out.total = spec.lambda_eq * out.equation + spec.lambda_ic * out.initial +
              spec.lambda_bc * out.boundary + out.regularizer;
  if (!out.total) throw ConfigError("objective has no active terms");
  return out;
}

double wrap(double v, double lo, double hi) {
  if (v >= lo && v <= hi) return v;
  const double period = hi - lo;
  double r = std::fmod(v - lo, period);
  if (r < 0.0) r += period;
  return lo + r;
}

} // namespace

LossTerms point_loss(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                     const CollocationSet& set, const ObjectiveSpec& spec) {
  return assemble(tape, problem, model, set, spec, false);
}

LossTerms gpinn_loss(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                     const CollocationSet& set, const ObjectiveSpec& spec) {
  if (problem.residual_order() >= 2 && !ad::jet3_enabled()) {
    throw CapabilityError("gpinn on " + std::string(problem.name()) + " needs third-order jets");
  }
  return assemble(tape, problem, model, set, spec, true);
}

PerturbedSet sample_region(const PdeProblem& problem, const CollocationSet& set, double h,
                           RegionMode mode, bool perturb_constraints, std::mt19937_64& rng) {
  if (!(h >= 0.0) || !std::isfinite(h)) throw ConfigError("region width must be finite and >= 0");
  PerturbedSet out;
  out.points = set;
  out.width = h;
  out.offsets.interior = Eigen::Matrix2Xd::Zero(2, set.interior.cols());
  out.offsets.initial = Eigen::Matrix2Xd::Zero(2, set.initial.cols());
  out.offsets.boundary_lo = Eigen::Matrix2Xd::Zero(2, set.boundary_lo.cols());
  out.offsets.boundary_hi = Eigen::Matrix2Xd::Zero(2, set.boundary_hi.cols());
  if (h == 0.0) return out;

  const double lo = mode == RegionMode::one_sided ? 0.0 : -0.5 * h;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&] { return lo + h * unit(rng); };

  const DomainBox& box = problem.domain();
  const bool periodic = problem.boundary() == BoundaryKind::periodic;
  auto map_x = [&](double x) {
    return periodic ? wrap(x, box.x_lo, box.x_hi) : std::clamp(x, box.x_lo, box.x_hi);
  };
  auto map_t = [&](double t) { return std::clamp(t, box.t_lo, box.t_hi); };

  for (Eigen::Index i = 0; i < set.interior.cols(); ++i) {
    const double dx = draw();
    const double dt = draw();
    out.offsets.interior(0, i) = dx;
    out.offsets.interior(1, i) = dt;
    out.points.interior(0, i) = map_x(set.interior(0, i) + dx);
    out.points.interior(1, i) = map_t(set.interior(1, i) + dt);
  }
  if (!perturb_constraints) return out;

  for (Eigen::Index i = 0; i < set.initial.cols(); ++i) {
    const double dx = draw();
    out.offsets.initial(0, i) = dx;
    out.points.initial(0, i) = map_x(set.initial(0, i) + dx);
  }
  for (Eigen::Index i = 0; i < set.boundary_lo.cols(); ++i) {
    const double dt_lo = draw();
    const double dt_hi = periodic ? dt_lo : draw();
    out.offsets.boundary_lo(1, i) = dt_lo;
    out.offsets.boundary_hi(1, i) = dt_hi;
    out.points.boundary_lo(1, i) = map_t(set.boundary_lo(1, i) + dt_lo);
    out.points.boundary_hi(1, i) = map_t(set.boundary_hi(1, i) + dt_hi);
  }
  return out;
}

RegionLoss region_loss(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                       const CollocationSet& set, const ObjectiveSpec& spec, double width,
                       std::mt19937_64& rng) {
  if (spec.samples == 0) throw ConfigError("region samples must be >= 1");
  RegionLoss out;
  std::vector<LossTerms> parts;
  for (std::size_t k = 0; k < spec.samples; ++k) {
    out.draws.push_back(
        sample_region(problem, set, width, spec.region_mode, spec.perturb_constraints, rng));
    parts.push_back(point_loss(tape, problem, model, out.draws.back().points, spec));
  }
  if (parts.size() == 1) {
    out.terms = parts.front();
    return out;
  }
  const double w = 1.0 / static_cast<double>(parts.size());
  for (const LossTerms& p : parts) {
    out.terms.total = out.terms.total + w * p.total;
    out.terms.equation = out.terms.equation + w * p.equation;
    out.terms.initial = out.terms.initial + w * p.initial;
    out.terms.boundary = out.terms.boundary + w * p.boundary;
  }
  return out;
}

RegionLoss region_loss(ad::Tape& tape, const PdeProblem& problem, const BoundModel& model,
                       const CollocationSet& set, const ObjectiveSpec& spec,
                       const TrustRegionState& state, std::mt19937_64& rng) {
  return region_loss(tape, problem, model, set, spec, state.effective_width(), rng);
}

// ---------------------------------------------------------------------------
// Single-point gradients and the quadrature oracle

namespace {

ObjectiveSpec equation_only(const ObjectiveSpec& spec) {
  ObjectiveSpec s = spec;
  s.lambda_eq = 1.0;
  s.lambda_ic = 0.0;
  s.lambda_bc = 0.0;
  return s;
}

CollocationSet single_interior(const Eigen::Vector2d& point) {
  CollocationSet s;
  s.interior = point;
  s.initial.resize(2, 0);
  s.boundary_lo.resize(2, 0);
  s.boundary_hi.resize(2, 0);
  return s;
}

Eigen::VectorXd gradient_at(const PdeProblem& problem, const ModelConfig& config,
                            const FlatParams& params, const CollocationSet& set,
                            const ObjectiveSpec& spec) {
  ad::Tape tape;
  const BoundModel model = bind(tape, config, params);
  const LossTerms terms = spec.kind == ObjectiveKind::gpinn
                              ? gpinn_loss(tape, problem, model, set, spec)
                              : point_loss(tape, problem, model, set, spec);
  return ad::backward(tape, terms.total.id(), params.size());
}

template <int N>
std::vector<std::pair<double, double>> rule() {
  using G = boost::math::quadrature::gauss<double, N>;
  const auto& x = G::abscissa();
  const auto& w = G::weights();
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) {
      out.emplace_back(0.0, w[i]);
    } else {
      out.emplace_back(-x[i], w[i]);
      out.emplace_back(x[i], w[i]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

Eigen::VectorXd point_gradient(const PdeProblem& problem, const ModelConfig& config,
                               const FlatParams& params, const Eigen::Vector2d& point,
                               const ObjectiveSpec& spec) {
  return gradient_at(problem, config, params, single_interior(point), equation_only(spec));
}

Eigen::MatrixXd sampled_region_gradients(const PdeProblem& problem, const ModelConfig& config,
                                         const FlatParams& params, const Eigen::Vector2d& point,
                                         double h, const ObjectiveSpec& spec, std::size_t count,
                                         std::mt19937_64& rng) {
  const ObjectiveSpec s = equation_only(spec);
  const CollocationSet base = single_interior(point);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(params.size()), static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) {
    const PerturbedSet draw = sample_region(problem, base, h, s.region_mode, false, rng);
    out.col(static_cast<Eigen::Index>(k)) = gradient_at(problem, config, params, draw.points, s);
  }
  return out;
}

std::vector<std::pair<double, double>> gauss_legendre(int n) {
  switch (n) {
  case 8: return rule<8>();
  case 16: return rule<16>();
  case 32: return rule<32>();
  default: break;
  }
  throw CapabilityError("gauss_legendre: unsupported node count " + std::to_string(n));
}

Eigen::VectorXd region_mean_quadrature(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& origin, double h, RegionMode mode, int nodes) {
  const auto rule_1d = gauss_legendre(nodes);
  const Eigen::Index dims = origin.size();
  if (dims == 0) throw DimensionError("region_mean_quadrature: zero-dimensional region");
  const double start = mode == RegionMode::one_sided ? 0.0 : -0.5 * h;

  // Weights on [-1, 1] sum to 2 per dimension; the mean divides that out.
  std::vector<std::size_t> counter(static_cast<std::size_t>(dims), 0);
  Eigen::VectorXd acc;
  Eigen::VectorXd x(dims);
  while (true) {
    double weight = 1.0;
    for (Eigen::Index d = 0; d < dims; ++d) {
      const auto& [node, w] = rule_1d[counter[static_cast<std::size_t>(d)]];
      x[d] = origin[d] + start + 0.5 * h * (node + 1.0);
      weight *= 0.5 * w;
    }
    const Eigen::VectorXd v = f(x);
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(v.size());
    acc += weight * v;

    std::size_t d = 0;
    while (d < counter.size() && ++counter[d] == rule_1d.size()) counter[d++] = 0;
    if (d == counter.size()) break;
  }
  return acc;
}

Eigen::VectorXd region_gradient_quadrature(const PdeProblem& problem, const ModelConfig& config,
                                           const FlatParams& params, const Eigen::Vector2d& point,
                                           double h, const ObjectiveSpec& spec, int nodes) {
  if (params.size() > 100) {
    throw GuardError("region_gradient_quadrature: model has " + std::to_string(params.size()) +
                     " parameters; the oracle is limited to 100");
  }
  auto integrand = [&](const Eigen::VectorXd& x) {
    return point_gradient(problem, config, params, Eigen::Vector2d(x[0], x[1]), spec);
  };
  return region_mean_quadrature(integrand, point, h, spec.region_mode, nodes);
}

} // namespace ropinn
