#pragma once

// Reference implementations used to check the library against itself.
//
// Nothing here touches the tape or the jets. A network is re-evaluated in
// extended precision with a small second-order forward-mode number type, and
// the loss is rebuilt from the textbook formulas, so that finite differences
// of it are an independent oracle for the library's gradients.

#include "ropinn/model.hpp"
#include "ropinn/pde.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace ropinn::checks {

/// Value, gradient and Hessian in (x, t). hess = {xx, xt, tt}.
template <class T>
struct Taylor2 {
  T v{};
  std::array<T, 2> d{};
  std::array<T, 3> h{};

  static Taylor2 constant(T c) { return {c, {}, {}}; }
  static Taylor2 variable(T c, int axis) {
    Taylor2 r{c, {}, {}};
    r.d[static_cast<std::size_t>(axis)] = T(1);
    return r;
  }
};

template <class T>
Taylor2<T> operator+(const Taylor2<T>& a, const Taylor2<T>& b) {
  return {a.v + b.v, {a.d[0] + b.d[0], a.d[1] + b.d[1]}, {a.h[0] + b.h[0], a.h[1] + b.h[1], a.h[2] + b.h[2]}};
}

template <class T>
Taylor2<T> operator*(T c, const Taylor2<T>& a) {
  return {c * a.v, {c * a.d[0], c * a.d[1]}, {c * a.h[0], c * a.h[1], c * a.h[2]}};
}

template <class T>
Taylor2<T> operator*(const Taylor2<T>& a, const Taylor2<T>& b) {
  Taylor2<T> r;
  r.v = a.v * b.v;
  r.d[0] = a.d[0] * b.v + a.v * b.d[0];
  r.d[1] = a.d[1] * b.v + a.v * b.d[1];
  r.h[0] = a.h[0] * b.v + 2 * a.d[0] * b.d[0] + a.v * b.h[0];
  r.h[1] = a.h[1] * b.v + a.d[0] * b.d[1] + a.d[1] * b.d[0] + a.v * b.h[1];
  r.h[2] = a.h[2] * b.v + 2 * a.d[1] * b.d[1] + a.v * b.h[2];
  return r;
}

// y = f(a) given f(a), f'(a), f''(a).
template <class T>
Taylor2<T> chain(const Taylor2<T>& a, T f0, T f1, T f2) {
  Taylor2<T> r;
  r.v = f0;
  r.d[0] = f1 * a.d[0];
  r.d[1] = f1 * a.d[1];
  r.h[0] = f2 * a.d[0] * a.d[0] + f1 * a.h[0];
  r.h[1] = f2 * a.d[0] * a.d[1] + f1 * a.h[1];
  r.h[2] = f2 * a.d[1] * a.d[1] + f1 * a.h[2];
  return r;
}

template <class T>
Taylor2<T> tanh(const Taylor2<T>& a) {
  using std::tanh;
  const T y = tanh(a.v);
  const T f1 = 1 - y * y;
  return chain(a, y, f1, -2 * y * f1);
}

template <class T>
Taylor2<T> sin(const Taylor2<T>& a) {
  using std::cos;
  using std::sin;
  const T s = sin(a.v);
  return chain(a, s, cos(a.v), -s);
}

/// Forward pass of an mlp-tanh or fls network given a flat parameter vector
/// in the library's layout (per layer: weight out x in column-major, bias).
template <class T>
Taylor2<T> reference_forward(const ModelConfig& config, const std::vector<T>& theta, T x, T t) {
  std::vector<Taylor2<T>> a{Taylor2<T>::variable(x, 0), Taylor2<T>::variable(t, 1)};
  std::size_t offset = 0;
  const std::size_t layers = config.layer_widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = config.layer_widths[l];
    const std::size_t out = config.layer_widths[l + 1];
    const std::size_t bias = offset + in * out;
    std::vector<Taylor2<T>> z(out);
    for (std::size_t k = 0; k < out; ++k) {
      Taylor2<T> acc = Taylor2<T>::constant(theta[bias + k]);
      for (std::size_t j = 0; j < in; ++j) acc = acc + theta[offset + k + j * out] * a[j];
      const bool hidden = l + 1 < layers;
      if (!hidden) z[k] = acc;
      else if (config.arch == Arch::fls && l == 0) z[k] = sin(acc);
      else z[k] = tanh(acc);
    }
    a = std::move(z);
    offset = bias + out;
  }
  return a[0];
}

template <class T>
T reference_initial(ProblemKind kind, double coefficient, T x) {
  using std::exp;
  using std::sin;
  const T pi = std::numbers::pi_v<T>;
  switch (kind) {
  case ProblemKind::reaction1d: {
    const T s = pi / 4;
    return exp(-(x - pi) * (x - pi) / (2 * s * s));
  }
  case ProblemKind::wave1d:
    return sin(pi * x) + sin(T(coefficient) * pi * x) / 2;
  case ProblemKind::convection:
    return sin(x);
  }
  return T(0);
}

template <class T>
T reference_residual(ProblemKind kind, double coefficient, const Taylor2<T>& u) {
  const T c = T(coefficient);
  switch (kind) {
  case ProblemKind::reaction1d: return u.d[1] - c * u.v * (1 - u.v);
  case ProblemKind::wave1d: return u.h[2] - 4 * u.h[0];
  case ProblemKind::convection: return u.d[1] + c * u.d[0];
  }
  return T(0);
}

/// Unit-weight point loss, term by term from the definitions: mean squared
/// residual, mean squared initial mismatch (plus mean u_t^2 for the wave),
/// and the boundary term (periodic pair mismatch, or Dirichlet u^2).
template <class T>
T reference_loss(const PdeProblem& problem, const ModelConfig& config, const std::vector<T>& theta,
                 const CollocationSet& set) {
  const ProblemKind kind = problem.kind();
  const double c = problem.coefficient();
  auto u = [&](double x, double t) { return reference_forward<T>(config, theta, T(x), T(t)); };

  T eq = 0;
  for (Eigen::Index i = 0; i < set.interior.cols(); ++i) {
    const T r = reference_residual<T>(kind, c, u(set.interior(0, i), set.interior(1, i)));
    eq += r * r;
  }
  eq /= T(set.interior.cols());

  T ic = 0;
  T velocity = 0;
  for (Eigen::Index i = 0; i < set.initial.cols(); ++i) {
    const Taylor2<T> v = u(set.initial(0, i), set.initial(1, i));
    const T diff = v.v - reference_initial<T>(kind, c, T(set.initial(0, i)));
    ic += diff * diff;
    velocity += v.d[1] * v.d[1];
  }
  ic /= T(set.initial.cols());
  if (kind == ProblemKind::wave1d) ic += velocity / T(set.initial.cols());

  T bc = 0;
  const Eigen::Index nb = set.boundary_lo.cols();
  if (problem.boundary() == BoundaryKind::periodic) {
    for (Eigen::Index i = 0; i < nb; ++i) {
      const T diff = u(set.boundary_lo(0, i), set.boundary_lo(1, i)).v -
                     u(set.boundary_hi(0, i), set.boundary_hi(1, i)).v;
      bc += diff * diff;
    }
    bc /= T(nb);
  } else {
    for (Eigen::Index i = 0; i < nb; ++i) {
      const T lo = u(set.boundary_lo(0, i), set.boundary_lo(1, i)).v;
      const T hi = u(set.boundary_hi(0, i), set.boundary_hi(1, i)).v;
      bc += lo * lo + hi * hi;
    }
    bc /= T(2 * nb);
  }
  return eq + ic + bc;
}

template <class T>
std::vector<T> widen(const Eigen::VectorXd& v) {
  return std::vector<T>(v.data(), v.data() + v.size());
}

/// Central differences of reference_loss in long double.
Eigen::VectorXd finite_difference_gradient(const PdeProblem& problem, const ModelConfig& config,
                                           const FlatParams& params, const CollocationSet& set,
                                           double step = 1e-6);

/// Finite-difference derivatives of u at (x, t) in long double:
/// {u_x, u_t, u_xx, u_xt, u_tt}.
std::array<double, 5> finite_difference_jet(const ModelConfig& config, const FlatParams& params,
                                            double x, double t);

/// max over coordinates with |a_i| > floor of |a_i - b_i| / |b_i|; the
/// second value is the number of coordinates compared.
std::pair<double, std::size_t> max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                                  double floor = 1e-8);

} // namespace ropinn::checks
