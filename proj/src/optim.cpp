#include "ropinn/optim.hpp"

#include "ropinn/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace ropinn {

AdamState::AdamState(std::size_t n)
    : m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

Eigen::VectorXd adam_step(AdamState& st, const Eigen::VectorXd& params,
                          const Eigen::VectorXd& grad, double lr) {
  if (params.size() != grad.size()) throw DimensionError("adam_step: params and grad differ in length");
  if (st.m.size() == 0 && st.step == 0) {
    st.m = Eigen::VectorXd::Zero(params.size());
    st.v = Eigen::VectorXd::Zero(params.size());
  }
  if (st.m.size() != params.size()) throw DimensionError("adam_step: moment length changed");
  if (!grad.allFinite()) throw NumericError(0, "adam_step: non-finite gradient");

  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  const Eigen::ArrayXd mhat = st.m.array() / c1;
  const Eigen::ArrayXd vhat = st.v.array() / c2;
  return (params.array() - lr * mhat / (vhat.sqrt() + st.eps)).matrix();
}

Eigen::VectorXd lbfgs_direction(const LbfgsState& st, const Eigen::VectorXd& g) {
  const std::size_t k = st.s.size();
  if (k == 0) {
    const double norm = g.norm();
    return -std::min(1.0, norm > 0.0 ? 1.0 / norm : 1.0) * g;
  }
  Eigen::VectorXd q = g;
  std::vector<double> alpha(k), rho(k);
  for (std::size_t i = k; i-- > 0;) {
    rho[i] = 1.0 / st.y[i].dot(st.s[i]);
    alpha[i] = rho[i] * st.s[i].dot(q);
    q -= alpha[i] * st.y[i];
  }
  const double gamma = st.s.back().dot(st.y.back()) / st.y.back().squaredNorm();
  Eigen::VectorXd r = gamma * q;
  for (std::size_t i = 0; i < k; ++i) {
    const double beta = rho[i] * st.y[i].dot(r);
    r += (alpha[i] - beta) * st.s[i];
  }
  return -r;
}

namespace {

struct Trial {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;
  Eigen::VectorXd g;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept inside the
// bracket; bisection when the cubic is degenerate.
double cubic_step(const Trial& a, const Trial& b) {
  const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.slope * b.slope;
  const double lo = std::min(a.alpha, b.alpha);
  const double hi = std::max(a.alpha, b.alpha);
  const double mid = 0.5 * (lo + hi);
  if (!(disc >= 0.0) || !std::isfinite(disc)) return mid;
  const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
  const double t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
  // Stay away from the bracket ends so the interval keeps shrinking.
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) return mid;
  return t;
}

} // namespace

LbfgsStep lbfgs_step(LbfgsState& st, const Eigen::VectorXd& x0, const LossAndGrad& fn) {
  LbfgsStep out;
  out.g0.resize(x0.size());
  out.f0 = fn(x0, out.g0);
  out.evaluations = 1;
  if (!std::isfinite(out.f0) || !out.g0.allFinite()) {
    throw NumericError(0, "lbfgs_step: non-finite objective at the current point");
  }

  Eigen::VectorXd d = lbfgs_direction(st, out.g0);
  double slope0 = out.g0.dot(d);
  if (!(slope0 < 0.0)) {
    // Not a descent direction (stale curvature); restart from the gradient.
    st.s.clear();
    st.y.clear();
    d = lbfgs_direction(st, out.g0);
    slope0 = out.g0.dot(d);
  }
  if (slope0 == 0.0) {
    out.params = x0;
    out.f1 = out.f0;
    out.g1 = out.g0;
    out.wolfe = true;
    return out;
  }

  auto evaluate = [&](double alpha) {
    Trial t;
    t.alpha = alpha;
    t.g.resize(x0.size());
    t.f = fn(x0 + alpha * d, t.g);
    t.slope = t.g.allFinite() ? t.g.dot(d) : std::numeric_limits<double>::quiet_NaN();
    ++out.evaluations;
    return t;
  };

  const Trial start{0.0, out.f0, slope0, out.g0};
  Trial prev = start;
  Trial best = start;
  Trial accepted;
  bool found = false;
  std::size_t trials = 0;
  double alpha = 1.0;

  auto remember = [&](const Trial& t) {
    if (std::isfinite(t.f) && t.f < best.f) best = t;
  };
  auto wolfe = [&](const Trial& t) { return std::abs(t.slope) <= -st.c2 * slope0; };
  auto armijo = [&](const Trial& t) { return t.f <= out.f0 + st.c1 * t.alpha * slope0; };

  // Zoom phase between lo (satisfies sufficient decrease) and hi.
  auto zoom = [&](Trial lo, Trial hi) {
    while (trials < st.max_trials) {
      const double a = cubic_step(lo, hi);
      Trial t = evaluate(a);
      ++trials;
      remember(t);
      if (!std::isfinite(t.f) || !armijo(t) || t.f >= lo.f) {
        hi = t;
        continue;
      }
      if (wolfe(t)) {
        accepted = t;
        found = true;
        return;
      }
      if (t.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = t;
    }
  };

  while (trials < st.max_trials) {
    Trial t = evaluate(alpha);
    ++trials;
    remember(t);
    if (!std::isfinite(t.f) || !std::isfinite(t.slope)) {
      // Overshot into a region where the model blows up; back off.
      alpha = 0.5 * (prev.alpha + alpha);
      continue;
    }
    if (!armijo(t) || (trials > 1 && t.f >= prev.f)) {
      zoom(prev, t);
      break;
    }
    if (wolfe(t)) {
      accepted = t;
      found = true;
      break;
    }
    if (t.slope >= 0.0) {
      zoom(t, prev);
      break;
    }
    prev = t;
    alpha *= 2.0;
  }

  if (!found) {
    ++st.fallbacks;
    if (best.alpha > 0.0) {
      accepted = best;
      spdlog::debug("lbfgs: line search failed, taking best step alpha={}", best.alpha);
    } else {
      const double gnorm = out.g0.norm();
      accepted = Trial{};
      accepted.g.resize(x0.size());
      const Eigen::VectorXd x = x0 - (1e-3 / std::max(gnorm, 1.0)) * out.g0;
      accepted.f = fn(x, accepted.g);
      ++out.evaluations;
      out.params = x;
      out.f1 = accepted.f;
      out.g1 = accepted.g;
      out.wolfe = false;
      spdlog::debug("lbfgs: line search failed, taking a scaled gradient step");
      st.s.clear();
      st.y.clear();
      return out;
    }
  }

  out.alpha = accepted.alpha;
  out.params = x0 + accepted.alpha * d;
  out.f1 = accepted.f;
  out.g1 = accepted.g;
  out.wolfe = found;

  Eigen::VectorXd s = out.params - x0;
  Eigen::VectorXd y = out.g1 - out.g0;
  const double sy = s.dot(y);
  if (sy > 0.0 && std::isfinite(sy)) {
    st.s.push_back(std::move(s));
    st.y.push_back(std::move(y));
    while (st.s.size() > st.memory) {
      st.s.pop_front();
      st.y.pop_front();
    }
  } else {
    ++st.skipped_pairs;
  }
  return out;
}

} // namespace ropinn
