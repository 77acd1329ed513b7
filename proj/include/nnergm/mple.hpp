#pragma once

// Maximum pseudolikelihood: a logistic regression of each dyad indicator on
// its change statistics, fitted by Newton's method (IRLS) with step halving.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nnergm/closed_form.hpp"
#include "nnergm/error.hpp"
#include "nnergm/estimate.hpp"
#include "nnergm/graph.hpp"
#include "nnergm/statistics.hpp"

namespace nnergm {

struct MpleOptions {
  double gradient_tolerance = 1e-8;
  std::size_t max_iterations = 100;
};

struct MpleResult {
  ParamVector theta_hat;
  /// Inverse-Hessian standard errors of the logistic fit. These ignore the
  /// dependence between dyads and are optimistic for dependent models.
  Eigen::VectorXd naive_se;
  std::size_t iterations = 0;
  bool converged = false;
  std::string message;
  double log_pseudolikelihood = 0.0;
  /// Log pseudolikelihood after each accepted Newton step (nondecreasing up
  /// to rounding).
  std::vector<double> trace;
};

/// Design of the pseudolikelihood: one row per orderable dyad.
struct MpleDesign {
  Eigen::MatrixXd x;  // change statistics
  Eigen::VectorXd y;  // dyad indicators
};

inline MpleDesign mple_design(const ModelSpec& spec, const Graph& g_obs) {
  const StatEvaluator eval(spec);
  eval.check_graph(g_obs);
  const auto rows = static_cast<Eigen::Index>(spec.dyad_count());
  MpleDesign d{Eigen::MatrixXd(rows, static_cast<Eigen::Index>(spec.dim())), Eigen::VectorXd(rows)};
  Eigen::Index r = 0;
  std::vector<double> delta(spec.dim());
  for_each_dyad(spec.n, spec.directed, [&](Node i, Node j) {
    eval.change(g_obs, i, j, delta);
    for (std::size_t k = 0; k < delta.size(); ++k) d.x(r, static_cast<Eigen::Index>(k)) = delta[k];
    d.y[r] = g_obs.has_edge(i, j) ? 1.0 : 0.0;
    ++r;
  });
  return d;
}

namespace detail {

inline double log1pexp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double logistic_loglik(const MpleDesign& d, const ParamVector& theta) {
  const Eigen::VectorXd eta = d.x * theta;
  double ll = 0.0;
  for (Eigen::Index r = 0; r < eta.size(); ++r) ll += d.y[r] * eta[r] - log1pexp(eta[r]);
  return ll;
}

}  // namespace detail

inline MpleResult mple(const ModelSpec& spec, const Graph& g_obs, const MpleOptions& opts = {}) {
  const MpleDesign d = mple_design(spec, g_obs);
  const double ones = d.y.sum();
  if (ones == 0.0 || ones == static_cast<double>(d.y.size()))
    throw NumericalError(std::string("observed graph ") + (ones == 0.0 ? "empty" : "complete") +
                         ": MPLE undefined");

  const auto p = static_cast<Eigen::Index>(spec.dim());
  MpleResult res;
  ParamVector theta = ParamVector::Zero(p);
  double ll = detail::logistic_loglik(d, theta);
  Eigen::MatrixXd info(p, p);

  // Log-likelihood comparisons allow rounding-level slack; near the optimum a
  // Newton step changes the value by less than one ulp.
  auto not_worse = [](double next, double cur) { return next >= cur - 1e-12 * (1.0 + std::abs(cur)); };
  bool polished = false;

  for (std::size_t it = 0;; ++it) {
    const Eigen::VectorXd eta = d.x * theta;
    Eigen::VectorXd prob(eta.size()), w(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
      prob[r] = logistic(eta[r]);
      w[r] = prob[r] * (1.0 - prob[r]);
    }
    const Eigen::VectorXd grad = d.x.transpose() * (d.y - prob);
    info = d.x.transpose() * w.asDiagonal() * d.x;
    res.iterations = it;
    const bool small = grad.norm() <= opts.gradient_tolerance;
    if (small && polished) {
      res.converged = true;
      break;
    }
    if (it == opts.max_iterations) {
      res.message = "no convergence after " + std::to_string(it) + " Newton iterations";
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const double scale = info.diagonal().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-13 * std::max(scale, 1e-300)) {
      res.message = "singular pseudolikelihood Hessian (collinear change statistics or separation)";
      break;
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    double t = 1.0;
    ParamVector next;
    double next_ll = -INFINITY;
    for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
      next = theta + t * step;
      next_ll = detail::logistic_loglik(d, next);
      if (not_worse(next_ll, ll)) break;
    }
    if (!not_worse(next_ll, ll)) {
      if (small) {
        res.converged = true;
        break;
      }
      res.message = "step halving failed to increase the pseudolikelihood";
      break;
    }
    // One Newton step past the gradient tolerance: with quadratic convergence
    // this leaves the coefficients accurate to near machine precision.
    if (small) polished = true;
    theta = next;
    ll = std::max(ll, next_ll);
    res.trace.push_back(next_ll);
    if (theta.cwiseAbs().maxCoeff() > 1e3) {
      res.message = "coefficients diverging (complete or quasi-complete separation)";
      break;
    }
  }

  res.theta_hat = theta;
  res.log_pseudolikelihood = ll;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0)
    res.naive_se = ldlt.solve(Eigen::MatrixXd::Identity(p, p)).diagonal().cwiseSqrt();
  else
    res.naive_se = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  // Under separation Newton drifts along a direction where the fitted
  // probabilities saturate; the gradient vanishes but the curvature does too.
  if (res.converged && !(res.naive_se.array() <= 1e3).all()) {
    res.converged = false;
    res.message = "possible separation: fitted probabilities saturate and standard errors exceed 1e3";
  }
  return res;
}

inline EstimateResult to_estimate(const ModelSpec& spec, const MpleResult& m) {
  EstimateResult r;
  r.method = "mple";
  r.labels = spec.labels();
  r.theta_hat = m.theta_hat;
  r.objective = -m.log_pseudolikelihood;
  r.converged = m.converged;
  r.iterations = m.iterations;
  r.standard_errors = m.naive_se;
  if (!m.message.empty()) r.warnings.push_back(m.message);
  r.warnings.push_back("MPLE standard errors treat dyads as independent and understate uncertainty under dependence");
  return r;
}

}  // namespace nnergm
