#pragma once

// Closed-form moments for the dyad-independent models used as references:
// the Bernoulli (edges-only) model and the directed edges+mutual model.

#include <Eigen/Dense>

#include <cmath>
#include <optional>

#include "nnergm/model_spec.hpp"

namespace nnergm {

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Expected edge count of the edges-only model: D * logistic(theta).
inline double bernoulli_mean_edges(std::size_t dyads, double theta) {
  return static_cast<double>(dyads) * logistic(theta);
}

/// Per-dyad moments of the directed edges+mutual model. A dyad is empty,
/// asymmetric (two states) or mutual, with weights 1, e^a, e^a, e^(2a+b).
struct DyadMoments {
  double p_asym = 0;    // probability of one specific single-edge state
  double p_mutual = 0;
  double mean_edges = 0;
  double mean_mutual = 0;
  Eigen::Matrix2d cov;  // covariance of (edges, mutual) for one dyad
};

inline DyadMoments dyad_moments(double theta_edges, double theta_mutual) {
  const double a = theta_edges, b = theta_mutual;
  // Normalise by the largest log-weight.
  const double m = std::max({0.0, a, 2 * a + b});
  const double w0 = std::exp(-m), w1 = std::exp(a - m), w2 = std::exp(2 * a + b - m);
  const double z = w0 + 2 * w1 + w2;
  DyadMoments r;
  r.p_asym = w1 / z;
  r.p_mutual = w2 / z;
  r.mean_edges = 2 * r.p_asym + 2 * r.p_mutual;
  r.mean_mutual = r.p_mutual;
  const double e2 = 2 * r.p_asym + 4 * r.p_mutual;  // E[edges^2]
  const double em = 2 * r.p_mutual;                 // E[edges * mutual]
  r.cov << e2 - r.mean_edges * r.mean_edges, em - r.mean_edges * r.mean_mutual, em - r.mean_edges * r.mean_mutual,
      r.p_mutual - r.p_mutual * r.p_mutual;
  return r;
}

/// Closed-form E[t] when the spec is edges-only or directed (edges, mutual);
/// nullopt otherwise.
inline std::optional<StatVector> closed_form_mean(const ModelSpec& spec, const ParamVector& theta) {
  if (spec.terms.size() == 1 && spec.terms[0].kind == TermKind::Edges) {
    StatVector out(1);
    out[0] = bernoulli_mean_edges(spec.dyad_count(), theta[0]);
    return out;
  }
  if (spec.directed && spec.terms.size() == 2 && spec.terms[0].kind == TermKind::Edges &&
      spec.terms[1].kind == TermKind::Mutual) {
    const double pairs = static_cast<double>(spec.n * (spec.n - 1) / 2);
    const auto dm = dyad_moments(theta[0], theta[1]);
    StatVector out(2);
    out << pairs * dm.mean_edges, pairs * dm.mean_mutual;
    return out;
  }
  return std::nullopt;
}

}  // namespace nnergm
