#pragma once

// MCMC maximum likelihood by Robbins-Monro stochastic approximation.
//
//   theta_{k+1} = theta_k + gamma_k P^{-1} (t_obs - mean of R draws at theta_k)
//   gamma_k     = gamma0 / (k + 1)^a
//
// t_obs - E_theta[t] is the score of a linear ERGM, so the fixed point is the
// MLE. P is a covariance estimate of the statistics at theta_0. Iterations are
// sequential; only the R draws inside one iteration run in parallel.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nnergm/error.hpp"
#include "nnergm/estimate.hpp"
#include "nnergm/parallel.hpp"
#include "nnergm/rng.hpp"
#include "nnergm/sampler.hpp"

namespace nnergm {

enum class Preconditioner { Full, Diagonal };

struct RobbinsMonroConfig {
  std::size_t R = 100;
  double gamma0 = 1.0;
  double exponent = 0.8;
  std::size_t max_iterations = 1000;
  double tolerance = 1e-3;
  /// Consecutive iterations with max |step| < tolerance needed to stop.
  std::size_t patience = 5;
  /// A quiet iteration also needs |t_obs - mean| <= score_z * sd / sqrt(R) per
  /// statistic, so a slow drift toward a boundary is not taken as convergence.
  double score_z = 3.0;
  /// Cap on |step| per coordinate.
  double max_step = 1.0;
  Preconditioner preconditioner = Preconditioner::Full;
  /// The R draws come from this many independent chains.
  std::size_t chains = 4;
  std::size_t parallelism = 1;
  SamplerConfig sampler;

  void validate() const {
    if (R < 1) throw InvalidArgument("Robbins-Monro needs R >= 1");
    if (!(exponent > 0.5 && exponent <= 1.0)) throw InvalidArgument("step exponent must lie in (0.5, 1]");
    if (!(gamma0 > 0.0)) throw InvalidArgument("gamma0 must be positive");
    if (chains < 1) throw InvalidArgument("need at least one chain");
    if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  }
};

namespace detail {

struct IterationDraws {
  std::vector<StatVector> stats;
  bool all_empty = true;
  bool all_complete = true;
};

inline IterationDraws draw_iteration(const ModelSpec& spec, const ParamVector& theta, const RobbinsMonroConfig& cfg,
                                     std::uint64_t seed, std::size_t iteration) {
  const std::size_t chains = std::min(cfg.chains, cfg.R);
  std::vector<std::vector<StatVector>> per_chain(chains);
  std::vector<char> empty(chains, 1), complete(chains, 1);
  parallel_for(chains, effective_parallelism(cfg.parallelism), [&](std::size_t c) {
    const std::size_t m = cfg.R / chains + (c < cfg.R % chains ? 1 : 0);
    per_chain[c].reserve(m);
    run_chain(spec, theta, cfg.sampler, m, task_seed(seed, iteration * chains + c),
              [&](const Graph& g, const StatVector& t) {
                per_chain[c].push_back(t);
                if (g.edge_count() != 0) empty[c] = 0;
                if (g.edge_count() != g.dyad_count()) complete[c] = 0;
              });
  });
  IterationDraws out;
  for (std::size_t c = 0; c < chains; ++c) {
    out.stats.insert(out.stats.end(), per_chain[c].begin(), per_chain[c].end());
    out.all_empty = out.all_empty && empty[c];
    out.all_complete = out.all_complete && complete[c];
  }
  return out;
}

}  // namespace detail

inline EstimateResult mcmc_mle(const ModelSpec& spec, const StatVector& t_obs, const ParamVector& theta0,
                               const RobbinsMonroConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  detail::check_theta(spec, theta0);
  const auto p = static_cast<Eigen::Index>(spec.dim());
  if (t_obs.size() != p) throw InvalidArgument("observed statistics do not match the spec dimension");

  EstimateResult res;
  res.method = "mcmc-mle";
  res.labels = spec.labels();
  res.converged = false;

  ParamVector theta = theta0;
  res.trajectory.push_back(theta);
  Eigen::MatrixXd precond;  // solves P x = score
  Eigen::LDLT<Eigen::MatrixXd> full;
  bool use_full = false;
  std::size_t quiet = 0;
  std::size_t pinned = 0;
  detail::IterationDraws draws;
  StatVector mean;

  for (std::size_t k = 0; k < cfg.max_iterations; ++k) {
    draws = detail::draw_iteration(spec, theta, cfg, seed, k);
    mean = sample_mean(draws.stats);

    if (draws.all_empty || draws.all_complete) {
      if (++pinned >= 3)
        throw NumericalError(std::string("degenerate region: every simulated network was ") +
                             (draws.all_empty ? "empty" : "complete") + " for 3 consecutive iterations at theta = [" +
                             [&] {
                               std::string s;
                               for (Eigen::Index c = 0; c < p; ++c) s += (c ? ", " : "") + text::format_double(theta[c]);
                               return s;
                             }() +
                             "]");
    } else {
      pinned = 0;
    }

    if (k == 0) {
      Eigen::MatrixXd cov = draws.stats.size() >= 2 ? sample_covariance(draws.stats) : Eigen::MatrixXd::Identity(p, p);
      Eigen::VectorXd diag = cov.diagonal().cwiseMax(1e-2);
      precond = diag.asDiagonal();
      if (cfg.preconditioner == Preconditioner::Full) {
        // Small ridge keeps the solve stable when statistics are nearly collinear.
        cov.diagonal() = diag * (1.0 + 1e-6);
        full.compute(cov);
        const Eigen::VectorXd dd = full.vectorD();
        use_full = full.info() == Eigen::Success && full.isPositive() &&
                   dd.minCoeff() > 1e-10 * dd.cwiseAbs().maxCoeff();
        if (!use_full) res.warnings.push_back("statistic covariance at theta0 is singular; using its diagonal");
      }
    }

    const StatVector score = t_obs - mean;
    Eigen::VectorXd direction = use_full ? Eigen::VectorXd(full.solve(score))
                                         : Eigen::VectorXd(score.cwiseQuotient(precond.diagonal()));
    const double gamma = cfg.gamma0 / std::pow(static_cast<double>(k + 1), cfg.exponent);
    Eigen::VectorXd step = (gamma * direction).cwiseMax(-cfg.max_step).cwiseMin(cfg.max_step);
    if (!step.allFinite()) throw NumericalError("Robbins-Monro step is not finite");
    theta += step;
    res.trajectory.push_back(theta);
    res.iterations = k + 1;

    bool score_ok = true;
    if (draws.stats.size() >= 2) {
      const StatVector sd = sample_sd(draws.stats);
      const double root_r = std::sqrt(static_cast<double>(draws.stats.size()));
      for (Eigen::Index c = 0; c < p; ++c)
        if (std::abs(score[c]) > cfg.score_z * sd[c] / root_r) score_ok = false;
    }
    if (step.cwiseAbs().maxCoeff() < cfg.tolerance && score_ok) {
      if (++quiet >= cfg.patience) {
        res.converged = true;
        break;
      }
    } else {
      quiet = 0;
    }
  }

  res.theta_hat = theta;
  const StatVector score = t_obs - mean;
  res.objective = score.cwiseQuotient(precond.diagonal().cwiseSqrt()).squaredNorm();
  res.starts.push_back({theta0, theta, res.objective});

  if (!res.converged) {
    res.warnings.push_back("no convergence after " + std::to_string(res.iterations) + " iterations");
    // An observed statistic at or beyond the extreme of what the model
    // produces means the likelihood keeps increasing toward infinity.
    for (Eigen::Index c = 0; c < p; ++c) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& s : draws.stats) {
        lo = std::min(lo, s[c]);
        hi = std::max(hi, s[c]);
      }
      if (t_obs[c] >= hi || t_obs[c] <= lo) {
        res.boundary_flag = true;
        res.warnings.push_back("observed '" + res.labels[static_cast<std::size_t>(c)] +
                               "' lies on the boundary of the simulated range; the MLE may not exist");
      }
    }
  }
  return res;
}

}  // namespace nnergm
