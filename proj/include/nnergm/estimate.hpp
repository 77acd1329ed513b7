#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "nnergm/model_spec.hpp"

namespace nnergm {

struct StartRecord {
  ParamVector start;
  ParamVector converged;
  double objective = 0.0;
};

/// Outcome of any estimator. theta_hat is the best of the recorded starts.
struct EstimateResult {
  std::string method;  // "surrogate-inversion", "mcmc-mle", "mple"
  std::vector<std::string> labels;
  ParamVector theta_hat;
  double objective = 0.0;
  std::vector<StartRecord> starts;
  /// Surrogate inversion: theta_hat touches the box. MCMC-MLE: the observed
  /// statistics sit on the edge of the simulated range (boundary divergence).
  bool boundary_flag = false;
  /// Distinct starts reached near-equal objectives (identification warning).
  bool near_tie = false;
  bool converged = true;
  std::size_t iterations = 0;
  std::optional<Eigen::VectorXd> standard_errors;
  std::vector<std::string> warnings;
  /// MCMC-MLE parameter trajectory, one entry per iteration.
  std::vector<ParamVector> trajectory;
};

}  // namespace nnergm
