#pragma once

// Estimation on top of a trained surrogate: inversion of f(theta) = t_obs,
// simulation-based standard errors, goodness-of-fit and degeneracy maps.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nnergm/dataset.hpp"
#include "nnergm/error.hpp"
#include "nnergm/estimate.hpp"
#include "nnergm/parallel.hpp"
#include "nnergm/sampler.hpp"
#include "nnergm/statistics.hpp"
#include "nnergm/surrogate.hpp"
#include "nnergm/text.hpp"

namespace nnergm {

// ---------------------------------------------------------------------------
// Inversion

struct InvertOptions {
  /// Measure the misfit in standardized output units (per-statistic scale
  /// from the training data). false uses the raw Euclidean norm.
  bool standardized = true;
  std::size_t max_iterations = 500;
  std::size_t parallelism = 1;
  /// Objectives within this of the best, at theta distance above tie_distance,
  /// raise the identification warning.
  double tie_objective = 1e-4;
  double tie_distance = 0.1;
  double boundary_tolerance = 1e-6;
};

inline std::vector<std::string> model_labels(const SurrogateModel& model) {
  if (model.spec) return model.spec->labels();
  std::vector<std::string> out;
  for (std::size_t k = 0; k < model.input_dim(); ++k) out.push_back("theta_" + std::to_string(k));
  return out;
}

namespace detail {

struct Misfit {
  const SurrogateModel& model;
  Eigen::VectorXd target;  // in the units of the residual
  bool standardized;

  Eigen::VectorXd residual(const ParamVector& theta) const {
    const Eigen::VectorXd z = model.forward_standardized(model.normalize_input(theta));
    return (standardized ? z : model.denormalize_output(z)) - target;
  }
  Eigen::MatrixXd jacobian(const ParamVector& theta) const {
    return standardized ? standardized_jacobian(model, theta) : input_jacobian(model, theta);
  }
};

// Projected Levenberg-Marquardt: Gauss-Newton steps damped toward the
// gradient direction, projected onto the box, accepted only on decrease.
// With heavy damping the step is a short projected gradient step, so the
// damping loop doubles as a backtracking line search.
inline StartRecord local_search(const Misfit& f, const PriorBox& box, ParamVector theta, std::size_t max_iter,
                                bool& converged, std::size_t& iterations) {
  StartRecord rec;
  rec.start = theta;
  Eigen::VectorXd r = f.residual(theta);
  double obj = r.squaredNorm();
  double lambda = 1e-3;
  converged = false;
  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    if (obj <= 1e-28) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd J = f.jacobian(theta);
    const Eigen::VectorXd grad = J.transpose() * r;
    // Stationarity of the box-constrained problem: the projected gradient.
    const ParamVector pg = box.project(theta - grad) - theta;
    if (pg.norm() <= 1e-14 * std::max(1.0, obj)) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const double diag_scale = std::max(jtj.diagonal().maxCoeff(), 1e-12);
    bool improved = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd a = jtj;
      a.diagonal().array() += lambda * diag_scale;
      const ParamVector step = a.ldlt().solve(-grad);
      const ParamVector cand = box.project(theta + step);
      if ((cand - theta).norm() <= 1e-15 * std::max(1.0, theta.norm())) break;
      const Eigen::VectorXd rc = f.residual(cand);
      const double oc = rc.squaredNorm();
      if (oc < obj) {
        const double gain = obj - oc;
        theta = cand;
        r = rc;
        obj = oc;
        lambda = std::max(lambda / 10.0, 1e-12);
        improved = true;
        if (gain <= 1e-15 * obj) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      // No decrease along any damped direction: numerically stationary.
      converged = true;
      break;
    }
    if (converged) break;
  }
  iterations = it;
  rec.converged = theta;
  rec.objective = obj;
  return rec;
}

}  // namespace detail

/// theta_hat = argmin over the box of |f(theta) - t_obs|^2 (standardized by
/// default), best of n_starts seeded local searches.
inline EstimateResult invert(const SurrogateModel& model, const StatVector& t_obs, const PriorBox& box,
                             std::size_t n_starts, std::uint64_t seed, const InvertOptions& opts = {}) {
  if (static_cast<std::size_t>(t_obs.size()) != model.output_dim())
    throw InvalidArgument("observed statistics have " + std::to_string(t_obs.size()) + " entries, model predicts " +
                          std::to_string(model.output_dim()));
  box.validate();
  if (box.dim() != model.input_dim())
    throw InvalidArgument("box has " + std::to_string(box.dim()) + " coordinates, model takes " +
                          std::to_string(model.input_dim()));
  if (n_starts < 1) throw InvalidArgument("number of starts must be >= 1");
  if (!t_obs.allFinite()) throw InvalidArgument("observed statistics must be finite");

  const detail::Misfit f{model, opts.standardized ? model.normalize_output(t_obs) : Eigen::VectorXd(t_obs),
                         opts.standardized};
  Engine eng = make_engine(seed);
  std::vector<ParamVector> starts(n_starts);
  for (auto& s : starts) {
    s.resize(box.lower.size());
    for (Eigen::Index k = 0; k < s.size(); ++k) s[k] = uniform(eng, box.lower[k], box.upper[k]);
  }

  EstimateResult res;
  res.method = "surrogate-inversion";
  res.labels = model_labels(model);
  res.starts.resize(n_starts);
  std::vector<char> ok(n_starts, 0);
  std::vector<std::size_t> iters(n_starts, 0);
  parallel_for(n_starts, effective_parallelism(opts.parallelism), [&](std::size_t k) {
    bool conv = false;
    res.starts[k] = detail::local_search(f, box, starts[k], opts.max_iterations, conv, iters[k]);
    ok[k] = conv;
  });

  std::size_t best = 0;
  for (std::size_t k = 1; k < n_starts; ++k)
    if (res.starts[k].objective < res.starts[best].objective) best = k;
  res.theta_hat = res.starts[best].converged;
  res.objective = res.starts[best].objective;
  res.converged = ok[best] != 0;
  res.iterations = iters[best];

  for (Eigen::Index k = 0; k < res.theta_hat.size(); ++k)
    if (res.theta_hat[k] - box.lower[k] <= opts.boundary_tolerance ||
        box.upper[k] - res.theta_hat[k] <= opts.boundary_tolerance)
      res.boundary_flag = true;
  for (const auto& s : res.starts)
    if (s.objective - res.objective <= opts.tie_objective && (s.converged - res.theta_hat).norm() > opts.tie_distance)
      res.near_tie = true;

  if (res.boundary_flag)
    res.warnings.push_back("estimate lies on the box boundary; the observed statistics may be outside the range the "
                           "surrogate attains on the box");
  if (res.near_tie)
    res.warnings.push_back("distinct starts reach near-equal objectives; the parameter may not be identified");
  if (!res.converged) res.warnings.push_back("best local search hit the iteration limit");
  if (model.training_box && !(model.training_box->contains(box.lower) && model.training_box->contains(box.upper)))
    res.warnings.push_back("search box extends beyond the training box; the surrogate extrapolates there");
  return res;
}

// ---------------------------------------------------------------------------
// Standard errors

struct StandardErrorReport {
  Eigen::VectorXd se;
  /// Sample covariance of t(g) at theta_hat, the Fisher information.
  Eigen::MatrixXd covariance;
  double condition_number = 0.0;
  std::vector<std::string> warnings;
};

inline StandardErrorReport standard_errors(const ModelSpec& spec, const ParamVector& theta_hat,
                                           const SamplerConfig& sampler, std::size_t M, std::uint64_t seed) {
  if (M < 100) throw InvalidArgument("standard errors need M >= 100 simulated networks, got " + std::to_string(M));
  const auto samples = simulate_stats(spec, theta_hat, sampler, M, seed);
  StandardErrorReport rep;
  rep.covariance = sample_covariance(samples);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rep.covariance);
  const auto& ev = eig.eigenvalues();
  const double top = ev.maxCoeff();
  const auto labels = spec.labels();
  if (!(top > 0.0) || ev.minCoeff() <= 1e-12 * top) {
    std::vector<std::string> involved;
    if (!(top > 0.0)) {
      involved = labels;
    } else {
      const Eigen::VectorXd null = eig.eigenvectors().col(0);
      for (Eigen::Index k = 0; k < null.size(); ++k)
        if (std::abs(null[k]) > 1e-3) involved.push_back(labels[static_cast<std::size_t>(k)]);
    }
    std::string names;
    for (const auto& s : involved) names += (names.empty() ? "" : ", ") + s;
    throw NumericalError("statistic covariance is singular at theta_hat; collinear statistics: " + names);
  }
  rep.condition_number = top / ev.minCoeff();
  if (rep.condition_number > 1e10)
    rep.warnings.push_back("statistic covariance is ill-conditioned (condition number " +
                           text::format_double(rep.condition_number) + ")");
  rep.se = rep.covariance.inverse().diagonal().cwiseSqrt();
  return rep;
}

// ---------------------------------------------------------------------------
// Goodness of fit

struct GofRow {
  std::string label;
  bool fitted = true;
  double observed = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double z = std::numeric_limits<double>::quiet_NaN();
  /// sd is zero or undefined, so z is not reported.
  bool degenerate = false;
};

struct GofReport {
  std::vector<GofRow> rows;
  ParamVector theta;
  std::size_t M = 0;
  std::uint64_t seed = 0;
};

inline GofReport goodness_of_fit(const ModelSpec& spec, const ParamVector& theta_hat, const Graph& g_obs,
                                 const std::vector<StatTerm>& extra_terms, const SamplerConfig& sampler,
                                 std::size_t M, std::uint64_t seed) {
  const ModelSpec full = with_terms(spec, extra_terms);  // validates the extras against the spec
  ModelSpec extra = spec;
  extra.terms = extra_terms;
  const StatEvaluator fitted_eval(spec);
  fitted_eval.check_graph(g_obs);
  std::optional<StatEvaluator> extra_eval;
  if (!extra_terms.empty()) extra_eval.emplace(extra);

  const auto p = static_cast<Eigen::Index>(spec.dim());
  const auto d = static_cast<Eigen::Index>(full.dim());
  StatVector observed(d);
  observed.head(p) = fitted_eval.compute(g_obs);
  if (!extra_terms.empty()) observed.tail(d - p) = extra_eval->compute(g_obs);

  std::vector<StatVector> samples;
  samples.reserve(M);
  run_chain(spec, theta_hat, sampler, M, seed, [&](const Graph& g, const StatVector& t) {
    StatVector row(d);
    row.head(p) = t;
    if (!extra_terms.empty()) row.tail(d - p) = extra_eval->compute(g);
    samples.push_back(std::move(row));
  });

  GofReport rep;
  rep.theta = theta_hat;
  rep.M = M;
  rep.seed = seed;
  const StatVector mean = sample_mean(samples);
  StatVector sd = StatVector::Constant(d, std::numeric_limits<double>::quiet_NaN());
  if (M >= 2) sd = sample_sd(samples);
  const auto labels = full.labels();
  for (Eigen::Index k = 0; k < d; ++k) {
    GofRow row;
    row.label = labels[static_cast<std::size_t>(k)];
    row.fitted = k < p;
    row.observed = observed[k];
    row.mean = mean[k];
    row.sd = sd[k];
    if (std::isfinite(sd[k]) && sd[k] > 0.0) row.z = (observed[k] - mean[k]) / sd[k];
    else row.degenerate = true;
    rep.rows.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Degeneracy maps

enum class DensityFlag { NearEmpty, Interior, NearComplete };

inline const char* to_string(DensityFlag f) {
  switch (f) {
    case DensityFlag::NearEmpty: return "near-empty";
    case DensityFlag::NearComplete: return "near-complete";
    default: return "interior";
  }
}

struct DegeneracyMap {
  std::vector<std::string> labels;
  std::vector<ParamVector> points;
  std::vector<double> density;
  std::vector<DensityFlag> flags;
  double lower_threshold = 0.02;
  double upper_threshold = 0.98;
  std::size_t grid_points_per_dim = 0;
};

inline constexpr std::size_t kMaxScanPoints = 1000000;

inline DegeneracyMap degeneracy_scan(const SurrogateModel& model, const PriorBox& box, std::size_t grid_points_per_dim,
                                     std::pair<double, double> thresholds = {0.02, 0.98}) {
  if (!model.spec) throw InvalidArgument("degeneracy scan needs a model trained from a spec with an edges term");
  const ModelSpec& spec = *model.spec;
  const auto edges = std::find_if(spec.terms.begin(), spec.terms.end(),
                                  [](const StatTerm& t) { return t.kind == TermKind::Edges; });
  if (edges == spec.terms.end()) throw InvalidArgument("degeneracy scan needs an edges term in the spec");
  const auto edge_index = static_cast<Eigen::Index>(edges - spec.terms.begin());
  if (edge_index >= static_cast<Eigen::Index>(model.output_dim()))
    throw InvalidArgument("model does not predict the edges statistic");
  box.validate();
  if (box.dim() != model.input_dim())
    throw InvalidArgument("box has " + std::to_string(box.dim()) + " coordinates, model takes " +
                          std::to_string(model.input_dim()));
  const auto [lo, hi] = thresholds;
  if (!(lo >= 0.0 && lo <= hi && hi <= 1.0)) throw InvalidArgument("thresholds need 0 <= lo <= hi <= 1");
  if (grid_points_per_dim < 1) throw InvalidArgument("grid needs at least one point per dimension");
  double total = 1.0;
  for (std::size_t k = 0; k < box.dim(); ++k) total *= static_cast<double>(grid_points_per_dim);
  if (total > static_cast<double>(kMaxScanPoints))
    throw InvalidArgument("grid has " + text::format_double(total) + " points, limit is 1000000");
  if (model.training_box && !(model.training_box->contains(box.lower) && model.training_box->contains(box.upper)))
    warn("scan box extends beyond the training box; the surrogate extrapolates there");

  DegeneracyMap map;
  map.labels = model_labels(model);
  map.lower_threshold = lo;
  map.upper_threshold = hi;
  map.grid_points_per_dim = grid_points_per_dim;
  const auto count = static_cast<std::size_t>(total);
  const double dyads = static_cast<double>(spec.dyad_count());
  const auto d = static_cast<Eigen::Index>(box.dim());
  std::vector<std::size_t> idx(box.dim(), 0);
  for (std::size_t p = 0; p < count; ++p) {
    ParamVector theta(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto i = idx[static_cast<std::size_t>(k)];
      theta[k] = grid_points_per_dim == 1
                     ? 0.5 * (box.lower[k] + box.upper[k])
                     : box.lower[k] + (box.upper[k] - box.lower[k]) * static_cast<double>(i) /
                                          static_cast<double>(grid_points_per_dim - 1);
    }
    const StatVector t = model.denormalize_output(model.forward_standardized(model.normalize_input(theta)));
    const double dens = std::clamp(t[edge_index] / dyads, 0.0, 1.0);
    map.points.push_back(theta);
    map.density.push_back(dens);
    map.flags.push_back(dens < lo ? DensityFlag::NearEmpty : dens > hi ? DensityFlag::NearComplete : DensityFlag::Interior);
    // last coordinate varies fastest
    for (auto k = box.dim(); k-- > 0;) {
      if (++idx[k] < grid_points_per_dim) break;
      idx[k] = 0;
    }
  }
  return map;
}

// ---------------------------------------------------------------------------
// Reports

namespace detail {
inline nlohmann::json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}
inline nlohmann::json nums(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}
inline std::string cell(double v) { return std::isfinite(v) ? text::format_double(v) : "NA"; }
}  // namespace detail

inline nlohmann::json estimate_to_json(const EstimateResult& r) {
  nlohmann::json j;
  j["method"] = r.method;
  j["labels"] = r.labels;
  j["theta_hat"] = detail::nums(r.theta_hat);
  j["objective"] = detail::num(r.objective);
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["boundary_flag"] = r.boundary_flag;
  j["near_tie"] = r.near_tie;
  j["standard_errors"] = r.standard_errors ? detail::nums(*r.standard_errors) : nlohmann::json(nullptr);
  nlohmann::json starts = nlohmann::json::array();
  for (const auto& s : r.starts)
    starts.push_back({{"start", detail::nums(s.start)}, {"converged", detail::nums(s.converged)}, {"objective", detail::num(s.objective)}});
  j["starts"] = starts;
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& t : r.trajectory) traj.push_back(detail::nums(t));
  if (!r.trajectory.empty()) j["trajectory"] = traj;
  j["warnings"] = r.warnings;
  return j;
}

/// One row per parameter.
inline std::string estimate_to_csv(const EstimateResult& r) {
  std::string out = "term,theta_hat,se\n";
  for (Eigen::Index k = 0; k < r.theta_hat.size(); ++k) {
    out += r.labels.at(static_cast<std::size_t>(k)) + ',' + detail::cell(r.theta_hat[k]) + ',' +
           (r.standard_errors ? detail::cell((*r.standard_errors)[k]) : std::string("NA")) + '\n';
  }
  return out;
}

inline nlohmann::json gof_to_json(const GofReport& g) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : g.rows)
    rows.push_back({{"term", r.label},
                    {"role", r.fitted ? "fitted" : "extra"},
                    {"observed", detail::num(r.observed)},
                    {"sim_mean", detail::num(r.mean)},
                    {"sim_sd", detail::num(r.sd)},
                    {"z", detail::num(r.z)},
                    {"degenerate", r.degenerate}});
  return {{"theta", detail::nums(g.theta)}, {"M", g.M}, {"seed", g.seed}, {"statistics", rows}};
}

inline std::string gof_to_csv(const GofReport& g) {
  std::string out = "term,role,observed,sim_mean,sim_sd,z,degenerate\n";
  for (const auto& r : g.rows)
    out += r.label + ',' + (r.fitted ? "fitted" : "extra") + ',' + detail::cell(r.observed) + ',' +
           detail::cell(r.mean) + ',' + detail::cell(r.sd) + ',' + detail::cell(r.z) + ',' +
           (r.degenerate ? "1" : "0") + '\n';
  return out;
}

inline std::string scan_to_csv(const DegeneracyMap& m) {
  std::string out;
  for (const auto& l : m.labels) out += "theta_" + l + ',';
  out += "density,flag\n";
  for (std::size_t p = 0; p < m.points.size(); ++p) {
    for (double v : m.points[p]) out += text::format_double(v) + ',';
    out += text::format_double(m.density[p]) + ',' + to_string(m.flags[p]) + '\n';
  }
  return out;
}

inline nlohmann::json scan_to_json(const DegeneracyMap& m) {
  std::size_t empty = 0, complete = 0;
  for (auto f : m.flags) {
    empty += f == DensityFlag::NearEmpty;
    complete += f == DensityFlag::NearComplete;
  }
  return {{"labels", m.labels},
          {"grid_points_per_dim", m.grid_points_per_dim},
          {"thresholds", {m.lower_threshold, m.upper_threshold}},
          {"points", m.points.size()},
          {"near_empty", empty},
          {"near_complete", complete}};
}

}  // namespace nnergm
