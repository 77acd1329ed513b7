#pragma once

// Metropolis-Hastings simulation from pi(g; theta) ~ exp(theta' t(g)), plus
// exact expectations by enumeration for tiny graphs.
//
// The proposal picks one orderable dyad uniformly at random and proposes to
// toggle it. Statistics are tracked incrementally with change statistics.

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nnergm/error.hpp"
#include "nnergm/graph.hpp"
#include "nnergm/model_spec.hpp"
#include "nnergm/rng.hpp"
#include "nnergm/statistics.hpp"

namespace nnergm {

struct InitEmpty {};
struct InitRandom {
  double p = 0.5;
};
struct InitGiven {
  Graph graph;
};
using InitState = std::variant<InitEmpty, InitRandom, InitGiven>;

struct SamplerConfig {
  /// One sweep = one proposal per orderable dyad.
  std::size_t burn_in_sweeps = 50;
  std::size_t thinning_sweeps = 5;
  InitState init = InitEmpty{};
  /// Recompute t(g) at chain end and compare with the tracked value. Always on
  /// in debug builds.
  bool audit = false;
};

/// Exponents beyond this are treated as certain accept / reject.
inline constexpr double kExponentClamp = 700.0;

struct ChainDiagnostics {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  /// Proposals whose acceptance exponent hit the +-700 guard.
  std::uint64_t clamped = 0;
};

namespace detail {

inline void check_theta(const ModelSpec& spec, const ParamVector& theta) {
  if (static_cast<std::size_t>(theta.size()) != spec.dim())
    throw InvalidArgument("theta has " + std::to_string(theta.size()) + " entries, spec has " +
                          std::to_string(spec.dim()) + " terms");
  if (!theta.allFinite()) throw InvalidArgument("theta must be finite");
}

inline Graph initial_graph(const ModelSpec& spec, const SamplerConfig& config, Engine& eng) {
  return std::visit(
      [&](const auto& init) -> Graph {
        using T = std::decay_t<decltype(init)>;
        if constexpr (std::is_same_v<T, InitEmpty>) {
          return Graph(spec.n, spec.directed);
        } else if constexpr (std::is_same_v<T, InitRandom>) {
          if (!(init.p >= 0.0 && init.p <= 1.0)) throw InvalidArgument("initial density must lie in [0, 1]");
          Graph g(spec.n, spec.directed);
          for_each_dyad(spec.n, spec.directed, [&](Node i, Node j) {
            if (bernoulli(eng, init.p)) g.toggle_unchecked(i, j);
          });
          return g;
        } else {
          if (init.graph.n() != spec.n || init.graph.directed() != spec.directed)
            throw InvalidArgument("initial graph does not match the spec");
          return init.graph;
        }
      },
      config.init);
}

}  // namespace detail

/// Runs one chain and calls on_sample(graph, stats) for each of the M retained
/// states. Deterministic in (spec, theta, config, M, seed).
template <typename OnSample>
ChainDiagnostics run_chain(const ModelSpec& spec, const ParamVector& theta, const SamplerConfig& config,
                           std::size_t M, std::uint64_t seed, OnSample&& on_sample) {
  detail::check_theta(spec, theta);
  if (M == 0) throw InvalidArgument("sample count M must be >= 1");
  if (config.thinning_sweeps == 0) throw InvalidArgument("thinning must be >= 1 sweep");

  const StatEvaluator eval(spec);
  Engine eng = make_engine(seed);
  Graph g = detail::initial_graph(spec, config, eng);

  std::vector<std::pair<Node, Node>> dyads;
  dyads.reserve(spec.dyad_count());
  for_each_dyad(spec.n, spec.directed, [&](Node i, Node j) { dyads.emplace_back(i, j); });

  StatVector t = eval.compute(g);
  ChainDiagnostics diag;
  const std::size_t d = eval.dim();
  std::vector<double> delta(d);

  auto step = [&] {
    const auto [i, j] = dyads[uniform_index(eng, dyads.size())];
    eval.change(g, i, j, delta);
    double e = 0.0;
    for (std::size_t k = 0; k < d; ++k) e += theta[static_cast<Eigen::Index>(k)] * delta[k];
    const bool present = g.has_edge(i, j);
    if (present) e = -e;
    ++diag.proposals;
    bool accept;
    if (std::isnan(e)) throw NumericalError("acceptance exponent is NaN");
    if (e > kExponentClamp) {
      ++diag.clamped;
      accept = true;
    } else if (e < -kExponentClamp) {
      ++diag.clamped;
      accept = false;
    } else {
      accept = e >= 0.0 || uniform01(eng) < std::exp(e);
    }
    if (!accept) return;
    ++diag.accepted;
    g.toggle_unchecked(i, j);
    const double sign = present ? -1.0 : 1.0;
    for (std::size_t k = 0; k < d; ++k) t[static_cast<Eigen::Index>(k)] += sign * delta[k];
  };

  const std::size_t sweep = dyads.size();
  if (sweep > 0) {
    for (std::size_t s = 0; s < config.burn_in_sweeps * sweep; ++s) step();
  }
  for (std::size_t m = 0; m < M; ++m) {
    if (sweep > 0)
      for (std::size_t s = 0; s < config.thinning_sweeps * sweep; ++s) step();
    on_sample(std::as_const(g), std::as_const(t));
  }

  bool audit = config.audit;
#ifndef NDEBUG
  audit = true;
#endif
  if (audit) {
    const StatVector fresh = eval.compute(g);
    for (std::size_t k = 0; k < d; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const bool exact = spec.terms[k].integer_valued();
      const double tol = exact ? 0.0 : 1e-7 * std::max(1.0, std::abs(fresh[kk]));
      if (std::abs(fresh[kk] - t[kk]) > tol)
        throw NumericalError("statistic audit failed for term '" + spec.terms[k].label() + "': tracked " +
                             text::format_double(t[kk]) + ", recomputed " + text::format_double(fresh[kk]));
    }
  }
  return diag;
}

/// M statistic vectors from one thinned chain.
inline std::vector<StatVector> simulate_stats(const ModelSpec& spec, const ParamVector& theta,
                                              const SamplerConfig& config, std::size_t M, std::uint64_t seed,
                                              ChainDiagnostics* diagnostics = nullptr) {
  std::vector<StatVector> out;
  out.reserve(M);
  auto diag = run_chain(spec, theta, config, M, seed, [&](const Graph&, const StatVector& t) { out.push_back(t); });
  if (diagnostics) *diagnostics = diag;
  return out;
}

inline StatVector sample_mean(std::span<const StatVector> samples) {
  if (samples.empty()) throw InvalidArgument("no samples");
  StatVector mean = StatVector::Zero(samples.front().size());
  for (const auto& s : samples) mean += s;
  return mean / static_cast<double>(samples.size());
}

/// Unbiased sample covariance (divisor M-1). Requires M >= 2.
inline Eigen::MatrixXd sample_covariance(std::span<const StatVector> samples) {
  if (samples.size() < 2) throw InvalidArgument("covariance needs at least two samples");
  const StatVector mean = sample_mean(samples);
  const auto d = mean.size();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& s : samples) {
    const StatVector c = s - mean;
    cov.noalias() += c * c.transpose();
  }
  return cov / static_cast<double>(samples.size() - 1);
}

inline StatVector sample_sd(std::span<const StatVector> samples) {
  return sample_covariance(samples).diagonal().cwiseSqrt();
}

inline StatVector mean_stats(const ModelSpec& spec, const ParamVector& theta, const SamplerConfig& config,
                             std::size_t M, std::uint64_t seed) {
  StatVector sum;
  run_chain(spec, theta, config, M, seed, [&](const Graph&, const StatVector& t) {
    if (sum.size() == 0) sum = t;
    else sum += t;
  });
  return sum / static_cast<double>(M);
}

// ---------------------------------------------------------------------------
// Exact enumeration

inline constexpr std::size_t kMaxEnumeratedDyads = 20;

/// E_theta[t(g)] by summing over every graph on spec.n nodes.
inline StatVector exact_mean_stats(const ModelSpec& spec, const ParamVector& theta) {
  detail::check_theta(spec, theta);
  const std::size_t D = spec.dyad_count();
  if (D > kMaxEnumeratedDyads)
    throw InvalidArgument("exact enumeration supports at most " + std::to_string(kMaxEnumeratedDyads) +
                          " possible edges, spec has " + std::to_string(D));
  const StatEvaluator eval(spec);
  std::vector<std::pair<Node, Node>> dyads;
  for_each_dyad(spec.n, spec.directed, [&](Node i, Node j) { dyads.emplace_back(i, j); });

  const std::size_t count = std::size_t{1} << D;
  const auto d = static_cast<Eigen::Index>(spec.dim());
  Eigen::MatrixXd stats(d, static_cast<Eigen::Index>(count));
  std::vector<double> q(count);
  Graph g(spec.n, spec.directed);
  // Gray-code walk: graph k differs from graph k-1 in one dyad.
  for (std::size_t k = 0; k < count; ++k) {
    if (k > 0) {
      const auto bit = static_cast<std::size_t>(std::countr_zero(k));
      g.toggle_unchecked(dyads[bit].first, dyads[bit].second);
    }
    const StatVector t = eval.compute(g);
    stats.col(static_cast<Eigen::Index>(k)) = t;
    q[k] = theta.dot(t);
  }
  const double qmax = *std::max_element(q.begin(), q.end());
  long double z = 0.0L;
  std::vector<long double> acc(static_cast<std::size_t>(d), 0.0L);
  for (std::size_t k = 0; k < count; ++k) {
    const long double w = std::exp(static_cast<long double>(q[k] - qmax));
    z += w;
    for (Eigen::Index c = 0; c < d; ++c)
      acc[static_cast<std::size_t>(c)] += w * static_cast<long double>(stats(c, static_cast<Eigen::Index>(k)));
  }
  StatVector mean(d);
  for (Eigen::Index c = 0; c < d; ++c) mean[c] = static_cast<double>(acc[static_cast<std::size_t>(c)] / z);
  return mean;
}

}  // namespace nnergm
