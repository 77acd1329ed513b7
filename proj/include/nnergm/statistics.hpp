#pragma once

// Sufficient statistics t(g) and change statistics.
//
// Change statistics follow the convention
//     delta_ij(g) = t(g with (i,j) present) - t(g with (i,j) absent),
// with every other indicator held fixed, so the value does not depend on the
// current state of (i,j).
//
// GWESP is the displayed form sum over edges of 1 - (1 - alpha)^s_ij, where
// s_ij counts the shared partners of i and j. It differs from the
// exponentially weighted edgewise-shared-partner statistic used by most ERGM
// software; alpha is a fixed hyperparameter.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nnergm/graph.hpp"
#include "nnergm/model_spec.hpp"

namespace nnergm {

/// A ModelSpec prepared for repeated evaluation. Holds pointers into the spec,
/// which must outlive it.
class StatEvaluator {
 public:
  explicit StatEvaluator(const ModelSpec& spec) : spec_(&spec) {
    spec.validate();
    for (const auto& t : spec.terms) {
      Compiled c{t.kind, t.decay, 1.0 - t.decay, nullptr, nullptr};
      if (t.kind == TermKind::NodeMatch) c.codes = spec.node_attributes.at(t.ref).codes.data();
      if (t.kind == TermKind::DyadCov) c.cov = spec.dyad_covariates.at(t.ref).values.data();
      terms_.push_back(c);
    }
  }

  const ModelSpec& spec() const noexcept { return *spec_; }
  std::size_t dim() const noexcept { return terms_.size(); }

  void check_graph(const Graph& g) const {
    if (g.n() != spec_->n || g.directed() != spec_->directed)
      throw InvalidArgument("graph (n=" + std::to_string(g.n()) + ", directed=" + std::to_string(g.directed()) +
                            ") does not match spec (n=" + std::to_string(spec_->n) +
                            ", directed=" + std::to_string(spec_->directed) + ")");
  }

  /// Full evaluation of t(g) from the definitions.
  StatVector compute(const Graph& g) const {
    check_graph(g);
    const std::size_t n = g.n();
    StatVector t = StatVector::Zero(static_cast<Eigen::Index>(dim()));
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const auto& c = terms_[k];
      double v = 0.0;
      switch (c.kind) {
        case TermKind::Edges:
          for_each_dyad(n, g.directed(), [&](Node i, Node j) { v += g.has_edge(i, j); });
          break;
        case TermKind::Mutual:
          for (Node i = 0; i < n; ++i)
            for (Node j = i + 1; j < n; ++j) v += g.has_edge(i, j) && g.has_edge(j, i);
          break;
        case TermKind::Triangles:
          for (Node i = 0; i < n; ++i)
            for (Node j = i + 1; j < n; ++j)
              if (g.has_edge(i, j))
                for (Node l = j + 1; l < n; ++l) v += g.has_edge(j, l) && g.has_edge(i, l);
          break;
        case TermKind::Gwesp:
          for (Node i = 0; i < n; ++i)
            for (Node j = i + 1; j < n; ++j)
              if (g.has_edge(i, j)) v += 1.0 - std::pow(c.keep, static_cast<double>(shared_partners(g, i, j)));
          break;
        case TermKind::NodeMatch:
          for_each_dyad(n, g.directed(), [&](Node i, Node j) {
            if (g.has_edge(i, j) && c.codes[i] == c.codes[j]) v += 1.0;
          });
          break;
        case TermKind::DyadCov:
          for_each_dyad(n, g.directed(), [&](Node i, Node j) {
            if (g.has_edge(i, j)) v += c.cov[i * n + j];
          });
          break;
      }
      t[static_cast<Eigen::Index>(k)] = v;
    }
    return t;
  }

  /// Writes delta_ij(g) into out (length dim()). No range checks.
  void change(const Graph& g, Node i, Node j, std::span<double> out) const noexcept {
    const std::size_t n = g.n();
    for (std::size_t k = 0; k < terms_.size(); ++k) {
      const auto& c = terms_[k];
      double v = 0.0;
      switch (c.kind) {
        case TermKind::Edges: v = 1.0; break;
        case TermKind::Mutual: v = g.has_edge(j, i) ? 1.0 : 0.0; break;
        case TermKind::Triangles: v = static_cast<double>(shared_partners(g, i, j)); break;
        case TermKind::Gwesp: v = gwesp_change(g, i, j, c.decay, c.keep); break;
        case TermKind::NodeMatch: v = c.codes[i] == c.codes[j] ? 1.0 : 0.0; break;
        case TermKind::DyadCov:
          v = g.directed() ? c.cov[i * n + j] : c.cov[std::min(i, j) * n + std::max(i, j)];
          break;
      }
      out[k] = v;
    }
  }

  /// Number of nodes adjacent to both i and j (undirected use).
  static std::size_t shared_partners(const Graph& g, Node i, Node j) noexcept {
    const auto ri = g.row(i);
    const auto rj = g.row(j);
    std::size_t s = 0;
    for (std::size_t l = 0; l < ri.size(); ++l) s += ri[l] & rj[l];
    return s;
  }

 private:
  struct Compiled {
    TermKind kind;
    double decay;
    double keep;  // 1 - decay
    const int* codes;
    const double* cov;
  };

  // Adding (i,j) contributes its own term f(s_ij) and raises s_il and s_jl by
  // one for every common neighbour l; f(s+1) - f(s) = alpha (1-alpha)^s.
  // All shared-partner counts are taken with (i,j) absent.
  static double gwesp_change(const Graph& g, Node i, Node j, double alpha, double keep) noexcept {
    const auto ri = g.row(i);
    const auto rj = g.row(j);
    const bool ij = ri[j] != 0;
    double v = 1.0 - std::pow(keep, static_cast<double>(shared_partners(g, i, j)));
    for (Node l = 0; l < ri.size(); ++l) {
      if (!(ri[l] && rj[l])) continue;
      // j is a partner of (i,l) only through the toggled edge, so discount it.
      const auto s_il = shared_partners(g, i, l) - (ij ? 1 : 0);
      const auto s_jl = shared_partners(g, j, l) - (ij ? 1 : 0);
      v += alpha * (std::pow(keep, static_cast<double>(s_il)) + std::pow(keep, static_cast<double>(s_jl)));
    }
    return v;
  }

  const ModelSpec* spec_;
  std::vector<Compiled> terms_;
};

inline StatVector compute_stats(const ModelSpec& spec, const Graph& g) { return StatEvaluator(spec).compute(g); }

inline StatVector change_stats(const ModelSpec& spec, const Graph& g, Node i, Node j) {
  StatEvaluator eval(spec);
  eval.check_graph(g);
  g.check_pair(i, j);
  StatVector out(static_cast<Eigen::Index>(eval.dim()));
  eval.change(g, i, j, std::span<double>(out.data(), eval.dim()));
  return out;
}

}  // namespace nnergm
