#pragma once

#include <nnergm/graph.hpp>
#include <nnergm/model_spec.hpp>
#include <nnergm/rng.hpp>

#include <vector>

namespace testutil {

inline nnergm::Graph random_graph(std::size_t n, bool directed, double p, nnergm::Engine& eng) {
  nnergm::Graph g(n, directed);
  nnergm::for_each_dyad(n, directed, [&](std::size_t i, std::size_t j) {
    if (nnergm::bernoulli(eng, p)) g.toggle(i, j);
  });
  return g;
}

inline nnergm::Graph complete_graph(std::size_t n, bool directed) {
  nnergm::Graph g(n, directed);
  nnergm::for_each_dyad(n, directed, [&](std::size_t i, std::size_t j) { g.toggle(i, j); });
  return g;
}

inline nnergm::ModelSpec make_spec(std::size_t n, bool directed, std::vector<nnergm::StatTerm> terms) {
  nnergm::ModelSpec s;
  s.n = n;
  s.directed = directed;
  s.terms = std::move(terms);
  return s;
}

inline nnergm::ModelSpec er_spec(std::size_t n) { return make_spec(n, false, {nnergm::StatTerm::edges()}); }

inline nnergm::ModelSpec dyad_spec(std::size_t n) {
  return make_spec(n, true, {nnergm::StatTerm::edges(), nnergm::StatTerm::mutual()});
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

}  // namespace testutil
