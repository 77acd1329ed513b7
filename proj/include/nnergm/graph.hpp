#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nnergm/error.hpp"
#include "nnergm/text.hpp"

namespace nnergm {

using Node = std::size_t;

/// Simple labeled graph on nodes 0..n-1 with dense adjacency.
///
/// Undirected graphs keep (i, j) and (j, i) mirrored so lookups are uniform.
/// Self-loops are never stored.
class Graph {
 public:
  Graph(std::size_t n, bool directed) : n_(n), directed_(directed), adj_(n * n, 0) {
    if (n == 0) throw InvalidArgument("graph needs at least one node");
  }

  std::size_t n() const noexcept { return n_; }
  bool directed() const noexcept { return directed_; }
  std::size_t edge_count() const noexcept { return edges_; }

  /// Number of orderable dyads: n(n-1) directed, n(n-1)/2 undirected.
  std::size_t dyad_count() const noexcept { return directed_ ? n_ * (n_ - 1) : n_ * (n_ - 1) / 2; }

  bool has_edge(Node i, Node j) const noexcept { return adj_[i * n_ + j] != 0; }

  /// Row i of the adjacency indicator (out-neighbours when directed).
  std::span<const std::uint8_t> row(Node i) const noexcept { return {adj_.data() + i * n_, n_}; }

  void check_pair(Node i, Node j) const {
    if (i >= n_ || j >= n_)
      throw InvalidArgument("node out of range: (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") with n=" + std::to_string(n_));
    if (i == j) throw InvalidArgument("self-loop at node " + std::to_string(i));
  }

  /// Flip the indicator of (i, j) in place (and (j, i) when undirected).
  void toggle(Node i, Node j) {
    check_pair(i, j);
    toggle_unchecked(i, j);
  }

  void toggle_unchecked(Node i, Node j) noexcept {
    auto& a = adj_[i * n_ + j];
    a ^= 1;
    if (!directed_) adj_[j * n_ + i] = a;
    if (a) ++edges_;
    else --edges_;
  }

  void set_edge(Node i, Node j, bool present) {
    check_pair(i, j);
    if (has_edge(i, j) != present) toggle_unchecked(i, j);
  }

  friend bool operator==(const Graph& a, const Graph& b) noexcept {
    return a.n_ == b.n_ && a.directed_ == b.directed_ && a.adj_ == b.adj_;
  }

 private:
  std::size_t n_;
  bool directed_;
  std::size_t edges_ = 0;
  std::vector<std::uint8_t> adj_;
};

inline Graph new_empty(std::size_t n, bool directed) { return Graph(n, directed); }

/// Value-semantics toggle: returns a copy of g with (i, j) flipped.
inline Graph toggle_edge(Graph g, Node i, Node j) {
  g.toggle(i, j);
  return g;
}

/// Calls f(i, j) once per orderable dyad; undirected dyads come as i < j.
template <typename F>
void for_each_dyad(std::size_t n, bool directed, F&& f) {
  for (Node i = 0; i < n; ++i)
    for (Node j = directed ? 0 : i + 1; j < n; ++j)
      if (i != j) f(i, j);
}

// ---------------------------------------------------------------------------
// Edge-list text format
//
//   n=<int> directed=<0|1>
//   <i> <j>
//   ...
//
// '#' starts a comment line; blank lines are skipped. Undirected files list
// each edge once, in either orientation.

inline Graph read_edge_list(std::string_view input) {
  const auto all = text::lines(input);
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(what + " at line " + std::to_string(line_no));
  };

  std::size_t idx = 0;
  std::string_view header;
  for (; idx < all.size(); ++idx) {
    line_no = idx + 1;
    auto t = text::trim(all[idx]);
    if (t.empty() || t.front() == '#') continue;
    header = t;
    ++idx;
    break;
  }
  if (header.empty()) throw ParseError("missing header 'n=<int> directed=<0|1>'");

  const auto hf = text::fields(header);
  std::size_t n = 0;
  int directed = -1;
  bool have_n = false;
  for (auto f : hf) {
    if (f.starts_with("n=")) {
      if (!text::parse_int(f.substr(2), n)) throw fail("malformed header field '" + std::string(f) + "'");
      have_n = true;
    } else if (f.starts_with("directed=")) {
      auto v = f.substr(9);
      if (v == "0") directed = 0;
      else if (v == "1") directed = 1;
      else throw fail("malformed header field '" + std::string(f) + "'");
    } else {
      throw fail("malformed header field '" + std::string(f) + "'");
    }
  }
  if (!have_n || directed < 0 || hf.size() != 2) throw fail("malformed header, expected 'n=<int> directed=<0|1>'");
  if (n == 0) throw fail("header declares n=0");

  Graph g(n, directed == 1);
  for (; idx < all.size(); ++idx) {
    line_no = idx + 1;
    auto t = text::trim(all[idx]);
    if (t.empty() || t.front() == '#') continue;
    const auto ef = text::fields(t);
    Node i = 0, j = 0;
    if (ef.size() != 2 || !text::parse_int(ef[0], i) || !text::parse_int(ef[1], j))
      throw fail("malformed edge line '" + std::string(t) + "'");
    if (i >= n || j >= n) throw fail("node index out of range (n=" + std::to_string(n) + ")");
    if (i == j) throw fail("self-loop");
    if (g.has_edge(i, j)) throw fail("duplicate edge " + std::to_string(i) + " " + std::to_string(j));
    g.toggle_unchecked(i, j);
  }
  return g;
}

inline std::string write_edge_list(const Graph& g) {
  std::string out = "n=" + std::to_string(g.n()) + " directed=" + (g.directed() ? "1" : "0") + "\n";
  for_each_dyad(g.n(), g.directed(), [&](Node i, Node j) {
    if (g.has_edge(i, j)) out += std::to_string(i) + " " + std::to_string(j) + "\n";
  });
  return out;
}

}  // namespace nnergm
