#include "catch_amalgamated.hpp"

#include <nnergm/graph.hpp>

#include "test_util.hpp"

using namespace nnergm;

TEST_CASE("new_empty sizes") {
  auto g = new_empty(3, false);
  CHECK(g.n() == 3);
  CHECK(g.edge_count() == 0);

  auto one = new_empty(1, true);
  CHECK(one.dyad_count() == 0);
  CHECK(one.edge_count() == 0);

  auto twenty = new_empty(20, false);
  CHECK(twenty.dyad_count() == 190);
  CHECK(twenty.edge_count() == 0);

  CHECK_THROWS_AS(new_empty(0, false), InvalidArgument);
}

TEST_CASE("toggle_edge respects directedness") {
  auto g = toggle_edge(new_empty(3, false), 0, 1);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK(g.edge_count() == 1);
  CHECK(toggle_edge(g, 0, 1) == new_empty(3, false));

  auto d = toggle_edge(new_empty(3, true), 0, 1);
  CHECK(d.has_edge(0, 1));
  CHECK_FALSE(d.has_edge(1, 0));

  CHECK_THROWS_AS(toggle_edge(g, 2, 2), InvalidArgument);
  CHECK_THROWS_AS(toggle_edge(g, 0, 3), InvalidArgument);
}

TEST_CASE("toggle sequences keep symmetry and double toggles cancel") {
  Engine eng = make_engine(11);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + uniform_index(eng, 12);
    const bool directed = rep % 2 == 0;
    Graph g = testutil::random_graph(n, directed, 0.3, eng);
    for (int s = 0; s < 200; ++s) {
      const Node i = uniform_index(eng, n);
      Node j = uniform_index(eng, n - 1);
      if (j >= i) ++j;
      const Graph before = g;
      g.toggle(i, j);
      REQUIRE(toggle_edge(g, i, j) == before);
      if (!directed)
        for (Node a = 0; a < n; ++a)
          for (Node b = 0; b < n; ++b) REQUIRE(g.has_edge(a, b) == g.has_edge(b, a));
      for (Node a = 0; a < n; ++a) REQUIRE_FALSE(g.has_edge(a, a));
      REQUIRE(g.edge_count() <= g.dyad_count());
    }
  }
}

TEST_CASE("edge list parsing") {
  auto g = read_edge_list("n=3 directed=0\n0 1\n");
  CHECK(g.n() == 3);
  CHECK_FALSE(g.directed());
  CHECK(g.edge_count() == 1);
  CHECK(g.has_edge(1, 0));

  CHECK(write_edge_list(new_empty(2, true)) == "n=2 directed=1\n");

  auto with_comments = read_edge_list("# comment\nn=4 directed=1\n\n# edges\n1 0\n2 3\n");
  CHECK(with_comments.has_edge(1, 0));
  CHECK_FALSE(with_comments.has_edge(0, 1));
  CHECK(with_comments.edge_count() == 2);
}

TEST_CASE("edge list errors name the line") {
  auto message = [](const char* input) {
    try {
      read_edge_list(input);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("n=3 directed=0\n0 1\n2 2\n") == "self-loop at line 3");
  CHECK(message("n=3 directed=0\n0 1\n1 0\n").find("duplicate edge") != std::string::npos);
  CHECK(message("n=3 directed=0\n0 3\n").find("line 2") != std::string::npos);
  CHECK(message("n=3 directed=2\n").find("malformed header") != std::string::npos);
  CHECK(message("nodes=3\n").find("line 1") != std::string::npos);
  CHECK(message("n=3 directed=0\n0 1 2\n").find("line 2") != std::string::npos);
  CHECK(message("").find("missing header") != std::string::npos);
}

TEST_CASE("edge list round trip on random graphs") {
  Engine eng = make_engine(2024);
  for (std::size_t n = 1; n <= 30; ++n) {
    for (bool directed : {false, true}) {
      const double p = uniform01(eng);
      const Graph g = testutil::random_graph(n, directed, p, eng);
      REQUIRE(read_edge_list(write_edge_list(g)) == g);
    }
  }
}
