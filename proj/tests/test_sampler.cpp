#include "catch_amalgamated.hpp"

#include <nnergm/closed_form.hpp>
#include <nnergm/sampler.hpp>

#include <cmath>

#include "test_util.hpp"

using namespace nnergm;
using testutil::vec;

namespace {

// |mean - expected| <= 4 * sd / sqrt(M) per coordinate.
void require_within_4se(const std::vector<StatVector>& samples, const StatVector& expected) {
  const StatVector mean = sample_mean(samples);
  const StatVector sd = sample_sd(samples);
  const double root_m = std::sqrt(static_cast<double>(samples.size()));
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    INFO("coordinate " << k << ": mean " << mean[k] << " expected " << expected[k] << " sd " << sd[k]);
    REQUIRE(std::abs(mean[k] - expected[k]) <= 4.0 * sd[k] / root_m);
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("Bernoulli model at theta = 0 is uniform over graphs") {
  const auto samples = simulate_stats(testutil::er_spec(20), vec({0.0}), {}, 1000, 1);
  REQUIRE(samples.size() == 1000);
  require_within_4se(samples, vec({95.0}));
}

TEST_CASE("Bernoulli model at theta = -5") {
  const auto samples = simulate_stats(testutil::er_spec(20), vec({-5.0}), {}, 5000, 2);
  require_within_4se(samples, vec({190.0 * sigmoid(-5.0)}));
}

TEST_CASE("edges + triangles chain matches enumeration") {
  const auto spec = testutil::make_spec(5, false, {StatTerm::edges(), StatTerm::triangles()});
  const ParamVector theta = vec({-1.0, 0.5});
  const auto samples = simulate_stats(spec, theta, {}, 20000, 3);
  require_within_4se(samples, exact_mean_stats(spec, theta));
}

TEST_CASE("mean_stats") {
  const auto spec = testutil::er_spec(20);
  SECTION("mean of one sample is that sample") {
    const auto one = simulate_stats(spec, vec({0.3}), {}, 1, 42);
    CHECK(mean_stats(spec, vec({0.3}), {}, 1, 42) == one[0]);
  }
  SECTION("mean equals the arithmetic mean of the chain") {
    const auto s = simulate_stats(spec, vec({0.3}), {}, 37, 8);
    CHECK(mean_stats(spec, vec({0.3}), {}, 37, 8) == sample_mean(s));
  }
  SECTION("edges + mutual closed form") {
    const auto dyad = testutil::dyad_spec(10);
    const auto samples = simulate_stats(dyad, vec({-1.0, 2.0}), {}, 20000, 9);
    // Z = 1 + 2e^-1 + e^0; E(edges) = 45 (2e^-1 + 2) / Z = 45; E(mutual) = 45 / Z.
    const double z = 2.0 + 2.0 * std::exp(-1.0);
    require_within_4se(samples, vec({45.0, 45.0 / z}));
    CHECK(45.0 / z == Catch::Approx(16.449).margin(5e-4));
  }
}

TEST_CASE("exact_mean_stats examples") {
  CHECK(exact_mean_stats(testutil::er_spec(3), vec({0.0}))[0] == Catch::Approx(1.5).margin(1e-14));
  const double closed = 3.0 * std::exp(1.0) / (1.0 + std::exp(1.0));
  CHECK(exact_mean_stats(testutil::er_spec(3), vec({1.0}))[0] == Catch::Approx(closed).margin(1e-12));
  CHECK(closed == Catch::Approx(2.1932).margin(1e-4));
  const auto et = testutil::make_spec(3, false, {StatTerm::edges(), StatTerm::triangles()});
  const StatVector m = exact_mean_stats(et, vec({0.0, 0.0}));
  CHECK(m[0] == Catch::Approx(1.5).margin(1e-14));
  CHECK(m[1] == Catch::Approx(0.125).margin(1e-14));
}

TEST_CASE("exact_mean_stats agrees with closed forms and refuses large instances") {
  for (double theta : {-30.0, -3.0, -0.5, 0.0, 0.7, 4.0, 40.0}) {
    for (std::size_t n : {2, 3, 4, 5, 6}) {
      const double got = exact_mean_stats(testutil::er_spec(n), vec({theta}))[0];
      REQUIRE(std::abs(got - bernoulli_mean_edges(n * (n - 1) / 2, theta)) <= 1e-10);
    }
    const auto dyad = testutil::dyad_spec(4);
    const StatVector e = exact_mean_stats(dyad, vec({theta / 4, 0.5}));
    const StatVector c = *closed_form_mean(dyad, vec({theta / 4, 0.5}));
    REQUIRE((e - c).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK_THROWS_AS(exact_mean_stats(testutil::er_spec(7), vec({0.0})), InvalidArgument);
  CHECK_THROWS_AS(exact_mean_stats(testutil::dyad_spec(6), vec({0.0, 0.0})), InvalidArgument);
  CHECK_NOTHROW(exact_mean_stats(testutil::dyad_spec(5), vec({0.0, 0.0})));
}

TEST_CASE("sampler agrees with enumeration across spec families") {
  Engine eng = make_engine(123);
  std::vector<ModelSpec> specs;
  for (std::size_t n : {3, 4, 5}) {
    specs.push_back(testutil::er_spec(n));
    specs.push_back(testutil::make_spec(n, false, {StatTerm::edges(), StatTerm::triangles()}));
    specs.push_back(testutil::make_spec(n, false, {StatTerm::edges(), StatTerm::gwesp(0.5)}));
    specs.push_back(testutil::dyad_spec(n));
    auto cov = testutil::make_spec(n, false, {StatTerm::edges(), StatTerm::nodematch("g"), StatTerm::dyadcov("z")});
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(i % 2 ? "x" : "y");
    cov.node_attributes.emplace("g", NodeAttribute(labels));
    DyadCovariate z(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) z.at(i, j) = 0.25 * static_cast<double>((i + 2 * j) % 5);
    cov.dyad_covariates.emplace("z", z);
    specs.push_back(cov);
  }
  std::uint64_t seed = 1000;
  for (const auto& spec : specs) {
    for (int rep = 0; rep < 4; ++rep) {
      ParamVector theta(static_cast<Eigen::Index>(spec.dim()));
      for (Eigen::Index k = 0; k < theta.size(); ++k) theta[k] = uniform(eng, -2.0, 2.0);
      INFO("spec " << spec_to_json(spec).dump() << " theta " << theta.transpose());
      require_within_4se(simulate_stats(spec, theta, {}, 10000, ++seed), exact_mean_stats(spec, theta));
    }
  }
}

TEST_CASE("identical inputs give identical chains") {
  const auto spec = testutil::make_spec(8, false, {StatTerm::edges(), StatTerm::gwesp(0.5)});
  SamplerConfig cfg;
  cfg.init = InitRandom{0.3};
  const auto a = simulate_stats(spec, vec({-0.5, 0.2}), cfg, 200, 77);
  const auto b = simulate_stats(spec, vec({-0.5, 0.2}), cfg, 200, 77);
  REQUIRE(a == b);
  const auto c = simulate_stats(spec, vec({-0.5, 0.2}), cfg, 200, 78);
  CHECK(a != c);
}

TEST_CASE("Bernoulli mean edges is nondecreasing in theta") {
  const auto spec = testutil::er_spec(20);
  double prev = -1.0;
  for (int k = 0; k <= 20; ++k) {
    const double theta = -5.0 + 0.5 * k;
    const double m = mean_stats(spec, vec({theta}), {}, 2000, 500 + static_cast<std::uint64_t>(k))[0];
    INFO("theta " << theta);
    REQUIRE(m >= prev);
    prev = m;
  }
}

TEST_CASE("overflow guard and degenerate parameters") {
  ChainDiagnostics diag;
  const auto samples = simulate_stats(testutil::er_spec(10), vec({1000.0}), {}, 5, 1, &diag);
  CHECK(diag.clamped > 0);
  for (const auto& s : samples) CHECK(s[0] == 45.0);
  const auto empty = simulate_stats(testutil::er_spec(10), vec({-1000.0}), {}, 5, 1, &diag);
  for (const auto& s : empty) CHECK(s[0] == 0.0);
}

TEST_CASE("incremental tracking survives an audit") {
  const auto spec = testutil::make_spec(12, false, {StatTerm::edges(), StatTerm::triangles(), StatTerm::gwesp(0.3)});
  SamplerConfig cfg;
  cfg.audit = true;
  cfg.init = InitRandom{0.5};
  CHECK_NOTHROW(simulate_stats(spec, vec({-0.2, 0.05, 0.1}), cfg, 100, 4));
}

TEST_CASE("initial states") {
  const auto spec = testutil::er_spec(6);
  SamplerConfig cfg;
  cfg.burn_in_sweeps = 0;
  cfg.thinning_sweeps = 1;
  Graph full = testutil::complete_graph(6, false);
  cfg.init = InitGiven{full};
  CHECK_NOTHROW(simulate_stats(spec, vec({0.0}), cfg, 3, 1));
  cfg.init = InitGiven{Graph(5, false)};
  CHECK_THROWS_AS(simulate_stats(spec, vec({0.0}), cfg, 3, 1), InvalidArgument);
  cfg.init = InitRandom{1.5};
  CHECK_THROWS_AS(simulate_stats(spec, vec({0.0}), cfg, 3, 1), InvalidArgument);
}

TEST_CASE("sampler argument errors") {
  const auto spec = testutil::er_spec(6);
  CHECK_THROWS_AS(simulate_stats(spec, vec({0.0}), {}, 0, 1), InvalidArgument);
  CHECK_THROWS_AS(simulate_stats(spec, vec({0.0, 1.0}), {}, 3, 1), InvalidArgument);
  CHECK_THROWS_AS(simulate_stats(spec, vec({std::nan("")}), {}, 3, 1), InvalidArgument);
  SamplerConfig cfg;
  cfg.thinning_sweeps = 0;
  CHECK_THROWS_AS(simulate_stats(spec, vec({0.0}), cfg, 3, 1), InvalidArgument);
}

TEST_CASE("task seeds are stable") {
  // Frozen values of the documented mixing function.
  CHECK(splitmix64(0) == 0);
  CHECK(task_seed(0, 0) == splitmix64(0x9E3779B97F4A7C15ULL));
  CHECK(task_seed(42, 1) != task_seed(42, 2));
  Engine eng = make_engine(5489);
  CHECK(eng() == 14514284786278117030ULL);  // first output of mt19937_64 with its default seed
}
