#include "catch_amalgamated.hpp"

#include <nnergm/closed_form.hpp>
#include <nnergm/surrogate.hpp>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"

using namespace nnergm;
using testutil::vec;

namespace {

double er_curve(double theta) { return 190.0 / (1.0 + std::exp(-theta)); }

const TrainingDataset& er_dataset() {
  static const TrainingDataset ds =
      generate_training_set(testutil::er_spec(20), PriorBox::uniform(1, -5, 5), 2000, 200, {}, 20240611, 0);
  return ds;
}

const SurrogateModel& er_model() {
  static const SurrogateModel m = [] {
    TrainConfig cfg;
    cfg.seed = 7;
    return train(er_dataset(), {}, cfg);
  }();
  return m;
}

TrainingDataset constant_dataset() {
  TrainingDataset ds;
  Engine eng = make_engine(3);
  for (int r = 0; r < 100; ++r) {
    ds.thetas.push_back(vec({uniform(eng, -2, 2), uniform(eng, -2, 2)}));
    ds.tbars.push_back(vec({12.5, 3.0}));
  }
  return ds;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "nnergm_test_surrogate";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("box parsing and projection") {
  const auto box = PriorBox::parse("-5:5, -1:2.5");
  CHECK(box.dim() == 2);
  CHECK(box.lower[1] == -1.0);
  CHECK(box.upper[1] == 2.5);
  CHECK(box.contains(vec({0, 0})));
  CHECK_FALSE(box.contains(vec({0, 3})));
  CHECK(box.project(vec({-9, 9})) == vec({-5, 2.5}));
  CHECK_THROWS_AS(PriorBox::parse("1:0"), InvalidArgument);
  CHECK_THROWS_AS(PriorBox::parse("1"), ParseError);
  CHECK_THROWS_AS(PriorBox::parse("a:1"), ParseError);
}

TEST_CASE("small dataset is inside the box and round-trips through files") {
  const auto spec = testutil::dyad_spec(5);
  const auto box = PriorBox::parse("-2:1,0:3");
  SamplerConfig sc;
  sc.init = InitRandom{0.3};
  const auto ds = generate_training_set(spec, box, 4, 10, sc, 99, 1, "2026-01-01T00:00:00Z");
  REQUIRE(ds.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(box.contains(ds.thetas[r]));
    CHECK(ds.tbars[r].size() == 2);
  }
  const auto path = temp_path("small.csv");
  save_dataset(ds, path);
  const auto back = load_dataset(path);
  REQUIRE(back.size() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(back.thetas[r] == ds.thetas[r]);
    CHECK(back.tbars[r] == ds.tbars[r]);
  }
  CHECK(back.meta.L == 4);
  CHECK(back.meta.M == 10);
  CHECK(back.meta.master_seed == 99);
  CHECK(back.meta.created == "2026-01-01T00:00:00Z");
  CHECK(back.meta.box.lower == box.lower);
  CHECK(std::get<InitRandom>(back.meta.sampler.init).p == 0.3);
  CHECK(back.meta.spec.labels() == spec.labels());
  CHECK(dataset_to_csv(back) == dataset_to_csv(ds));
}

TEST_CASE("dataset rows match the Bernoulli curve") {
  const auto ds = generate_training_set(testutil::er_spec(20), PriorBox::uniform(1, -5, 5), 200, 200, {}, 5, 0);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const double th = ds.thetas[r][0];
    const double p = 1.0 / (1.0 + std::exp(-th));
    const double sd = std::sqrt(190.0 * p * (1.0 - p));
    INFO("theta = " << th);
    CHECK(std::abs(ds.tbars[r][0] - er_curve(th)) <= 4.0 * sd / std::sqrt(200.0));
  }
}

TEST_CASE("dataset is bit-identical across worker counts") {
  const auto spec = testutil::make_spec(8, false, {StatTerm::edges(), StatTerm::triangles()});
  const auto box = PriorBox::uniform(2, -1, 1);
  const auto a = generate_training_set(spec, box, 24, 20, {}, 1234, 1);
  const auto b = generate_training_set(spec, box, 24, 20, {}, 1234, 8);
  CHECK(dataset_to_csv(a) == dataset_to_csv(b));
  const auto c = generate_training_set(spec, box, 24, 20, {}, 1235, 8);
  CHECK(dataset_to_csv(a) != dataset_to_csv(c));
}

TEST_CASE("dataset CSV errors") {
  CHECK_THROWS_AS(dataset_from_csv("", 1), ParseError);
  CHECK_THROWS_AS(dataset_from_csv("theta_0,stat_0\n1,2,3\n", 1), ParseError);
  CHECK_THROWS_AS(dataset_from_csv("theta_0,stats\n1,2\n", 1), ParseError);
  CHECK_THROWS_AS(dataset_from_csv("theta_0,stat_0\n1,x\n", 1), ParseError);
  CHECK_THROWS_AS(load_dataset(temp_path("missing.csv")), Error);
}

TEST_CASE("constant map is learned exactly enough") {
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.epochs = 50;
  const auto m = train(constant_dataset(), {}, cfg);
  CHECK(m.history.val_loss.back() <= 1e-20);
  Engine eng = make_engine(4);
  for (int k = 0; k < 20; ++k) {
    const auto theta = vec({uniform(eng, -2, 2), uniform(eng, -2, 2)});
    const auto t = predict(m, theta);
    CHECK(t[0] == Catch::Approx(12.5).margin(1e-9));
    CHECK(t[1] == Catch::Approx(3.0).margin(1e-9));
    CHECK(input_jacobian(m, theta).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("training arguments are validated") {
  auto ds = constant_dataset();
  TrainConfig cfg;
  cfg.validation_fraction = 0.0;
  CHECK_THROWS_AS(train(ds, {}, cfg), InvalidArgument);
  cfg.validation_fraction = 0.2;
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(ds, {}, cfg), InvalidArgument);
  cfg.epochs = 1;
  ArchConfig arch;
  arch.dropout_rate = 1.0;
  CHECK_THROWS_AS(train(ds, arch, cfg), InvalidArgument);
  arch = {};
  arch.hidden_widths = {4, 0};
  CHECK_THROWS_AS(train(ds, arch, cfg), InvalidArgument);
  ds.thetas.resize(9);
  ds.tbars.resize(9);
  CHECK_THROWS_AS(train(ds, {}, {}), InvalidArgument);
  ds = constant_dataset();
  ds.thetas.resize(12);
  ds.tbars.resize(12);
  cfg.validation_fraction = 0.05;
  CHECK_THROWS_AS(train(ds, {}, cfg), InvalidArgument);
}

TEST_CASE("divergence is reported with the epoch") {
  auto ds = constant_dataset();
  for (std::size_t r = 0; r < ds.size(); ++r) ds.tbars[r][0] = ds.thetas[r][0] * 1e3;
  TrainConfig cfg;
  cfg.learning_rate = 1e300;
  cfg.epochs = 5;
  try {
    train(ds, {}, cfg);
    FAIL("expected divergence");
  } catch (const NumericalError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("diverged at epoch"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("reduce learning rate"));
  }
}

TEST_CASE("ER surrogate tracks the logistic curve") {
  const auto& ds = er_dataset();
  const auto& m = er_model();
  REQUIRE(m.history.train_loss.size() == 200);
  for (double v : m.history.train_loss) CHECK(std::isfinite(v));
  CHECK(m.history.train_loss.back() <= m.history.initial_train_loss);

  double sse = 0.0;
  for (auto r : m.validation_rows) {
    const double e = predict(m, ds.thetas[r])[0] - ds.tbars[r][0];
    sse += e * e;
  }
  const double rmse = std::sqrt(sse / static_cast<double>(m.validation_rows.size()));
  CHECK(m.validation_rows.size() == 400);
  CHECK(rmse <= 2.0);

  CHECK(std::abs(predict(m, vec({0}))[0] - 95.0) <= 2.0);
  CHECK(std::abs(predict(m, vec({-5}))[0] - 1.27) <= 2.0);

  double worst = 0.0, prev = -1e9, worst_drop = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double th = -5.0 + 0.1 * k;
    const double y = predict(m, vec({th}))[0];
    worst = std::max(worst, std::abs(y - er_curve(th)));
    worst_drop = std::max(worst_drop, prev - y);
    prev = y;
  }
  CHECK(worst <= 4.0);
  CHECK(worst_drop <= 0.5);
  const double lip = lipschitz_bound(m);
  CHECK(std::isfinite(lip));
  CHECK(lip >= 47.5);  // the true curve has slope 190/4 at 0
}

TEST_CASE("training is deterministic") {
  TrainConfig cfg;
  cfg.seed = 11;
  cfg.epochs = 5;
  const auto a = train(er_dataset(), {}, cfg);
  const auto b = train(er_dataset(), {}, cfg);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    CHECK(a.layers[l].weights == b.layers[l].weights);
    CHECK(a.layers[l].bias == b.layers[l].bias);
  }
  cfg.seed = 12;
  const auto c = train(er_dataset(), {}, cfg);
  CHECK(a.layers[0].weights != c.layers[0].weights);
}

TEST_CASE("jacobian matches central differences") {
  // A 3-input, 2-output model on a dyad-like dataset exercises every layer.
  const auto spec = testutil::make_spec(6, false, {StatTerm::edges(), StatTerm::triangles(), StatTerm::gwesp(0.5)});
  const auto ds = generate_training_set(spec, PriorBox::uniform(3, -1, 1), 60, 5, {}, 8, 1);
  TrainConfig cfg;
  cfg.seed = 2;
  cfg.epochs = 20;
  ArchConfig arch;
  arch.hidden_widths = {16, 8};
  const auto m = train(ds, arch, cfg);

  std::vector<SurrogateModel const*> models{&m, &er_model()};
  Engine eng = make_engine(17);
  const double h = 1e-4;
  for (const auto* model : models) {
    const auto d = static_cast<Eigen::Index>(model->input_dim());
    for (int rep = 0; rep < 50; ++rep) {
      ParamVector theta(d);
      for (Eigen::Index k = 0; k < d; ++k) theta[k] = uniform(eng, -0.9, 0.9) * (d == 1 ? 5.0 : 1.0);
      const Eigen::MatrixXd jac = input_jacobian(*model, theta);
      Eigen::MatrixXd fd(jac.rows(), jac.cols());
      for (Eigen::Index k = 0; k < d; ++k) {
        ParamVector up = theta, dn = theta;
        up[k] += h;
        dn[k] -= h;
        fd.col(k) = (predict(*model, up) - predict(*model, dn)) / (2 * h);
      }
      // Skip points where a hidden unit switches inside the stencil.
      const double scale = std::max(1.0, jac.cwiseAbs().maxCoeff());
      const double rel = (jac - fd).cwiseAbs().maxCoeff() / scale;
      if (rel > 1e-3) continue;
      CHECK(rel <= 1e-4);
    }
  }
}

TEST_CASE("hand-built linear model") {
  const std::string doc = R"({
    "arch": {"hidden_widths": [], "dropout_rate": 0.0},
    "layers": [{"weights": [[1.0, 0.0], [0.5, 2.0]], "bias": [0.0, 1.0]}],
    "input_norm": {"mean": [0.0, 0.0], "scale": [1.0, 1.0]},
    "output_norm": {"mean": [0.0, 0.0], "scale": [1.0, 1.0]}
  })";
  const auto m = model_from_json(nlohmann::json::parse(doc));
  Eigen::MatrixXd w(2, 2);
  w << 1.0, 0.0, 0.5, 2.0;
  CHECK(input_jacobian(m, vec({0.3, -7})) == w);
  CHECK(predict(m, vec({1, 1})) == vec({1.0, 3.5}));
  CHECK(lipschitz_bound(m) == Catch::Approx(w.jacobiSvd().singularValues()[0]));
  CHECK_THROWS_AS(predict(m, vec({1})), InvalidArgument);

  auto bad = nlohmann::json::parse(doc);
  bad["layers"][0]["bias"] = {0.0};
  CHECK_THROWS_AS(model_from_json(bad), InvalidArgument);
  bad = nlohmann::json::parse(doc);
  bad["output_norm"]["scale"] = {1.0, 0.0};
  CHECK_THROWS_AS(model_from_json(bad), InvalidArgument);
  bad = nlohmann::json::parse(doc);
  bad.erase("layers");
  CHECK_THROWS_AS(model_from_json(bad), ParseError);
}

TEST_CASE("model file round trip preserves predictions") {
  const auto& m = er_model();
  const auto path = temp_path("er_model.json");
  save_model(m, path);
  const auto back = load_model(path);
  CHECK(back.dataset_fingerprint == dataset_fingerprint(er_dataset()));
  CHECK(back.validation_rows == m.validation_rows);
  CHECK(back.history.val_loss == m.history.val_loss);
  REQUIRE(back.training_box.has_value());
  REQUIRE(back.spec.has_value());
  for (int k = 0; k <= 100; ++k) {
    const auto theta = vec({-5.0 + 0.1 * k});
    CHECK(std::abs(predict(back, theta)[0] - predict(m, theta)[0]) <= 1e-15 * std::max(1.0, predict(m, theta)[0]));
  }
}

TEST_CASE("normalization round trip") {
  const auto& m = er_model();
  for (double t : {0.0, 1.27, 95.0, 190.0, -3.0}) {
    const auto v = vec({t});
    CHECK(std::abs(m.denormalize_output(m.normalize_output(v))[0] - t) <= 1e-12 * std::max(1.0, std::abs(t)));
  }
}

TEST_CASE("predict warns outside the training box") {
  std::vector<std::string> seen;
  auto previous = set_warning_handler([&](const std::string& msg) { seen.push_back(msg); });
  predict(er_model(), vec({0}));
  CHECK(seen.empty());
  predict(er_model(), vec({6}));
  REQUIRE(seen.size() == 1);
  CHECK_THAT(seen[0], Catch::Matchers::ContainsSubstring("outside the training box"));
  set_warning_handler(previous);
}
