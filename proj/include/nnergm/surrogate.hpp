#pragma once

// Feedforward surrogate f(theta) ~ E[t(g) | theta].
//
// Inputs and outputs are standardized with training-split moments. Hidden
// layers are rectified-linear with inverted dropout during training only;
// the output layer is linear. Training minimizes mean-squared error on the
// standardized outputs with Adam on shuffled mini-batches.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnergm/dataset.hpp"
#include "nnergm/error.hpp"
#include "nnergm/rng.hpp"
#include "nnergm/text.hpp"

namespace nnergm {

struct ArchConfig {
  std::vector<std::size_t> hidden_widths{128, 64};
  double dropout_rate = 0.2;
  std::string hidden_activation = "relu";
  std::string output_activation = "linear";

  void validate() const {
    for (auto w : hidden_widths)
      if (w == 0) throw InvalidArgument("hidden layer widths must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
    if (hidden_activation != "relu") throw InvalidArgument("only relu hidden activations are supported");
    if (output_activation != "linear") throw InvalidArgument("only linear output activations are supported");
  }
};

struct TrainConfig {
  std::size_t epochs = 200;
  double validation_fraction = 0.2;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  void validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
      throw InvalidArgument("validation fraction must lie in (0, 1)");
    if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  }
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

struct Normalization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

struct TrainingHistory {
  /// Per-epoch MSE (standardized units, dropout off) on the training split.
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  /// Per-epoch mean mini-batch loss with dropout active.
  std::vector<double> batch_loss;
  double initial_train_loss = 0.0;
  double initial_val_loss = 0.0;
};

struct SurrogateModel {
  ArchConfig arch;
  std::vector<DenseLayer> layers;
  Normalization input_norm;
  Normalization output_norm;
  TrainingHistory history;
  std::string dataset_fingerprint;
  /// Spec the training data came from (optional for hand-built models).
  std::optional<ModelSpec> spec;
  std::optional<PriorBox> training_box;
  std::vector<std::size_t> validation_rows;

  std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weights.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layers.back().weights.rows()); }

  /// Throws if layer shapes do not chain or scales are not positive.
  void validate() const {
    if (layers.empty()) throw InvalidArgument("model has no layers");
    if (layers.size() != arch.hidden_widths.size() + 1) throw InvalidArgument("layer count does not match the architecture");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      if (L.bias.size() != L.weights.rows()) throw InvalidArgument("bias length mismatch in layer " + std::to_string(l));
      if (l > 0 && L.weights.cols() != layers[l - 1].weights.rows())
        throw InvalidArgument("layer " + std::to_string(l) + " input width does not match the previous layer");
      if (l < arch.hidden_widths.size() && static_cast<std::size_t>(L.weights.rows()) != arch.hidden_widths[l])
        throw InvalidArgument("layer " + std::to_string(l) + " width does not match the architecture");
    }
    auto check_norm = [](const Normalization& n, Eigen::Index d, const char* what) {
      if (n.mean.size() != d || n.scale.size() != d) throw InvalidArgument(std::string(what) + " normalization has wrong size");
      if (!(n.scale.array() > 0.0).all()) throw InvalidArgument(std::string(what) + " normalization scales must be positive");
    };
    check_norm(input_norm, layers.front().weights.cols(), "input");
    check_norm(output_norm, layers.back().weights.rows(), "output");
  }

  Eigen::VectorXd normalize_input(const ParamVector& theta) const {
    return (theta - input_norm.mean).cwiseQuotient(input_norm.scale);
  }
  Eigen::VectorXd normalize_output(const StatVector& t) const {
    return (t - output_norm.mean).cwiseQuotient(output_norm.scale);
  }
  StatVector denormalize_output(const Eigen::VectorXd& z) const {
    return z.cwiseProduct(output_norm.scale) + output_norm.mean;
  }

  /// Forward pass in standardized units; no dropout.
  Eigen::VectorXd forward_standardized(const Eigen::VectorXd& x) const {
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Eigen::VectorXd z = layers[l].weights * h + layers[l].bias;
      if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
      h = std::move(z);
    }
    return h;
  }

  void check_input(const ParamVector& theta) const {
    if (static_cast<std::size_t>(theta.size()) != input_dim())
      throw InvalidArgument("theta has " + std::to_string(theta.size()) + " entries, model expects " +
                            std::to_string(input_dim()));
  }
};

/// Deterministic forward pass with de-normalized output. Warns when theta is
/// outside the training box.
inline StatVector predict(const SurrogateModel& model, const ParamVector& theta) {
  model.check_input(theta);
  if (model.training_box && !model.training_box->contains(theta))
    warn("predicting outside the training box; the surrogate is extrapolating");
  return model.denormalize_output(model.forward_standardized(model.normalize_input(theta)));
}

/// Jacobian of the standardized output with respect to the raw theta.
inline Eigen::MatrixXd standardized_jacobian(const SurrogateModel& model, const ParamVector& theta) {
  model.check_input(theta);
  Eigen::VectorXd h = model.normalize_input(theta);
  // Running product d(h_l) / d(x), starting from dx/dtheta = diag(1/scale).
  Eigen::MatrixXd jac = model.input_norm.scale.cwiseInverse().asDiagonal();
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& L = model.layers[l];
    Eigen::VectorXd z = L.weights * h + L.bias;
    jac = L.weights * jac;
    if (l + 1 < model.layers.size()) {
      for (Eigen::Index r = 0; r < z.size(); ++r) {
        // derivative 0 at the kink
        if (!(z[r] > 0.0)) jac.row(r).setZero();
      }
      z = z.cwiseMax(0.0);
    }
    h = std::move(z);
  }
  return jac;
}

/// Exact derivative of predict() at theta, shape output_dim x input_dim.
inline Eigen::MatrixXd input_jacobian(const SurrogateModel& model, const ParamVector& theta) {
  return model.output_norm.scale.asDiagonal() * standardized_jacobian(model, theta);
}

/// Upper bound on the Lipschitz constant of predict (Euclidean norms): the
/// product of layer spectral norms with the normalization scalings.
inline double lipschitz_bound(const SurrogateModel& model) {
  double bound = model.output_norm.scale.maxCoeff() / model.input_norm.scale.minCoeff();
  for (const auto& L : model.layers) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(L.weights);
    bound *= svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  }
  return bound;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline Normalization column_moments(const std::vector<Eigen::VectorXd>& rows, const std::vector<std::size_t>& idx) {
  const auto d = rows.front().size();
  Normalization n{Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
  for (auto i : idx) n.mean += rows[i];
  n.mean /= static_cast<double>(idx.size());
  for (auto i : idx) n.scale += (rows[i] - n.mean).cwiseAbs2();
  n.scale = (n.scale / static_cast<double>(idx.size())).cwiseSqrt();
  for (Eigen::Index k = 0; k < d; ++k)
    if (!(n.scale[k] > 0.0) || !std::isfinite(n.scale[k])) n.scale[k] = 1.0;
  return n;
}

inline void shuffle(std::vector<std::size_t>& v, Engine& eng) {
  for (std::size_t k = v.size(); k > 1; --k) std::swap(v[k - 1], v[uniform_index(eng, k)]);
}

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  std::size_t step = 0;
};

}  // namespace detail

/// Mean squared error in standardized output units over the given rows.
inline double standardized_mse(const SurrogateModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    Eigen::MatrixXd z = model.layers[l].weights * h;
    z.colwise() += model.layers[l].bias;
    if (l + 1 < model.layers.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return (h - y).squaredNorm() / static_cast<double>(y.size());
}

inline SurrogateModel train(const TrainingDataset& dataset, const ArchConfig& arch, const TrainConfig& cfg) {
  arch.validate();
  cfg.validate();
  const std::size_t L = dataset.size();
  if (L < 10) throw InvalidArgument("training needs at least 10 rows, got " + std::to_string(L));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(L) * cfg.validation_fraction));
  if (n_val < 1) throw InvalidArgument("validation split is empty: L * validation_fraction < 1");
  if (n_val >= L) throw InvalidArgument("validation split leaves no training rows");

  Engine eng = make_engine(cfg.seed);
  std::vector<std::size_t> order(L);
  std::iota(order.begin(), order.end(), 0);
  detail::shuffle(order, eng);
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  SurrogateModel model;
  model.arch = arch;
  model.input_norm = detail::column_moments(dataset.thetas, train_idx);
  model.output_norm = detail::column_moments(dataset.tbars, train_idx);
  model.dataset_fingerprint = dataset_fingerprint(dataset);
  if (dataset.meta.spec.n > 0) model.spec = dataset.meta.spec;
  if (dataset.meta.box.lower.size() > 0) model.training_box = dataset.meta.box;
  model.validation_rows = val_idx;

  const auto d_in = static_cast<Eigen::Index>(dataset.param_dim());
  const auto d_out = static_cast<Eigen::Index>(dataset.stat_dim());
  auto standardized = [&](const std::vector<std::size_t>& idx, Eigen::MatrixXd& x, Eigen::MatrixXd& y) {
    x.resize(d_in, static_cast<Eigen::Index>(idx.size()));
    y.resize(d_out, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
      x.col(static_cast<Eigen::Index>(c)) = model.normalize_input(dataset.thetas[idx[c]]);
      y.col(static_cast<Eigen::Index>(c)) = model.normalize_output(dataset.tbars[idx[c]]);
    }
  };
  Eigen::MatrixXd x_train, y_train, x_val, y_val;
  standardized(train_idx, x_train, y_train);
  standardized(val_idx, x_val, y_val);

  // Glorot-uniform weights, zero biases.
  std::vector<Eigen::Index> widths{d_in};
  for (auto w : arch.hidden_widths) widths.push_back(static_cast<Eigen::Index>(w));
  widths.push_back(d_out);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer{Eigen::MatrixXd(widths[l + 1], widths[l]), Eigen::VectorXd::Zero(widths[l + 1])};
    const double limit = std::sqrt(6.0 / static_cast<double>(widths[l] + widths[l + 1]));
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = uniform(eng, -limit, limit);
    model.layers.push_back(std::move(layer));
  }
  // A statistic with zero training variance is constant in standardized units;
  // a zero output row fits it exactly and receives no gradient afterwards.
  {
    auto& out = model.layers.back();
    for (Eigen::Index k = 0; k < d_out; ++k) {
      bool constant = true;
      for (auto r : train_idx) constant = constant && dataset.tbars[r][k] == dataset.tbars[train_idx.front()][k];
      if (constant) out.weights.row(k).setZero();
    }
  }

  detail::AdamState adam;
  for (const auto& layer : model.layers) {
    adam.mw.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    adam.vw.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    adam.mb.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    adam.vb.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }

  model.history.initial_train_loss = standardized_mse(model, x_train, y_train);
  model.history.initial_val_loss = standardized_mse(model, x_val, y_val);

  const std::size_t n_layers = model.layers.size();
  const double keep = 1.0 - arch.dropout_rate;
  std::vector<Eigen::MatrixXd> acts(n_layers + 1), pre(n_layers), masks(n_layers);
  std::vector<std::size_t> positions(train_idx.size());
  std::iota(positions.begin(), positions.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle(positions, eng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < positions.size(); start += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, positions.size() - start);
      Eigen::MatrixXd xb(d_in, static_cast<Eigen::Index>(B)), yb(d_out, static_cast<Eigen::Index>(B));
      for (std::size_t c = 0; c < B; ++c) {
        xb.col(static_cast<Eigen::Index>(c)) = x_train.col(static_cast<Eigen::Index>(positions[start + c]));
        yb.col(static_cast<Eigen::Index>(c)) = y_train.col(static_cast<Eigen::Index>(positions[start + c]));
      }

      acts[0] = xb;
      for (std::size_t l = 0; l < n_layers; ++l) {
        pre[l] = model.layers[l].weights * acts[l];
        pre[l].colwise() += model.layers[l].bias;
        if (l + 1 < n_layers) {
          Eigen::MatrixXd h = pre[l].cwiseMax(0.0);
          if (arch.dropout_rate > 0.0) {
            masks[l].resize(h.rows(), h.cols());
            for (Eigen::Index c = 0; c < h.cols(); ++c)
              for (Eigen::Index r = 0; r < h.rows(); ++r) masks[l](r, c) = bernoulli(eng, keep) ? 1.0 / keep : 0.0;
            h = h.cwiseProduct(masks[l]);
          }
          acts[l + 1] = std::move(h);
        } else {
          acts[l + 1] = pre[l];
        }
      }
      const Eigen::MatrixXd err = acts[n_layers] - yb;
      const double loss = err.squaredNorm() / static_cast<double>(err.size());
      if (!std::isfinite(loss))
        throw NumericalError("diverged at epoch " + std::to_string(epoch + 1) + "; reduce learning rate");
      loss_sum += loss;
      ++batches;

      Eigen::MatrixXd delta = (2.0 / static_cast<double>(err.size())) * err;
      ++adam.step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
      for (std::size_t l = n_layers; l-- > 0;) {
        const Eigen::MatrixXd gw = delta * acts[l].transpose();
        const Eigen::VectorXd gb = delta.rowwise().sum();
        if (l > 0) {
          Eigen::MatrixXd back = model.layers[l].weights.transpose() * delta;
          if (arch.dropout_rate > 0.0) back = back.cwiseProduct(masks[l - 1]);
          delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
        auto& layer = model.layers[l];
        adam.mw[l] = cfg.beta1 * adam.mw[l] + (1.0 - cfg.beta1) * gw;
        adam.vw[l] = cfg.beta2 * adam.vw[l] + (1.0 - cfg.beta2) * gw.cwiseAbs2();
        adam.mb[l] = cfg.beta1 * adam.mb[l] + (1.0 - cfg.beta1) * gb;
        adam.vb[l] = cfg.beta2 * adam.vb[l] + (1.0 - cfg.beta2) * gb.cwiseAbs2();
        layer.weights.array() -= cfg.learning_rate * (adam.mw[l].array() / bc1) /
                                 ((adam.vw[l].array() / bc2).sqrt() + cfg.epsilon);
        layer.bias.array() -= cfg.learning_rate * (adam.mb[l].array() / bc1) /
                              ((adam.vb[l].array() / bc2).sqrt() + cfg.epsilon);
      }
    }
    const double train_loss = standardized_mse(model, x_train, y_train);
    const double val_loss = standardized_mse(model, x_val, y_val);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw NumericalError("diverged at epoch " + std::to_string(epoch + 1) + "; reduce learning rate");
    model.history.batch_loss.push_back(loss_sum / static_cast<double>(batches));
    model.history.train_loss.push_back(train_loss);
    model.history.val_loss.push_back(val_loss);
  }
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// Model files (JSON syntax)

inline nlohmann::json model_to_json(const SurrogateModel& m) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); };
  nlohmann::json j;
  j["arch"] = {{"hidden_widths", m.arch.hidden_widths},
               {"hidden_activation", m.arch.hidden_activation},
               {"output_activation", m.arch.output_activation},
               {"dropout_rate", m.arch.dropout_rate},
               {"input_dim", m.input_dim()},
               {"output_dim", m.output_dim()}};
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : m.layers) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < L.weights.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(L.weights.cols()));
      for (Eigen::Index c = 0; c < L.weights.cols(); ++c) row[static_cast<std::size_t>(c)] = L.weights(r, c);
      rows.push_back(row);
    }
    layers.push_back({{"weights", rows}, {"bias", vec(L.bias)}});
  }
  j["layers"] = layers;
  j["input_norm"] = {{"mean", vec(m.input_norm.mean)}, {"scale", vec(m.input_norm.scale)}};
  j["output_norm"] = {{"mean", vec(m.output_norm.mean)}, {"scale", vec(m.output_norm.scale)}};
  j["history"] = {{"train_loss", m.history.train_loss},
                  {"val_loss", m.history.val_loss},
                  {"batch_loss", m.history.batch_loss},
                  {"initial_train_loss", m.history.initial_train_loss},
                  {"initial_val_loss", m.history.initial_val_loss}};
  j["dataset_fingerprint"] = m.dataset_fingerprint;
  if (m.spec) j["spec"] = spec_to_json(*m.spec);
  if (m.training_box) j["training_box"] = box_to_json(*m.training_box);
  j["validation_rows"] = m.validation_rows;
  return j;
}

inline SurrogateModel model_from_json(const nlohmann::json& j) {
  SurrogateModel m;
  auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  try {
    const auto& a = j.at("arch");
    m.arch.hidden_widths = a.at("hidden_widths").get<std::vector<std::size_t>>();
    m.arch.hidden_activation = a.value("hidden_activation", "relu");
    m.arch.output_activation = a.value("output_activation", "linear");
    m.arch.dropout_rate = a.value("dropout_rate", 0.0);
    for (const auto& L : j.at("layers")) {
      const auto& rows = L.at("weights");
      const auto r = static_cast<Eigen::Index>(rows.size());
      const auto c = r ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
      DenseLayer layer{Eigen::MatrixXd(r, c), vec(L.at("bias"))};
      for (Eigen::Index i = 0; i < r; ++i) {
        const auto row = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != c) throw ParseError("model file: ragged weight matrix");
        for (Eigen::Index k = 0; k < c; ++k) layer.weights(i, k) = row[static_cast<std::size_t>(k)];
      }
      m.layers.push_back(std::move(layer));
    }
    m.input_norm = {vec(j.at("input_norm").at("mean")), vec(j.at("input_norm").at("scale"))};
    m.output_norm = {vec(j.at("output_norm").at("mean")), vec(j.at("output_norm").at("scale"))};
    if (j.contains("history")) {
      const auto& h = j.at("history");
      m.history.train_loss = h.value("train_loss", std::vector<double>{});
      m.history.val_loss = h.value("val_loss", std::vector<double>{});
      m.history.batch_loss = h.value("batch_loss", std::vector<double>{});
      m.history.initial_train_loss = h.value("initial_train_loss", 0.0);
      m.history.initial_val_loss = h.value("initial_val_loss", 0.0);
    }
    m.dataset_fingerprint = j.value("dataset_fingerprint", "");
    if (j.contains("spec")) m.spec = spec_from_json(j.at("spec"));
    if (j.contains("training_box")) m.training_box = box_from_json(j.at("training_box"));
    m.validation_rows = j.value("validation_rows", std::vector<std::size_t>{});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
  m.arch.validate();
  m.validate();
  return m;
}

inline void save_model(const SurrogateModel& m, const std::filesystem::path& path) {
  text::write_file_atomic(path, model_to_json(m).dump(1) + "\n");
}

inline SurrogateModel load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model file '" + path.string() + "': " + e.what());
  }
  return model_from_json(j);
}

}  // namespace nnergm
