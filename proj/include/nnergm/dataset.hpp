#pragma once

// One-shot training design: L parameter vectors drawn uniformly on a box,
// each paired with the mean statistics of M simulated networks. Rows are
// simulated independently, in parallel, with per-row seeds derived from the
// master seed, so the dataset is bit-identical for any worker count.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nnergm/error.hpp"
#include "nnergm/graph.hpp"
#include "nnergm/model_spec.hpp"
#include "nnergm/parallel.hpp"
#include "nnergm/rng.hpp"
#include "nnergm/sampler.hpp"
#include "nnergm/text.hpp"

namespace nnergm {

struct PriorBox {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(lower.size()); }

  void validate() const {
    if (lower.size() != upper.size() || lower.size() == 0) throw InvalidArgument("box bounds must have equal, positive length");
    for (Eigen::Index k = 0; k < lower.size(); ++k)
      if (!(lower[k] < upper[k]) || !std::isfinite(lower[k]) || !std::isfinite(upper[k]))
        throw InvalidArgument("box needs finite lower < upper in every coordinate");
  }

  bool contains(const ParamVector& theta) const {
    return theta.size() == lower.size() && (theta.array() >= lower.array()).all() &&
           (theta.array() <= upper.array()).all();
  }

  ParamVector project(const ParamVector& theta) const { return theta.cwiseMax(lower).cwiseMin(upper); }

  /// Parses "lo:hi[,lo:hi...]".
  static PriorBox parse(std::string_view s) {
    PriorBox box;
    std::vector<double> lo, hi;
    for (auto part : text::split(s, ',')) {
      const auto bounds = text::split(part, ':');
      if (bounds.size() != 2) throw ParseError("box entry '" + std::string(part) + "' is not lo:hi");
      lo.push_back(text::to_double(bounds[0], "box"));
      hi.push_back(text::to_double(bounds[1], "box"));
    }
    box.lower = Eigen::Map<Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
    box.upper = Eigen::Map<Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    box.validate();
    return box;
  }

  static PriorBox uniform(std::size_t d, double lo, double hi) {
    return {Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), lo),
            Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), hi)};
  }
};

inline nlohmann::json box_to_json(const PriorBox& box) {
  return {{"lower", std::vector<double>(box.lower.begin(), box.lower.end())},
          {"upper", std::vector<double>(box.upper.begin(), box.upper.end())}};
}

inline PriorBox box_from_json(const nlohmann::json& j) {
  const auto lo = j.at("lower").get<std::vector<double>>();
  const auto hi = j.at("upper").get<std::vector<double>>();
  PriorBox box{Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size())),
               Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()))};
  box.validate();
  return box;
}

// ---------------------------------------------------------------------------
// Sampler configuration documents

/// "empty", "random:<p>", or "file:<path>" (the graph is read from the path).
inline InitState parse_init(std::string_view s) {
  if (s == "empty") return InitEmpty{};
  if (s.starts_with("random:")) {
    const double p = text::to_double(s.substr(7), "--init random:<p>");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("--init random:<p> needs 0 <= p <= 1");
    return InitRandom{p};
  }
  if (s.starts_with("file:")) return InitGiven{read_edge_list(text::read_file(std::string(s.substr(5))))};
  throw ParseError("unknown --init value '" + std::string(s) + "' (expected empty|random:<p>|file:<path>)");
}

inline nlohmann::json sampler_to_json(const SamplerConfig& cfg) {
  nlohmann::json j;
  j["burn_in_sweeps"] = cfg.burn_in_sweeps;
  j["thinning_sweeps"] = cfg.thinning_sweeps;
  std::visit(
      [&](const auto& init) {
        using T = std::decay_t<decltype(init)>;
        if constexpr (std::is_same_v<T, InitEmpty>) j["init"] = "empty";
        else if constexpr (std::is_same_v<T, InitRandom>) j["init"] = "random:" + text::format_double(init.p);
        else j["init"] = {{"edge_list", write_edge_list(init.graph)}};
      },
      cfg.init);
  return j;
}

inline SamplerConfig sampler_from_json(const nlohmann::json& j) {
  SamplerConfig cfg;
  cfg.burn_in_sweeps = j.at("burn_in_sweeps").get<std::size_t>();
  cfg.thinning_sweeps = j.at("thinning_sweeps").get<std::size_t>();
  const auto& init = j.at("init");
  if (init.is_string()) cfg.init = parse_init(init.get<std::string>());
  else cfg.init = InitGiven{read_edge_list(init.at("edge_list").get<std::string>())};
  return cfg;
}

// ---------------------------------------------------------------------------

struct DatasetMetadata {
  ModelSpec spec;
  std::size_t L = 0;
  std::size_t M = 0;
  PriorBox box;
  std::uint64_t master_seed = 0;
  SamplerConfig sampler;
  std::string created;
  /// Rows whose chain hit the acceptance-exponent guard at least once.
  std::size_t guarded_rows = 0;
};

struct TrainingDataset {
  std::vector<ParamVector> thetas;
  std::vector<StatVector> tbars;
  DatasetMetadata meta;

  std::size_t size() const noexcept { return thetas.size(); }
  std::size_t param_dim() const { return thetas.empty() ? 0 : static_cast<std::size_t>(thetas.front().size()); }
  std::size_t stat_dim() const { return tbars.empty() ? 0 : static_cast<std::size_t>(tbars.front().size()); }
};

inline TrainingDataset generate_training_set(const ModelSpec& spec, const PriorBox& box, std::size_t L,
                                             std::size_t M, const SamplerConfig& sampler,
                                             std::uint64_t master_seed, std::size_t max_parallelism,
                                             std::string created = {}) {
  spec.validate();
  box.validate();
  if (L < 1 || M < 1) throw InvalidArgument("L and M must be >= 1");
  if (box.dim() != spec.dim())
    throw InvalidArgument("box has " + std::to_string(box.dim()) + " coordinates, spec has " +
                          std::to_string(spec.dim()) + " terms");

  TrainingDataset ds;
  ds.meta = {spec, L, M, box, master_seed, sampler, std::move(created), 0};
  Engine design = make_engine(design_seed(master_seed));
  ds.thetas.resize(L);
  for (auto& theta : ds.thetas) {
    theta.resize(static_cast<Eigen::Index>(spec.dim()));
    for (Eigen::Index k = 0; k < theta.size(); ++k) theta[k] = uniform(design, box.lower[k], box.upper[k]);
  }

  ds.tbars.resize(L);
  std::vector<char> guarded(L, 0);
  parallel_for(L, effective_parallelism(max_parallelism), [&](std::size_t row) {
    StatVector sum;
    const auto diag =
        run_chain(spec, ds.thetas[row], sampler, M, task_seed(master_seed, row), [&](const Graph&, const StatVector& t) {
          if (sum.size() == 0) sum = t;
          else sum += t;
        });
    ds.tbars[row] = sum / static_cast<double>(M);
    guarded[row] = diag.clamped > 0;
  });
  for (char g : guarded) ds.meta.guarded_rows += static_cast<std::size_t>(g);
  return ds;
}

// ---------------------------------------------------------------------------
// Files: CSV rows plus a JSON metadata sidecar.

inline std::string dataset_to_csv(const TrainingDataset& ds) {
  const std::size_t p = ds.param_dim(), d = ds.stat_dim();
  std::string out;
  for (std::size_t k = 0; k < p; ++k) out += (k ? ",theta_" : "theta_") + std::to_string(k);
  for (std::size_t k = 0; k < d; ++k) out += ",stat_" + std::to_string(k);
  out += '\n';
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t k = 0; k < p; ++k) {
      if (k) out += ',';
      out += text::format_double(ds.thetas[r][static_cast<Eigen::Index>(k)]);
    }
    for (std::size_t k = 0; k < d; ++k) out += ',' + text::format_double(ds.tbars[r][static_cast<Eigen::Index>(k)]);
    out += '\n';
  }
  return out;
}

inline std::string dataset_fingerprint(const TrainingDataset& ds) { return text::hex64(text::fnv1a64(dataset_to_csv(ds))); }

inline nlohmann::json metadata_to_json(const DatasetMetadata& m, const std::string& fingerprint) {
  nlohmann::json j;
  j["spec"] = spec_to_json(m.spec);
  j["labels"] = m.spec.labels();
  j["n"] = m.spec.n;
  j["directed"] = m.spec.directed;
  j["L"] = m.L;
  j["M"] = m.M;
  j["box"] = box_to_json(m.box);
  j["master_seed"] = m.master_seed;
  j["sampler"] = sampler_to_json(m.sampler);
  j["created"] = m.created;
  j["guarded_rows"] = m.guarded_rows;
  j["csv_fingerprint"] = fingerprint;
  return j;
}

inline DatasetMetadata metadata_from_json(const nlohmann::json& j) {
  DatasetMetadata m;
  m.spec = spec_from_json(j.at("spec"));
  m.L = j.at("L").get<std::size_t>();
  m.M = j.at("M").get<std::size_t>();
  m.box = box_from_json(j.at("box"));
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.sampler = sampler_from_json(j.at("sampler"));
  m.created = j.value("created", "");
  m.guarded_rows = j.value("guarded_rows", std::size_t{0});
  return m;
}

inline TrainingDataset dataset_from_csv(std::string_view csv, std::size_t param_dim) {
  auto rows = text::lines(csv);
  std::erase_if(rows, [](const std::string& l) { return text::trim(l).empty(); });
  if (rows.empty()) throw ParseError("dataset CSV is empty");
  const auto header = text::split(rows[0], ',');
  if (header.size() <= param_dim) throw ParseError("dataset CSV header has too few columns");
  for (std::size_t k = 0; k < header.size(); ++k) {
    const std::string want = k < param_dim ? "theta_" + std::to_string(k) : "stat_" + std::to_string(k - param_dim);
    if (text::trim(header[k]) != want) throw ParseError("dataset CSV header: expected '" + want + "'");
  }
  TrainingDataset ds;
  const auto d = static_cast<Eigen::Index>(header.size() - param_dim);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cells = text::split(rows[r], ',');
    if (cells.size() != header.size()) throw ParseError("dataset CSV line " + std::to_string(r + 1) + ": wrong column count");
    ParamVector theta(static_cast<Eigen::Index>(param_dim));
    StatVector tbar(d);
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const double v = text::to_double(cells[k], "dataset CSV line " + std::to_string(r + 1));
      if (k < param_dim) theta[static_cast<Eigen::Index>(k)] = v;
      else tbar[static_cast<Eigen::Index>(k - param_dim)] = v;
    }
    ds.thetas.push_back(theta);
    ds.tbars.push_back(tbar);
  }
  return ds;
}

inline std::filesystem::path metadata_path(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".meta.json";
  return p;
}

inline void save_dataset(const TrainingDataset& ds, const std::filesystem::path& csv_path) {
  const std::string csv = dataset_to_csv(ds);
  text::write_file_atomic(csv_path, csv);
  text::write_file_atomic(metadata_path(csv_path),
                          metadata_to_json(ds.meta, text::hex64(text::fnv1a64(csv))).dump(2) + "\n");
}

inline TrainingDataset load_dataset(const std::filesystem::path& csv_path) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text::read_file(metadata_path(csv_path)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("dataset metadata '" + metadata_path(csv_path).string() + "': " + e.what());
  }
  DatasetMetadata m;
  try {
    m = metadata_from_json(meta);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("dataset metadata '" + metadata_path(csv_path).string() + "': " + e.what());
  }
  TrainingDataset ds = dataset_from_csv(text::read_file(csv_path), m.spec.dim());
  if (ds.size() != m.L) throw ParseError("dataset has " + std::to_string(ds.size()) + " rows, metadata says L=" + std::to_string(m.L));
  if (ds.stat_dim() != m.spec.dim()) throw ParseError("dataset statistic columns do not match the spec");
  ds.meta = std::move(m);
  return ds;
}

}  // namespace nnergm
