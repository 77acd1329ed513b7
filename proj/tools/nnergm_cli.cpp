// nnergm: command-line driver for simulation, training-set generation,
// surrogate training, estimation and report generation.
//
// Exit status: 0 success, 1 usage/input error, 2 numerical failure.

#include <nnergm/closed_form.hpp>
#include <nnergm/dataset.hpp>
#include <nnergm/estimator.hpp>
#include <nnergm/mcmc_mle.hpp>
#include <nnergm/mple.hpp>
#include <nnergm/sampler.hpp>
#include <nnergm/surrogate.hpp>
#include <nnergm/version.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace nnergm;
using nlohmann::json;

namespace {

struct SamplerFlags {
  std::size_t burn_in = 50;
  std::size_t thin = 5;
  std::string init = "empty";

  SamplerConfig resolve() const {
    SamplerConfig cfg;
    cfg.burn_in_sweeps = burn_in;
    cfg.thinning_sweeps = thin;
    cfg.init = parse_init(init);
    return cfg;
  }
};

void add_sampler_flags(CLI::App* sub, SamplerFlags& f) {
  sub->add_option("--burn-in", f.burn_in, "burn-in sweeps (one sweep = one proposal per dyad)");
  sub->add_option("--thin", f.thin, "sweeps between retained samples")->check(CLI::PositiveNumber);
  sub->add_option("--init", f.init, "initial state: empty | random:<p> | file:<path>");
}

ParamVector vector_flag(const std::string& s, const std::string& flag) {
  const auto v = text::parse_real_list(s, flag);
  if (v.empty()) throw InvalidArgument(flag + " needs at least one value");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ParamVector theta_for(const ModelSpec& spec, const std::string& s, const std::string& flag = "--theta") {
  ParamVector theta = vector_flag(s, flag);
  if (static_cast<std::size_t>(theta.size()) != spec.dim())
    throw InvalidArgument(flag + " has " + std::to_string(theta.size()) + " entries, spec has " +
                          std::to_string(spec.dim()) + " terms");
  return theta;
}

Graph load_graph(const std::string& path, const ModelSpec& spec) {
  Graph g = read_edge_list(text::read_file(path));
  if (g.n() != spec.n || g.directed() != spec.directed)
    throw InvalidArgument("graph file '" + path + "' (n=" + std::to_string(g.n()) + ", directed=" +
                          std::to_string(g.directed()) + ") does not match the spec (n=" + std::to_string(spec.n) +
                          ", directed=" + std::to_string(spec.directed) + ")");
  return g;
}

std::vector<StatTerm> parse_terms(const std::string& s) {
  std::vector<StatTerm> out;
  for (auto part : text::split(s, ',')) {
    const auto t = text::trim(part);
    if (!t.empty()) out.push_back(parse_term(t));
  }
  return out;
}

/// The same path with its extension swapped (".json" <-> ".csv").
fs::path sibling(const fs::path& p, const std::string& ext) {
  fs::path q = p;
  q.replace_extension(ext);
  if (q == p) q += ext;
  return q;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? sep : "") + v[k];
  return out;
}

std::string vector_text(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index k = 0; k < v.size(); ++k) out += (k ? "," : "") + text::format_double(v[k]);
  return out;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_output(const fs::path& path, const std::string& contents, std::vector<std::string>& outputs) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  text::write_file_atomic(path, contents);
  outputs.push_back(path.string());
}

PriorBox box_for(const SurrogateModel& model, const std::string& flag) {
  if (!flag.empty()) return PriorBox::parse(flag);
  if (!model.training_box) throw InvalidArgument("model file has no training box; pass --box");
  return *model.training_box;
}

// Everything a command reports back to the manifest writer.
struct RunRecord {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  /// Manifest location; empty when the command wrote no files.
  fs::path manifest;
  /// Arguments appended so a replay resolves to the same values.
  std::vector<std::string> pinned_args;
};

int run(std::vector<std::string> args);

// ---------------------------------------------------------------------------

struct Options {
  std::string spec, theta, box, graph, t_obs, data, model, out, out_dir, timestamp, hidden = "128,64";
  std::string extra, thresholds = "0.02:0.98", theta0, manifest;
  std::size_t L = 0, M = 0, parallelism = 0, epochs = 200, starts = 32, batch_size = 64, grid = 0, se_M = 0;
  std::size_t R = 100, max_iter = 1000, chains = 4, gof_M = 1000, scan_grid = 21;
  double val_frac = 0.2, lr = 1e-3, dropout = 0.2, gamma0 = 1.0;
  std::uint64_t seed = 0;
  bool raw_norm = false;
  SamplerFlags sampler;
};

void cmd_simulate(const Options& o, RunRecord& rec) {
  const auto spec = load_spec(o.spec);
  rec.inputs.push_back(o.spec);
  const auto theta = theta_for(spec, o.theta);
  ChainDiagnostics diag;
  const auto samples = simulate_stats(spec, theta, o.sampler.resolve(), o.M, o.seed, &diag);
  std::string csv = join(spec.labels(), ",") + "\n";
  for (const auto& s : samples) csv += vector_text(s) + "\n";
  if (diag.clamped > 0) warn(std::to_string(diag.clamped) + " proposals hit the acceptance-exponent guard");
  const StatVector mean = sample_mean(samples);
  if (o.out.empty()) {
    std::cout << csv;
    return;
  }
  write_output(o.out, csv, rec.outputs);
  rec.manifest = o.out;
  const auto labels = spec.labels();
  for (std::size_t k = 0; k < labels.size(); ++k)
    std::cout << labels[k] << " mean " << text::format_double(mean[static_cast<Eigen::Index>(k)]) << '\n';
}

void cmd_oracle(const Options& o, RunRecord& rec) {
  const auto spec = load_spec(o.spec);
  rec.inputs.push_back(o.spec);
  const auto mean = exact_mean_stats(spec, theta_for(spec, o.theta));
  std::cout << vector_text(mean) << '\n';
  if (!o.out.empty()) {
    std::string csv = "term,mean\n";
    const auto labels = spec.labels();
    for (std::size_t k = 0; k < labels.size(); ++k)
      csv += labels[k] + ',' + text::format_double(mean[static_cast<Eigen::Index>(k)]) + '\n';
    write_output(o.out, csv, rec.outputs);
    rec.manifest = o.out;
  }
}

void cmd_gen_data(const Options& o, RunRecord& rec) {
  const auto spec = load_spec(o.spec);
  rec.inputs.push_back(o.spec);
  const auto box = PriorBox::parse(o.box);
  std::string stamp = o.timestamp;
  if (stamp.empty()) {
    stamp = utc_now();
    rec.pinned_args = {"--timestamp", stamp};
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = generate_training_set(spec, box, o.L, o.M, o.sampler.resolve(), o.seed, o.parallelism, stamp);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (ds.meta.guarded_rows > 0)
    warn(std::to_string(ds.meta.guarded_rows) + " rows hit the acceptance-exponent guard (degenerate region)");
  if (fs::path(o.out).has_parent_path()) fs::create_directories(fs::path(o.out).parent_path());
  save_dataset(ds, o.out);
  rec.outputs = {o.out, metadata_path(o.out).string()};
  rec.manifest = o.out;
  std::cout << "rows " << ds.size() << ", workers " << effective_parallelism(o.parallelism) << ", "
            << text::format_double(std::round(secs * 100) / 100) << " s\n";
}

void cmd_train(const Options& o, RunRecord& rec) {
  const auto ds = load_dataset(o.data);
  rec.inputs = {o.data, metadata_path(o.data).string()};
  ArchConfig arch;
  arch.hidden_widths.clear();
  for (auto part : text::split(o.hidden, ',')) {
    const auto t = text::trim(part);
    if (t.empty()) continue;
    long long w = 0;
    if (!text::parse_int(t, w) || w <= 0)
      throw InvalidArgument("--hidden needs positive integer widths, got '" + std::string(t) + "'");
    arch.hidden_widths.push_back(static_cast<std::size_t>(w));
  }
  arch.dropout_rate = o.dropout;
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.validation_fraction = o.val_frac;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = train(ds, arch, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_output(o.out, model_to_json(model).dump(1) + "\n", rec.outputs);
  std::string loss = "epoch,train_loss,val_loss,batch_loss\n";
  for (std::size_t e = 0; e < model.history.train_loss.size(); ++e)
    loss += std::to_string(e + 1) + ',' + text::format_double(model.history.train_loss[e]) + ',' +
            text::format_double(model.history.val_loss[e]) + ',' + text::format_double(model.history.batch_loss[e]) + '\n';
  write_output(sibling(o.out, ".loss.csv"), loss, rec.outputs);
  rec.manifest = o.out;

  const auto labels = ds.meta.spec.labels();
  for (std::size_t k = 0; k < ds.stat_dim(); ++k) {
    double sse = 0.0;
    for (auto r : model.validation_rows) {
      const double e = predict(model, ds.thetas[r])[static_cast<Eigen::Index>(k)] - ds.tbars[r][static_cast<Eigen::Index>(k)];
      sse += e * e;
    }
    std::cout << (k < labels.size() ? labels[k] : "stat_" + std::to_string(k)) << " validation RMSE "
              << text::format_double(std::sqrt(sse / static_cast<double>(model.validation_rows.size()))) << '\n';
  }
  std::cout << "final loss train " << text::format_double(model.history.train_loss.back()) << ", validation "
            << text::format_double(model.history.val_loss.back()) << ", "
            << text::format_double(std::round(secs * 100) / 100) << " s\n";
}

void emit_estimate(const Options& o, const EstimateResult& r, json extra, RunRecord& rec) {
  json j = estimate_to_json(r);
  for (auto& [k, v] : extra.items()) j[k] = v;
  for (const auto& w : r.warnings) warn(w);
  if (o.out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  write_output(o.out, j.dump(2) + "\n", rec.outputs);
  write_output(sibling(o.out, ".csv"), estimate_to_csv(r), rec.outputs);
  rec.manifest = o.out;
  std::cout << "theta_hat " << vector_text(r.theta_hat) << '\n';
}

void cmd_estimate(const Options& o, RunRecord& rec) {
  const auto model = load_model(o.model);
  rec.inputs.push_back(o.model);
  StatVector t_obs;
  if (!o.graph.empty()) {
    if (!model.spec) throw InvalidArgument("model file has no spec; pass --t-obs instead of --graph");
    t_obs = compute_stats(*model.spec, load_graph(o.graph, *model.spec));
    rec.inputs.push_back(o.graph);
  } else {
    t_obs = vector_flag(o.t_obs, "--t-obs");
  }
  if (static_cast<std::size_t>(t_obs.size()) != model.output_dim())
    throw InvalidArgument("--t-obs has " + std::to_string(t_obs.size()) + " entries but the model predicts " +
                          std::to_string(model.output_dim()) + " statistics (dimension mismatch)");
  InvertOptions opts;
  opts.standardized = !o.raw_norm;
  opts.parallelism = o.parallelism == 0 ? 1 : o.parallelism;
  auto r = invert(model, t_obs, box_for(model, o.box), o.starts, o.seed, opts);
  if (o.se_M > 0) {
    if (!model.spec) throw InvalidArgument("model file has no spec; standard errors need one");
    const auto se = standard_errors(*model.spec, r.theta_hat, o.sampler.resolve(), o.se_M, task_seed(o.seed, 0));
    r.standard_errors = se.se;
    for (const auto& w : se.warnings) r.warnings.push_back(w);
  }
  const StatVector fitted = model.denormalize_output(model.forward_standardized(model.normalize_input(r.theta_hat)));
  emit_estimate(o, r,
                {{"t_obs", detail::nums(t_obs)}, {"fitted", detail::nums(fitted)},
                 {"dataset_fingerprint", model.dataset_fingerprint}, {"seed", o.seed}},
                rec);
}

void cmd_mple(const Options& o, RunRecord& rec) {
  const auto spec = load_spec(o.spec);
  const auto g = load_graph(o.graph, spec);
  rec.inputs = {o.spec, o.graph};
  const auto m = mple(spec, g);
  auto r = to_estimate(spec, m);
  r.trajectory.clear();
  emit_estimate(o, r, {{"log_pseudolikelihood", m.log_pseudolikelihood}, {"t_obs", detail::nums(compute_stats(spec, g))}},
                rec);
}

void cmd_mcmc_mle(const Options& o, RunRecord& rec) {
  const auto spec = load_spec(o.spec);
  rec.inputs.push_back(o.spec);
  StatVector t_obs;
  ParamVector theta0 = ParamVector::Zero(static_cast<Eigen::Index>(spec.dim()));
  if (!o.graph.empty()) {
    const auto g = load_graph(o.graph, spec);
    rec.inputs.push_back(o.graph);
    t_obs = compute_stats(spec, g);
    if (o.theta0.empty()) {
      try {
        const auto m = mple(spec, g);
        if (m.converged) theta0 = m.theta_hat;
      } catch (const NumericalError&) {
        // start from zero
      }
    }
  } else {
    t_obs = vector_flag(o.t_obs, "--t-obs");
    if (static_cast<std::size_t>(t_obs.size()) != spec.dim())
      throw InvalidArgument("--t-obs has " + std::to_string(t_obs.size()) + " entries, spec has " +
                            std::to_string(spec.dim()) + " terms");
  }
  if (!o.theta0.empty()) theta0 = theta_for(spec, o.theta0, "--theta0");
  RobbinsMonroConfig cfg;
  cfg.R = o.R;
  cfg.max_iterations = o.max_iter;
  cfg.gamma0 = o.gamma0;
  cfg.chains = o.chains;
  cfg.parallelism = o.parallelism == 0 ? 1 : o.parallelism;
  cfg.sampler = o.sampler.resolve();
  auto r = mcmc_mle(spec, t_obs, theta0, cfg, o.seed);
  if (o.se_M > 0) {
    const auto se = standard_errors(spec, r.theta_hat, cfg.sampler, o.se_M, task_seed(o.seed, ~std::uint64_t{1}));
    r.standard_errors = se.se;
    for (const auto& w : se.warnings) r.warnings.push_back(w);
  }
  emit_estimate(o, r, {{"t_obs", detail::nums(t_obs)}, {"seed", o.seed}}, rec);
}

void cmd_gof(const Options& o, RunRecord& rec) {
  const auto spec = load_spec(o.spec);
  const auto g = load_graph(o.graph, spec);
  rec.inputs = {o.spec, o.graph};
  const auto report =
      goodness_of_fit(spec, theta_for(spec, o.theta), g, parse_terms(o.extra), o.sampler.resolve(), o.gof_M, o.seed);
  const auto csv = gof_to_csv(report);
  if (o.out.empty()) {
    std::cout << csv;
    return;
  }
  write_output(o.out, csv, rec.outputs);
  write_output(sibling(o.out, ".json"), gof_to_json(report).dump(2) + "\n", rec.outputs);
  rec.manifest = o.out;
  std::cout << csv;
}

void cmd_scan(const Options& o, RunRecord& rec) {
  const auto model = load_model(o.model);
  rec.inputs.push_back(o.model);
  const auto parts = text::split(o.thresholds, ':');
  if (parts.size() != 2) throw ParseError("--thresholds expects lo:hi");
  const auto map = degeneracy_scan(model, box_for(model, o.box), o.scan_grid,
                                   {text::to_double(parts[0], "--thresholds"), text::to_double(parts[1], "--thresholds")});
  const auto summary = scan_to_json(map);
  if (o.out.empty()) {
    std::cout << scan_to_csv(map);
    return;
  }
  write_output(o.out, scan_to_csv(map), rec.outputs);
  write_output(sibling(o.out, ".json"), summary.dump(2) + "\n", rec.outputs);
  rec.manifest = o.out;
  std::cout << "points " << map.points.size() << ", near-empty " << summary["near_empty"] << ", near-complete "
            << summary["near_complete"] << '\n';
}

// Figure data: predicted vs held-out rows, training rows with predicted and
// theoretical means, and the predicted curve on a grid.
void cmd_figures(const Options& o, RunRecord& rec) {
  if (o.model.empty() && o.data.empty()) throw InvalidArgument("figures needs --model, --data or both");
  std::optional<SurrogateModel> model;
  std::optional<TrainingDataset> ds;
  if (!o.model.empty()) {
    model = load_model(o.model);
    rec.inputs.push_back(o.model);
  }
  if (!o.data.empty()) {
    ds = load_dataset(o.data);
    rec.inputs.push_back(o.data);
  }
  if (model && ds) {
    if (model->input_dim() != ds->param_dim() || model->output_dim() != ds->stat_dim())
      throw InvalidArgument("model and dataset dimensions differ");
    if (!model->dataset_fingerprint.empty() && model->dataset_fingerprint != dataset_fingerprint(*ds))
      warn("dataset fingerprint differs from the one the model was trained on");
  }
  std::optional<ModelSpec> spec;
  if (ds) spec = ds->meta.spec;
  else if (model && model->spec) spec = model->spec;
  std::vector<std::string> labels;
  if (spec) labels = spec->labels();
  else
    for (std::size_t k = 0; k < model->output_dim(); ++k) labels.push_back("stat_" + std::to_string(k));
  std::vector<std::string> theta_cols;
  for (const auto& l : labels) theta_cols.push_back("theta_" + l);
  if (model && theta_cols.size() != model->input_dim()) {
    theta_cols.clear();
    for (std::size_t k = 0; k < model->input_dim(); ++k) theta_cols.push_back("theta_" + std::to_string(k));
  }
  auto with_prefix = [&](const std::string& p) {
    std::vector<std::string> v;
    for (const auto& l : labels) v.push_back(p + l);
    return v;
  };
  auto forward = [&](const ParamVector& th) {
    return model->denormalize_output(model->forward_standardized(model->normalize_input(th)));
  };
  auto theory = [&](const ParamVector& th) -> std::optional<StatVector> {
    if (!spec) return std::nullopt;
    return closed_form_mean(*spec, th);
  };
  const bool has_theory = spec && closed_form_mean(*spec, ParamVector::Zero(static_cast<Eigen::Index>(spec->dim())));
  const fs::path dir = o.out_dir;

  if (model && ds) {
    std::string csv = "row," + join(theta_cols, ",") + "," + join(with_prefix("observed_"), ",") + "," +
                      join(with_prefix("predicted_"), ",") + "\n";
    for (auto r : model->validation_rows) {
      if (r >= ds->size()) throw InvalidArgument("model validation rows exceed the dataset size");
      csv += std::to_string(r) + "," + vector_text(ds->thetas[r]) + "," + vector_text(ds->tbars[r]) + "," +
             vector_text(forward(ds->thetas[r])) + "\n";
    }
    write_output(dir / "predicted_vs_test.csv", csv, rec.outputs);
  }

  if (ds) {
    std::vector<std::size_t> order(ds->size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ds->thetas[a][0] < ds->thetas[b][0]; });
    std::string csv = join(theta_cols, ",") + "," + join(with_prefix("training_"), ",");
    if (model) csv += "," + join(with_prefix("predicted_"), ",");
    if (has_theory) csv += "," + join(with_prefix("theoretical_"), ",");
    csv += "\n";
    for (auto r : order) {
      csv += vector_text(ds->thetas[r]) + "," + vector_text(ds->tbars[r]);
      if (model) csv += "," + vector_text(forward(ds->thetas[r]));
      if (has_theory) csv += "," + vector_text(*theory(ds->thetas[r]));
      csv += "\n";
    }
    write_output(dir / "training_vs_predicted.csv", csv, rec.outputs);
  }

  if (model) {
    const PriorBox box = o.box.empty() ? (model->training_box ? *model->training_box : ds->meta.box) : PriorBox::parse(o.box);
    const std::size_t d = box.dim();
    if (d <= 2) {
      const std::size_t g = o.grid ? o.grid : (d == 1 ? 101 : 11);
      std::string csv = join(theta_cols, ",") + "," + join(with_prefix("predicted_"), ",");
      if (has_theory) csv += "," + join(with_prefix("theoretical_"), ",");
      csv += "\n";
      const std::size_t count = d == 1 ? g : g * g;
      for (std::size_t p = 0; p < count; ++p) {
        ParamVector th(static_cast<Eigen::Index>(d));
        std::size_t rem = p;
        for (std::size_t k = d; k-- > 0;) {
          const auto i = rem % g;
          rem /= g;
          const auto kk = static_cast<Eigen::Index>(k);
          th[kk] = g == 1 ? 0.5 * (box.lower[kk] + box.upper[kk])
                          : box.lower[kk] + (box.upper[kk] - box.lower[kk]) * static_cast<double>(i) / static_cast<double>(g - 1);
        }
        csv += vector_text(th) + "," + vector_text(forward(th));
        if (has_theory) csv += "," + vector_text(*theory(th));
        csv += "\n";
      }
      write_output(dir / "curve.csv", csv, rec.outputs);
    } else {
      warn("curve.csv is only written for models with one or two parameters");
    }
  }
  rec.manifest = dir / "figures";
  for (const auto& f : rec.outputs) std::cout << f << '\n';
}

void cmd_stats(const Options& o, RunRecord& rec) {
  const auto spec = load_spec(o.spec);
  const auto t = compute_stats(spec, load_graph(o.graph, spec));
  rec.inputs = {o.spec, o.graph};
  const auto labels = spec.labels();
  std::string csv = "term,value\n";
  for (std::size_t k = 0; k < labels.size(); ++k)
    csv += labels[k] + ',' + text::format_double(t[static_cast<Eigen::Index>(k)]) + '\n';
  std::cout << csv;
  if (!o.out.empty()) {
    write_output(o.out, csv, rec.outputs);
    rec.manifest = o.out;
  }
}

int cmd_replay(const Options& o) {
  json m;
  try {
    m = json::parse(text::read_file(o.manifest));
  } catch (const json::exception& e) {
    throw ParseError("manifest '" + o.manifest + "': " + e.what());
  }
  std::vector<std::string> args;
  fs::path cwd;
  try {
    args = m.at("argv").get<std::vector<std::string>>();
    cwd = m.at("cwd").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError("manifest '" + o.manifest + "': " + e.what());
  }
  if (!o.out.empty()) {
    const std::string target = fs::absolute(o.out).string();
    bool replaced = false;
    for (std::size_t k = 0; k < args.size(); ++k) {
      if ((args[k] == "--out" || args[k] == "--out-dir") && k + 1 < args.size()) {
        args[k + 1] = target;
        replaced = true;
      } else if (args[k].starts_with("--out=") || args[k].starts_with("--out-dir=")) {
        args[k] = args[k].substr(0, args[k].find('=') + 1) + target;
        replaced = true;
      }
    }
    if (!replaced) throw InvalidArgument("manifest run has no --out to redirect");
  }
  const fs::path here = fs::current_path();
  fs::current_path(cwd);
  int status = 1;
  try {
    status = run(args);
  } catch (...) {
    fs::current_path(here);
    throw;
  }
  fs::current_path(here);
  return status;
}

void write_manifest(const std::string& name, const std::vector<std::string>& args, const RunRecord& rec,
                    const json& options, double seconds) {
  if (rec.manifest.empty()) return;
  std::vector<std::string> argv = args;
  argv.insert(argv.end(), rec.pinned_args.begin(), rec.pinned_args.end());
  json j;
  j["subcommand"] = name;
  j["argv"] = argv;
  j["options"] = options;
  for (std::size_t k = 0; k + 1 < rec.pinned_args.size(); k += 2) j["options"][rec.pinned_args[k].substr(2)] = rec.pinned_args[k + 1];
  j["cwd"] = fs::current_path().string();
  j["inputs"] = rec.inputs;
  j["outputs"] = rec.outputs;
  j["version"] = kVersion;
  j["wall_clock_seconds"] = seconds;
  fs::path path = rec.manifest;
  path += ".manifest.json";
  text::write_file_atomic(path, j.dump(2) + "\n");
}

// Resolved option values of one subcommand, defaults included.
json resolved_options(const CLI::App* sub) {
  json j = json::object();
  for (const auto* opt : sub->get_options()) {
    const auto name = opt->get_name(false, true);
    if (name == "-h,--help" || name.empty()) continue;
    const auto key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
    if (opt->count() > 0) j[key] = opt->results().size() == 1 ? json(opt->results().front()) : json(opt->results());
    else if (!opt->get_default_str().empty()) j[key] = opt->get_default_str();
    else if (opt->get_type_size() == 0) j[key] = false;
  }
  return j;
}

int run(std::vector<std::string> args) {
  CLI::App app{"ERGM estimation with neural surrogates", "nnergm"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", kVersion);
  Options o;

  auto req_seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "master seed (required)")->required(); };

  auto* simulate = app.add_subcommand("simulate", "simulate statistics from one chain");
  simulate->add_option("--spec", o.spec, "model spec file")->required();
  simulate->add_option("--theta", o.theta, "comma-separated parameters")->required();
  simulate->add_option("--M", o.M, "number of retained samples")->required()->check(CLI::PositiveNumber);
  req_seed(simulate);
  add_sampler_flags(simulate, o.sampler);
  simulate->add_option("--out", o.out, "statistics CSV (default: stdout)");

  auto* oracle = app.add_subcommand("oracle", "exact mean statistics by enumeration (tiny graphs)");
  oracle->add_option("--spec", o.spec, "model spec file")->required();
  oracle->add_option("--theta", o.theta, "comma-separated parameters")->required();
  oracle->add_option("--out", o.out, "optional CSV");

  auto* gen = app.add_subcommand("gen-data", "generate a training set");
  gen->add_option("--spec", o.spec, "model spec file")->required();
  gen->add_option("--box", o.box, "parameter box lo:hi[,lo:hi...]")->required();
  gen->add_option("--L", o.L, "number of parameter draws")->required()->check(CLI::PositiveNumber);
  gen->add_option("--M", o.M, "networks per draw")->required()->check(CLI::PositiveNumber);
  req_seed(gen);
  gen->add_option("--parallelism", o.parallelism, "worker threads (0 = all cores)");
  gen->add_option("--timestamp", o.timestamp, "creation time recorded in the metadata (default: now)");
  add_sampler_flags(gen, o.sampler);
  gen->add_option("--out", o.out, "dataset CSV; metadata goes to <out>.meta.json")->required();

  auto* trn = app.add_subcommand("train", "train the surrogate network");
  trn->add_option("--data", o.data, "dataset CSV from gen-data")->required();
  trn->add_option("--epochs", o.epochs, "training epochs")->check(CLI::PositiveNumber);
  trn->add_option("--val-frac", o.val_frac, "validation fraction");
  trn->add_option("--batch-size", o.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
  trn->add_option("--lr", o.lr, "learning rate");
  trn->add_option("--hidden", o.hidden, "hidden layer widths");
  trn->add_option("--dropout", o.dropout, "dropout rate");
  req_seed(trn);
  trn->add_option("--out", o.out, "model file; losses go to <stem>.loss.csv")->required();

  auto* est = app.add_subcommand("estimate", "estimate theta by inverting the surrogate");
  est->add_option("--model", o.model, "model file")->required();
  auto* est_t = est->add_option("--t-obs", o.t_obs, "observed statistics, comma-separated");
  auto* est_g = est->add_option("--graph", o.graph, "observed graph (edge list)");
  est_t->excludes(est_g);
  est->add_option("--starts", o.starts, "local searches")->check(CLI::PositiveNumber);
  est->add_option("--box", o.box, "search box (default: the training box)");
  est->add_flag("--raw-norm", o.raw_norm, "unstandardized misfit");
  est->add_option("--se-M", o.se_M, "simulate this many networks for standard errors (0 = skip)");
  est->add_option("--parallelism", o.parallelism, "threads for the starts");
  req_seed(est);
  add_sampler_flags(est, o.sampler);
  est->add_option("--out", o.out, "report JSON (plus .csv)");

  auto* mp = app.add_subcommand("mple", "maximum pseudolikelihood estimate");
  mp->add_option("--spec", o.spec, "model spec file")->required();
  mp->add_option("--graph", o.graph, "observed graph")->required();
  mp->add_option("--out", o.out, "report JSON (plus .csv)");

  auto* mc = app.add_subcommand("mcmc-mle", "stochastic-approximation MCMC MLE");
  mc->add_option("--spec", o.spec, "model spec file")->required();
  auto* mc_g = mc->add_option("--graph", o.graph, "observed graph");
  auto* mc_t = mc->add_option("--t-obs", o.t_obs, "observed statistics");
  mc_t->excludes(mc_g);
  mc->add_option("--theta0", o.theta0, "starting point (default: MPLE, else zero)");
  mc->add_option("--R", o.R, "draws per iteration")->check(CLI::PositiveNumber);
  mc->add_option("--max-iter", o.max_iter, "iteration cap")->check(CLI::PositiveNumber);
  mc->add_option("--gamma0", o.gamma0, "initial gain");
  mc->add_option("--chains", o.chains, "independent chains per iteration")->check(CLI::PositiveNumber);
  mc->add_option("--parallelism", o.parallelism, "threads for the chains");
  mc->add_option("--se-M", o.se_M, "simulate this many networks for standard errors (0 = skip)");
  req_seed(mc);
  add_sampler_flags(mc, o.sampler);
  mc->add_option("--out", o.out, "report JSON (plus .csv)");

  auto* gof = app.add_subcommand("gof", "goodness-of-fit z-scores at theta");
  gof->add_option("--spec", o.spec, "model spec file")->required();
  gof->add_option("--theta", o.theta, "parameters")->required();
  gof->add_option("--graph", o.graph, "observed graph")->required();
  gof->add_option("--extra", o.extra, "extra terms, comma-separated");
  gof->add_option("--M", o.gof_M, "simulated networks");
  req_seed(gof);
  add_sampler_flags(gof, o.sampler);
  gof->add_option("--out", o.out, "report CSV (plus .json)");

  auto* scan = app.add_subcommand("scan", "degeneracy map from the surrogate");
  scan->add_option("--model", o.model, "model file")->required();
  scan->add_option("--grid", o.scan_grid, "grid points per dimension");
  scan->add_option("--thresholds", o.thresholds, "density thresholds lo:hi");
  scan->add_option("--box", o.box, "scan box (default: the training box)");
  scan->add_option("--out", o.out, "map CSV (plus .json summary)");

  auto* fig = app.add_subcommand("figures", "figure data as CSV");
  fig->add_option("--model", o.model, "model file");
  fig->add_option("--data", o.data, "dataset CSV");
  fig->add_option("--grid", o.grid, "curve grid points per dimension");
  fig->add_option("--box", o.box, "curve box (default: the training box)");
  fig->add_option("--out-dir", o.out_dir, "output directory")->required();

  auto* st = app.add_subcommand("stats", "statistics of a graph");
  st->add_option("--spec", o.spec, "model spec file")->required();
  st->add_option("--graph", o.graph, "graph")->required();
  st->add_option("--out", o.out, "optional CSV");

  auto* rep = app.add_subcommand("replay", "re-run a manifest");
  rep->add_option("--manifest", o.manifest, "manifest file")->required();
  rep->add_option("--out", o.out, "write the primary output here instead");

  std::vector<const char*> argv{"nnergm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (rep->parsed()) return cmd_replay(o);
  if (est->parsed() && o.t_obs.empty() && o.graph.empty()) throw InvalidArgument("estimate needs --t-obs or --graph");
  if (mc->parsed() && o.t_obs.empty() && o.graph.empty()) throw InvalidArgument("mcmc-mle needs --t-obs or --graph");

  CLI::App* sub = app.get_subcommands().front();
  RunRecord rec;
  const auto t0 = std::chrono::steady_clock::now();
  if (sub == simulate) cmd_simulate(o, rec);
  else if (sub == oracle) cmd_oracle(o, rec);
  else if (sub == gen) cmd_gen_data(o, rec);
  else if (sub == trn) cmd_train(o, rec);
  else if (sub == est) cmd_estimate(o, rec);
  else if (sub == mp) cmd_mple(o, rec);
  else if (sub == mc) cmd_mcmc_mle(o, rec);
  else if (sub == gof) cmd_gof(o, rec);
  else if (sub == scan) cmd_scan(o, rec);
  else if (sub == fig) cmd_figures(o, rec);
  else if (sub == st) cmd_stats(o, rec);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(sub->get_name(), args, rec, resolved_options(sub), secs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(std::vector<std::string>(argv + 1, argv + argc));
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
