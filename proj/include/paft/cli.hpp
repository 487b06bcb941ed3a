#ifndef PAFT_CLI_HPP
#define PAFT_CLI_HPP

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "paft/char_tree.hpp"
#include "paft/error.hpp"
#include "paft/fit.hpp"
#include "paft/inference.hpp"
#include "paft/json_io.hpp"
#include "paft/residual_dist.hpp"
#include "paft/sim.hpp"
#include "paft/trial_data.hpp"

namespace paft {

inline constexpr const char* tool_version = "0.1.0";

enum exit_code : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numerical = 3 };

namespace cli {

struct fit_options {
  std::string data;
  bool unadjusted = false;
  std::vector<double> init;
  double eta = 0.01;
  int stages = 5;
  std::string optimizer = "nm";
  std::string out;
};

inline void add_fit_options(CLI::App& app, fit_options& o, const std::string& default_optimizer) {
  o.optimizer = default_optimizer;
  app.add_option("--data", o.data, "trial CSV")->required();
  app.add_option("--init", o.init, "initial alpha,tau[,beta...]")->delimiter(',');
  app.add_option("--eta", o.eta, "sigmoid sharpness")->check(CLI::PositiveNumber);
  app.add_option("--stages", o.stages, "maximum optimization stages")->check(CLI::PositiveNumber);
  app.add_option("--optimizer", o.optimizer, "nm or qn")->check(CLI::IsMember({"nm", "qn"}));
  app.add_option("--out", o.out, "output JSON (stdout when omitted)");
}

inline FitConfig fit_config(const fit_options& o) {
  FitConfig cfg;
  cfg.eta = o.eta;
  cfg.max_stages = o.stages;
  cfg.optimizer = OptimizerConfig::defaults(o.optimizer == "qn" ? optimizer_method::quasi_newton
                                                                 : optimizer_method::nelder_mead);
  return cfg;
}

inline PaftParams params_from_list(const std::vector<double>& v, std::size_t dim) {
  if (v.size() != 2 && v.size() != 2 + dim)
    throw usage_error("--init needs 2 or " + std::to_string(2 + dim) + " values, got " + std::to_string(v.size()));
  PaftParams p{v[0], v[1], std::vector<double>(dim, 0.0)};
  if (v.size() == 2 + dim) p.beta.assign(v.begin() + 2, v.end());
  return p;
}

/// Explicit --init, else the default unadjusted start; for adjusted models
/// without --init, (alpha, tau) come from an unadjusted fit and beta = 0.
inline PaftParams resolve_init(const TrialDataset& ds, const fit_options& o, const FitConfig& cfg) {
  if (!o.init.empty()) return params_from_list(o.init, ds.dim());
  const TrialDataset bare = without_covariates(ds);
  PaftParams p = default_unadjusted_init(bare);
  if (ds.dim() > 0) {
    p = fit_multi_stage(bare, p, cfg).params;
    p.beta.assign(ds.dim(), 0.0);
  }
  return p;
}

inline json manifest(const std::string& command, const std::vector<std::string>& inputs, json config) {
  json m;
  m["command"] = command;
  m["tool_version"] = tool_version;
  m["inputs"] = inputs;
  m["config"] = std::move(config);
  return m;
}

inline json fit_config_json(const FitConfig& cfg, const PaftParams& init, const std::vector<std::string>& names) {
  json j;
  j["eta"] = cfg.eta;
  j["max_stages"] = cfg.max_stages;
  j["bandwidth_tol"] = cfg.bandwidth_tol;
  j["optimizer"] = to_string(cfg.optimizer.method);
  j["max_iter"] = cfg.optimizer.max_iter;
  j["f_tol"] = cfg.optimizer.f_tol;
  j["x_tol"] = cfg.optimizer.x_tol;
  j["initial_step"] = cfg.optimizer.initial_step;
  j["init"] = params_to_json(init, names);
  return j;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw data_error("cannot write " + path);
  f << text;
  if (!f) throw data_error("write failed for " + path);
}

/// Writes the primary artifact to `path` (or `out` when empty). Wall time is
/// kept out of the artifact so reruns are byte-identical: it goes to the
/// sidecar <path>.manifest.json, or to the error stream for stdout output.
inline void emit(const std::string& path, const std::string& text, const json& mf, double seconds, std::ostream& out,
                 std::ostream& err) {
  if (path.empty()) {
    out << text;
    err << "wall_time_seconds " << seconds << '\n';
    return;
  }
  write_file(path, text);
  json side = mf;
  side["wall_time_seconds"] = seconds;
  write_file(path + ".manifest.json", side.dump(2) + "\n");
}

using steady = std::chrono::steady_clock;

inline double since(steady::time_point t0) { return std::chrono::duration<double>(steady::now() - t0).count(); }

inline void cmd_fit(const fit_options& o, std::ostream& out, std::ostream& err) {
  const auto t0 = steady::now();
  TrialDataset ds = load_dataset_file(o.data);
  if (o.unadjusted) ds = without_covariates(ds);
  const FitConfig cfg = fit_config(o);
  const PaftParams init = resolve_init(ds, o, cfg);
  const FitResult fit = fit_multi_stage(ds, init, cfg);

  json j = fit_to_json(fit, ds.covariate_names);
  json cj = fit_config_json(cfg, init, ds.covariate_names);
  cj["unadjusted"] = o.unadjusted;
  j["manifest"] = manifest("fit", {o.data}, std::move(cj));
  for (const auto& w : fit.warnings) err << "warning: " << w << '\n';
  emit(o.out, j.dump(2) + "\n", j["manifest"], since(t0), out, err);
}

struct resample_options {
  fit_options fit;
  std::size_t count = 500;
  double level = 0.95;
  std::uint64_t seed = 1;
};

inline void cmd_bootstrap(const resample_options& o, std::ostream& out, std::ostream& err) {
  const auto t0 = steady::now();
  TrialDataset ds = load_dataset_file(o.fit.data);
  if (o.fit.unadjusted) ds = without_covariates(ds);
  const FitConfig cfg = fit_config(o.fit);
  const PaftParams init = resolve_init(ds, o.fit, cfg);
  const FitResult point = fit_multi_stage(ds, init, cfg);
  const BootstrapResult r = bootstrap_ci(ds, point, cfg, o.count, o.level, o.seed);

  json j = bootstrap_to_json(r);
  json cj = fit_config_json(cfg, init, ds.covariate_names);
  cj["unadjusted"] = o.fit.unadjusted;
  cj["B"] = o.count;
  cj["level"] = o.level;
  cj["seed"] = o.seed;
  cj["bandwidth_trace"] = [&] {
    json t = json::array();
    for (const auto& s : point.stages) t.push_back(s.bandwidth);
    return t;
  }();
  j["manifest"] = manifest("bootstrap", {o.fit.data}, std::move(cj));
  emit(o.fit.out, j.dump(2) + "\n", j["manifest"], since(t0), out, err);
}

inline void cmd_permute(const resample_options& o, std::ostream& out, std::ostream& err) {
  const auto t0 = steady::now();
  const TrialDataset ds = without_covariates(load_dataset_file(o.fit.data));
  const FitConfig cfg = fit_config(o.fit);
  std::optional<PaftParams> init;
  if (!o.fit.init.empty()) init = params_from_list(o.fit.init, 0);
  const PermutationResult r = permutation_test(ds, init, cfg, o.count, o.seed);

  json j = permutation_to_json(r);
  json cj = fit_config_json(cfg, init.value_or(default_unadjusted_init(ds, cfg.eta)), {});
  cj["init_rule"] = init ? "given" : "grid start per dataset";
  cj["B"] = o.count;
  cj["seed"] = o.seed;
  j["manifest"] = manifest("permute", {o.fit.data}, std::move(cj));
  emit(o.fit.out, j.dump(2) + "\n", j["manifest"], since(t0), out, err);
}

struct characterize_options {
  std::string data;
  std::string fit;
  TreeConfig tree;
  std::string out_dir = ".";
};

inline void cmd_characterize(const characterize_options& o, std::ostream& err) {
  const auto t0 = steady::now();
  const TrialDataset ds = load_dataset_file(o.data);
  std::ifstream fin(o.fit, std::ios::binary);
  if (!fin) throw data_error("cannot open " + o.fit);
  json fj;
  try {
    fj = json::parse(fin);
  } catch (const json::parse_error& e) {
    throw data_error(o.fit + ": " + e.what());
  }
  std::vector<std::string> names;
  const PaftParams p = params_from_json(fj, &names);
  if (p.beta.size() != ds.dim())
    throw usage_error("fit has " + std::to_string(p.beta.size()) + " covariates, data has " +
                      std::to_string(ds.dim()));
  if (!names.empty() && names != ds.covariate_names) throw usage_error("fit covariate names differ from data header");
  if (!(p.tau > 0.0)) throw usage_error("fitted tau must be > 0");

  const BenefitAnalysis a = score_subjects(ds, p);
  const RegressionTree tree = fit_benefit_tree(ds, a.scores, o.tree);
  const auto leaves = summarize_leaves(tree, ds, a.scores);

  namespace fs = std::filesystem;
  fs::create_directories(o.out_dir);
  auto path = [&](const char* f) { return (fs::path(o.out_dir) / f).string(); };

  std::ostringstream s1, s2, s3;
  write_scores_csv(ds, tree, leaves, a.scores, s1);
  write_leaf_csv(leaves, s2);
  write_km_csv(a.curve, s3);
  write_file(path("p_hat.csv"), s1.str());
  write_file(path("leaves.csv"), s2.str());
  write_file(path("km_residuals.csv"), s3.str());

  json cj;
  cj["fit"] = params_to_json(p, ds.covariate_names);
  cj["min_leaf"] = o.tree.min_leaf;
  cj["max_depth"] = o.tree.max_depth;
  cj["cp"] = o.tree.cp;
  json tj;
  tj["schema_version"] = schema_version;
  tj["tree"] = tree_to_json(tree, ds.covariate_names);
  tj["artifacts"] = {"p_hat.csv", "leaves.csv", "km_residuals.csv"};
  tj["manifest"] = manifest("characterize", {o.data, o.fit}, std::move(cj));
  std::size_t defective = 0;
  for (const auto& s : a.scores) defective += s.tail_defective ? 1 : 0;
  if (defective > 0) err << "warning: " << defective << " subjects have a defective residual tail\n";
  emit(path("tree.json"), tj.dump(2) + "\n", tj["manifest"], since(t0), std::cout, err);
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw data_error(path + ": " + e.what());
  }
}

inline void cmd_simulate(const std::string& design_path, std::uint64_t seed, const std::string& out_path,
                         std::ostream& out, std::ostream& err) {
  const auto t0 = steady::now();
  SimDesign d = design_from_json(read_json_file(design_path));
  const bool calibrated = !d.censor_upper;
  if (calibrated) d.censor_upper = calibrate_censoring(d, d.target_censor_fraction, seed);
  const TrialDataset ds = generate_trial(d, seed, 0);
  std::ostringstream s;
  serialize(ds, s);

  json cj;
  cj["design"] = design_to_json(d);
  cj["censor_upper_calibrated"] = calibrated;
  cj["seed"] = seed;
  emit(out_path, s.str(), manifest("simulate", {design_path}, std::move(cj)), since(t0), out, err);
}

struct replicate_options {
  std::string design;
  std::size_t reps = 100;
  std::vector<double> init{1.0, 1.0, 1.0, 1.0};
  std::string strategy = "single";
  int stages = 3;
  double eta = 0.01;
  std::string optimizer = "nm";
  std::uint64_t seed = 1;
  std::string out;
  std::string csv;
};

inline void cmd_replicate(const replicate_options& o, std::ostream& out, std::ostream& err) {
  const auto t0 = steady::now();
  SimDesign d = design_from_json(read_json_file(o.design));
  ReplicationStrategy st;
  st.multi_stage = o.strategy == "multi";
  st.init = o.init.size() == 1 ? PaftParams{o.init[0], o.init[0], std::vector<double>(d.covariates.size(), o.init[0])}
                               : params_from_list(o.init, d.covariates.size());
  st.fit.eta = o.eta;
  st.fit.max_stages = st.multi_stage ? o.stages : 1;
  st.fit.optimizer = OptimizerConfig::defaults(o.optimizer == "qn" ? optimizer_method::quasi_newton
                                                                    : optimizer_method::nelder_mead);
  if (!d.censor_upper) d.censor_upper = calibrate_censoring(d, d.target_censor_fraction, o.seed);
  const BiasReport r = run_replications(d, o.reps, st, o.seed);

  std::vector<std::string> names;
  for (const auto& c : d.covariates) names.push_back(c.name);
  json j = bias_report_to_json(r);
  json cj = fit_config_json(st.fit, st.init, names);
  cj["design"] = design_to_json(d);
  cj["strategy"] = o.strategy;
  cj["replications"] = o.reps;
  cj["seed"] = o.seed;
  j["manifest"] = manifest("replicate", {o.design}, std::move(cj));
  if (!o.csv.empty()) {
    std::ostringstream s;
    write_bias_csv(r, s);
    write_file(o.csv, s.str());
  }
  emit(o.out, j.dump(2) + "\n", j["manifest"], since(t0), out, err);
}

inline std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace cli

/// Command-line entry point. Returns 0 on success, 1 for usage errors, 2
/// for data errors and 3 for numerical failures; failures print one line
/// "error: <kind>: <reason>" to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Piecewise accelerated failure time analysis", "paft"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version);

  cli::fit_options fit_o;
  auto* fit = app.add_subcommand("fit", "fit the model to a trial CSV");
  cli::add_fit_options(*fit, fit_o, "nm");
  fit->add_flag("--unadjusted", fit_o.unadjusted, "drop covariates");

  cli::resample_options boot_o;
  auto* boot = app.add_subcommand("bootstrap", "percentile bootstrap intervals");
  cli::add_fit_options(*boot, boot_o.fit, "nm");
  boot->add_flag("--unadjusted", boot_o.fit.unadjusted, "drop covariates");
  boot->add_option("--boot", boot_o.count, "resample count")->check(CLI::Range(50, 1000000));
  boot->add_option("--level", boot_o.level, "confidence level")->check(CLI::Range(0.0, 1.0));
  boot->add_option("--seed", boot_o.seed, "RNG seed");

  cli::resample_options perm_o;
  perm_o.count = 1000;
  auto* perm = app.add_subcommand("permute", "permutation test of the unadjusted model");
  cli::add_fit_options(*perm, perm_o.fit, "qn");
  perm->add_option("--perms", perm_o.count, "permutation count")->check(CLI::Range(19, 10000000));
  perm->add_option("--seed", perm_o.seed, "RNG seed");

  cli::characterize_options ch_o;
  auto* ch = app.add_subcommand("characterize", "benefit scores, tree and leaf table");
  ch->add_option("--data", ch_o.data, "trial CSV")->required();
  ch->add_option("--fit", ch_o.fit, "fit JSON")->required();
  ch->add_option("--min-leaf", ch_o.tree.min_leaf, "minimum leaf size")->check(CLI::PositiveNumber);
  ch->add_option("--max-depth", ch_o.tree.max_depth, "maximum depth")->check(CLI::PositiveNumber);
  ch->add_option("--cp", ch_o.tree.cp, "minimum relative SS reduction")->check(CLI::NonNegativeNumber);
  ch->add_option("--out-dir", ch_o.out_dir, "directory for artifacts");

  std::string sim_design;
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "generate one trial");
  sim->add_option("--design", sim_design, "design JSON")->required();
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--out", sim_out, "output CSV (stdout when omitted)");

  cli::replicate_options rep_o;
  auto* rep = app.add_subcommand("replicate", "bias over simulated replicates");
  rep->add_option("--design", rep_o.design, "design JSON")->required();
  rep->add_option("--reps", rep_o.reps, "replicate count")->check(CLI::PositiveNumber);
  rep->add_option("--init", rep_o.init, "initial alpha,tau,beta... or one value for all")->delimiter(',');
  rep->add_option("--strategy", rep_o.strategy, "single or multi")->check(CLI::IsMember({"single", "multi"}));
  rep->add_option("--stages", rep_o.stages, "stages for the multi strategy")->check(CLI::PositiveNumber);
  rep->add_option("--eta", rep_o.eta, "sigmoid sharpness")->check(CLI::PositiveNumber);
  rep->add_option("--optimizer", rep_o.optimizer, "nm or qn")->check(CLI::IsMember({"nm", "qn"}));
  rep->add_option("--seed", rep_o.seed, "RNG seed");
  rep->add_option("--out", rep_o.out, "BiasReport JSON (stdout when omitted)");
  rep->add_option("--csv", rep_o.csv, "BiasReport CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: usage: " << cli::one_line(e.what()) << '\n';
    return exit_usage;
  }

  try {
    if (*fit) cli::cmd_fit(fit_o, out, err);
    else if (*boot) cli::cmd_bootstrap(boot_o, out, err);
    else if (*perm) cli::cmd_permute(perm_o, out, err);
    else if (*ch) cli::cmd_characterize(ch_o, err);
    else if (*sim) cli::cmd_simulate(sim_design, sim_seed, sim_out, out, err);
    else if (*rep) cli::cmd_replicate(rep_o, out, err);
  } catch (const data_error& e) {
    err << "error: data: " << cli::one_line(e.what()) << '\n';
    return exit_data;
  } catch (const numerical_error& e) {
    err << "error: numerical: " << cli::one_line(e.what()) << '\n';
    return exit_numerical;
  } catch (const usage_error& e) {
    err << "error: usage: " << cli::one_line(e.what()) << '\n';
    return exit_usage;
  } catch (const nlohmann::json::exception& e) {
    err << "error: usage: " << cli::one_line(e.what()) << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: numerical: " << cli::one_line(e.what()) << '\n';
    return exit_numerical;
  }
  return exit_ok;
}

}  // namespace paft

#endif  // PAFT_CLI_HPP
