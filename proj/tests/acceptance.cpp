// Acceptance suite. `acceptance N` runs criterion N, no argument runs all.
// Each criterion prints one line "criterion N: PASS|FAIL <measurements>";
// the exit status is 0 only when every requested criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "oracles/brute.hpp"
#include "paft/cli.hpp"
#include "paft/paft.hpp"

using namespace paft;

namespace {

// Tolerances and sizes, pinned.
constexpr std::uint64_t sim_seed = 2024;
constexpr std::size_t bias_reps = 100;
constexpr double c1_alpha_tol = 0.06;
constexpr double c1_tau_tol = 0.12;
constexpr double c1_beta_tol = 0.03;
constexpr double c2_tau_tol = 0.08;
constexpr std::size_t c3_tuples = 1000;
constexpr double c3_near_tol = 1e-3;  // |y - tau| > 0.1
constexpr double c3_far_tol = 1e-6;   // |y - tau| > 20 eta
constexpr std::size_t c4_datasets = 50;
constexpr double c4_tol = 1e-10;
constexpr std::size_t c5_cases = 200;
constexpr double c5_censored_tol = 1e-14;
constexpr std::size_t c6_instances = 100;
constexpr std::size_t c7_trials = 100;
constexpr std::size_t c7_perms = 99;
constexpr std::size_t c7_n = 150;
constexpr double c7_ks_tol = 0.15;
constexpr std::size_t c8_B = 500;
constexpr std::size_t c9_points = 20;
constexpr double c9_h = 0.02;
constexpr double c9_ratio_lo = 3.0;
constexpr double c9_ratio_hi = 5.0;

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ReplicationStrategy strategy(double init, bool multi, int stages) {
  ReplicationStrategy s;
  s.multi_stage = multi;
  s.init = {init, init, {init, init}};
  s.fit.max_stages = stages;
  s.fit.bandwidth_tol = 0.0;  // run every stage so stage k is defined for all replicates
  return s;
}

Verdict criterion1() {
  const auto r = run_replications(SimDesign{}, bias_reps, strategy(1.0, false, 1), sim_seed);
  const auto& b = r.bias;
  const bool ok = std::abs(b[0]) <= c1_alpha_tol && std::abs(b[1]) <= c1_tau_tol && std::abs(b[2]) <= c1_beta_tol &&
                  std::abs(b[3]) <= c1_beta_tol;
  return {ok, fmt("bias (alpha, tau, b1, b2) = (%+.4f, %+.4f, %+.4f, %+.4f), failures %zu/%zu", b[0], b[1], b[2], b[3],
                  r.failures, r.replications)};
}

Verdict criterion2() {
  const auto r0 = run_replications(SimDesign{}, bias_reps, strategy(0.0, true, 3), sim_seed);
  const auto r5 = run_replications(SimDesign{}, bias_reps, strategy(5.0, true, 4), sim_seed);
  const double s1 = std::abs(r0.stage_bias[0][1]);
  const double s3 = std::abs(r0.stage_bias[2][1]);
  const double f3 = std::abs(r5.stage_bias[2][1]);
  const double f4 = std::abs(r5.stage_bias[3][1]);
  const bool ok = s3 <= c2_tau_tol && s3 < s1 && f4 < f3;
  return {ok, fmt("init 0: |bias tau| stage1 %.4f stage3 %.4f; init 5: stage3 %.4f stage4 %.4f; failures %zu, %zu", s1,
                  s3, f3, f4, r0.failures, r5.failures)};
}

// Closed form of the unsmoothed residual, written independently of the library.
double residual_closed_form(double y, double tau, double alpha, double lp, int z) {
  const double integral = (z == 1 && y > tau) ? tau + std::exp(-alpha) * (y - tau) : y;
  return std::log(integral) - lp;
}

Verdict criterion3() {
  philox_engine eng(sim_seed, 3);
  const SmoothingConfig cfg{0.01, 1.0, 1e-10};
  double worst_near = 0.0;
  double worst_far = 0.0;
  std::size_t n_far = 0;
  std::size_t drawn = 0;
  while (drawn < c3_tuples) {
    const double y = 0.05 + 9.95 * uniform_open(eng);
    const double tau = 0.1 + 4.9 * uniform_open(eng);
    if (!(std::abs(y - tau) > 0.1)) continue;
    ++drawn;
    const double alpha = -2.0 + 4.0 * uniform_open(eng);
    const double lp = -2.0 + 4.0 * uniform_open(eng);
    const int z = uniform_open(eng) < 0.5 ? 0 : 1;
    const SubjectRecord rec{y, 1, z, {1.0}};
    const double dev = std::abs(residual_smoothed(rec, {alpha, tau, {lp}}, cfg) -
                                residual_closed_form(y, tau, alpha, lp, z));
    worst_near = std::max(worst_near, dev);
    if (std::abs(y - tau) > 20.0 * cfg.eta) {
      ++n_far;
      worst_far = std::max(worst_far, dev);
    }
  }
  const bool ok = worst_near <= c3_near_tol && worst_far <= c3_far_tol;
  return {ok, fmt("max |smoothed - exact|: %.3e over %zu tuples (tol %.0e), %.3e over %zu beyond 20 eta (tol %.0e)",
                  worst_near, drawn, c3_near_tol, worst_far, n_far, c3_far_tol)};
}

Verdict criterion4() {
  philox_engine eng(sim_seed, 4);
  double worst = 0.0;
  for (std::size_t k = 0; k < c4_datasets; ++k) {
    SimDesign d;
    d.n = 30;
    d.censor_upper = 8.0;
    const auto ds = generate_trial(d, sim_seed + 4, k);
    const PaftParams p{-1.0 + 3.0 * uniform_open(eng), 0.5 + 3.0 * uniform_open(eng),
                       {-1.0 + 4.0 * uniform_open(eng), -1.0 + 4.0 * uniform_open(eng)}};
    const SmoothingConfig cfg{0.01, bandwidth_at(ds, p), 1e-10};
    const double base = log_likelihood(ds, p, cfg);
    for (std::size_t v = 0; v < 2; ++v) {
      for (double c : {-3.0, 1.0, 10.0}) {
        TrialDataset shifted = ds;
        for (auto& r : shifted.records) r.x[v] += c;
        worst = std::max(worst, std::abs(log_likelihood(shifted, p, cfg) - base));
      }
    }
  }
  return {worst <= c4_tol, fmt("max |l(shifted) - l| = %.3e over %zu datasets (tol %.0e)", worst, c4_datasets, c4_tol)};
}

Verdict criterion5() {
  philox_engine eng(sim_seed, 5);
  std::size_t ecdf_mismatch = 0;
  double worst_cdf = 0.0;
  double worst_censored = 0.0;
  for (std::size_t t = 0; t < c5_cases; ++t) {
    const std::size_t n = 1 + uniform_index(eng, 20);
    std::vector<CensoredValue> v(n);
    for (auto& p : v) p = {std::round(uniform_open(eng) * 10.0) / 2.0, 1};
    const auto km = km_estimate(v);
    for (const auto& p : v) {
      std::size_t below = 0;
      for (const auto& o : v) below += o.value <= p.value;
      const double surv = static_cast<double>(n - below) / static_cast<double>(n);
      if (km(p.value) != surv) ++ecdf_mismatch;
      worst_cdf = std::max(worst_cdf, std::abs((1.0 - km(p.value)) - static_cast<double>(below) / static_cast<double>(n)));
    }

    for (auto& p : v) p.delta = uniform_open(eng) < 0.6;
    const auto kc = km_estimate(v);
    for (double q = -0.5; q <= 5.5; q += 0.25) worst_censored = std::max(worst_censored, std::abs(kc(q) - oracle::km_survival(v, q)));
  }
  const bool ok = ecdf_mismatch == 0 && worst_censored <= c5_censored_tol;
  return {ok, fmt("all-events: %zu values with S != (n - #{Y <= t}) / n, max |F - ECDF| %.1e; censored: max |S - brute| "
                  "%.1e (tol %.0e)",
                  ecdf_mismatch, worst_cdf, worst_censored, c5_censored_tol)};
}

Verdict criterion6() {
  philox_engine eng(sim_seed, 6);
  std::size_t mismatches = 0;
  std::size_t splits = 0;
  for (std::size_t k = 0; k < c6_instances; ++k) {
    TreeConfig cfg;
    cfg.min_leaf = 1 + uniform_index(eng, 5);
    cfg.max_depth = 1 + static_cast<int>(uniform_index(eng, 2));
    cfg.cp = uniform_open(eng) < 0.5 ? 0.0 : 0.01;
    const std::size_t n = 2 * cfg.min_leaf + uniform_index(eng, 50 - 2 * cfg.min_leaf + 1);
    const std::size_t d = 1 + uniform_index(eng, 3);
    std::vector<std::vector<double>> x(n, std::vector<double>(d));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t v = 0; v < d; ++v)
        x[i][v] = v == 0 ? static_cast<double>(uniform_index(eng, 5)) : uniform_open(eng) * 4.0 - 2.0;
      y[i] = 0.2 * x[i][0] + (d > 1 && x[i][1] > 0.0 ? 0.4 : 0.0) + uniform_open(eng);
    }
    const auto tree = fit_regression_tree(x, y, cfg);
    const auto brute = oracle::brute_tree(x, y, cfg);
    if (!oracle::same_tree(tree, 0, *brute)) ++mismatches;
    splits += (tree.nodes.size() - 1) / 2;
  }
  return {mismatches == 0, fmt("%zu of %zu trees differ from exhaustive search (%zu splits compared)", mismatches,
                               c6_instances, splits)};
}

Verdict criterion7() {
  SimDesign d;
  d.n = c7_n;
  d.truth = {0.0, 2.5, {}};
  d.covariates.clear();
  d.censor_upper = calibrate_censoring(d, 0.25, sim_seed);
  FitConfig cfg;
  cfg.optimizer = OptimizerConfig::quasi_newton();
  cfg.max_stages = 2;
  std::vector<double> p;
  std::size_t failed_trials = 0;
  for (std::size_t t = 0; t < c7_trials; ++t) {
    const auto ds = generate_trial(d, sim_seed + 7, t);
    try {
      p.push_back(permutation_test(ds, std::nullopt, cfg, c7_perms, sim_seed + t).p_alpha);
    } catch (const std::exception&) {
      ++failed_trials;
    }
  }
  std::sort(p.begin(), p.end());
  double ks = 0.0;
  const double m = static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    ks = std::max({ks, static_cast<double>(i + 1) / m - p[i], p[i] - static_cast<double>(i) / m});
  const bool ok = !p.empty() && ks <= c7_ks_tol && failed_trials * 10 <= c7_trials;
  return {ok, fmt("Kolmogorov distance %.4f (tol %.2f) over %zu trials x B=%zu, failed trials %zu", ks, c7_ks_tol,
                  p.size(), c7_perms, failed_trials)};
}

Verdict criterion8() {
  SimDesign d;
  d.n = 200;
  d.truth = {1.0, 2.5, {}};
  d.covariates.clear();
  d.censor_upper = calibrate_censoring(d, 0.25, sim_seed);
  const auto ds = generate_trial(d, sim_seed + 8);
  FitConfig cfg;
  cfg.optimizer = OptimizerConfig::quasi_newton();
  cfg.max_stages = 2;
  const auto point = fit_multi_stage(ds, default_unadjusted_init(ds), cfg);
  const auto a = bootstrap_ci(ds, point, cfg, c8_B, 0.95, 8);
  const auto b = bootstrap_ci(ds, point, cfg, c8_B, 0.95, 8, 1);
  const std::size_t m = a.draws.size();
  const auto ranks = percentile_ranks(m, 0.95);
  bool endpoints = a.lo_rank == ranks.first && a.hi_rank == ranks.second;
  for (std::size_t j = 0; j < a.names.size(); ++j) {
    std::vector<double> col;
    for (const auto& r : a.draws) col.push_back(r[j]);
    std::sort(col.begin(), col.end());
    const double lo = col[ranks.first - 1];
    const double hi = col[ranks.second - 1];
    endpoints = endpoints && a.ci_lo[j] == (a.exp_scale[j] ? std::exp(lo) : lo) &&
                a.ci_hi[j] == (a.exp_scale[j] ? std::exp(hi) : hi);
  }
  const bool fixed_ranks = m != c8_B || (ranks.first == 13 && ranks.second == 488);
  const bool identical = bootstrap_to_json(a).dump() == bootstrap_to_json(b).dump();
  const bool ok = endpoints && fixed_ranks && identical;
  return {ok, fmt("%zu draws (%zu failed), ranks (%zu, %zu), endpoints match order statistics: %s, reruns identical: %s",
                  m, a.failures, a.lo_rank, a.hi_rank, endpoints ? "yes" : "no", identical ? "yes" : "no")};
}

Verdict criterion9() {
  SimDesign d;
  d.n = 200;
  d.censor_upper = calibrate_censoring(d, 0.25, sim_seed);
  const auto ds = generate_trial(d, sim_seed + 9);
  const SmoothingConfig cfg{0.01, bandwidth_at(ds, d.truth), 1e-13};
  philox_engine eng(sim_seed, 9);
  double lo = 1e300;
  double hi = -1e300;
  std::size_t outside = 0;
  for (std::size_t k = 0; k < c9_points; ++k) {
    PaftParams p{0.5 + 2.0 * uniform_open(eng), 1.5 + 2.0 * uniform_open(eng),
                 {1.5 + uniform_open(eng), 1.3 + uniform_open(eng)}};
    // Coordinates 0, 2, 3 of (alpha, tau, b1, b2).
    for (std::size_t c : {0u, 2u, 3u}) {
      auto at = [&](double step) {
        PaftParams a = p;
        PaftParams b = p;
        (c == 0 ? a.alpha : a.beta[c - 2]) += step;
        (c == 0 ? b.alpha : b.beta[c - 2]) -= step;
        return (log_likelihood(ds, a, cfg) - log_likelihood(ds, b, cfg)) / (2.0 * step);
      };
      const double g1 = at(c9_h);
      const double g2 = at(c9_h / 2.0);
      const double g4 = at(c9_h / 4.0);
      const double ratio = (g1 - g2) / (g2 - g4);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
      if (!(ratio >= c9_ratio_lo && ratio <= c9_ratio_hi)) ++outside;
    }
  }
  return {outside == 0, fmt("error ratios (g(h) - g(h/2)) / (g(h/2) - g(h/4)) in [%.3f, %.3f], %zu of %zu outside "
                            "[%.0f, %.0f], h = %.3f",
                            lo, hi, outside, 3 * c9_points, c9_ratio_lo, c9_ratio_hi, c9_h)};
}

int cli(std::vector<std::string> args, std::string& err_text) {
  args.insert(args.begin(), "paft");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  err_text += err.str();
  return code;
}

// End-to-end pipeline through the command-line front end on synthetic data
// shaped like the motivating trial: n = 839, three binary and two continuous
// covariates.
Verdict criterion10() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("paft_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const auto design = (dir / "design.json").string();
  {
    SimDesign d;
    d.n = 839;
    d.truth = {0.6, 0.8, {0.2, -0.3, 0.3, -0.1, -0.2}};
    using F = CovariateSpec::family;
    d.covariates = {{F::bernoulli, 0.38, 1.0, "female"},
                    {F::bernoulli, 0.63, 1.0, "ecog1"},
                    {F::bernoulli, 0.45, 1.0, "pdl1_high"},
                    {F::normal, 0.0, 1.0, "age_std"},
                    {F::lognormal, 0.0, 0.5, "tumor_burden"}};
    d.target_censor_fraction = 0.3;
    std::ofstream(design) << design_to_json(d).dump(2);
  }
  const auto data = (dir / "trial.csv").string();
  const auto unadj = (dir / "fit_unadjusted.json").string();
  const auto adj = (dir / "fit_adjusted.json").string();
  std::string err;
  std::vector<std::pair<std::string, std::vector<std::string>>> steps = {
      {"simulate", {"simulate", "--design", design, "--seed", "839", "--out", data}},
      {"fit unadjusted", {"fit", "--data", data, "--unadjusted", "--out", unadj}},
      {"bootstrap", {"bootstrap", "--data", data, "--unadjusted", "--boot", "50", "--seed", "1", "--optimizer", "qn",
                     "--stages", "2", "--out", (dir / "boot.json").string()}},
      {"permute", {"permute", "--data", data, "--perms", "19", "--seed", "1", "--out", (dir / "perm.json").string()}},
      {"fit adjusted", {"fit", "--data", data, "--out", adj}},
      {"characterize", {"characterize", "--data", data, "--fit", adj, "--out-dir", (dir / "char").string()}},
  };
  for (const auto& [name, args] : steps) {
    const int code = cli(args, err);
    if (code != 0) return {false, fmt("step '%s' exited %d: %s", name.c_str(), code, err.c_str())};
  }
  for (const char* f : {"p_hat.csv", "leaves.csv", "km_residuals.csv", "tree.json"})
    if (!fs::exists(dir / "char" / f)) return {false, fmt("missing artifact %s", f)};
  const auto fit = json::parse(std::ifstream(adj));
  const auto leaves = [&] {
    std::ifstream in(dir / "char" / "leaves.csv");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    return n - 1;
  }();
  fs::remove_all(dir);
  return {true, fmt("simulate, fit, bootstrap, permute, fit adjusted and characterize completed; adjusted alpha %.3f "
                    "tau %.3f, %zu leaves",
                    fit["alpha"].get<double>(), fit["tau"].get<double>(), leaves)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                                          criterion6, criterion7, criterion8, criterion9, criterion10};
  std::vector<std::size_t> which;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: acceptance [1-10 ...]\n");
      return 2;
    }
    which.push_back(static_cast<std::size_t>(k));
  }
  if (which.empty())
    for (std::size_t k = 1; k <= criteria.size(); ++k) which.push_back(k);

  bool all = true;
  for (std::size_t k : which) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k - 1]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu: %s %s [%.1fs]\n", k, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
