#ifndef PAFT_FIT_HPP
#define PAFT_FIT_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "paft/error.hpp"
#include "paft/model.hpp"
#include "paft/optim.hpp"
#include "paft/trial_data.hpp"

namespace paft {

/// One optimization pass at a fixed bandwidth.
struct StageRecord {
  double bandwidth = 0.0;
  PaftParams params;
  double loglik = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

struct FitResult {
  PaftParams params;
  double loglik = 0.0;
  std::vector<StageRecord> stages;
  double eta = 0.01;
  std::vector<std::string> warnings;

  double bandwidth() const { return stages.empty() ? 0.0 : stages.back().bandwidth; }
  bool converged() const { return !stages.empty() && stages.back().converged; }
};

struct FitConfig {
  double eta = 0.01;
  double quad_tol = 1e-10;
  OptimizerConfig optimizer = OptimizerConfig::nelder_mead();
  int max_stages = 5;
  double bandwidth_tol = 1e-4;
};

/// (alpha, tau, beta...) on the natural scale.
inline std::vector<double> flatten(const PaftParams& p) {
  std::vector<double> v{p.alpha, p.tau};
  v.insert(v.end(), p.beta.begin(), p.beta.end());
  return v;
}

/// Thrown when a stage fails; carries the stages completed before it.
class fit_error : public numerical_error {
 public:
  fit_error(const std::string& what, FitResult partial) : numerical_error(what), partial_(std::move(partial)) {}
  const FitResult& partial() const noexcept { return partial_; }

 private:
  FitResult partial_;
};

namespace detail {

// Optimizer coordinates: (alpha, tau, beta...) for Nelder-Mead, which
// rejects tau <= 0 through the likelihood; (alpha, log tau, beta...) for the
// gradient method, which needs an unconstrained space.
inline std::vector<double> pack(const PaftParams& p, optimizer_method m) {
  std::vector<double> v;
  v.reserve(2 + p.beta.size());
  v.push_back(p.alpha);
  v.push_back(m == optimizer_method::quasi_newton ? std::log(p.tau) : p.tau);
  v.insert(v.end(), p.beta.begin(), p.beta.end());
  return v;
}

inline PaftParams unpack(const std::vector<double>& v, optimizer_method m) {
  PaftParams p;
  p.alpha = v[0];
  p.tau = m == optimizer_method::quasi_newton ? std::exp(v[1]) : v[1];
  p.beta.assign(v.begin() + 2, v.end());
  return p;
}

inline void check_fit_inputs(const TrialDataset& ds, const PaftParams& init) {
  const auto report = validate(ds);
  for (const auto& f : report.findings)
    if (f.severity == severity::error) throw data_error(f.message);
  if (init.beta.size() != ds.dim())
    throw usage_error("initial beta has " + std::to_string(init.beta.size()) + " entries, dataset has " +
                      std::to_string(ds.dim()) + " covariates");
  if (!(init.tau >= 0.0) || !std::isfinite(init.tau) || !std::isfinite(init.alpha))
    throw usage_error("initial tau must be finite and >= 0");
}

inline std::vector<std::string> fit_warnings(const TrialDataset& ds) {
  std::vector<std::string> w;
  bool arm[2] = {false, false};
  for (const auto& r : ds.records) arm[r.z] = true;
  if (!arm[0] || !arm[1]) w.emplace_back("alpha not identified");
  return w;
}

}  // namespace detail

/// One stage: bandwidth from exact residuals at `init`, then maximize the
/// smoothed log-likelihood at that bandwidth.
///
/// A non-positive initial tau (lag time "not started") has no log-scale
/// image; the search then starts from the smallest observed time, which gives
/// the same residuals for every subject.
inline StageRecord run_stage(const TrialDataset& ds, const PaftParams& init, const FitConfig& cfg) {
  StageRecord st;
  st.bandwidth = bandwidth_at(ds, init);

  PaftParams start = init;
  if (start.tau <= 0.0) {
    double ymin = ds.records.front().y;
    for (const auto& r : ds.records) ymin = std::min(ymin, r.y);
    start.tau = ymin;
  }

  SmoothedLikelihood lik(ds, {cfg.eta, st.bandwidth, cfg.quad_tol});
  const optimizer_method m = cfg.optimizer.method;
  // A point whose likelihood cannot be evaluated (overflow at extreme alpha)
  // counts as infeasible, so line searches and reflections back off from it.
  auto objective = [&lik, m](const std::vector<double>& v) {
    try {
      return lik(detail::unpack(v, m));
    } catch (const numerical_error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
  const OptimResult opt = maximize(objective, detail::pack(start, m), cfg.optimizer);

  st.params = detail::unpack(opt.x, m);
  st.loglik = opt.f;
  st.iterations = opt.iterations;
  st.evaluations = opt.evaluations;
  st.converged = opt.converged;
  return st;
}

/// Repeats stages, each started from the previous estimate with a refreshed
/// bandwidth, until consecutive bandwidths differ by less than
/// bandwidth_tol or max_stages is reached.
inline FitResult fit_multi_stage(const TrialDataset& ds, const PaftParams& init, const FitConfig& cfg) {
  if (cfg.max_stages < 1) throw usage_error("max_stages must be >= 1");
  if (!(cfg.eta > 0.0)) throw usage_error("eta must be > 0");
  detail::check_fit_inputs(ds, init);

  FitResult fit;
  fit.eta = cfg.eta;
  fit.warnings = detail::fit_warnings(ds);
  PaftParams current = init;
  for (int k = 0; k < cfg.max_stages; ++k) {
    try {
      fit.stages.push_back(run_stage(ds, current, cfg));
    } catch (const std::exception& e) {
      if (!fit.stages.empty()) {
        fit.params = fit.stages.back().params;
        fit.loglik = fit.stages.back().loglik;
      }
      throw fit_error("stage " + std::to_string(k + 1) + ": " + e.what(), std::move(fit));
    }
    current = fit.stages.back().params;
    if (k > 0 && std::abs(fit.stages[k].bandwidth - fit.stages[k - 1].bandwidth) < cfg.bandwidth_tol) break;
  }
  fit.params = fit.stages.back().params;
  fit.loglik = fit.stages.back().loglik;
  return fit;
}

inline FitResult fit_single_stage(const TrialDataset& ds, const PaftParams& init, const FitConfig& cfg) {
  FitConfig one = cfg;
  one.max_stages = 1;
  return fit_multi_stage(ds, init, one);
}

inline FitResult fit_single_stage(const TrialDataset& ds, const PaftParams& init, double eta,
                                  const OptimizerConfig& opt) {
  FitConfig cfg;
  cfg.eta = eta;
  cfg.optimizer = opt;
  return fit_single_stage(ds, init, cfg);
}

}  // namespace paft

#endif  // PAFT_FIT_HPP
