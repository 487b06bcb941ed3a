#ifndef PAFT_INFERENCE_HPP
#define PAFT_INFERENCE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "paft/error.hpp"
#include "paft/fit.hpp"
#include "paft/model.hpp"
#include "paft/numerics.hpp"
#include "paft/parallel.hpp"
#include "paft/rng.hpp"
#include "paft/trial_data.hpp"

namespace paft {

/// 1-based order statistics (lo, hi) of a B-draw percentile interval:
/// lo = ceil((1 - level) / 2 * B), hi = floor((1 + level) / 2 * B) + 1.
/// When the products are integers the two ranks sit symmetrically
/// (lo = B + 1 - hi). A relative slack of 1e-9 absorbs representation error
/// in level, so 0.025 * 1000 gives 25 rather than 26.
inline std::pair<std::size_t, std::size_t> percentile_ranks(std::size_t draws, double level) {
  if (!(level > 0.0 && level < 1.0)) throw usage_error("level must lie in (0, 1)");
  if (draws < 1) throw usage_error("percentile interval of no draws");
  const double b = static_cast<double>(draws);
  auto clamp_rank = [&](double r) { return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(r, 1.0)), 1, draws); };
  const double xl = (1.0 - level) / 2.0 * b;
  const double xh = (1.0 + level) / 2.0 * b;
  return {clamp_rank(std::ceil(xl - 1e-9 * std::max(1.0, xl))), clamp_rank(std::floor(xh + 1e-9 * std::max(1.0, xh)) + 1.0)};
}

/// Ordered results of n_tasks independent fits; failures keep their message.
struct ResampleOutcome {
  std::vector<std::optional<FitResult>> fits;
  std::vector<std::string> errors;
  std::size_t failures = 0;
};

/// Runs make(k) -> dataset and fits it from init for every k. Task k owns
/// RNG stream k of the seed, so results do not depend on scheduling.
template <class Make>
ResampleOutcome run_resamples(std::size_t n_tasks, const PaftParams& init, const FitConfig& cfg, unsigned threads,
                              Make&& make) {
  ResampleOutcome out;
  out.fits.resize(n_tasks);
  out.errors.resize(n_tasks);
  parallel_for(n_tasks, threads, [&](std::size_t k) {
    try {
      const TrialDataset ds = make(k);
      out.fits[k] = fit_multi_stage(ds, init, cfg);
    } catch (const std::exception& e) {
      out.errors[k] = e.what();
    }
  });
  for (const auto& f : out.fits)
    if (!f) ++out.failures;
  return out;
}

struct BootstrapResult {
  std::vector<std::string> names;     ///< alpha, tau, covariate names
  std::vector<double> estimate;       ///< point fit, natural parameter scale
  std::vector<std::vector<double>> draws;  ///< successful refits in resample order
  std::vector<double> se;             ///< sample sd of draws
  std::vector<double> ci_lo;          ///< exp scale for alpha and beta, natural for tau
  std::vector<double> ci_hi;
  std::vector<bool> exp_scale;
  double level = 0.95;
  std::size_t B = 0;
  std::size_t failures = 0;
  std::size_t lo_rank = 0;  ///< 1-based order statistic used for ci_lo
  std::size_t hi_rank = 0;
  std::vector<std::string> failure_messages;
};

/// Fills se, ranks and percentile intervals from draws, level and exp_scale.
inline void summarize_draws(BootstrapResult& res) {
  if (res.draws.empty()) throw numerical_error("no bootstrap draws to summarize");
  std::tie(res.lo_rank, res.hi_rank) = percentile_ranks(res.draws.size(), res.level);
  const std::size_t p = res.draws.front().size();
  res.se.clear();
  res.ci_lo.clear();
  res.ci_hi.clear();
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> col;
    col.reserve(res.draws.size());
    for (const auto& d : res.draws) col.push_back(d[j]);
    res.se.push_back(sample_sd(col));
    std::sort(col.begin(), col.end());
    const double lo = col[res.lo_rank - 1];
    const double hi = col[res.hi_rank - 1];
    res.ci_lo.push_back(res.exp_scale[j] ? std::exp(lo) : lo);
    res.ci_hi.push_back(res.exp_scale[j] ? std::exp(hi) : hi);
  }
}

/// Resample index list for bootstrap replicate k.
inline std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed, std::uint64_t k) {
  philox_engine eng(seed, k);
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = static_cast<std::size_t>(uniform_index(eng, n));
  return rows;
}

/// Nonparametric percentile bootstrap. Each resample of n rows (with
/// replacement) is refitted by fit_multi_stage from the point estimate.
/// Failed refits are excluded and counted; more than 10% failing is an error.
inline BootstrapResult bootstrap_ci(const TrialDataset& ds, const FitResult& point, const FitConfig& cfg,
                                    std::size_t B, double level, std::uint64_t seed,
                                    unsigned threads = default_thread_count()) {
  if (B < 50) throw usage_error("bootstrap needs B >= 50");
  if (!(level > 0.0 && level < 1.0)) throw usage_error("level must lie in (0, 1)");

  BootstrapResult res;
  res.names = {"alpha", "tau"};
  res.names.insert(res.names.end(), ds.covariate_names.begin(), ds.covariate_names.end());
  res.estimate = flatten(point.params);
  res.level = level;
  res.B = B;
  const std::size_t p = res.estimate.size();
  res.exp_scale.assign(p, true);
  res.exp_scale[1] = false;

  auto out = run_resamples(B, point.params, cfg, threads, [&](std::size_t k) {
    const auto rows = bootstrap_indices(ds.size(), seed, k);
    return subset(ds, rows);
  });
  res.failures = out.failures;
  for (std::size_t k = 0; k < B; ++k) {
    if (out.fits[k])
      res.draws.push_back(flatten(out.fits[k]->params));
    else
      res.failure_messages.push_back("resample " + std::to_string(k) + ": " + out.errors[k]);
  }
  if (static_cast<double>(res.failures) > 0.1 * static_cast<double>(B))
    throw numerical_error("bootstrap unstable: " + std::to_string(res.failures) + " of " + std::to_string(B) +
                          " refits failed");

  summarize_draws(res);
  return res;
}

inline BootstrapResult bootstrap_ci(const TrialDataset& ds, const PaftParams& init, const FitConfig& cfg,
                                    std::size_t B, double level, std::uint64_t seed,
                                    unsigned threads = default_thread_count()) {
  return bootstrap_ci(ds, fit_multi_stage(ds, init, cfg), cfg, B, level, seed, threads);
}

/// Starting point for unadjusted fits when none is given: the best point of
/// a coarse grid, alpha in {-2, -1.5, ..., 3} and tau at the deciles of the
/// observed times, scored with the bandwidth of the no-effect model. A start
/// at alpha = 0 alone leaves tau unidentified and often ends in a local
/// optimum with the wrong sign.
inline PaftParams default_unadjusted_init(const TrialDataset& full, double eta = 0.01) {
  const TrialDataset ds = without_covariates(full);
  std::vector<double> y;
  y.reserve(ds.size());
  for (const auto& r : ds.records) y.push_back(r.y);
  std::sort(y.begin(), y.end());
  PaftParams best{0.0, quantile_sorted(y, 0.5), {}};
  SmoothedLikelihood lik(ds, {eta, bandwidth_at(ds, best), 1e-10});
  double best_ll = lik(best);
  for (int a = -4; a <= 6; ++a) {
    for (int q = 1; q <= 9; ++q) {
      const PaftParams p{0.5 * a, quantile_sorted(y, 0.1 * q), {}};
      if (!(p.tau > 0.0)) continue;
      double ll = -std::numeric_limits<double>::infinity();
      try {
        ll = lik(p);
      } catch (const numerical_error&) {
      }
      if (ll > best_ll) {
        best_ll = ll;
        best = p;
      }
    }
  }
  return best;
}

struct PermutationResult {
  double alpha_hat = 0.0;
  double tau_hat = 0.0;
  double p_alpha = 1.0;
  double p_tau = 1.0;
  std::size_t B = 0;
  std::size_t failures = 0;
  double tau_null_median = 0.0;
  std::vector<double> null_alpha;  ///< successful permutations, in order
  std::vector<double> null_tau;
  std::vector<std::string> failure_messages;
};

/// Permuted treatment labels for permutation k.
inline std::vector<int> permuted_labels(const TrialDataset& ds, std::uint64_t seed, std::uint64_t k) {
  std::vector<int> z;
  z.reserve(ds.size());
  for (const auto& r : ds.records) z.push_back(r.z);
  philox_engine eng(seed, k);
  shuffle(z, eng);
  return z;
}

/// Permutation test of the unadjusted model (covariates dropped).
///
/// Each permutation reassigns the treatment labels, keeps (y, delta) rows
/// intact and refits. The observed and every permuted dataset are fitted by
/// the same rule, from `init` when given and otherwise from
/// default_unadjusted_init of that dataset, so the statistic is one fixed
/// function of the data and the p-values are exact under the null. With m
/// successful permutations,
///   p_alpha = (1 + #{|alpha*| >= |alpha_hat|}) / (m + 1),
///   p_tau   = (1 + #{|tau* - med| >= |tau_hat - med|}) / (m + 1),
/// where med is the median of the permuted tau*. The lag statistic is a
/// declared choice, there being no standard one.
inline PermutationResult permutation_test(const TrialDataset& full, const std::optional<PaftParams>& init,
                                          const FitConfig& cfg, std::size_t B, std::uint64_t seed,
                                          unsigned threads = default_thread_count()) {
  if (B < 19) throw usage_error("permutation test needs B >= 19");
  const TrialDataset ds = without_covariates(full);
  bool arm[2] = {false, false};
  for (const auto& r : ds.records) arm[r.z] = true;
  if (!arm[0] || !arm[1]) throw data_error("permutation test needs both arms");
  auto start_for = [&](const TrialDataset& d) {
    if (!init) return default_unadjusted_init(d, cfg.eta);
    PaftParams p = *init;
    p.beta.clear();
    return p;
  };

  const FitResult observed = fit_multi_stage(ds, start_for(ds), cfg);
  PermutationResult res;
  res.alpha_hat = observed.params.alpha;
  res.tau_hat = observed.params.tau;
  res.B = B;

  std::vector<std::optional<FitResult>> fits(B);
  std::vector<std::string> errors(B);
  parallel_for(B, threads, [&](std::size_t k) {
    try {
      TrialDataset perm = ds;
      const auto z = permuted_labels(ds, seed, k);
      for (std::size_t i = 0; i < z.size(); ++i) perm.records[i].z = z[i];
      fits[k] = fit_multi_stage(perm, start_for(perm), cfg);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });
  for (std::size_t k = 0; k < B; ++k) {
    if (fits[k]) {
      res.null_alpha.push_back(fits[k]->params.alpha);
      res.null_tau.push_back(fits[k]->params.tau);
    } else {
      ++res.failures;
      res.failure_messages.push_back("permutation " + std::to_string(k) + ": " + errors[k]);
    }
  }
  if (static_cast<double>(res.failures) > 0.1 * static_cast<double>(B))
    throw numerical_error("permutation test unstable: " + std::to_string(res.failures) + " of " +
                          std::to_string(B) + " refits failed");

  const double m = static_cast<double>(res.null_alpha.size());
  res.tau_null_median = quantile(res.null_tau, 0.5);
  std::size_t hits_a = 0;
  std::size_t hits_t = 0;
  const double dev_obs = std::abs(res.tau_hat - res.tau_null_median);
  for (std::size_t k = 0; k < res.null_alpha.size(); ++k) {
    if (std::abs(res.null_alpha[k]) >= std::abs(res.alpha_hat)) ++hits_a;
    if (std::abs(res.null_tau[k] - res.tau_null_median) >= dev_obs) ++hits_t;
  }
  res.p_alpha = (1.0 + static_cast<double>(hits_a)) / (m + 1.0);
  res.p_tau = (1.0 + static_cast<double>(hits_t)) / (m + 1.0);
  return res;
}

}  // namespace paft

#endif  // PAFT_INFERENCE_HPP
