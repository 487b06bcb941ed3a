#ifndef PAFT_SIM_HPP
#define PAFT_SIM_HPP

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "paft/error.hpp"
#include "paft/fit.hpp"
#include "paft/model.hpp"
#include "paft/parallel.hpp"
#include "paft/rng.hpp"
#include "paft/trial_data.hpp"

namespace paft {

/// Marginal law of one simulated covariate. The second parameter is a
/// variance: N(0.6, 0.4) means sd = sqrt(0.4); LN(-0.8, 0.6) is exp of
/// N(-0.8, variance 0.6). A bernoulli covariate is 1 with probability
/// `location` and ignores `variance`.
struct CovariateSpec {
  enum class family { normal, lognormal, bernoulli };
  family dist = family::normal;
  double location = 0.0;
  double variance = 1.0;
  std::string name;
};

struct SimDesign {
  std::size_t n = 800;
  PaftParams truth{1.5, 2.5, {2.0, 1.8}};
  std::vector<CovariateSpec> covariates{{CovariateSpec::family::normal, 0.6, 0.4, "x1"},
                                        {CovariateSpec::family::lognormal, -0.8, 0.6, "x2"}};
  double error_sd = 1.0;   ///< eps ~ N(0, error_sd^2); 0 gives deterministic times
  double allocation = 0.5; ///< P(Z = 1)
  std::optional<double> censor_upper;   ///< C ~ Uniform(0, M)
  double target_censor_fraction = 0.25; ///< used when censor_upper is unset

  void check() const {
    if (n < 2) throw usage_error("design n must be >= 2");
    if (!(allocation > 0.0 && allocation < 1.0)) throw usage_error("allocation must lie in (0, 1)");
    if (truth.beta.size() != covariates.size()) throw usage_error("true beta length differs from covariate count");
    if (!(truth.tau > 0.0)) throw usage_error("true tau must be > 0");
    if (!(error_sd >= 0.0)) throw usage_error("error_sd must be >= 0");
    for (const auto& c : covariates) {
      if (c.dist == CovariateSpec::family::bernoulli) {
        if (!(c.location > 0.0 && c.location < 1.0)) throw usage_error("bernoulli probability must lie in (0, 1)");
      } else if (!(c.variance > 0.0)) {
        throw usage_error("covariate variance must be > 0");
      }
    }
    if (censor_upper && !(*censor_upper > 0.0)) throw usage_error("censor_upper must be > 0");
  }
};

/// Survival time under the model given the baseline time T0:
/// T = T0 unless treated and T0 > tau, then tau + e^alpha (T0 - tau).
inline double pieces_to_time(double t0, int z, double alpha, double tau) noexcept {
  if (z == 0 || t0 <= tau) return t0;
  return tau + std::exp(alpha) * (t0 - tau);
}

namespace detail {

struct latent_subject {
  int z;
  std::vector<double> x;
  double t;
};

// Draw order per subject: z, covariates, eps. Censoring uses the next uniform.
inline latent_subject draw_latent(const SimDesign& d, philox_engine& eng) {
  latent_subject s;
  s.z = uniform_open(eng) < d.allocation ? 1 : 0;
  std::normal_distribution<double> std_normal(0.0, 1.0);
  s.x.reserve(d.covariates.size());
  for (const auto& c : d.covariates) {
    if (c.dist == CovariateSpec::family::bernoulli) {
      s.x.push_back(uniform_open(eng) < c.location ? 1.0 : 0.0);
      continue;
    }
    const double g = c.location + std::sqrt(c.variance) * std_normal(eng);
    s.x.push_back(c.dist == CovariateSpec::family::normal ? g : std::exp(g));
  }
  const double eps = d.error_sd * std_normal(eng);
  const double t0 = std::exp(linear_predictor(d.truth.beta, s.x) + eps);
  s.t = pieces_to_time(t0, s.z, d.truth.alpha, d.truth.tau);
  return s;
}

}  // namespace detail

/// One simulated trial. Stream k of `seed` fixes the dataset bit-exactly.
inline TrialDataset generate_trial(const SimDesign& design, std::uint64_t seed, std::uint64_t stream = 0) {
  design.check();
  if (!design.censor_upper) throw usage_error("design has no censor_upper; calibrate censoring first");
  const double m = *design.censor_upper;
  philox_engine eng(seed, stream);
  TrialDataset ds;
  for (const auto& c : design.covariates) ds.covariate_names.push_back(c.name);
  ds.records.reserve(design.n);
  for (std::size_t i = 0; i < design.n; ++i) {
    auto s = detail::draw_latent(design, eng);
    const double c = m * uniform_open(eng);
    SubjectRecord r;
    r.y = std::min(s.t, c);
    r.delta = s.t <= c ? 1 : 0;
    r.z = s.z;
    r.x = std::move(s.x);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

/// Finds M so that C ~ Uniform(0, M) censors the target fraction.
///
/// The censoring probability for fixed M is estimated by
/// mean(min(T, M)) / M over mc_size simulated times, which is exactly
/// P(C < T | T) averaged and is decreasing in M, so bisection on log M is safe.
inline double calibrate_censoring(const SimDesign& design, double target, std::uint64_t seed,
                                  std::size_t mc_size = 100000) {
  if (!(target > 0.0 && target < 1.0)) throw usage_error("target censoring fraction must lie in (0, 1)");
  if (mc_size < 1) throw usage_error("mc_size must be >= 1");
  SimDesign d = design;
  d.censor_upper.reset();
  d.check();

  philox_engine eng(seed, 0);
  std::vector<double> times(mc_size);
  for (auto& t : times) t = detail::draw_latent(d, eng).t;

  auto fraction = [&](double m) {
    double s = 0.0;
    for (double t : times) s += std::min(t, m);
    return s / (static_cast<double>(times.size()) * m);
  };

  constexpr double m_max = 1e6;
  if (fraction(m_max) > target) throw numerical_error("target censoring fraction unreachable with M <= 1e6");
  double lo = std::log(1e-12);
  double hi = std::log(m_max);
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (fraction(std::exp(mid)) > target)
      lo = mid;
    else
      hi = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

struct ReplicationStrategy {
  bool multi_stage = false;
  PaftParams init{1.0, 1.0, {1.0, 1.0}};
  FitConfig fit;
};

/// Bias summary over simulated replicates.
struct BiasReport {
  std::vector<std::string> names;  ///< alpha, tau, then covariate names
  std::vector<double> truth;
  std::vector<double> mean_estimate;
  std::vector<double> bias;
  std::vector<double> sd;
  std::size_t replications = 0;  ///< requested N
  std::size_t failures = 0;
  /// stage_bias[k][p]: mean over replicates of the (k+1)-th stage estimate
  /// minus truth. Replicates that stopped earlier carry their last stage.
  std::vector<std::vector<double>> stage_bias;
  /// Per replicate final estimates (empty row for failed replicates).
  std::vector<std::vector<double>> estimates;
  std::vector<std::string> failure_messages;
};

class replication_error : public numerical_error {
 public:
  replication_error(const std::string& what, BiasReport partial)
      : numerical_error(what), partial_(std::move(partial)) {}
  const BiasReport& partial() const noexcept { return partial_; }

 private:
  BiasReport partial_;
};

/// Runs N independent replicates; replicate k uses stream k of `seed`.
/// Censoring is calibrated first (stream-independent seed) when the design
/// has no censor_upper.
inline BiasReport run_replications(SimDesign design, std::size_t replications, const ReplicationStrategy& strategy,
                                   std::uint64_t seed, unsigned threads = default_thread_count()) {
  if (replications < 1) throw usage_error("replications must be >= 1");
  design.check();
  if (!design.censor_upper) design.censor_upper = calibrate_censoring(design, design.target_censor_fraction, seed);
  FitConfig cfg = strategy.fit;
  if (!strategy.multi_stage) cfg.max_stages = 1;

  std::vector<std::optional<FitResult>> fits(replications);
  std::vector<std::string> errors(replications);
  parallel_for(replications, threads, [&](std::size_t k) {
    try {
      const TrialDataset ds = generate_trial(design, seed, k);
      fits[k] = fit_multi_stage(ds, strategy.init, cfg);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });

  BiasReport rep;
  rep.names = {"alpha", "tau"};
  for (const auto& c : design.covariates) rep.names.push_back(c.name);
  rep.truth = flatten(design.truth);
  const std::size_t p = rep.truth.size();
  rep.replications = replications;
  rep.estimates.resize(replications);

  std::size_t max_stages = 0;
  std::vector<std::vector<double>> ok;
  for (std::size_t k = 0; k < replications; ++k) {
    if (!fits[k]) {
      ++rep.failures;
      rep.failure_messages.push_back("replicate " + std::to_string(k) + ": " + errors[k]);
      continue;
    }
    rep.estimates[k] = flatten(fits[k]->params);
    ok.push_back(rep.estimates[k]);
    max_stages = std::max(max_stages, fits[k]->stages.size());
  }

  rep.mean_estimate.assign(p, 0.0);
  rep.bias.assign(p, 0.0);
  rep.sd.assign(p, 0.0);
  if (!ok.empty()) {
    for (std::size_t j = 0; j < p; ++j) {
      std::vector<double> col;
      col.reserve(ok.size());
      for (const auto& e : ok) col.push_back(e[j]);
      rep.mean_estimate[j] = mean(col);
      rep.bias[j] = rep.mean_estimate[j] - rep.truth[j];
      rep.sd[j] = sample_sd(col);
    }
    rep.stage_bias.assign(max_stages, std::vector<double>(p, 0.0));
    for (std::size_t s = 0; s < max_stages; ++s) {
      for (std::size_t k = 0; k < replications; ++k) {
        if (!fits[k]) continue;
        const auto& st = fits[k]->stages;
        const auto v = flatten(st[std::min(s, st.size() - 1)].params);
        for (std::size_t j = 0; j < p; ++j) rep.stage_bias[s][j] += v[j];
      }
      for (std::size_t j = 0; j < p; ++j)
        rep.stage_bias[s][j] = rep.stage_bias[s][j] / static_cast<double>(ok.size()) - rep.truth[j];
    }
  }

  if (static_cast<double>(rep.failures) > 0.1 * static_cast<double>(replications))
    throw replication_error(std::to_string(rep.failures) + " of " + std::to_string(replications) +
                                " replicates failed",
                            std::move(rep));
  return rep;
}

}  // namespace paft

#endif  // PAFT_SIM_HPP
