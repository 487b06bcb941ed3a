#ifndef PAFT_JSON_IO_HPP
#define PAFT_JSON_IO_HPP

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "paft/char_tree.hpp"
#include "paft/error.hpp"
#include "paft/fit.hpp"
#include "paft/inference.hpp"
#include "paft/residual_dist.hpp"
#include "paft/sim.hpp"

namespace paft {

using json = nlohmann::ordered_json;

inline constexpr int schema_version = 1;

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw usage_error(std::string("field '") + key + "' has the wrong type");
  }
}

// Fixed 17 significant digits keep CSV output round-trip exact and
// independent of locale.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline json params_to_json(const PaftParams& p, const std::vector<std::string>& names) {
  json j;
  j["alpha"] = p.alpha;
  j["tau"] = p.tau;
  json b = json::object();
  for (std::size_t k = 0; k < p.beta.size(); ++k) b[k < names.size() ? names[k] : "x" + std::to_string(k + 1)] = p.beta[k];
  j["beta"] = std::move(b);
  return j;
}

/// Reads alpha, tau and beta; beta is an object keyed by covariate name or
/// a plain array.
inline PaftParams params_from_json(const json& j, std::vector<std::string>* names = nullptr) {
  if (!j.is_object() || !j.contains("alpha") || !j.contains("tau"))
    throw usage_error("parameter object needs alpha and tau");
  PaftParams p;
  p.alpha = detail::get_or<double>(j, "alpha", 0.0);
  p.tau = detail::get_or<double>(j, "tau", 0.0);
  if (j.contains("beta")) {
    const auto& b = j.at("beta");
    if (b.is_array()) {
      for (const auto& v : b) p.beta.push_back(v.get<double>());
    } else if (b.is_object()) {
      for (const auto& [k, v] : b.items()) {
        p.beta.push_back(v.get<double>());
        if (names) names->push_back(k);
      }
    } else {
      throw usage_error("beta must be an array or object");
    }
  }
  return p;
}

inline json fit_to_json(const FitResult& fit, const std::vector<std::string>& names) {
  json j;
  j["schema_version"] = schema_version;
  j["alpha"] = fit.params.alpha;
  j["tau"] = fit.params.tau;
  json b = json::object();
  for (std::size_t k = 0; k < fit.params.beta.size(); ++k) b[names.at(k)] = fit.params.beta[k];
  j["beta"] = std::move(b);
  j["loglik"] = fit.loglik;
  j["bandwidth"] = fit.bandwidth();
  j["eta"] = fit.eta;
  j["converged"] = fit.converged();
  json stages = json::array();
  for (const auto& s : fit.stages) {
    json sj;
    sj["bandwidth"] = s.bandwidth;
    sj["params"] = params_to_json(s.params, names);
    sj["loglik"] = s.loglik;
    sj["iterations"] = s.iterations;
    sj["evaluations"] = s.evaluations;
    sj["converged"] = s.converged;
    stages.push_back(std::move(sj));
  }
  j["stages"] = std::move(stages);
  j["warnings"] = fit.warnings;
  return j;
}

inline json bootstrap_to_json(const BootstrapResult& r) {
  json j;
  j["schema_version"] = schema_version;
  j["B"] = r.B;
  j["level"] = r.level;
  j["failures"] = r.failures;
  j["lo_rank"] = r.lo_rank;
  j["hi_rank"] = r.hi_rank;
  json params = json::array();
  for (std::size_t k = 0; k < r.names.size(); ++k) {
    json pj;
    pj["name"] = r.names[k];
    pj["estimate"] = r.estimate[k];
    pj["se"] = r.se[k];
    pj["interval_scale"] = r.exp_scale[k] ? "exp" : "natural";
    pj["ci_lo"] = r.ci_lo[k];
    pj["ci_hi"] = r.ci_hi[k];
    params.push_back(std::move(pj));
  }
  j["parameters"] = std::move(params);
  j["draws"] = r.draws;
  j["failure_messages"] = r.failure_messages;
  return j;
}

inline json permutation_to_json(const PermutationResult& r) {
  json j;
  j["schema_version"] = schema_version;
  j["alpha_hat"] = r.alpha_hat;
  j["tau_hat"] = r.tau_hat;
  j["p_alpha"] = r.p_alpha;
  j["p_tau"] = r.p_tau;
  j["B"] = r.B;
  j["failures"] = r.failures;
  j["tau_statistic"] = "|tau* - median(tau*)| >= |tau_hat - median(tau*)|";
  j["tau_statistic_is_convention"] = true;
  j["tau_null_median"] = r.tau_null_median;
  j["null_alpha"] = r.null_alpha;
  j["null_tau"] = r.null_tau;
  j["failure_messages"] = r.failure_messages;
  return j;
}

inline const char* family_name(CovariateSpec::family f) {
  switch (f) {
    case CovariateSpec::family::normal: return "normal";
    case CovariateSpec::family::lognormal: return "lognormal";
    case CovariateSpec::family::bernoulli: return "bernoulli";
  }
  return "normal";
}

/// Every field is optional; absent fields keep the SimDesign defaults.
inline SimDesign design_from_json(const json& j) {
  if (!j.is_object()) throw usage_error("design must be a JSON object");
  SimDesign d;
  d.n = detail::get_or<std::size_t>(j, "n", d.n);
  if (j.contains("truth")) d.truth = params_from_json(j.at("truth"));
  if (j.contains("covariates")) {
    d.covariates.clear();
    std::size_t k = 0;
    for (const auto& c : j.at("covariates")) {
      CovariateSpec s;
      const auto fam = detail::get_or<std::string>(c, "family", "normal");
      if (fam == "normal")
        s.dist = CovariateSpec::family::normal;
      else if (fam == "lognormal")
        s.dist = CovariateSpec::family::lognormal;
      else if (fam == "bernoulli")
        s.dist = CovariateSpec::family::bernoulli;
      else
        throw usage_error("unknown covariate family '" + fam + "'");
      s.location = detail::get_or<double>(c, "location", 0.0);
      s.variance = detail::get_or<double>(c, "variance", 1.0);
      s.name = detail::get_or<std::string>(c, "name", "x" + std::to_string(++k));
      d.covariates.push_back(std::move(s));
    }
  }
  d.error_sd = detail::get_or<double>(j, "error_sd", d.error_sd);
  d.allocation = detail::get_or<double>(j, "allocation", d.allocation);
  if (j.contains("censor_upper") && !j.at("censor_upper").is_null()) d.censor_upper = j.at("censor_upper").get<double>();
  d.target_censor_fraction = detail::get_or<double>(j, "target_censor_fraction", d.target_censor_fraction);
  d.check();
  return d;
}

inline json design_to_json(const SimDesign& d) {
  json j;
  j["n"] = d.n;
  j["truth"] = params_to_json(d.truth, [&] {
    std::vector<std::string> n;
    for (const auto& c : d.covariates) n.push_back(c.name);
    return n;
  }());
  json cov = json::array();
  for (const auto& c : d.covariates)
    cov.push_back({{"name", c.name}, {"family", family_name(c.dist)}, {"location", c.location}, {"variance", c.variance}});
  j["covariates"] = std::move(cov);
  j["error_sd"] = d.error_sd;
  j["allocation"] = d.allocation;
  j["censor_upper"] = d.censor_upper ? json(*d.censor_upper) : json(nullptr);
  j["target_censor_fraction"] = d.target_censor_fraction;
  return j;
}

inline json bias_report_to_json(const BiasReport& r) {
  json j;
  j["schema_version"] = schema_version;
  j["replications"] = r.replications;
  j["failures"] = r.failures;
  json params = json::array();
  for (std::size_t k = 0; k < r.names.size(); ++k) {
    json pj;
    pj["name"] = r.names[k];
    pj["truth"] = r.truth[k];
    pj["mean"] = r.mean_estimate[k];
    pj["bias"] = r.bias[k];
    pj["sd"] = r.sd[k];
    json sb = json::array();
    for (const auto& s : r.stage_bias) sb.push_back(s[k]);
    pj["stage_bias"] = std::move(sb);
    params.push_back(std::move(pj));
  }
  j["parameters"] = std::move(params);
  j["estimates"] = r.estimates;
  j["failure_messages"] = r.failure_messages;
  return j;
}

/// parameter,truth,mean,bias,sd,stage_1_bias,...
inline void write_bias_csv(const BiasReport& r, std::ostream& out) {
  out << "parameter,truth,mean,bias,sd";
  for (std::size_t s = 0; s < r.stage_bias.size(); ++s) out << ",stage_" << s + 1 << "_bias";
  out << '\n';
  for (std::size_t k = 0; k < r.names.size(); ++k) {
    out << r.names[k] << ',' << detail::num(r.truth[k]) << ',' << detail::num(r.mean_estimate[k]) << ','
        << detail::num(r.bias[k]) << ',' << detail::num(r.sd[k]);
    for (const auto& s : r.stage_bias) out << ',' << detail::num(s[k]);
    out << '\n';
  }
}

/// Nested nodes: {var, threshold, left, right} or {mean, n}.
inline json tree_to_json(const RegressionTree& tree, const std::vector<std::string>& names) {
  auto node = [&](auto&& self, std::size_t k) -> json {
    const auto& nd = tree.nodes[k];
    json j;
    if (nd.leaf) {
      j["mean"] = nd.mean;
      j["n"] = nd.members.size();
      return j;
    }
    j["var"] = nd.var < names.size() ? names[nd.var] : std::to_string(nd.var);
    j["threshold"] = nd.threshold;
    j["left"] = self(self, nd.left);
    j["right"] = self(self, nd.right);
    return j;
  };
  return node(node, 0);
}

inline void write_leaf_csv(const std::vector<LeafSummary>& rows, std::ostream& out) {
  out << "group,n,events,mean,min,q1,median,q3,max\n";
  for (const auto& r : rows)
    out << r.label << ',' << r.n << ',' << r.events << ',' << detail::num(r.mean) << ',' << detail::num(r.min) << ','
        << detail::num(r.q1) << ',' << detail::num(r.median) << ',' << detail::num(r.q3) << ','
        << detail::num(r.max) << '\n';
}

inline void write_km_csv(const KmCurve& km, std::ostream& out) {
  out << "residual,survival,at_risk,events,censored\n";
  for (std::size_t k = 0; k < km.times.size(); ++k)
    out << detail::num(km.times[k]) << ',' << detail::num(km.survival[k]) << ',' << km.at_risk[k] << ','
        << km.events[k] << ',' << km.censored[k] << '\n';
}

inline void write_scores_csv(const TrialDataset& ds, const RegressionTree& tree,
                             const std::vector<LeafSummary>& leaves, std::span<const BenefitScore> scores,
                             std::ostream& out) {
  std::vector<std::string> label(tree.nodes.size());
  for (const auto& l : leaves) label[l.node] = l.label;
  out << "row,treatment,p_hat,threshold_arg,tail_defective,group\n";
  for (std::size_t i = 0; i < ds.size(); ++i)
    out << i + 1 << ',' << ds.records[i].z << ',' << detail::num(scores[i].p_hat) << ','
        << detail::num(scores[i].threshold_arg) << ',' << (scores[i].tail_defective ? 1 : 0) << ','
        << label[tree.leaf_of(ds.records[i].x)] << '\n';
}

}  // namespace paft

#endif  // PAFT_JSON_IO_HPP
