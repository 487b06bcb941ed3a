#ifndef PAFT_RESIDUAL_DIST_HPP
#define PAFT_RESIDUAL_DIST_HPP

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "paft/error.hpp"
#include "paft/model.hpp"
#include "paft/trial_data.hpp"

namespace paft {

struct CensoredValue {
  double value = 0.0;
  int delta = 0;
};

/// Exact residuals at fitted parameters with Y in place of T. A censored
/// time gives a censored residual.
inline std::vector<CensoredValue> estimate_residuals(const TrialDataset& ds, const PaftParams& p) {
  std::vector<CensoredValue> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) out.push_back({residual_exact(r, p), r.delta});
  return out;
}

/// Kaplan-Meier step function. survival[k] is S just after times[k]
/// (right-continuous); S = 1 before times.front().
struct KmCurve {
  std::vector<double> times;
  std::vector<double> survival;
  std::vector<std::size_t> at_risk;
  std::vector<std::size_t> events;
  std::vector<std::size_t> censored;
  double max_value = 0.0;  ///< largest observed value, event or censored

  /// S(t) = product over times <= t.
  double operator()(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return survival[static_cast<std::size_t>(it - times.begin()) - 1];
  }
  double final_survival() const { return survival.empty() ? 1.0 : survival.back(); }
};

/// Product-limit estimator. At equal values events are counted before
/// censorings, so a censoring tied with an event is still at risk for it.
inline KmCurve km_estimate(std::span<const CensoredValue> pairs) {
  if (pairs.empty()) throw usage_error("Kaplan-Meier of an empty sample");
  std::vector<CensoredValue> v(pairs.begin(), pairs.end());
  std::sort(v.begin(), v.end(), [](const CensoredValue& a, const CensoredValue& b) {
    return a.value < b.value || (a.value == b.value && a.delta > b.delta);
  });

  KmCurve km;
  km.max_value = v.back().value;
  std::size_t risk = v.size();
  // Between censorings the product telescopes to at_risk_now / at_risk_then,
  // so each value costs one rounding; without censoring S is (n - k) / n.
  double s_base = 1.0;
  std::size_t r_base = risk;
  double s = 1.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    std::size_t d = 0;
    std::size_t c = 0;
    for (; j < v.size() && v[j].value == v[i].value; ++j) (v[j].delta ? d : c) += 1;
    if (d > 0) s = s_base * (static_cast<double>(risk - d) / static_cast<double>(r_base));
    km.times.push_back(v[i].value);
    km.survival.push_back(s);
    km.at_risk.push_back(risk);
    km.events.push_back(d);
    km.censored.push_back(c);
    risk -= d + c;
    if (c > 0) {
      s_base = s;
      r_base = risk;
    }
    i = j;
  }
  return km;
}

struct BenefitScore {
  double p_hat = 0.0;
  double threshold_arg = 0.0;  ///< log tau - beta'x
  bool tail_defective = false; ///< threshold past the data with KM mass left unassigned
};

/// P(T <= tau | Z, X) = 1 - S(log tau - beta'x). Treatment does not enter:
/// both arms share the baseline time scale up to tau.
inline BenefitScore prob_death_before_tau(std::span<const double> x, const PaftParams& p, const KmCurve& curve) {
  if (x.size() != p.beta.size()) throw usage_error("covariate vector length differs from beta");
  BenefitScore b;
  b.threshold_arg = std::log(p.tau) - linear_predictor(p.beta, x);
  b.p_hat = 1.0 - curve(b.threshold_arg);
  b.tail_defective = b.threshold_arg > curve.max_value && curve.final_survival() > 0.0;
  return b;
}

/// Residual curve at the fitted parameters and one score per subject.
struct BenefitAnalysis {
  std::vector<CensoredValue> residuals;
  KmCurve curve;
  std::vector<BenefitScore> scores;
};

inline BenefitAnalysis score_subjects(const TrialDataset& ds, const PaftParams& p) {
  BenefitAnalysis a;
  a.residuals = estimate_residuals(ds, p);
  a.curve = km_estimate(a.residuals);
  a.scores.reserve(ds.size());
  for (const auto& r : ds.records) a.scores.push_back(prob_death_before_tau(r.x, p, a.curve));
  return a;
}

}  // namespace paft

#endif  // PAFT_RESIDUAL_DIST_HPP
