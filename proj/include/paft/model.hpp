#ifndef PAFT_MODEL_HPP
#define PAFT_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "paft/error.hpp"
#include "paft/numerics.hpp"
#include "paft/trial_data.hpp"

namespace paft {

/// Parameter point of the piecewise AFT model.
///
///   e^eps = integral_0^T exp{-alpha * Z * I(s > tau) - beta'X} ds
///
/// alpha is the log acceleration of post-lag survival in the treated arm,
/// tau the lag time (same unit as the observed times), beta the covariate
/// effects on the log time scale.
struct PaftParams {
  double alpha = 0.0;
  double tau = 1.0;
  std::vector<double> beta;

  friend bool operator==(const PaftParams&, const PaftParams&) = default;
};

struct SmoothingConfig {
  double eta = 0.01;        ///< sigmoid sharpness
  double bandwidth = 1.0;   ///< kernel bandwidth a_n on the residual scale
  double quad_tol = 1e-10;  ///< window quadrature tolerance, relative to the integrand peak max(1, e^{-alpha z})
};

/// Half-width of the sigmoid transition window in units of eta. Outside
/// tau +/- 20 eta the weight is within e^-20 of 0 or 1.
inline constexpr double transition_halfwidth = 20.0;

/// Smooth stand-in for I(s > tau).
inline double sigmoid_weight(double s, double tau, double eta) noexcept {
  return logistic((s - tau) / eta);
}

inline double linear_predictor(std::span<const double> beta, std::span<const double> x) {
  if (beta.size() != x.size()) throw usage_error("beta and covariate dimensions differ");
  double s = 0.0;
  for (std::size_t k = 0; k < beta.size(); ++k) s += beta[k] * x[k];
  return s;
}

/// Log-time residual with the exact indicator:
/// log[min(y, tau) + max(y - tau, 0) e^{-alpha z}] - beta'x.
inline double residual_exact(const SubjectRecord& rec, const PaftParams& p) {
  const double lp = linear_predictor(p.beta, rec.x);
  const double tau = std::max(p.tau, 0.0);
  if (rec.z == 0 || rec.y <= tau) return std::log(rec.y) - lp;
  return std::log(tau + (rec.y - tau) * std::exp(-p.alpha)) - lp;
}

/// integral_0^y exp{-c * sigmoid_weight(s, tau, eta)} ds for a fixed
/// treatment-scaled acceleration c = alpha * z.
///
/// Adaptive Simpson runs only on the transition window [tau - 20 eta,
/// tau + 20 eta] (clipped at 0). On the flanks the weight is within e^-20 of
/// 0 or 1, so exp(-c w) is replaced by its first-order expansion, whose
/// integral is closed-form through softplus.
class transition_integral {
 public:
  transition_integral(double c, double tau, double eta, double quad_tol)
      : c_(c), tau_(tau), eta_(eta), tol_(quad_tol) {
    lo_ = std::max(0.0, tau - transition_halfwidth * eta);
    hi_ = tau + transition_halfwidth * eta;
  }

  double operator()(double y) const {
    if (c_ == 0.0) return y;
    if (hi_ <= 0.0) return upper_flank(0.0, y);
    if (y <= lo_) return lower_flank(y);
    double total = lo_ > 0.0 ? lower_flank(lo_) : 0.0;
    if (y <= hi_) return total + window(lo_, y);
    if (!full_window_ready_) {
      full_window_ = window(lo_, hi_);
      full_window_ready_ = true;
    }
    return total + full_window_ + upper_flank(hi_, y);
  }

 private:
  double integrand(double s) const { return std::exp(-c_ * sigmoid_weight(s, tau_, eta_)); }

  // integral_0^b (1 - c w(s)) ds; w(s) <= e^-20 here.
  double lower_flank(double b) const {
    const double w_int = eta_ * (softplus((b - tau_) / eta_) - softplus(-tau_ / eta_));
    return b - c_ * w_int;
  }

  // integral_a^y e^{-c}(1 + c v(s)) ds with v = 1 - w <= e^-20.
  double upper_flank(double a, double y) const {
    const double v_int = eta_ * (softplus((tau_ - a) / eta_) - softplus((tau_ - y) / eta_));
    return std::exp(-c_) * ((y - a) + c_ * v_int);
  }

  // The tolerance is relative to the integrand's peak, max(1, e^-c).
  double window(double a, double b) const {
    const double scale = std::max(1.0, std::exp(-c_));
    return adaptive_simpson([this](double s) { return integrand(s); }, a, b, {tol_ * scale, 14});
  }

  double c_, tau_, eta_, tol_;
  double lo_ = 0.0, hi_ = 0.0;
  mutable double full_window_ = 0.0;
  mutable bool full_window_ready_ = false;
};

/// Log-time residual with the sigmoid-smoothed indicator.
inline double residual_smoothed(const SubjectRecord& rec, const PaftParams& p, const SmoothingConfig& cfg) {
  if (!(cfg.eta > 0.0) || !(cfg.quad_tol > 0.0)) throw usage_error("eta and quad_tol must be > 0");
  const double lp = linear_predictor(p.beta, rec.x);
  const transition_integral integral(p.alpha * rec.z, p.tau, cfg.eta, cfg.quad_tol);
  return std::log(integral(rec.y)) - lp;
}

/// Kernel bandwidth 4^{1/3} sigma n^{-1/3}, sigma the sample sd of the residuals.
inline double bandwidth_rule(std::span<const double> residuals, std::size_t n) {
  if (n < 2 || residuals.size() < 2) throw usage_error("bandwidth rule needs n >= 2");
  const double sigma = sample_sd(residuals);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw numerical_error("degenerate residuals");
  return std::cbrt(4.0 / static_cast<double>(n)) * sigma;
}

/// Bandwidth from exact residuals at a parameter point, observed times in place of T.
inline double bandwidth_at(const TrialDataset& ds, const PaftParams& p) {
  std::vector<double> eps;
  eps.reserve(ds.size());
  for (const auto& r : ds.records) eps.push_back(residual_exact(r, p));
  return bandwidth_rule(eps, ds.size());
}

/// The four additive pieces of the smoothed log-likelihood, already divided by n.
struct likelihood_terms {
  double linear = 0.0;     ///< -(1/n) sum d_i {alpha z_i w(y_i) + beta'x_i}
  double residual = 0.0;   ///< -(1/n) sum d_i R_i
  double density = 0.0;    ///< +(1/n) sum d_i log{(1/(n a)) sum_j d_j K((R_j - R_i)/a)}
  double survival = 0.0;   ///< -(1/n) sum d_i log{(1/n) sum_j Phi((R_j - R_i)/a)}

  double total() const noexcept { return linear + residual + density + survival; }
};

/// Smoothed semiparametric log-likelihood with a normal kernel.
///
/// Holds a flattened copy of the data plus scratch buffers, so one instance
/// should not be shared between threads. The tail integral of the kernel is
/// a * Phi((R_j - R_i)/a), which removes the inner quadrature.
class SmoothedLikelihood {
 public:
  SmoothedLikelihood(const TrialDataset& ds, const SmoothingConfig& cfg) : cfg_(cfg) {
    if (!(cfg.eta > 0.0) || !(cfg.bandwidth > 0.0) || !(cfg.quad_tol > 0.0))
      throw usage_error("eta, bandwidth and quad_tol must be > 0");
    n_ = ds.size();
    d_ = ds.dim();
    if (n_ == 0) throw data_error("empty dataset");
    y_.reserve(n_);
    z_.reserve(n_);
    x_.reserve(n_ * d_);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto& r = ds.records[i];
      if (r.x.size() != d_) throw data_error("row " + std::to_string(i + 1) + ": covariate count differs from header");
      y_.push_back(r.y);
      z_.push_back(r.z);
      x_.insert(x_.end(), r.x.begin(), r.x.end());
      (r.delta == 1 ? events_ : censored_).push_back(i);
    }
    if (events_.empty()) throw data_error("no observed events");
    resid_.resize(n_);
    sum_k_.resize(n_);
    sum_phi_.resize(n_);
  }

  std::size_t dim() const noexcept { return d_; }
  const SmoothingConfig& config() const noexcept { return cfg_; }

  double operator()(const PaftParams& p) { return terms(p).total(); }

  /// Residuals R-tilde at the last evaluated point.
  std::span<const double> residuals() const noexcept { return resid_; }

  likelihood_terms terms(const PaftParams& p) {
    constexpr double neg_inf = -std::numeric_limits<double>::infinity();
    constexpr double floor = 1e-300;
    likelihood_terms t;
    if (p.beta.size() != d_) throw usage_error("beta dimension differs from dataset");
    if (!(p.tau > 0.0) || !std::isfinite(p.tau) || !std::isfinite(p.alpha)) return {neg_inf, 0, 0, 0};

    const double n = static_cast<double>(n_);
    const transition_integral treated(p.alpha, p.tau, cfg_.eta, cfg_.quad_tol);
    for (std::size_t i = 0; i < n_; ++i) {
      const double lp = linear_predictor(p.beta, std::span(x_).subspan(i * d_, d_));
      const double j = z_[i] == 1 ? treated(y_[i]) : y_[i];
      resid_[i] = std::log(j) - lp;
      if (!std::isfinite(resid_[i])) return {neg_inf, 0, 0, 0};
    }

    for (std::size_t i : events_) {
      const double lp = linear_predictor(p.beta, std::span(x_).subspan(i * d_, d_));
      t.linear -= p.alpha * z_[i] * sigmoid_weight(y_[i], p.tau, cfg_.eta) + lp;
      t.residual -= resid_[i];
    }
    t.linear /= n;
    t.residual /= n;

    kernel_sums();

    const double inv_a = 1.0 / cfg_.bandwidth;
    for (std::size_t i : events_) {
      const double dens = sum_k_[i] * inv_sqrt_2pi * inv_a / n;
      const double surv = sum_phi_[i] / n;
      if (!(dens >= floor) || !(surv >= floor)) return {neg_inf, 0, 0, 0};
      t.density += std::log(dens);
      t.survival -= std::log(surv);
    }
    t.density /= n;
    t.survival /= n;
    return t;
  }

 private:
  // For every event i: sum_k_[i] = sum over events j of exp(-u^2/2) and
  // sum_phi_[i] = sum over all j of Phi(u), u = (R_j - R_i)/a.
  //
  // Residuals are visited in sorted order. Event pairs are computed once and
  // credited to both ends (the kernel is symmetric, Phi(-u) = 1 - Phi(u)).
  // Pairs with |u| > pair_cutoff contribute exp(-u^2/2) < 3e-18 and
  // Phi(-|u|) < 2e-19 against sums that are at least 0.5, so they are
  // counted as exactly 0 or 1.
  void kernel_sums() {
    constexpr double pair_cutoff = 9.0;
    const double a = cfg_.bandwidth;
    const double inv_a = 1.0 / a;
    const double reach = pair_cutoff * a;
    auto by_residual = [this](std::size_t l, std::size_t r) {
      return resid_[l] < resid_[r] || (resid_[l] == resid_[r] && l < r);
    };
    sorted_events_ = events_;
    sorted_censored_ = censored_;
    std::sort(sorted_events_.begin(), sorted_events_.end(), by_residual);
    std::sort(sorted_censored_.begin(), sorted_censored_.end(), by_residual);

    const std::size_t ne = sorted_events_.size();
    const std::size_t nc = sorted_censored_.size();
    re_.resize(ne);
    rc_.resize(nc);
    ks_.assign(ne, 1.0);
    fs_.assign(ne, 0.5);
    for (std::size_t p = 0; p < ne; ++p) re_[p] = resid_[sorted_events_[p]];
    for (std::size_t p = 0; p < nc; ++p) rc_[p] = resid_[sorted_censored_[p]];

    std::size_t c_lo = 0;
    std::size_t c_hi = 0;
    for (std::size_t p = 0; p < ne; ++p) {
      const double ri = re_[p];
      double ki = 0.0;
      double fi = 0.0;
      std::size_t q = p + 1;
      for (; q < ne && re_[q] - ri <= reach; ++q) {
        const double u = (re_[q] - ri) * inv_a;
        const double e = std::exp(-0.5 * u * u);
        const double lower = normal_tail_with_exp(u, e);
        ki += e;
        ks_[q] += e;
        fi += 1.0 - lower;
        fs_[q] += lower;
      }
      fi += static_cast<double>(ne - q);

      while (c_lo < nc && rc_[c_lo] < ri - reach) ++c_lo;
      if (c_hi < c_lo) c_hi = c_lo;
      while (c_hi < nc && rc_[c_hi] <= ri + reach) ++c_hi;
      for (std::size_t j = c_lo; j < c_hi; ++j) {
        const double u = (rc_[j] - ri) * inv_a;
        const double lower = normal_tail_with_exp(std::abs(u), std::exp(-0.5 * u * u));
        fi += u >= 0.0 ? 1.0 - lower : lower;
      }
      fi += static_cast<double>(nc - c_hi);

      ks_[p] += ki;
      fs_[p] += fi;
    }
    for (std::size_t p = 0; p < ne; ++p) {
      sum_k_[sorted_events_[p]] = ks_[p];
      sum_phi_[sorted_events_[p]] = fs_[p];
    }
  }

  SmoothingConfig cfg_;
  std::size_t n_ = 0, d_ = 0;
  std::vector<double> y_;
  std::vector<int> z_;
  std::vector<double> x_;
  std::vector<std::size_t> events_, censored_;
  std::vector<double> resid_, sum_k_, sum_phi_;
  std::vector<std::size_t> sorted_events_, sorted_censored_;
  std::vector<double> re_, rc_, ks_, fs_;
};

/// Smoothed log-likelihood at one parameter point.
inline double log_likelihood(const TrialDataset& ds, const PaftParams& p, const SmoothingConfig& cfg) {
  SmoothedLikelihood lik(ds, cfg);
  return lik(p);
}

}  // namespace paft

#endif  // PAFT_MODEL_HPP
