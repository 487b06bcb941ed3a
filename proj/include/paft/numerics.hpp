#ifndef PAFT_NUMERICS_HPP
#define PAFT_NUMERICS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "paft/error.hpp"

namespace paft {

inline constexpr double inv_sqrt_2pi = 0.398942280401432677939946059934;

inline double normal_pdf(double u) noexcept { return inv_sqrt_2pi * std::exp(-0.5 * u * u); }

inline double normal_cdf(double u) noexcept { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

/// Phi(-x) for x >= 0, given e = exp(-x^2/2) computed by the caller.
///
/// Hart's rational approximation (algorithm 5666) below x = 5 sqrt(2), a
/// continued fraction above. Absolute error below 2e-16 everywhere; taking
/// the exponential as input lets kernel sums share one exp per pair between
/// the density and the tail probability.
inline double normal_tail_with_exp(double x, double e) noexcept {
  if (x < 7.07106781186547) {
    double num = 3.52624965998911e-02 * x + 0.700383064443688;
    num = num * x + 6.37396220353165;
    num = num * x + 33.912866078383;
    num = num * x + 112.079291497871;
    num = num * x + 221.213596169931;
    num = num * x + 220.206867912376;
    double den = 8.83883476483184e-02 * x + 1.75566716318264;
    den = den * x + 16.064177579207;
    den = den * x + 86.7807322029461;
    den = den * x + 296.564248779674;
    den = den * x + 637.333633378831;
    den = den * x + 793.826512519948;
    den = den * x + 440.413735824752;
    return e * num / den;
  }
  double b = x + 0.65;
  b = x + 4.0 / b;
  b = x + 3.0 / b;
  b = x + 2.0 / b;
  b = x + 1.0 / b;
  return e / b * inv_sqrt_2pi;
}

/// log(1 + e^x) without overflow or loss of precision for very negative x.
inline double softplus(double x) noexcept {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Logistic function evaluated through exp of a non-positive argument.
inline double logistic(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Neumaier-compensated sum.
template <class Range, class Get>
double compensated_sum(const Range& r, Get&& get) {
  double s = 0.0;
  double c = 0.0;
  for (const auto& e : r) {
    const double v = get(e);
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  return s + c;
}

/// Compensated, so a constant sample has exactly its value as mean.
inline double mean(std::span<const double> v) {
  return compensated_sum(v, [](double x) { return x; }) / static_cast<double>(v.size());
}

/// Sample standard deviation with the n-1 divisor (two-pass).
inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Quantile of already sorted data using linear interpolation between order
/// statistics (Hyndman-Fan type 7, the R default).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw usage_error("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, p);
}

struct simpson_options {
  double abs_tol = 1e-10;
  int max_depth = 14;  ///< at most 2^max_depth leaf intervals
};

/// Adaptive Simpson quadrature with Richardson correction.
///
/// Intervals that miss their share of the tolerance at the depth limit are
/// accepted with their error estimate; numerical_error (naming the worst one)
/// is thrown when those estimates together exceed abs_tol.
template <class F>
double adaptive_simpson(F&& f, double a, double b, const simpson_options& opt = {}) {
  if (!(b > a)) return 0.0;

  struct segment {
    double a, b, fa, fm, fb, whole, tol;
    int depth;
  };
  auto simpson = [](double a_, double b_, double fa, double fm, double fb) {
    return (b_ - a_) / 6.0 * (fa + 4.0 * fm + fb);
  };

  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  std::vector<segment> stack;
  stack.push_back({a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), opt.abs_tol, 0});

  double total = 0.0;
  double worst_err = 0.0;
  double worst_a = 0.0;
  double worst_b = 0.0;
  double unresolved = 0.0;

  // Depth-first, left half first: the summation order is fixed for fixed inputs.
  while (!stack.empty()) {
    const segment s = stack.back();
    stack.pop_back();
    const double m = 0.5 * (s.a + s.b);
    const double lm = 0.5 * (s.a + m);
    const double rm = 0.5 * (m + s.b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(s.a, m, s.fa, flm, s.fm);
    const double right = simpson(m, s.b, s.fm, frm, s.fb);
    const double diff = left + right - s.whole;
    if (std::abs(diff) <= 15.0 * s.tol || s.depth + 1 >= opt.max_depth) {
      if (std::abs(diff) > 15.0 * s.tol) {
        unresolved += std::abs(diff) / 15.0;
        if (std::abs(diff) > worst_err) {
          worst_err = std::abs(diff);
          worst_a = s.a;
          worst_b = s.b;
        }
      }
      total += left + right + diff / 15.0;
      continue;
    }
    stack.push_back({m, s.b, s.fm, frm, s.fb, right, 0.5 * s.tol, s.depth + 1});
    stack.push_back({s.a, m, s.fa, flm, s.fm, left, 0.5 * s.tol, s.depth + 1});
  }

  if (unresolved > opt.abs_tol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "quadrature did not converge; worst interval [" << worst_a << ", " << worst_b
        << "] error estimate " << worst_err / 15.0 << ", total " << unresolved;
    throw numerical_error(msg.str());
  }
  return total;
}

}  // namespace paft

#endif  // PAFT_NUMERICS_HPP
