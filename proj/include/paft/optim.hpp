#ifndef PAFT_OPTIM_HPP
#define PAFT_OPTIM_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "paft/error.hpp"

namespace paft {

enum class optimizer_method { nelder_mead, quasi_newton };

inline const char* to_string(optimizer_method m) noexcept {
  return m == optimizer_method::nelder_mead ? "nelder_mead" : "quasi_newton";
}

struct OptimizerConfig {
  optimizer_method method = optimizer_method::nelder_mead;
  int max_iter = 2000;
  double f_tol = 1e-8;
  double x_tol = 1e-6;
  /// Nelder-Mead: smallest initial simplex edge. Quasi-Newton: length of the first step.
  double initial_step = 1.0;

  static OptimizerConfig nelder_mead() { return {}; }
  static OptimizerConfig quasi_newton() {
    OptimizerConfig c;
    c.method = optimizer_method::quasi_newton;
    c.max_iter = 500;
    c.initial_step = 0.1;
    return c;
  }
  static OptimizerConfig defaults(optimizer_method m) {
    return m == optimizer_method::nelder_mead ? nelder_mead() : quasi_newton();
  }

  void check() const {
    if (max_iter < 1) throw usage_error("max_iter must be >= 1");
    if (!(f_tol > 0.0) || !(x_tol > 0.0) || !(initial_step > 0.0))
      throw usage_error("optimizer tolerances and step must be > 0");
  }
};

struct OptimResult {
  std::vector<double> x;
  double f = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

namespace detail {

// NaN and +inf are treated as rejected points.
template <class F>
double guarded(F& f, const std::vector<double>& x, int& evals) {
  ++evals;
  const double v = f(x);
  if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
    return -std::numeric_limits<double>::infinity();
  return v;
}

}  // namespace detail

/// Nelder-Mead search for a maximum from a given initial simplex of
/// dim + 1 vertices; vertex 0 is the start point.
template <class F>
OptimResult nelder_mead_from(F&& objective, std::vector<std::vector<double>> simplex, const OptimizerConfig& cfg) {
  cfg.check();
  if (simplex.empty()) throw usage_error("empty simplex");
  const std::size_t dim = simplex.size() - 1;
  for (const auto& v : simplex)
    if (v.size() != dim) throw usage_error("simplex needs dim + 1 vertices of length dim");
  OptimResult res;
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();

  std::vector<double> fv(dim + 1);
  fv[0] = detail::guarded(objective, simplex[0], res.evaluations);
  if (fv[0] == neg_inf) throw numerical_error("infeasible start");
  if (dim == 0) {
    res.x = std::move(simplex[0]);
    res.f = fv[0];
    res.converged = true;
    return res;
  }
  for (std::size_t k = 1; k <= dim; ++k) fv[k] = detail::guarded(objective, simplex[k], res.evaluations);
  if (std::all_of(fv.begin() + 1, fv.end(), [](double v) { return v == neg_inf; }))
    throw numerical_error("likelihood degenerate at start");

  std::vector<std::size_t> order(dim + 1);
  std::vector<double> centroid(dim), trial(dim), trial2(dim);
  auto along = [&](double coef, const std::vector<double>& worst, std::vector<double>& out) {
    for (std::size_t k = 0; k < dim; ++k) out[k] = centroid[k] + coef * (centroid[k] - worst[k]);
  };

  for (;;) {
    std::iota(order.begin(), order.end(), 0);
    // Stable: among equal values the earlier vertex ranks first.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] > fv[b]; });
    {
      std::vector<std::vector<double>> s2;
      std::vector<double> f2;
      s2.reserve(dim + 1);
      f2.reserve(dim + 1);
      for (std::size_t idx : order) {
        s2.push_back(std::move(simplex[idx]));
        f2.push_back(fv[idx]);
      }
      simplex = std::move(s2);
      fv = std::move(f2);
    }

    double xspread = 0.0;
    for (std::size_t v = 1; v <= dim; ++v)
      for (std::size_t k = 0; k < dim; ++k) xspread = std::max(xspread, std::abs(simplex[v][k] - simplex[0][k]));
    const double fspread = fv[0] - fv[dim];
    if (fspread <= cfg.f_tol && xspread <= cfg.x_tol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= cfg.max_iter) break;
    ++res.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t v = 0; v < dim; ++v)
      for (std::size_t k = 0; k < dim; ++k) centroid[k] += simplex[v][k];
    for (double& c : centroid) c /= static_cast<double>(dim);

    const auto& worst = simplex[dim];
    along(1.0, worst, trial);
    const double fr = detail::guarded(objective, trial, res.evaluations);

    if (fr > fv[0]) {
      along(2.0, worst, trial2);
      const double fe = detail::guarded(objective, trial2, res.evaluations);
      if (fe > fr) {
        simplex[dim] = trial2;
        fv[dim] = fe;
      } else {
        simplex[dim] = trial;
        fv[dim] = fr;
      }
      continue;
    }
    if (fr > fv[dim - 1]) {
      simplex[dim] = trial;
      fv[dim] = fr;
      continue;
    }

    bool shrink = false;
    if (fr > fv[dim]) {
      along(0.5, worst, trial2);  // outside contraction
      const double fc = detail::guarded(objective, trial2, res.evaluations);
      if (fc >= fr) {
        simplex[dim] = trial2;
        fv[dim] = fc;
      } else {
        shrink = true;
      }
    } else {
      along(-0.5, worst, trial2);  // inside contraction
      const double fc = detail::guarded(objective, trial2, res.evaluations);
      if (fc > fv[dim]) {
        simplex[dim] = trial2;
        fv[dim] = fc;
      } else {
        shrink = true;
      }
    }
    if (shrink) {
      for (std::size_t v = 1; v <= dim; ++v) {
        for (std::size_t k = 0; k < dim; ++k) simplex[v][k] = simplex[0][k] + 0.5 * (simplex[v][k] - simplex[0][k]);
        fv[v] = detail::guarded(objective, simplex[v], res.evaluations);
      }
    }
  }

  res.x = simplex[0];
  res.f = fv[0];
  return res;
}

/// Regular simplex with vertex 0 at x0 and every edge of length `edge`:
/// vertex j adds q to each coordinate and p - q more to coordinate j, with
/// p = edge (sqrt(d+1) + d - 1) / (d sqrt 2), q = edge (sqrt(d+1) - 1) / (d sqrt 2).
inline std::vector<std::vector<double>> regular_simplex(const std::vector<double>& x0, double edge) {
  const std::size_t dim = x0.size();
  std::vector<std::vector<double>> simplex(dim + 1, x0);
  if (dim == 0) return simplex;
  const double d = static_cast<double>(dim);
  const double r = std::sqrt(d + 1.0);
  const double p = edge * (r + d - 1.0) / (d * std::numbers::sqrt2);
  const double q = edge * (r - 1.0) / (d * std::numbers::sqrt2);
  for (std::size_t j = 0; j < dim; ++j) {
    for (double& v : simplex[j + 1]) v += q;
    simplex[j + 1][j] += p - q;
  }
  return simplex;
}

/// Nelder-Mead simplex search for a maximum.
///
/// Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
/// Starts from a regular simplex with edge max(||x0||_inf, initial_step), so
/// the first moves are on the scale of the starting point. Converges when the
/// spread of function values over the simplex is below f_tol and every vertex
/// lies within x_tol (max norm) of the best one.
template <class F>
OptimResult nelder_mead(F&& objective, const std::vector<double>& x0, const OptimizerConfig& cfg) {
  cfg.check();
  double edge = cfg.initial_step;
  for (double v : x0) edge = std::max(edge, std::abs(v));
  return nelder_mead_from(objective, regular_simplex(x0, edge), cfg);
}

/// Central finite-difference gradient with step 1e-6 * max(1, |x_i|).
template <class F>
std::vector<double> fd_gradient(F& objective, const std::vector<double>& x, int& evals) {
  std::vector<double> g(x.size());
  std::vector<double> xp = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
    xp[k] = x[k] + h;
    const double fp = detail::guarded(objective, xp, evals);
    xp[k] = x[k] - h;
    const double fm = detail::guarded(objective, xp, evals);
    xp[k] = x[k];
    g[k] = (fp - fm) / (2.0 * h);
    if (!std::isfinite(g[k])) g[k] = 0.0;
  }
  return g;
}

/// BFGS ascent with finite-difference gradients and Armijo backtracking.
///
/// Stops on ||g|| < f_tol, or when an accepted step changes f by less than
/// f_tol (1 + |f|) while moving less than x_tol (1 + |x|) in max norm. After
/// 50 consecutive failed line searches the best point so far is returned
/// with converged = false.
template <class F>
OptimResult quasi_newton(F&& objective, std::vector<double> x0, const OptimizerConfig& cfg) {
  cfg.check();
  const std::size_t dim = x0.size();
  OptimResult res;
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  constexpr int max_failures = 50;
  constexpr int max_halvings = 40;

  std::vector<double> x = std::move(x0);
  double f = detail::guarded(objective, x, res.evaluations);
  if (f == neg_inf) throw numerical_error("infeasible start");
  if (dim == 0) {
    res.x = x;
    res.f = f;
    res.converged = true;
    return res;
  }

  auto norm2 = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
  };

  std::vector<double> g = fd_gradient(objective, x, res.evaluations);
  std::vector<double> H(dim * dim, 0.0);
  auto reset_h = [&](double scale) {
    std::fill(H.begin(), H.end(), 0.0);
    for (std::size_t k = 0; k < dim; ++k) H[k * dim + k] = scale;
  };
  const double g0 = norm2(g);
  reset_h(g0 > 0.0 ? cfg.initial_step / g0 : 1.0);
  bool first_update = true;
  int failures = 0;

  std::vector<double> d(dim), xn(dim), s(dim), yv(dim), Hy(dim);
  while (res.iterations < cfg.max_iter) {
    if (norm2(g) < cfg.f_tol) {
      res.converged = true;
      break;
    }
    ++res.iterations;

    for (std::size_t r = 0; r < dim; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < dim; ++c) acc += H[r * dim + c] * g[c];
      d[r] = acc;
    }
    double slope = std::inner_product(g.begin(), g.end(), d.begin(), 0.0);
    if (!(slope > 0.0)) {
      const double gn = norm2(g);
      reset_h(cfg.initial_step / gn);
      first_update = true;
      for (std::size_t k = 0; k < dim; ++k) d[k] = H[k * dim + k] * g[k];
      slope = std::inner_product(g.begin(), g.end(), d.begin(), 0.0);
    }

    double t = 1.0;
    double fn = neg_inf;
    bool accepted = false;
    for (int h = 0; h < max_halvings; ++h, t *= 0.5) {
      for (std::size_t k = 0; k < dim; ++k) xn[k] = x[k] + t * d[k];
      fn = detail::guarded(objective, xn, res.evaluations);
      if (fn >= f + 1e-4 * t * slope && fn > neg_inf) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (++failures >= max_failures) break;
      // Retry from steepest ascent with a progressively shorter first step.
      reset_h(cfg.initial_step * std::pow(0.1, failures) / std::max(norm2(g), 1e-300));
      first_update = true;
      continue;
    }
    failures = 0;

    double step_inf = 0.0;
    double x_inf = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      s[k] = xn[k] - x[k];
      step_inf = std::max(step_inf, std::abs(s[k]));
      x_inf = std::max(x_inf, std::abs(xn[k]));
    }
    const double df = fn - f;
    std::vector<double> gn = fd_gradient(objective, xn, res.evaluations);
    for (std::size_t k = 0; k < dim; ++k) yv[k] = g[k] - gn[k];  // gradient change of -f
    x = xn;
    f = fn;
    g = std::move(gn);

    if (df <= cfg.f_tol * (1.0 + std::abs(f)) && step_inf <= cfg.x_tol * (1.0 + x_inf)) {
      res.converged = true;
      break;
    }

    const double sy = std::inner_product(s.begin(), s.end(), yv.begin(), 0.0);
    const double yy = std::inner_product(yv.begin(), yv.end(), yv.begin(), 0.0);
    if (sy > 1e-12 * norm2(s) * std::sqrt(yy)) {
      if (first_update) {
        reset_h(sy / yy);
        first_update = false;
      }
      const double rho = 1.0 / sy;
      for (std::size_t r = 0; r < dim; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dim; ++c) acc += H[r * dim + c] * yv[c];
        Hy[r] = acc;
      }
      const double yHy = std::inner_product(yv.begin(), yv.end(), Hy.begin(), 0.0);
      // H is symmetric, so y'H = (Hy)'.
      for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < dim; ++c)
          H[r * dim + c] += -rho * (Hy[r] * s[c] + s[r] * Hy[c]) + (rho * rho * yHy + rho) * s[r] * s[c];
    }
  }

  res.x = std::move(x);
  res.f = f;
  return res;
}

/// Dispatches on cfg.method.
template <class F>
OptimResult maximize(F&& objective, std::vector<double> x0, const OptimizerConfig& cfg) {
  if (cfg.method == optimizer_method::nelder_mead) return nelder_mead(objective, std::move(x0), cfg);
  return quasi_newton(objective, std::move(x0), cfg);
}

}  // namespace paft

#endif  // PAFT_OPTIM_HPP
