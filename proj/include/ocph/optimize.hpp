#pragma once

// Bound-constrained limited-memory quasi-Newton maximizer with central
// finite-difference gradients. Free variables follow the L-BFGS direction,
// variables pinned at a bound by the gradient are held fixed, and every trial
// point is projected back onto the box.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "ocph/errors.hpp"

namespace ocph {

struct Bounds {
  double lower;
  double upper;
};

struct OptimOptions {
  /// Stop when the infinity norm of the projected gradient is <= tolerance * (1 + |f|).
  double tolerance = 1e-8;
  /// Stop when a step improves f by less than this multiple of machine epsilon, relative
  /// to max(|f|, 1). 1e7 matches the customary L-BFGS-B `factr` default.
  double factr = 1e7;
  int max_iterations = 500;
  int memory = 10;
};

struct OptimResult {
  std::vector<double> argmax;
  double value = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  long evaluations = 0;
};

using Objective = std::function<double(const std::vector<double>&)>;

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double inf_norm(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace detail

/// Maximizes `objective` over the box. The returned point is inside the bounds
/// and its value is never below the value at `start`.
inline OptimResult optimize_box(const Objective& objective, const std::vector<Bounds>& bounds,
                                std::vector<double> start, const OptimOptions& options = {}) {
  const std::size_t dim = start.size();
  if (dim == 0 || bounds.size() != dim)
    throw invalid_input("optimize_box: start and bounds must have the same nonzero length");
  for (std::size_t i = 0; i < dim; ++i) {
    if (!(bounds[i].lower <= bounds[i].upper))
      throw invalid_input("optimize_box: bounds must be ordered");
    if (!(start[i] >= bounds[i].lower && start[i] <= bounds[i].upper))
      throw invalid_input("optimize_box: start lies outside the bounds");
  }

  OptimResult result;
  // Internally minimize g = -f.
  auto eval = [&](const std::vector<double>& x) {
    ++result.evaluations;
    const double v = objective(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : -v;
  };
  auto project = [&](std::vector<double>& x) {
    for (std::size_t i = 0; i < dim; ++i) x[i] = std::clamp(x[i], bounds[i].lower, bounds[i].upper);
  };
  static const double step_scale = std::cbrt(std::numeric_limits<double>::epsilon());
  auto gradient = [&](const std::vector<double>& x, double gx) {
    std::vector<double> g(dim, 0.0);
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < dim; ++i) {
      const double h = step_scale * std::max(1.0, std::abs(x[i]));
      const bool up = x[i] + h <= bounds[i].upper;
      const bool down = x[i] - h >= bounds[i].lower;
      if (up && down) {
        probe[i] = x[i] + h;
        const double fp = eval(probe);
        probe[i] = x[i] - h;
        const double fm = eval(probe);
        g[i] = (fp - fm) / (2.0 * h);
      } else if (up) {
        probe[i] = x[i] + h;
        g[i] = (eval(probe) - gx) / h;
      } else if (down) {
        probe[i] = x[i] - h;
        g[i] = (gx - eval(probe)) / h;
      }
      probe[i] = x[i];
      if (!std::isfinite(g[i])) g[i] = 0.0;
    }
    return g;
  };
  auto projected_gradient_norm = [&](const std::vector<double>& x, const std::vector<double>& g) {
    double m = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double moved = std::clamp(x[i] - g[i], bounds[i].lower, bounds[i].upper);
      m = std::max(m, std::abs(moved - x[i]));
    }
    return m;
  };

  std::vector<double> x = std::move(start);
  double fx = eval(x);
  if (!std::isfinite(fx)) throw invalid_input("optimize_box: objective is not finite at start");
  std::vector<double> g = gradient(x, fx);

  std::deque<std::vector<double>> s_hist;
  std::deque<std::vector<double>> y_hist;

  for (result.iterations = 0; result.iterations < options.max_iterations; ++result.iterations) {
    if (projected_gradient_norm(x, g) <= options.tolerance * (1.0 + std::abs(fx))) {
      result.converged = true;
      break;
    }

    std::vector<bool> free(dim, true);
    for (std::size_t i = 0; i < dim; ++i) {
      if ((x[i] <= bounds[i].lower && g[i] > 0.0) || (x[i] >= bounds[i].upper && g[i] < 0.0))
        free[i] = false;
    }
    auto masked = [&](std::vector<double> v) {
      for (std::size_t i = 0; i < dim; ++i)
        if (!free[i]) v[i] = 0.0;
      return v;
    };

    // Two-loop recursion on the free subspace.
    std::vector<double> q = masked(g);
    const std::size_t k = s_hist.size();
    std::vector<double> alpha(k);
    std::vector<double> rho(k);
    for (std::size_t j = k; j-- > 0;) {
      const auto sj = masked(s_hist[j]);
      const auto yj = masked(y_hist[j]);
      const double sy = detail::dot(sj, yj);
      rho[j] = sy > 0.0 ? 1.0 / sy : 0.0;
      alpha[j] = rho[j] * detail::dot(sj, q);
      for (std::size_t i = 0; i < dim; ++i) q[i] -= alpha[j] * yj[i];
    }
    if (k > 0) {
      const auto sl = masked(s_hist.back());
      const auto yl = masked(y_hist.back());
      const double yy = detail::dot(yl, yl);
      const double gamma = yy > 0.0 ? detail::dot(sl, yl) / yy : 1.0;
      if (gamma > 0.0)
        for (double& v : q) v *= gamma;
    }
    for (std::size_t j = 0; j < k; ++j) {
      const auto sj = masked(s_hist[j]);
      const auto yj = masked(y_hist[j]);
      const double beta = rho[j] * detail::dot(yj, q);
      for (std::size_t i = 0; i < dim; ++i) q[i] += sj[i] * (alpha[j] - beta);
    }
    std::vector<double> dir = masked(q);
    for (double& v : dir) v = -v;

    const bool quasi_newton = k > 0;
    if (!quasi_newton || detail::dot(dir, g) >= 0.0) {
      dir = masked(g);
      for (double& v : dir) v = -v;
      const double gn = detail::inf_norm(dir);
      if (gn > 0.0) {
        // First steepest-descent step: at most a unit move in the largest coordinate.
        const double scale = std::min(1.0, 1.0 / gn);
        for (double& v : dir) v *= scale;
      }
    }

    // Projected backtracking (Armijo along the projection arc).
    double step = 1.0;
    std::vector<double> trial(dim);
    double f_trial = fx;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < dim; ++i) trial[i] = x[i] + step * dir[i];
      project(trial);
      double decrease = 0.0;
      for (std::size_t i = 0; i < dim; ++i) decrease += g[i] * (trial[i] - x[i]);
      if (trial == x) break;
      f_trial = eval(trial);
      if (std::isfinite(f_trial) && f_trial <= fx + 1e-4 * decrease && f_trial <= fx) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }

    if (!accepted) {
      if (quasi_newton) {
        // Curvature memory is stale; retry from steepest descent.
        s_hist.clear();
        y_hist.clear();
        continue;
      }
      break;
    }

    const std::vector<double> g_trial = gradient(trial, f_trial);
    std::vector<double> s(dim);
    std::vector<double> y(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      s[i] = trial[i] - x[i];
      y[i] = g_trial[i] - g[i];
    }
    const double sy = detail::dot(s, y);
    if (sy > 1e-10 * std::sqrt(detail::dot(s, s) * detail::dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      if (static_cast<int>(s_hist.size()) > options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }

    const double reduction = fx - f_trial;
    x = trial;
    fx = f_trial;
    g = g_trial;
    if (reduction <= options.factr * std::numeric_limits<double>::epsilon() *
                         std::max({std::abs(fx), std::abs(fx + reduction), 1.0})) {
      result.converged = true;
      ++result.iterations;
      break;
    }
  }

  result.argmax = std::move(x);
  result.value = -fx;
  return result;
}

}  // namespace ocph
