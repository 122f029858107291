#pragma once

// Test-only generators and independent oracles (adaptive quadrature, KS distance).

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ocph/ocph.hpp"

namespace ocph::testing {

inline double integrate(const std::function<double(double)>& f, double lo, double hi) {
  if (!(hi > lo)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-12);
}

/// Integral over [lo, hi] split into `pieces` equal panels, for sharply peaked integrands.
inline double integrate_panels(const std::function<double(double)>& f, double lo, double hi,
                               int pieces = 32) {
  double s = 0.0;
  for (int i = 0; i < pieces; ++i)
    s += integrate(f, lo + (hi - lo) * i / pieces, lo + (hi - lo) * (i + 1) / pieces);
  return s;
}

/// Random sub-generator with strictly negative row sums (so it is nonsingular).
inline Matrix random_subgenerator(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix t = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i != j && u(rng) < 0.6) {
        t(i, j) = 2.0 * u(rng);
        off += t(i, j);
      }
    }
    t(i, i) = -(off + 0.1 + 1.9 * u(rng));
  }
  return t;
}

/// Full generator: rows sum to zero.
inline Matrix random_generator(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix q = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i != j) {
        q(i, j) = 3.0 * u(rng);
        off += q(i, j);
      }
    }
    q(i, i) = -off;
  }
  return q;
}

inline RowVector random_alpha(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  RowVector a(n);
  for (int i = 0; i < n; ++i) a(i) = u(rng);
  a /= a.sum();
  return a;
}

inline PhaseTypeRep random_ph(int n, std::mt19937_64& rng) {
  return PhaseTypeRep::validate(random_alpha(n, rng), random_subgenerator(n, rng));
}

inline OneCutPointRep random_ocp(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.5);
  return OneCutPointRep::validate(u(rng), random_alpha(n, rng), random_subgenerator(n, rng),
                                  random_subgenerator(n, rng));
}

inline OcpErlangSpec random_ocp_erlang(std::mt19937_64& rng, int max_phases = 30) {
  std::uniform_int_distribution<int> phases(1, max_phases);
  std::uniform_real_distribution<double> lu(std::log(0.5), std::log(50.0));
  std::uniform_real_distribution<double> frac(0.2, 1.5);
  OcpErlangSpec s;
  s.phases = phases(rng);
  s.rate1 = std::exp(lu(rng));
  s.rate2 = std::exp(lu(rng));
  s.cut_point = frac(rng) * s.phases / s.rate1;
  return s;
}

/// Kolmogorov-Smirnov distance between a sorted sample and a model cdf.
template <typename Cdf>
double ks_distance(const Dataset& data, Cdf&& cdf) {
  const double m = static_cast<double>(data.size());
  double d = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double f = cdf(data[i]);
    d = std::max({d, (i + 1) / m - f, f - i / m});
  }
  return d;
}

/// Asymptotic 1% critical value of the KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

inline bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size() / 2;
  return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

}  // namespace ocph::testing
