#pragma once

// Plain phase-type distributions: absorption time of a finite Markov jump
// process with initial law alpha and sub-generator T.

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ocph/dataset.hpp"
#include "ocph/errors.hpp"
#include "ocph/matrix_kernels.hpp"
#include "ocph/random.hpp"

namespace ocph {

/// Reliability values at or below this are treated as underflowed.
inline constexpr double kTailFloor = 1e-300;
inline const double kLogTailFloor = std::log(kTailFloor);

struct ErlangSpec {
  int phases = 1;
  double rate = 1.0;

  void validate() const {
    if (phases < 1) throw invalid_input("erlang: phases must be >= 1");
    if (!(rate > 0.0) || !std::isfinite(rate)) throw invalid_input("erlang: rate must be positive");
  }
  friend bool operator==(const ErlangSpec&, const ErlangSpec&) = default;
};

namespace detail {

inline Matrix erlang_generator(int n, double rate) {
  Matrix t = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    t(i, i) = -rate;
    if (i + 1 < n) t(i, i + 1) = rate;
  }
  return t;
}

inline RowVector first_unit(int n) {
  RowVector a = RowVector::Zero(n);
  a(0) = 1.0;
  return a;
}

/// Checks the sub-generator sign pattern and nonsingularity; returns the exit vector -T e.
inline Vector checked_exit_vector(const Matrix& t, const std::string& name) {
  if (t.rows() < 1 || t.rows() != t.cols())
    throw invalid_representation(name + "-square", "sub-generator must be square with order >= 1");
  if (!all_finite(t)) throw invalid_representation(name + "-finite", "non-finite entry");
  const Eigen::Index n = t.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(t(i, i) < 0.0))
      throw invalid_representation(name + "-diagonal",
                                   "diagonal entry " + std::to_string(i) + " is not negative");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && t(i, j) < 0.0)
        throw invalid_representation(
            name + "-off-diagonal",
            "entry (" + std::to_string(i) + "," + std::to_string(j) + ") is negative");
    }
    const double row_sum = t.row(i).sum();
    if (row_sum > 1e-12 * std::max(1.0, -t(i, i)))
      throw invalid_representation(name + "-row-sum",
                                   "row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
  }
  try {
    LuSolver<double> lu(t);
  } catch (const singular_matrix& e) {
    throw invalid_representation(name + "-singular", e.what());
  }
  return (-t.rowwise().sum()).cwiseMax(0.0);
}

inline void check_initial_vector(const RowVector& alpha, Eigen::Index order) {
  if (alpha.size() != order)
    throw invalid_representation("alpha-length", "alpha length does not match matrix order");
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    if (!std::isfinite(alpha(i)) || alpha(i) < 0.0)
      throw invalid_representation("alpha-negative", "entry " + std::to_string(i) + " is negative");
  }
  if (std::abs(alpha.sum() - 1.0) > 1e-12)
    throw invalid_representation("alpha-sum", "entries sum to " + std::to_string(alpha.sum()));
}

struct CdfPair {
  double cdf;
  double reliability;
};

/// Erlang(n) cdf and survival at scaled time mu as regularized incomplete gamma
/// functions. The smaller side is computed directly, so both stay monotone.
inline CdfPair erlang_cdf_pair(int n, double mu) {
  if (mu == 0.0) return {0.0, 1.0};
  const double lower = boost::math::gamma_p(n, mu);
  if (lower <= 0.5) return {lower, 1.0 - lower};
  const double upper = boost::math::gamma_q(n, mu);
  return {1.0 - upper, upper};
}

inline void require_nonnegative(double x) {
  if (!(x >= 0.0)) throw domain_error("x must be nonnegative");
}

/// Embedded jump chain of a sub-generator: per-state holding rate and the
/// cumulative law of the next state, absorption being index n.
class JumpChain {
 public:
  JumpChain(const Matrix& t, const Vector& exit) : n_(t.rows()) {
    rate_.resize(static_cast<std::size_t>(n_));
    next_.assign(static_cast<std::size_t>(n_), {});
    for (Eigen::Index i = 0; i < n_; ++i) {
      const double r = -t(i, i);
      rate_[i] = r;
      auto& cum = next_[i];
      cum.resize(static_cast<std::size_t>(n_ + 1));
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n_; ++j) {
        if (j != i) acc += t(i, j) / r;
        cum[j] = acc;
      }
      acc += exit(i) / r;
      cum[n_] = acc;
      for (double& c : cum) c /= acc;
    }
  }

  double rate(Eigen::Index state) const { return rate_[state]; }

  /// Next state after leaving `state`; returns order() for absorption.
  Eigen::Index jump(Eigen::Index state, Rng& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto& cum = next_[state];
    for (Eigen::Index j = 0; j <= n_; ++j) {
      if (u < cum[j] && (j == n_ || j != state)) return j;
    }
    return n_;
  }

  Eigen::Index order() const { return n_; }

 private:
  Eigen::Index n_;
  std::vector<double> rate_;
  std::vector<std::vector<double>> next_;
};

inline Eigen::Index draw_initial(const RowVector& alpha, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    acc += alpha(i);
    if (u < acc) return i;
  }
  for (Eigen::Index i = alpha.size() - 1; i >= 0; --i)
    if (alpha(i) > 0.0) return i;
  return 0;
}

/// Bisection for the x where a nonincreasing reliability drops to `target`.
template <typename Reliability>
double bisect_reliability(Reliability&& rel, double target, double lo, double hi) {
  while (rel(hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw numeric_error("quantile bracket diverged");
  }
  for (int it = 0; it < 400 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rel(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Validated (alpha, T). Immutable; the exit vector is cached. Representations
/// built from an ErlangSpec remember it and evaluate through the log-domain
/// Erlang kernels instead of the dense exponential.
class PhaseTypeRep {
 public:
  static PhaseTypeRep validate(RowVector alpha, Matrix t) {
    Vector exit = detail::checked_exit_vector(t, "T");
    detail::check_initial_vector(alpha, t.rows());
    return PhaseTypeRep(std::move(alpha), std::move(t), std::move(exit), std::nullopt);
  }

  const RowVector& alpha() const noexcept { return alpha_; }
  const Matrix& generator() const noexcept { return t_; }
  const Vector& exit() const noexcept { return exit_; }
  int order() const noexcept { return static_cast<int>(t_.rows()); }
  const std::optional<ErlangSpec>& erlang() const noexcept { return erlang_; }

  /// alpha e^{Tx}
  RowVector occupancy(double x) const {
    if (erlang_) return erlang_exp_row(erlang_->phases, erlang_->rate, x);
    return alpha_ * expm(t_ * x);
  }

  friend PhaseTypeRep erlang_rep(const ErlangSpec& spec);

 private:
  PhaseTypeRep(RowVector alpha, Matrix t, Vector exit, std::optional<ErlangSpec> erlang)
      : alpha_(std::move(alpha)), t_(std::move(t)), exit_(std::move(exit)), erlang_(erlang) {}

  RowVector alpha_;
  Matrix t_;
  Vector exit_;
  std::optional<ErlangSpec> erlang_;
};

inline PhaseTypeRep erlang_rep(const ErlangSpec& spec) {
  spec.validate();
  const int n = spec.phases;
  Vector exit = Vector::Zero(n);
  exit(n - 1) = spec.rate;
  return PhaseTypeRep(detail::first_unit(n), detail::erlang_generator(n, spec.rate),
                      std::move(exit), spec);
}

/// Density, distribution and reliability at one point from a single exponential.
struct PointMeasures {
  double pdf = 0.0;
  double cdf = 0.0;
  double reliability = 1.0;
};

/// Log density and log reliability; finite wherever the Erlang path can represent them.
struct LogMeasures {
  double log_pdf = 0.0;
  double log_reliability = 0.0;
};

inline LogMeasures log_evaluate(const PhaseTypeRep& rep, double x) {
  detail::require_nonnegative(x);
  if (const auto& e = rep.erlang()) {
    const auto row = log_erlang_exp_row(e->phases, e->rate, x);
    return {std::log(e->rate) + row.back(), log_sum_exp(row)};
  }
  const RowVector occ = rep.occupancy(x);
  return {std::log(occ.dot(rep.exit().transpose())), x == 0.0 ? 0.0 : std::log(occ.sum())};
}

inline PointMeasures evaluate(const PhaseTypeRep& rep, double x) {
  detail::require_nonnegative(x);
  if (const auto& e = rep.erlang()) {
    const auto cum = detail::erlang_cdf_pair(e->phases, e->rate * x);
    return {std::exp(log_evaluate(rep, x).log_pdf), cum.cdf, cum.reliability};
  }
  const RowVector occ = rep.occupancy(x);
  const double pdf = std::max(0.0, occ.dot(rep.exit().transpose()));
  const double rel = x == 0.0 ? 1.0 : std::clamp(occ.sum(), 0.0, 1.0);
  return {pdf, 1.0 - rel, rel};
}

inline double pdf(const PhaseTypeRep& rep, double x) { return evaluate(rep, x).pdf; }
inline double cdf(const PhaseTypeRep& rep, double x) { return evaluate(rep, x).cdf; }
inline double reliability(const PhaseTypeRep& rep, double x) { return evaluate(rep, x).reliability; }
inline double log_pdf(const PhaseTypeRep& rep, double x) { return log_evaluate(rep, x).log_pdf; }

inline double hazard(const PhaseTypeRep& rep, double x) {
  const auto lm = log_evaluate(rep, x);
  if (!(lm.log_reliability > kLogTailFloor)) throw tail_underflow("reliability underflow in hazard");
  return std::exp(lm.log_pdf - lm.log_reliability);
}

inline double cum_hazard(const PhaseTypeRep& rep, double x) {
  const auto lm = log_evaluate(rep, x);
  if (!(lm.log_reliability > kLogTailFloor))
    throw tail_underflow("reliability underflow in cumulative hazard");
  return std::max(0.0, -lm.log_reliability);
}

/// E[X^k] = (-1)^k k! alpha T^{-k} e
inline double moment(const PhaseTypeRep& rep, int k) {
  if (k < 1) throw invalid_input("moment order must be >= 1");
  const LuSolver<double> lu(rep.generator());
  Vector v = Vector::Ones(rep.order());
  double factorial = 1.0;
  for (int i = 1; i <= k; ++i) {
    v = lu.solve(v);
    factorial *= i;
  }
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * factorial * rep.alpha().dot(v.transpose());
}

inline double mean(const PhaseTypeRep& rep) { return moment(rep, 1); }

inline double sd(const PhaseTypeRep& rep) {
  const double mu = moment(rep, 1);
  return std::sqrt(std::max(0.0, moment(rep, 2) - mu * mu));
}

/// E[e^{itX}] = alpha (-(T + itI))^{-1} T^0
inline Complex char_fn(const PhaseTypeRep& rep, double t) {
  if (t == 0.0) return {1.0, 0.0};
  const ComplexVector u = solve_complex_shifted(rep.generator(), t, rep.exit());
  return -(rep.alpha().cast<Complex>() * u)(0);
}

inline double quantile(const PhaseTypeRep& rep, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw domain_error("quantile level must lie in [0, 1)");
  if (p == 0.0) return 0.0;
  const double start = rep.erlang() ? rep.erlang()->phases / rep.erlang()->rate : mean(rep);
  return detail::bisect_reliability([&](double x) { return reliability(rep, x); }, 1.0 - p, 0.0,
                                    start);
}

/// Absorption times of the jump process, sorted. Deterministic in `seed`.
inline Dataset sample(const PhaseTypeRep& rep, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw invalid_input("sample count must be >= 1");
  Rng rng(seed);
  const detail::JumpChain chain(rep.generator(), rep.exit());
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Eigen::Index state = detail::draw_initial(rep.alpha(), rng);
    double t = 0.0;
    while (state < chain.order()) {
      t += std::exponential_distribution<double>(chain.rate(state))(rng);
      state = chain.jump(state, rng);
    }
    out.push_back(t);
  }
  return Dataset(std::move(out));
}

}  // namespace ocph
