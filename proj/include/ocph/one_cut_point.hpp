#pragma once

// One cut-point phase-type distributions: the absorbing process runs with
// sub-generator T1 on [0, a] and switches to T2 on (a, inf), keeping the phase
// it occupies at the cut. The density branch rule is x <= a -> first regime.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "ocph/dataset.hpp"
#include "ocph/errors.hpp"
#include "ocph/matrix_kernels.hpp"
#include "ocph/phase_type.hpp"
#include "ocph/random.hpp"

namespace ocph {

struct OcpErlangSpec {
  double cut_point = 1.0;
  int phases = 1;
  double rate1 = 1.0;
  double rate2 = 1.0;

  void validate() const {
    if (!(cut_point > 0.0) || !std::isfinite(cut_point))
      throw invalid_input("ocp-erlang: cut point must be positive and finite");
    if (phases < 1) throw invalid_input("ocp-erlang: phases must be >= 1");
    if (!(rate1 > 0.0) || !std::isfinite(rate1) || !(rate2 > 0.0) || !std::isfinite(rate2))
      throw invalid_input("ocp-erlang: rates must be positive");
  }
  friend bool operator==(const OcpErlangSpec&, const OcpErlangSpec&) = default;
};

class OneCutPointRep {
 public:
  static OneCutPointRep validate(double a, RowVector alpha, Matrix t1, Matrix t2) {
    if (!(a > 0.0) || !std::isfinite(a))
      throw invalid_representation("cut-point", "cut point must be positive and finite");
    Vector exit1 = detail::checked_exit_vector(t1, "T1");
    Vector exit2 = detail::checked_exit_vector(t2, "T2");
    if (t1.rows() != t2.rows())
      throw invalid_representation("order", "T1 and T2 must have the same order");
    detail::check_initial_vector(alpha, t1.rows());
    return OneCutPointRep(a, std::move(alpha), std::move(t1), std::move(t2), std::move(exit1),
                          std::move(exit2), std::nullopt);
  }

  double cut_point() const noexcept { return a_; }
  const RowVector& alpha() const noexcept { return alpha_; }
  const Matrix& t1() const noexcept { return t1_; }
  const Matrix& t2() const noexcept { return t2_; }
  const Vector& exit1() const noexcept { return exit1_; }
  const Vector& exit2() const noexcept { return exit2_; }
  int order() const noexcept { return static_cast<int>(t1_.rows()); }
  const std::optional<OcpErlangSpec>& erlang() const noexcept { return erlang_; }

  /// alpha e^{T1 a}: the (defective) phase law of the process at the cut.
  const RowVector& at_cut() const noexcept { return at_cut_; }

  /// Phase occupancy alpha e^{T1 x} (x <= a) or alpha e^{T1 a} e^{T2 (x - a)}.
  RowVector occupancy(double x) const {
    if (erlang_) {
      const auto logs = log_occupancy_erlang(x);
      RowVector out(order());
      for (int j = 0; j < order(); ++j) out(j) = std::exp(logs[j]);
      return out;
    }
    if (x <= a_) return alpha_ * expm(t1_ * x);
    return at_cut_ * expm(t2_ * (x - a_));
  }

  /// Erlang structure only.
  std::vector<double> log_occupancy_erlang(double x) const {
    const auto& e = *erlang_;
    if (x <= a_) return log_erlang_exp_row(e.phases, e.rate1, x);
    return log_erlang_propagate(log_at_cut_, e.rate2, x - a_);
  }

  friend OneCutPointRep expand_ocp_erlang(const OcpErlangSpec& spec);

 private:
  OneCutPointRep(double a, RowVector alpha, Matrix t1, Matrix t2, Vector exit1, Vector exit2,
                 std::optional<OcpErlangSpec> erlang)
      : a_(a),
        alpha_(std::move(alpha)),
        t1_(std::move(t1)),
        t2_(std::move(t2)),
        exit1_(std::move(exit1)),
        exit2_(std::move(exit2)),
        erlang_(erlang) {
    if (erlang_) {
      log_at_cut_ = log_erlang_exp_row(erlang_->phases, erlang_->rate1, a_);
      at_cut_.resize(order());
      for (int j = 0; j < order(); ++j) at_cut_(j) = std::exp(log_at_cut_[j]);
    } else {
      at_cut_ = alpha_ * expm(t1_ * a_);
    }
  }

  double a_;
  RowVector alpha_;
  Matrix t1_;
  Matrix t2_;
  Vector exit1_;
  Vector exit2_;
  std::optional<OcpErlangSpec> erlang_;
  RowVector at_cut_;
  std::vector<double> log_at_cut_;
};

inline OneCutPointRep expand_ocp_erlang(const OcpErlangSpec& spec) {
  spec.validate();
  const int n = spec.phases;
  Vector exit1 = Vector::Zero(n);
  Vector exit2 = Vector::Zero(n);
  exit1(n - 1) = spec.rate1;
  exit2(n - 1) = spec.rate2;
  return OneCutPointRep(spec.cut_point, detail::first_unit(n),
                        detail::erlang_generator(n, spec.rate1),
                        detail::erlang_generator(n, spec.rate2), std::move(exit1),
                        std::move(exit2), spec);
}

/// The same model viewed with the first-regime dynamics only.
inline PhaseTypeRep first_regime(const OneCutPointRep& rep) {
  if (const auto& e = rep.erlang()) return erlang_rep({e->phases, e->rate1});
  return PhaseTypeRep::validate(rep.alpha(), rep.t1());
}

inline LogMeasures log_evaluate(const OneCutPointRep& rep, double x) {
  detail::require_nonnegative(x);
  const bool first = x <= rep.cut_point();
  if (const auto& e = rep.erlang()) {
    const auto occ = rep.log_occupancy_erlang(x);
    return {std::log(first ? e->rate1 : e->rate2) + occ.back(), log_sum_exp(occ)};
  }
  const RowVector occ = rep.occupancy(x);
  const Vector& exit = first ? rep.exit1() : rep.exit2();
  return {std::log(occ.dot(exit.transpose())), x == 0.0 ? 0.0 : std::log(occ.sum())};
}

namespace detail {

/// Erlang structure only. Phase j at the cut still needs n - j jumps at rate lambda2.
inline CdfPair ocp_erlang_cdf_pair(const OneCutPointRep& rep, double x) {
  const auto& e = *rep.erlang();
  const double a = rep.cut_point();
  if (x <= a) return erlang_cdf_pair(e.phases, e.rate1 * x);
  const double before = erlang_cdf_pair(e.phases, e.rate1 * a).cdf;
  const double mu = e.rate2 * (x - a);
  const RowVector& at_cut = rep.at_cut();
  double gained = 0.0;
  double remaining = 0.0;
  for (int j = 0; j < e.phases; ++j) {
    if (at_cut(j) == 0.0) continue;
    gained += at_cut(j) * boost::math::gamma_p(e.phases - j, mu);
    remaining += at_cut(j) * boost::math::gamma_q(e.phases - j, mu);
  }
  const double f = before + gained;
  if (f <= 0.5) return {f, 1.0 - f};
  remaining = std::clamp(remaining, 0.0, 1.0);
  return {1.0 - remaining, remaining};
}

}  // namespace detail

inline PointMeasures evaluate(const OneCutPointRep& rep, double x) {
  detail::require_nonnegative(x);
  if (rep.erlang()) {
    const auto cum = detail::ocp_erlang_cdf_pair(rep, x);
    return {std::exp(log_evaluate(rep, x).log_pdf), cum.cdf, cum.reliability};
  }
  const RowVector occ = rep.occupancy(x);
  const Vector& exit = x <= rep.cut_point() ? rep.exit1() : rep.exit2();
  const double pdf = std::max(0.0, occ.dot(exit.transpose()));
  const double rel = x == 0.0 ? 1.0 : std::clamp(occ.sum(), 0.0, 1.0);
  return {pdf, 1.0 - rel, rel};
}

inline double pdf(const OneCutPointRep& rep, double x) { return evaluate(rep, x).pdf; }
inline double cdf(const OneCutPointRep& rep, double x) { return evaluate(rep, x).cdf; }
inline double reliability(const OneCutPointRep& rep, double x) {
  return evaluate(rep, x).reliability;
}
inline double log_pdf(const OneCutPointRep& rep, double x) { return log_evaluate(rep, x).log_pdf; }

inline double hazard(const OneCutPointRep& rep, double x) {
  const auto lm = log_evaluate(rep, x);
  if (!(lm.log_reliability > kLogTailFloor)) throw tail_underflow("reliability underflow in hazard");
  return std::exp(lm.log_pdf - lm.log_reliability);
}

inline double cum_hazard(const OneCutPointRep& rep, double x) {
  const auto lm = log_evaluate(rep, x);
  if (!(lm.log_reliability > kLogTailFloor))
    throw tail_underflow("reliability underflow in cumulative hazard");
  return std::max(0.0, -lm.log_reliability);
}

/// f(a+) - f(a) = alpha e^{T1 a} (T2^0 - T1^0)
inline double density_jump_at_cut(const OneCutPointRep& rep) {
  return rep.at_cut().dot((rep.exit2() - rep.exit1()).transpose());
}

/// phi(t) = e^{ita} alpha e^{T1 a} [(T1+itI)^{-1} T1^0 - (T2+itI)^{-1} T2^0] - alpha (T1+itI)^{-1} T1^0
inline Complex char_fn(const OneCutPointRep& rep, double t) {
  if (t == 0.0) return {1.0, 0.0};
  const ComplexVector u1 = solve_complex_shifted(rep.t1(), t, rep.exit1());
  const ComplexVector u2 = solve_complex_shifted(rep.t2(), t, rep.exit2());
  const Complex phase = std::exp(Complex(0.0, t * rep.cut_point()));
  const Complex head = (rep.at_cut().cast<Complex>() * (u1 - u2))(0);
  const Complex tail = (rep.alpha().cast<Complex>() * u1)(0);
  return phase * head - tail;
}

/// Supremum of t for which the moment-generating function is accepted.
inline double mgf_bound(const OneCutPointRep& rep) {
  if (const auto& e = rep.erlang()) return std::min(e->rate1, e->rate2);
  return std::min(decay_rate(rep.t1()), decay_rate(rep.t2()));
}

/// Same algebra as char_fn with the real shift tI.
inline double mgf(const OneCutPointRep& rep, double t) {
  if (!std::isfinite(t)) throw domain_error("mgf: non-finite argument");
  if (t == 0.0) return 1.0;
  if (t >= mgf_bound(rep)) throw domain_error("mgf: t at or beyond the convergence bound");
  auto shifted_solve = [t](const Matrix& m, const Vector& rhs) {
    Matrix s = m;
    s.diagonal().array() += t;
    try {
      return LuSolver<double>(s).solve(rhs);
    } catch (const singular_matrix&) {
      throw domain_error("mgf: shifted matrix is singular");
    }
  };
  const Vector v1 = shifted_solve(rep.t1(), rep.exit1());
  const Vector v2 = shifted_solve(rep.t2(), rep.exit2());
  return std::exp(t * rep.cut_point()) * rep.at_cut().dot((v1 - v2).transpose()) -
         rep.alpha().dot(v1.transpose());
}

/// mu = -alpha T1^{-1} e + alpha e^{T1 a} (T1^{-1} - T2^{-1}) e
inline double mean(const OneCutPointRep& rep) {
  const Vector ones = Vector::Ones(rep.order());
  const Vector y1 = LuSolver<double>(rep.t1()).solve(ones);
  const Vector y2 = LuSolver<double>(rep.t2()).solve(ones);
  return -rep.alpha().dot(y1.transpose()) + rep.at_cut().dot((y1 - y2).transpose());
}

/// E[X^2] = 2 alpha T1^{-2} e - 2 alpha e^{T1 a} [T2^{-1}(aI - T2^{-1}) - T1^{-1}(aI - T1^{-1})] e
inline double second_moment(const OneCutPointRep& rep) {
  const double a = rep.cut_point();
  const Vector ones = Vector::Ones(rep.order());
  const LuSolver<double> lu1(rep.t1());
  const LuSolver<double> lu2(rep.t2());
  const Vector y1 = lu1.solve(ones);
  const Vector y2 = lu2.solve(ones);
  const Vector z1 = lu1.solve(y1);
  const Vector z2 = lu2.solve(y2);
  const Vector bracket = (a * y2 - z2) - (a * y1 - z1);
  return 2.0 * rep.alpha().dot(z1.transpose()) - 2.0 * rep.at_cut().dot(bracket.transpose());
}

inline double sd(const OneCutPointRep& rep) {
  const double mu = mean(rep);
  return std::sqrt(std::max(0.0, second_moment(rep) - mu * mu));
}

inline double quantile(const OneCutPointRep& rep, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw domain_error("quantile level must lie in [0, 1)");
  if (p == 0.0) return 0.0;
  const double start = rep.erlang()
                           ? rep.cut_point() + 50.0 * rep.erlang()->phases / rep.erlang()->rate2
                           : std::max(rep.cut_point(), mean(rep));
  return detail::bisect_reliability([&](double x) { return reliability(rep, x); }, 1.0 - p, 0.0,
                                    start);
}

/// Simulates the two-regime jump process: T1 dynamics up to absorption or the
/// cut, then T2 dynamics from the phase held at the cut. Sorted output.
inline Dataset sample(const OneCutPointRep& rep, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw invalid_input("sample count must be >= 1");
  Rng rng(seed);
  const detail::JumpChain before(rep.t1(), rep.exit1());
  const detail::JumpChain after(rep.t2(), rep.exit2());
  const double a = rep.cut_point();
  const Eigen::Index absorbed = rep.order();
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Eigen::Index state = detail::draw_initial(rep.alpha(), rng);
    double t = 0.0;
    while (state != absorbed) {
      const double hold = std::exponential_distribution<double>(before.rate(state))(rng);
      if (t + hold > a) {
        t = a;
        break;
      }
      t += hold;
      state = before.jump(state, rng);
    }
    while (state != absorbed) {
      t += std::exponential_distribution<double>(after.rate(state))(rng);
      state = after.jump(state, rng);
    }
    out.push_back(t);
  }
  return Dataset(std::move(out));
}

}  // namespace ocph
