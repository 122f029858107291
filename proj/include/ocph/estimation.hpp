#pragma once

// Maximum-likelihood fitting of Erlang-structured phase-type and one cut-point
// phase-type models: log-likelihoods, cut-point profiling, phase-count search
// and parametric-bootstrap intervals for the cut point.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ocph/dataset.hpp"
#include "ocph/errors.hpp"
#include "ocph/one_cut_point.hpp"
#include "ocph/optimize.hpp"
#include "ocph/phase_type.hpp"
#include "ocph/random.hpp"

namespace ocph {

struct FitConfig {
  int phase_min = 1;
  int phase_max = 30;
  int cutpoint_grid_size = 49;
  double rate_lower = 1e-6;
  double rate_upper = 1e8;
  int multistarts = 3;
  int bootstrap_reps = 500;
  double confidence_level = 0.95;
  std::uint64_t seed = 1;
  double tolerance = 1e-8;
  int max_iterations = 500;

  void validate() const {
    if (phase_min < 1 || phase_max < phase_min) throw invalid_input("phase range must satisfy 1 <= min <= max");
    if (cutpoint_grid_size < 1) throw invalid_input("cut-point grid needs at least one point");
    if (!(rate_lower > 0.0) || !(rate_upper > rate_lower)) throw invalid_input("rate bounds must be positive and ordered");
    if (multistarts < 1) throw invalid_input("multistarts must be >= 1");
    if (bootstrap_reps < 0) throw invalid_input("bootstrap replicates must be >= 0");
    if (!(confidence_level > 0.0 && confidence_level < 1.0)) throw invalid_input("confidence level must lie in (0, 1)");
    if (!(tolerance > 0.0)) throw invalid_input("tolerance must be positive");
    if (max_iterations < 1) throw invalid_input("iteration cap must be >= 1");
  }
};

struct Interval {
  double lower;
  double upper;
  friend bool operator==(const Interval&, const Interval&) = default;
};

using FittedModel = std::variant<ErlangSpec, OcpErlangSpec>;

struct PhaseTrace {
  int phases;
  double log_likelihood;
  friend bool operator==(const PhaseTrace&, const PhaseTrace&) = default;
};

struct FitResult {
  FittedModel model;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  std::optional<Interval> cutpoint_ci;
  bool converged = false;
  long evaluations = 0;
  std::vector<PhaseTrace> trace;
  std::vector<std::string> flags;

  friend bool operator==(const FitResult&, const FitResult&) = default;
};

/// Per-point contributions whose density falls below this are replaced by kLogPenalty.
inline constexpr double kDensityFloor = 1e-300;
inline constexpr double kLogPenalty = -1e10;

struct LogLikelihood {
  double value = 0.0;
  std::size_t penalized = 0;
  bool flagged() const noexcept { return penalized > 0; }
};

namespace detail {

inline void add_contribution(LogLikelihood& ll, double log_f) {
  static const double floor = std::log(kDensityFloor);
  if (!(log_f >= floor)) {
    ll.value += kLogPenalty;
    ++ll.penalized;
  } else {
    ll.value += log_f;
  }
}

}  // namespace detail

/// Log-likelihood of an Erlang-structured cut-point model. With a common Erlang
/// chain the phase counter is a Poisson process on the clock
/// L(x) = rate1 min(x, a) + rate2 (x - a)^+, so log f(x) is
/// log rate(x) - L(x) + (n-1) log L(x) - log (n-1)!, with rate(x) = rate1 for x <= a.
inline LogLikelihood loglik_ocp(const OcpErlangSpec& spec, const Dataset& data) {
  spec.validate();
  const double n1 = spec.phases - 1.0;
  const double log_norm = std::lgamma(static_cast<double>(spec.phases));
  const double log_r1 = std::log(spec.rate1);
  const double log_r2 = std::log(spec.rate2);
  const double a = spec.cut_point;
  LogLikelihood ll;
  for (double x : data.values()) {
    const bool first = x <= a;
    const double clock = first ? spec.rate1 * x : spec.rate1 * a + spec.rate2 * (x - a);
    const double poly = n1 == 0.0 ? 0.0 : n1 * std::log(clock);
    detail::add_contribution(ll, (first ? log_r1 : log_r2) - clock + poly - log_norm);
  }
  return ll;
}

/// Log-likelihood of any cut-point representation as the sum of log densities.
inline LogLikelihood loglik_ocp(const OneCutPointRep& rep, const Dataset& data) {
  LogLikelihood ll;
  for (double x : data.values()) detail::add_contribution(ll, log_pdf(rep, x));
  return ll;
}

inline LogLikelihood loglik_ph(const PhaseTypeRep& rep, const Dataset& data) {
  LogLikelihood ll;
  for (double x : data.values()) detail::add_contribution(ll, log_pdf(rep, x));
  return ll;
}

inline LogLikelihood loglik_erlang(const ErlangSpec& spec, const Dataset& data) {
  spec.validate();
  const double n1 = spec.phases - 1.0;
  const double log_norm = std::lgamma(static_cast<double>(spec.phases));
  const double log_rate = std::log(spec.rate);
  LogLikelihood ll;
  for (double x : data.values()) {
    const double clock = spec.rate * x;
    const double poly = n1 == 0.0 ? 0.0 : n1 * std::log(clock);
    detail::add_contribution(ll, log_rate - clock + poly - log_norm);
  }
  return ll;
}

inline LogLikelihood loglik(const FittedModel& model, const Dataset& data) {
  return std::visit(
      [&](const auto& spec) {
        if constexpr (std::is_same_v<std::decay_t<decltype(spec)>, ErlangSpec>)
          return loglik_erlang(spec, data);
        else
          return loglik_ocp(spec, data);
      },
      model);
}

/// Closed-form Erlang rate with known shape: n / mean.
inline double mle_erlang_rate(int n, const Dataset& data) {
  if (n < 1) throw invalid_input("phases must be >= 1");
  const double mu = data.mean();
  if (!(mu > 0.0)) throw unfittable_data("degenerate data: mean is zero");
  return n / mu;
}

inline FitResult fit_erlang(const Dataset& data, int n) {
  const ErlangSpec spec{n, mle_erlang_rate(n, data)};
  FitResult r;
  r.model = spec;
  r.log_likelihood = loglik_erlang(spec, data).value;
  r.converged = true;
  r.evaluations = 1;
  r.trace.push_back({n, r.log_likelihood});
  return r;
}

namespace detail {

struct ProfilePoint {
  double cut_point = 0.0;
  double rate1 = 0.0;
  double rate2 = 0.0;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  bool converged = false;
};

/// Brackets holding more observations than this are narrowed by golden section first.
inline constexpr std::size_t kScanIntervals = 16;
/// Grid points whose neighbourhoods are scanned, and intervals that get a joint polish.
inline constexpr std::size_t kRefinedGridPoints = 3;
inline constexpr std::size_t kPolishedIntervals = 3;

/// Fixed-n machinery shared by the grid, the refinement and the polish.
class OcpErlangFitter {
 public:
  OcpErlangFitter(const Dataset& data, int n, const FitConfig& config)
      : data_(data), n_(n), config_(config) {
    if (data.size() < 10) throw unfittable_data("at least 10 observations are required for a cut-point fit");
    opts_.tolerance = config.tolerance;
    opts_.max_iterations = config.max_iterations;
    log_bounds_ = {std::log(config.rate_lower), std::log(config.rate_upper)};
  }

  /// Grid candidates need 3 observations on each side (ties at a go left).
  bool feasible(double a) const {
    const std::size_t below = data_.count_at_most(a);
    return below >= 3 && data_.size() - below >= 3 && a > data_.min() && a < data_.max();
  }

  /// Empirical quantiles at i / (G + 1) that leave 3 observations on each side.
  std::vector<double> grid() const {
    std::vector<double> out;
    const int g = config_.cutpoint_grid_size;
    for (int i = 1; i <= g; ++i) {
      const double a = data_.quantile(static_cast<double>(i) / (g + 1));
      if (feasible(a) && (out.empty() || a > out.back())) out.push_back(a);
    }
    return out;
  }

  double clamp_rate(double r) const { return std::clamp(r, config_.rate_lower, config_.rate_upper); }

  /// Moment-style start: rate1 reproduces the empirical mass below a, rate2 spreads
  /// the expected remaining phases over the mean residual beyond a.
  std::pair<double, double> warm_start(double a) const {
    const std::size_t below = data_.count_at_most(a);
    const double target = 1.0 - static_cast<double>(below) / static_cast<double>(data_.size());
    auto surv = [&](double log_rate) {
      return std::exp(log_sum_exp(log_erlang_exp_row(n_, std::exp(log_rate), a)));
    };
    double lo = log_bounds_.lower;
    double hi = log_bounds_.upper;
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (lo + hi);
      (surv(mid) > target ? lo : hi) = mid;
    }
    const double rate1 = clamp_rate(std::exp(0.5 * (lo + hi)));

    const auto occ = log_erlang_exp_row(n_, rate1, a);
    double mass = 0.0;
    double remaining = 0.0;
    for (int j = 0; j < n_; ++j) {
      const double p = std::exp(occ[j]);
      mass += p;
      remaining += (n_ - j) * p;
    }
    const double phases_left = mass > 0.0 ? remaining / mass : 1.0;
    double residual = 0.0;
    for (std::size_t i = below; i < data_.size(); ++i) residual += data_[i] - a;
    residual /= static_cast<double>(data_.size() - below);
    const double rate2 = residual > 0.0 ? clamp_rate(phases_left / residual) : config_.rate_upper;
    return {rate1, rate2};
  }

  double objective(double a, double log_r1, double log_r2) {
    ++evaluations_;
    return loglik_ocp(OcpErlangSpec{a, n_, std::exp(log_r1), std::exp(log_r2)}, data_).value;
  }

  /// Best rates at fixed a over the given starting rate pairs.
  ProfilePoint profile(double a, const std::vector<std::pair<double, double>>& starts) {
    ProfilePoint best;
    best.cut_point = a;
    const std::vector<Bounds> bounds{log_bounds_, log_bounds_};
    for (const auto& [r1, r2] : starts) {
      const std::vector<double> x0{std::log(clamp_rate(r1)), std::log(clamp_rate(r2))};
      const auto res = optimize_box(
          [&](const std::vector<double>& th) { return objective(a, th[0], th[1]); }, bounds, x0,
          opts_);
      if (res.value > best.log_likelihood) {
        best.rate1 = std::exp(res.argmax[0]);
        best.rate2 = std::exp(res.argmax[1]);
        best.log_likelihood = res.value;
        best.converged = res.converged;
      }
    }
    return best;
  }

  std::vector<std::pair<double, double>> multistarts(std::pair<double, double> warm) const {
    std::vector<std::pair<double, double>> out{warm};
    for (int k = 1; static_cast<int>(out.size()) < config_.multistarts; ++k) {
      const double f = std::ldexp(1.0, (k + 1) / 2);
      const double factor = (k % 2 == 1) ? 1.0 / f : f;
      out.emplace_back(warm.first * factor, warm.second * factor);
    }
    return out;
  }

  /// Joint optimization of (a, rates) with a confined to the inter-observation
  /// interval containing `from.cut_point`, where the likelihood is smooth in a.
  ProfilePoint polish(const ProfilePoint& from) {
    const std::size_t k = data_.count_at_most(from.cut_point);
    const double lower = data_[k - 1];
    const double width = (data_[k] - lower) * (1.0 - 1e-9);
    if (!(width > 0.0)) return from;
    const std::vector<Bounds> bounds{{0.0, 1.0}, log_bounds_, log_bounds_};
    const std::vector<double> x0{std::clamp((from.cut_point - lower) / width, 0.0, 1.0),
                                 std::log(from.rate1), std::log(from.rate2)};
    const auto res = optimize_box(
        [&](const std::vector<double>& th) { return objective(lower + th[0] * width, th[1], th[2]); },
        bounds, x0, opts_);
    ProfilePoint out{lower + res.argmax[0] * width, std::exp(res.argmax[1]),
                     std::exp(res.argmax[2]), res.value, res.converged};
    return out.log_likelihood >= from.log_likelihood ? out : from;
  }

  /// Refinement range: one observation at or below a and three above it. A single
  /// observation above a lets rate2 grow without bound.
  double refine_lo() const { return data_.min(); }
  double refine_hi() const { return std::nextafter(data_[data_.size() - 3], 0.0); }

  /// Both ends of every inter-observation interval [x_(k-1), x_(k)) meeting
  /// [lo, hi] inside the refinement range.
  std::vector<double> interval_probes(double lo, double hi) const {
    std::vector<double> out;
    const std::size_t m = data_.size();
    for (std::size_t k = std::max<std::size_t>(data_.count_at_most(lo), 1); k + 3 <= m; ++k) {
      const double left = data_[k - 1];
      const double right = data_[k];
      if (left > hi) break;
      if (!(right > left)) continue;
      out.push_back(left);
      out.push_back(left + (1.0 - 1e-9) * (right - left));
    }
    return out;
  }

  std::size_t observations_between(double lo, double hi) const {
    return data_.count_at_most(hi) - data_.count_at_most(lo);
  }

  long evaluations() const { return evaluations_; }
  int phases() const { return n_; }

 private:
  const Dataset& data_;
  int n_;
  FitConfig config_;
  OptimOptions opts_;
  Bounds log_bounds_{};
  long evaluations_ = 0;
};

}  // namespace detail

/// ML fit of (a, rate1, rate2) with n fixed: profile the likelihood over a
/// quantile grid of cut points (3 observations on each side), profile every
/// inter-observation interval between the neighbours of the leading grid points,
/// then polish all three parameters jointly inside the best few intervals.
inline FitResult fit_ocp_erlang(const Dataset& data, int n, const FitConfig& config) {
  config.validate();
  if (n < 1) throw invalid_input("phases must be >= 1");
  detail::OcpErlangFitter fitter(data, n, config);
  const auto grid = fitter.grid();
  if (grid.empty()) throw unfittable_data("no cut-point candidate has 3 observations on each side");

  std::vector<detail::ProfilePoint> probes;
  probes.reserve(grid.size());
  for (double a : grid) probes.push_back(fitter.profile(a, fitter.multistarts(fitter.warm_start(a))));
  std::vector<std::size_t> ranked(grid.size());
  std::iota(ranked.begin(), ranked.end(), std::size_t{0});
  std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t x, std::size_t y) {
    return probes[x].log_likelihood > probes[y].log_likelihood;
  });

  // Between the grid neighbours of each leading grid point, a may sit anywhere
  // in the refinement range. Probes start from the previous probe's rates.
  const std::size_t leaders = std::min(grid.size(), detail::kRefinedGridPoints);
  for (std::size_t r = 0; r < leaders; ++r) {
    const std::size_t idx = ranked[r];
    std::pair<double, double> rates{probes[idx].rate1, probes[idx].rate2};
    double lo = idx > 0 ? grid[idx - 1] : fitter.refine_lo();
    double hi = idx + 1 < grid.size() ? grid[idx + 1] : fitter.refine_hi();
    auto probe = [&](double a) {
      probes.push_back(fitter.profile(a, {rates}));
      rates = {probes.back().rate1, probes.back().rate2};
      return probes.back().log_likelihood;
    };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - inv_phi * (hi - lo);
    double d = lo + inv_phi * (hi - lo);
    double fc = probe(c);
    double fd = probe(d);
    while (fitter.observations_between(lo, hi) > detail::kScanIntervals) {
      if (fc >= fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - inv_phi * (hi - lo);
        fc = probe(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + inv_phi * (hi - lo);
        fd = probe(d);
      }
    }
    // The profile is smooth inside each inter-observation interval but not
    // across them; visit every interval left in the bracket.
    for (double a : fitter.interval_probes(lo, hi)) probe(a);
  }

  std::stable_sort(probes.begin(), probes.end(), [](const auto& x, const auto& y) {
    return x.log_likelihood > y.log_likelihood;
  });
  detail::ProfilePoint best = probes.front();
  std::vector<std::size_t> polished;
  for (const auto& p : probes) {
    const std::size_t interval = data.count_at_most(p.cut_point);
    if (std::find(polished.begin(), polished.end(), interval) != polished.end()) continue;
    polished.push_back(interval);
    const auto q = fitter.polish(p);
    if (q.log_likelihood > best.log_likelihood) best = q;
    if (polished.size() == detail::kPolishedIntervals) break;
  }

  FitResult r;
  r.model = OcpErlangSpec{best.cut_point, n, best.rate1, best.rate2};
  r.log_likelihood = best.log_likelihood;
  r.converged = best.converged;
  r.evaluations = fitter.evaluations();
  r.trace.push_back({n, best.log_likelihood});
  return r;
}

namespace detail {

template <typename FitOne>
FitResult select_over_phases(const FitConfig& config, FitOne&& fit_one) {
  config.validate();
  std::optional<FitResult> best;
  std::vector<PhaseTrace> trace;
  long evaluations = 0;
  int worse_in_a_row = 0;
  for (int n = config.phase_min; n <= config.phase_max; ++n) {
    FitResult r = fit_one(n);
    evaluations += r.evaluations;
    trace.push_back({n, r.log_likelihood});
    if (!best || r.log_likelihood > best->log_likelihood) {
      best = std::move(r);
      worse_in_a_row = 0;
    } else if (++worse_in_a_row >= 5) {
      break;
    }
  }
  best->trace = std::move(trace);
  best->evaluations = evaluations;
  return *best;
}

}  // namespace detail

/// Phase count by maximum likelihood over config's range; stops once five
/// consecutive counts fail to beat the running best.
inline FitResult select_phases(const Dataset& data, const FitConfig& config) {
  return detail::select_over_phases(config, [&](int n) { return fit_ocp_erlang(data, n, config); });
}

inline FitResult select_phases_erlang(const Dataset& data, const FitConfig& config) {
  return detail::select_over_phases(config, [&](int n) { return fit_erlang(data, n); });
}

/// Refit a model of the same family and phase count to new data.
inline FitResult refit_same_family(const FittedModel& model, const Dataset& data,
                                   const FitConfig& config) {
  if (const auto* e = std::get_if<ErlangSpec>(&model)) return fit_erlang(data, e->phases);
  return fit_ocp_erlang(data, std::get<OcpErlangSpec>(model).phases, config);
}

inline Dataset sample_model(const FittedModel& model, std::size_t count, std::uint64_t seed) {
  if (const auto* e = std::get_if<ErlangSpec>(&model)) return sample(erlang_rep(*e), count, seed);
  return sample(expand_ocp_erlang(std::get<OcpErlangSpec>(model)), count, seed);
}

struct BootstrapCi {
  std::optional<Interval> interval;
  std::vector<double> replicates;
  std::size_t failures = 0;
  std::vector<std::string> flags;
};

/// Linear-interpolation quantile of an already sorted sample.
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Parametric-bootstrap percentile interval for the cut point. Replicate i is
/// simulated with seed derive_seed(config.seed, i) and refitted with n fixed.
inline BootstrapCi bootstrap_ci_cutpoint(const Dataset& data, const FitResult& fit,
                                         const FitConfig& config) {
  config.validate();
  const auto* spec = std::get_if<OcpErlangSpec>(&fit.model);
  if (!spec) throw invalid_input("cut-point interval requires a fitted cut-point model");
  BootstrapCi out;
  const int reps = config.bootstrap_reps;
  if (reps == 0) {
    out.flags.push_back("ci-skipped");
    return out;
  }
  if (reps < 100) out.flags.push_back("ci-few-replicates");

  const auto rep = expand_ocp_erlang(*spec);
  for (int i = 0; i < reps; ++i) {
    const Dataset sim = sample(rep, data.size(), derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    try {
      const auto refit = fit_ocp_erlang(sim, spec->phases, config);
      out.replicates.push_back(std::get<OcpErlangSpec>(refit.model).cut_point);
    } catch (const error&) {
      ++out.failures;
    }
  }
  const double completed = static_cast<double>(out.replicates.size()) / reps;
  if (out.failures > 0.2 * reps)
    throw unreliable_estimate("more than 20% of bootstrap refits failed", completed);

  std::vector<double> sorted = out.replicates;
  std::sort(sorted.begin(), sorted.end());
  const double tail = (1.0 - config.confidence_level) / 2.0;
  out.interval = Interval{sorted_quantile(sorted, tail), sorted_quantile(sorted, 1.0 - tail)};
  if (!(out.interval->lower <= spec->cut_point && spec->cut_point <= out.interval->upper))
    out.flags.push_back("ci-excludes-estimate");
  return out;
}

}  // namespace ocph
