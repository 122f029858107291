#pragma once

// Anderson-Darling testing with a refit-per-replicate parametric bootstrap,
// plus the empirical curves overlaid on fitted models: ECDF, Nelson-Aalen
// cumulative hazard, Gaussian KDE and an Epanechnikov-smoothed hazard.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ocph/dataset.hpp"
#include "ocph/errors.hpp"
#include "ocph/estimation.hpp"
#include "ocph/one_cut_point.hpp"
#include "ocph/phase_type.hpp"
#include "ocph/random.hpp"

namespace ocph {

/// A^2 = -m - (1/m) sum_i (2i - 1) [ln F(x_(i)) + ln(1 - F(x_(m+1-i)))]
template <typename Cdf>
double anderson_darling(const Dataset& data, Cdf&& cdf) {
  const std::size_t m = data.size();
  std::vector<double> log_f(m);
  std::vector<double> log_r(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double f = cdf(data[i]);
    if (!(f > 0.0 && f < 1.0))
      throw boundary_error("model cdf is " + std::to_string(f) + " at observation " +
                           std::to_string(i + 1) + " (x = " + std::to_string(data[i]) + ")");
    log_f[i] = std::log(f);
    log_r[i] = std::log1p(-f);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += (2.0 * i + 1.0) * (log_f[i] + log_r[m - 1 - i]);
  const double md = static_cast<double>(m);
  return -md - s / md;
}

struct GofReport {
  double a_squared = 0.0;
  double p_value = 1.0;
  int bootstrap_reps = 0;
  std::vector<double> replicate_stats;
  std::size_t failures = 0;

  friend bool operator==(const GofReport&, const GofReport&) = default;
};

/// (1 + #{replicates >= observed}) / (B + 1)
inline double bootstrap_p_value(double observed, const std::vector<double>& replicates) {
  const auto exceed = std::count_if(replicates.begin(), replicates.end(),
                                    [&](double v) { return v >= observed; });
  return (1.0 + static_cast<double>(exceed)) / (static_cast<double>(replicates.size()) + 1.0);
}

inline double anderson_darling(const Dataset& data, const FittedModel& model) {
  if (const auto* e = std::get_if<ErlangSpec>(&model)) {
    const auto rep = erlang_rep(*e);
    return anderson_darling(data, [&](double x) { return cdf(rep, x); });
  }
  const auto rep = expand_ocp_erlang(std::get<OcpErlangSpec>(model));
  return anderson_darling(data, [&](double x) { return cdf(rep, x); });
}

/// Bootstrap p-value for A^2 against a model fitted to `data`. Each replicate
/// simulates m points from the model, refits the same family with n fixed and
/// scores the replicate against its own fit, so the estimation step is part of
/// the null distribution.
inline GofReport ad_pvalue_bootstrap(const Dataset& data, const FittedModel& model,
                                     const FitConfig& config) {
  config.validate();
  if (config.bootstrap_reps < 99) throw invalid_input("goodness-of-fit bootstrap needs B >= 99");
  GofReport out;
  out.a_squared = anderson_darling(data, model);
  out.bootstrap_reps = config.bootstrap_reps;
  for (int i = 0; i < config.bootstrap_reps; ++i) {
    const Dataset sim = sample_model(model, data.size(), derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    try {
      const auto refit = refit_same_family(model, sim, config);
      out.replicate_stats.push_back(anderson_darling(sim, refit.model));
    } catch (const error&) {
      ++out.failures;
    }
  }
  if (out.failures > 0.2 * config.bootstrap_reps)
    throw unreliable_estimate("more than 20% of goodness-of-fit replicates failed",
                              static_cast<double>(out.replicate_stats.size()) / config.bootstrap_reps);
  out.p_value = bootstrap_p_value(out.a_squared, out.replicate_stats);
  return out;
}

/// Same bootstrap for a fully specified model (no estimation step to replay).
template <typename Rep>
GofReport ad_pvalue_simple(const Dataset& data, const Rep& rep, int reps, std::uint64_t seed) {
  if (reps < 99) throw invalid_input("goodness-of-fit bootstrap needs B >= 99");
  GofReport out;
  auto model_cdf = [&](double x) { return cdf(rep, x); };
  out.a_squared = anderson_darling(data, model_cdf);
  out.bootstrap_reps = reps;
  for (int i = 0; i < reps; ++i) {
    const Dataset sim = sample(rep, data.size(), derive_seed(seed, static_cast<std::uint64_t>(i)));
    try {
      out.replicate_stats.push_back(anderson_darling(sim, model_cdf));
    } catch (const error&) {
      ++out.failures;
    }
  }
  if (out.failures > 0.2 * reps)
    throw unreliable_estimate("more than 20% of goodness-of-fit replicates failed",
                              static_cast<double>(out.replicate_stats.size()) / reps);
  out.p_value = bootstrap_p_value(out.a_squared, out.replicate_stats);
  return out;
}

inline double ecdf(const Dataset& data, double x) {
  return static_cast<double>(data.count_at_most(x)) / static_cast<double>(data.size());
}

namespace detail {

/// Distinct values with their multiplicity and the risk-set size just before them.
struct RiskStep {
  double value;
  double deaths;
  double at_risk;
};

inline std::vector<RiskStep> risk_steps(const Dataset& data) {
  std::vector<RiskStep> out;
  const auto v = data.values();
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    out.push_back({v[i], static_cast<double>(j - i), static_cast<double>(v.size() - i)});
    i = j;
  }
  return out;
}

}  // namespace detail

/// Nelson-Aalen estimate: sum over distinct x_(i) <= x of d_i / (number at risk).
inline double empirical_cum_hazard(const Dataset& data, double x) {
  double h = 0.0;
  for (const auto& s : detail::risk_steps(data)) {
    if (s.value > x) break;
    h += s.deaths / s.at_risk;
  }
  return h;
}

/// Silverman's rule: 0.9 min(sd, IQR / 1.34) m^{-1/5}.
inline double silverman_bandwidth(const Dataset& data) {
  const double iqr = data.quantile(0.75) - data.quantile(0.25);
  const double sd = data.sd();
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = std::max(sd, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(static_cast<double>(data.size()), -0.2);
  if (!(h > 0.0)) throw degenerate_bandwidth("data have zero dispersion; give a bandwidth");
  return h;
}

inline double kde_density(const Dataset& data, double x, std::optional<double> bandwidth = std::nullopt) {
  if (!bandwidth && data.size() < 2) throw invalid_input("kde needs two observations or an explicit bandwidth");
  const double h = bandwidth ? *bandwidth : silverman_bandwidth(data);
  if (!(h > 0.0)) throw degenerate_bandwidth("bandwidth must be positive");
  const double norm = 1.0 / (static_cast<double>(data.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  double s = 0.0;
  for (double xi : data.values()) {
    const double u = (x - xi) / h;
    s += std::exp(-0.5 * u * u);
  }
  return norm * s;
}

/// Default hazard bandwidth (max - min) / m^{1/5}.
inline double hazard_bandwidth(const Dataset& data) {
  const double h = (data.max() - data.min()) / std::pow(static_cast<double>(data.size()), 0.2);
  if (!(h > 0.0)) throw degenerate_bandwidth("data range is zero");
  return h;
}

/// Epanechnikov smoothing of the Nelson-Aalen increments with one global bandwidth.
inline double kernel_hazard(const Dataset& data, double x, std::optional<double> bandwidth = std::nullopt) {
  if (data.size() < 5) throw invalid_input("kernel hazard needs at least 5 observations");
  const double h = bandwidth ? *bandwidth : hazard_bandwidth(data);
  if (!(h > 0.0)) throw degenerate_bandwidth("bandwidth must be positive");
  double s = 0.0;
  for (const auto& st : detail::risk_steps(data)) {
    const double u = (x - st.value) / h;
    if (std::abs(u) <= 1.0) s += 0.75 * (1.0 - u * u) / h * st.deaths / st.at_risk;
  }
  return s;
}

}  // namespace ocph
