#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ocph/errors.hpp"

namespace ocph {

/// Sorted nonnegative observations.
class Dataset {
 public:
  explicit Dataset(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw empty_data("dataset is empty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]) || values_[i] < 0.0)
        throw domain_error("observation " + std::to_string(i) + " is negative or non-finite");
    }
    std::sort(values_.begin(), values_.end());
  }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double min() const noexcept { return values_.front(); }
  double max() const noexcept { return values_.back(); }

  double mean() const {
    return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(size());
  }

  /// Sample standard deviation (n - 1 denominator); 0 for a single point.
  double sd() const {
    if (size() < 2) return 0.0;
    const double mu = mean();
    double ss = 0.0;
    for (double v : values_) ss += (v - mu) * (v - mu);
    return std::sqrt(ss / static_cast<double>(size() - 1));
  }

  /// Linear-interpolation quantile (Hyndman-Fan type 7).
  double quantile(double p) const {
    const double h = (static_cast<double>(size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, size() - 1);
    return values_[lo] + (h - static_cast<double>(lo)) * (values_[hi] - values_[lo]);
  }

  /// Number of observations <= x.
  std::size_t count_at_most(double x) const {
    return static_cast<std::size_t>(std::upper_bound(values_.begin(), values_.end(), x) -
                                    values_.begin());
  }

  Dataset scaled(double c) const {
    std::vector<double> v = values_;
    for (double& x : v) x *= c;
    return Dataset(std::move(v));
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::vector<double> values_;
};

}  // namespace ocph
