#pragma once

// Dense linear-algebra primitives behind every distribution formula: matrix
// exponential, pivot-checked real and complex solves, and the log-domain
// Erlang occupancy kernels used by the structured fast path.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ocph/errors.hpp"

namespace ocph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// Pivots below this multiple of the infinity norm are treated as exact zeros.
inline constexpr double kSingularPivotRatio = 1e-13;

namespace detail {

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

inline void require_square(const Matrix& a, const char* what) {
  if (a.rows() < 1 || a.rows() != a.cols()) {
    throw invalid_input(std::string(what) + ": matrix must be square with order >= 1");
  }
  if (!all_finite(a)) throw invalid_input(std::string(what) + ": matrix has non-finite entries");
}

inline bool is_metzler(const Matrix& a) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (i != j && a(i, j) < 0.0) return false;
  return true;
}

}  // namespace detail

/// LU factorization with partial pivoting that refuses numerically singular input.
/// Factor once, solve many times (moment recursions reuse one factorization).
template <typename Scalar>
class LuSolver {
 public:
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit LuSolver(const MatrixType& a) : lu_(a) {
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    if (!(norm > 0.0)) throw singular_matrix("matrix is zero");
    const auto& packed = lu_.matrixLU();
    for (Eigen::Index i = 0; i < packed.rows(); ++i) {
      if (std::abs(packed(i, i)) < kSingularPivotRatio * norm) {
        throw singular_matrix("pivot " + std::to_string(i) + " below singularity threshold");
      }
    }
  }

  template <typename Rhs>
  VectorType solve(const Eigen::MatrixBase<Rhs>& b) const {
    return lu_.solve(b.template cast<Scalar>());
  }

 private:
  Eigen::PartialPivLU<MatrixType> lu_;
};

/// e^A by scaling and squaring with the degree-13 Padé approximant.
inline Matrix expm(const Matrix& a) {
  detail::require_square(a, "expm");
  const Eigen::Index n = a.rows();
  if (n == 1) return Matrix::Constant(1, 1, std::exp(a(0, 0)));

  static constexpr double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                 1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                 670442572800.0,      33522128640.0,       1323241920.0,
                                 40840800.0,          960960.0,            16380.0,
                                 182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;

  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  if (norm1 == 0.0) return Matrix::Identity(n, n);
  int squarings = 0;
  if (norm1 > theta13) squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  const Matrix as = a / std::ldexp(1.0, squarings);

  const Matrix ident = Matrix::Identity(n, n);
  const Matrix a2 = as * as;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;
  const Matrix u_inner = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 +
                         b[3] * a2 + b[1] * ident;
  const Matrix u = as * u_inner;
  const Matrix v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 +
                   b[2] * a2 + b[0] * ident;

  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;

  // The exponential of a Metzler matrix is entrywise nonnegative; anything
  // below zero here is rounding.
  if (detail::is_metzler(a)) r = r.cwiseMax(0.0);
  return r;
}

inline Vector solve_real(const Matrix& a, std::span<const double> b) {
  detail::require_square(a, "solve_real");
  if (static_cast<Eigen::Index>(b.size()) != a.rows())
    throw invalid_input("solve_real: right-hand side length does not match matrix order");
  const Eigen::Map<const Vector> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
  if (!detail::all_finite(rhs)) throw invalid_input("solve_real: non-finite right-hand side");
  return LuSolver<double>(a).solve(rhs);
}

inline Vector solve_real(const Matrix& a, const Vector& b) {
  return solve_real(a, std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

/// Solves (T + i t I) x = b.
inline ComplexVector solve_complex_shifted(const Matrix& t_mat, double t, const Vector& b) {
  detail::require_square(t_mat, "solve_complex_shifted");
  if (b.size() != t_mat.rows())
    throw invalid_input("solve_complex_shifted: right-hand side length does not match matrix order");
  if (!std::isfinite(t)) throw invalid_input("solve_complex_shifted: non-finite shift");
  Eigen::MatrixXcd shifted = t_mat.cast<Complex>();
  shifted.diagonal().array() += Complex(0.0, t);
  return LuSolver<Complex>(shifted).solve(b);
}

inline double log_sum_exp(std::span<const double> terms) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : terms) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : terms) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

/// Log of the first row of e^{Tx} for the n-phase Erlang sub-generator with rate lambda:
/// entry j is the log Poisson(lambda x) mass at j.
inline std::vector<double> log_erlang_exp_row(int n, double lambda, double x) {
  if (n < 1 || !(lambda > 0.0) || !(x >= 0.0) || !std::isfinite(lambda) || !std::isfinite(x))
    throw invalid_input("erlang_exp_row: requires n >= 1, lambda > 0, x >= 0");
  std::vector<double> out(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
  if (x == 0.0) {
    out[0] = 0.0;
    return out;
  }
  const double mu = lambda * x;
  const double log_mu = std::log(mu);
  for (int j = 0; j < n; ++j) out[j] = -mu + j * log_mu - std::lgamma(j + 1.0);
  return out;
}

inline RowVector erlang_exp_row(int n, double lambda, double x) {
  const auto logs = log_erlang_exp_row(n, lambda, x);
  RowVector out(n);
  for (int j = 0; j < n; ++j) out(j) = std::exp(logs[j]);
  return out;
}

/// Log of v e^{Ts} for Erlang T with rate lambda, given log v. Phase k collects
/// mass from every earlier phase j through a Poisson(lambda s) count of k - j jumps.
inline std::vector<double> log_erlang_propagate(std::span<const double> log_v, double lambda,
                                                double s) {
  const auto n = log_v.size();
  std::vector<double> out(log_v.begin(), log_v.end());
  if (s == 0.0) return out;
  const auto jumps = log_erlang_exp_row(static_cast<int>(n), lambda, s);
  std::vector<double> terms;
  terms.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    terms.clear();
    for (std::size_t j = 0; j <= k; ++j) terms.push_back(log_v[j] + jumps[k - j]);
    out[k] = log_sum_exp(terms);
  }
  return out;
}

/// Largest r with T + sI stable for every s < r, i.e. minus the spectral abscissa
/// of a sub-generator. -(T + sI) stays a nonsingular M-matrix exactly while s < r,
/// which is detected by positive pivots of unpivoted elimination; bisect on s.
inline double decay_rate(const Matrix& t_mat) {
  detail::require_square(t_mat, "decay_rate");
  const Eigen::Index n = t_mat.rows();
  const double hi_bound = (-t_mat.diagonal()).minCoeff();
  if (!(hi_bound > 0.0)) return 0.0;

  auto stable_at = [&](double s) {
    Matrix m = -t_mat;
    m.diagonal().array() -= s;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double pivot = m(k, k);
      if (!(pivot > 0.0)) return false;
      for (Eigen::Index i = k + 1; i < n; ++i) {
        const double f = m(i, k) / pivot;
        if (f != 0.0) m.row(i).tail(n - k) -= f * m.row(k).tail(n - k);
      }
    }
    return true;
  };

  if (stable_at(hi_bound)) return hi_bound;
  double lo = 0.0;
  double hi = hi_bound;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi_bound; ++it) {
    const double mid = 0.5 * (lo + hi);
    (stable_at(mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace ocph
