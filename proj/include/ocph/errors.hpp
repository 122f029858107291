#pragma once

#include <stdexcept>
#include <string>

namespace ocph {

/// Base of every exception thrown by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: non-finite entries, violated preconditions, bad flags.
class invalid_input : public error {
 public:
  using error::error;
};

/// A representation failed one of its structural invariants. `what()` names it.
class invalid_representation : public invalid_input {
 public:
  invalid_representation(std::string invariant, const std::string& detail)
      : invalid_input(invariant + ": " + detail), invariant_(std::move(invariant)) {}
  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::string invariant_;
};

/// Argument outside the mathematical domain of a measure (x < 0, t beyond the mgf bound).
class domain_error : public invalid_input {
 public:
  using invalid_input::invalid_input;
};

/// Text input that cannot be parsed; carries the 1-based line number when known.
class parse_error : public invalid_input {
 public:
  parse_error(const std::string& msg, std::size_t line = 0) : invalid_input(msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class empty_data : public invalid_input {
 public:
  using invalid_input::invalid_input;
};

/// Data that cannot support the requested estimate (all zeros, too few points per side).
class unfittable_data : public invalid_input {
 public:
  using invalid_input::invalid_input;
};

class numeric_error : public error {
 public:
  using error::error;
};

class singular_matrix : public numeric_error {
 public:
  using numeric_error::numeric_error;
};

/// Reliability fell below the representable floor; hazard and -ln R are not finite there.
class tail_underflow : public numeric_error {
 public:
  using numeric_error::numeric_error;
};

/// The model cdf is numerically 0 or 1 at an observation.
class boundary_error : public numeric_error {
 public:
  using numeric_error::numeric_error;
};

class degenerate_bandwidth : public numeric_error {
 public:
  using numeric_error::numeric_error;
};

/// Too many bootstrap replicates failed to refit; `completed_fraction()` is the share that succeeded.
class unreliable_estimate : public numeric_error {
 public:
  unreliable_estimate(const std::string& msg, double completed)
      : numeric_error(msg), completed_(completed) {}
  double completed_fraction() const noexcept { return completed_; }

 private:
  double completed_;
};

}  // namespace ocph
