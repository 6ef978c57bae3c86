#pragma once

#include <stdexcept>
#include <string>

namespace perturb {

// Root of every error the library throws. `numeric()` separates numerical
// breakdowns (exit code 2 in the CLI) from bad inputs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool numeric() const { return false; }
  virtual const char* kind() const { return "error"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "domain"; }
};

class UnsupportedExponent : public Error {
 public:
  explicit UnsupportedExponent(double p)
      : Error("unsupported exponent p=" + std::to_string(p) +
              " (exact operator norms exist only for p in {1, 2, inf})"),
        p_(p) {}
  double p() const { return p_; }
  const char* kind() const override { return "unsupported_exponent"; }

 private:
  double p_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "dimension_mismatch"; }
};

class InvalidSpectrum : public Error {
 public:
  using Error::Error;
  bool numeric() const override { return true; }
  const char* kind() const override { return "invalid_spectrum"; }
};

class NumericFailure : public Error {
 public:
  NumericFailure(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }
  bool numeric() const override { return true; }
  const char* kind() const override { return "numeric_failure"; }

 private:
  double residual_;
};

// Shifted gap d_j = lambda_1 - lambda_{j+1} + E11 is not positive.
class GapCollapse : public Error {
 public:
  GapCollapse(const std::string& what, double min_gap)
      : Error(what), min_gap_(min_gap) {}
  double min_gap() const { return min_gap_; }
  bool numeric() const override { return true; }
  const char* kind() const override { return "gap_collapse"; }

 private:
  double min_gap_;
};

class ContractionFailure : public Error {
 public:
  ContractionFailure(const std::string& what, double certified_bound)
      : Error(what), certified_bound_(certified_bound) {}
  double certified_bound() const { return certified_bound_; }
  bool numeric() const override { return true; }
  const char* kind() const override { return "contraction_failure"; }

 private:
  double certified_bound_;
};

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }
  bool numeric() const override { return true; }
  const char* kind() const override { return "nonconvergence"; }

 private:
  double residual_;
};

class InconsistencyError : public Error {
 public:
  InconsistencyError(const std::string& what, double imag_part)
      : Error(what), imag_part_(imag_part) {}
  double imag_part() const { return imag_part_; }
  bool numeric() const override { return true; }
  const char* kind() const override { return "inconsistency"; }

 private:
  double imag_part_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const override { return "io"; }
};

}  // namespace perturb
