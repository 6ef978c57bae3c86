#pragma once

// Dense Hermitian matrices, l^p norms and the dense eigendecomposition that
// every other module is checked against.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <initializer_list>
#include <limits>
#include <type_traits>
#include <vector>

#include "perturb/errors.hpp"

namespace perturb {

using Index = Eigen::Index;
using Complex = std::complex<double>;

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
using RealVec = Vec<double>;
using RealMat = Mat<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

template <class S>
inline constexpr bool is_complex_v = !std::is_same_v<S, double>;

inline double conj_of(double x) { return x; }
inline Complex conj_of(Complex z) { return std::conj(z); }
inline double real_of(double x) { return x; }
inline double real_of(Complex z) { return z.real(); }
inline double imag_of(double) { return 0.0; }
inline double imag_of(Complex z) { return z.imag(); }

// Self-adjoint n x n matrix over double or std::complex<double>. Construction
// checks self-adjointness bit-exactly; use from_upper() to build one by
// mirroring.
template <class S>
class HermitianMatrix {
 public:
  using Scalar = S;

  HermitianMatrix() = default;
  explicit HermitianMatrix(Mat<S> entries);

  // Upper triangle (including the diagonal's real part) is kept, the lower
  // triangle is overwritten with its conjugate mirror.
  static HermitianMatrix from_upper(Mat<S> entries);
  static HermitianMatrix zero(Index n);
  static HermitianMatrix diagonal(const RealVec& diag);

  Index n() const { return m_.rows(); }
  const Mat<S>& dense() const { return m_; }
  S operator()(Index j, Index k) const { return m_(j, k); }

  HermitianMatrix scaled(double c) const;
  double frobenius() const { return m_.norm(); }

  friend HermitianMatrix operator+(const HermitianMatrix& a,
                                   const HermitianMatrix& b) {
    if (a.n() != b.n()) throw DimensionMismatch("HermitianMatrix + : size mismatch");
    HermitianMatrix out;
    out.m_ = a.m_ + b.m_;
    return out;
  }

  friend bool operator==(const HermitianMatrix& a, const HermitianMatrix& b) {
    return a.n() == b.n() && a.m_ == b.m_;
  }

 private:
  Mat<S> m_;
};

// Nonincreasing eigenvalue list with a simple top eigenvalue.
class Spectrum {
 public:
  explicit Spectrum(std::vector<double> lambdas);
  explicit Spectrum(const RealVec& lambdas);
  Spectrum(std::initializer_list<double> lambdas) : Spectrum(std::vector<double>(lambdas)) {}

  Index n() const { return static_cast<Index>(lambdas_.size()); }
  // 0-based: operator[](0) is lambda_1.
  double operator[](Index j) const { return lambdas_[static_cast<std::size_t>(j)]; }
  double lambda1() const { return lambdas_.front(); }
  double eigengap() const { return lambdas_[0] - lambdas_[1]; }
  const std::vector<double>& values() const { return lambdas_; }
  RealVec as_vector() const;

  friend bool operator==(const Spectrum&, const Spectrum&) = default;

 private:
  std::vector<double> lambdas_;
};

template <class S>
struct EigDecomposition {
  RealVec values;  // descending
  Mat<S> basis;    // column j pairs with values[j]

  Index n() const { return values.size(); }
  // Throws InvalidSpectrum when the top eigenvalue is not simple.
  Spectrum spectrum() const { return Spectrum(values); }
};

struct EigOptions {
  // When set, the reconstruction and orthogonality residuals are checked
  // and a NumericFailure is thrown above these thresholds.
  bool verify = false;
  double reconstruction_tol = 1e-11;  // relative to ||M||_F
  double orthogonality_tol = 1e-12;   // times n
};

template <class S>
struct TopEigenpair {
  double value = 0.0;
  Vec<S> vector;
};

// (sum |v_j|^p)^(1/p), or max |v_j| for p = inf. Evaluated with max-scaling
// so large entries do not overflow.
template <class Derived>
double lp_norm(const Eigen::MatrixBase<Derived>& v, double p) {
  if (v.size() == 0) throw DomainError("lp_norm: empty vector");
  if (!(p >= 1.0)) throw DomainError("lp_norm: p must be >= 1");
  const double scale = v.cwiseAbs().maxCoeff();
  if (std::isinf(p) || scale == 0.0) return scale;
  if (p == 1.0) return v.cwiseAbs().sum();
  if (p == 2.0) return v.norm();
  double acc = 0.0;
  for (Index j = 0; j < v.size(); ++j) acc += std::pow(std::abs(v(j)) / scale, p);
  return scale * std::pow(acc, 1.0 / p);
}

// Hoelder conjugate p' with 1/p + 1/p' = 1.
double dual_exponent(double p);

// Exact l^p -> l^p operator norm for p in {1, 2, inf}.
template <class S>
double operator_norm_exact(const Mat<S>& m, double p);

template <class S>
EigDecomposition<S> hermitian_eig(const HermitianMatrix<S>& m, const EigOptions& opts = {});

// Eigenvalues only, descending.
template <class S>
RealVec eigenvalues(const HermitianMatrix<S>& m);

template <class S>
double lambda_max(const HermitianMatrix<S>& m) { return eigenvalues(m)(0); }
template <class S>
double lambda_min(const HermitianMatrix<S>& m) {
  const RealVec ev = eigenvalues(m);
  return ev(ev.size() - 1);
}

// Largest eigenvalue with a unit eigenvector, phase-normalized. Uses
// eigenvalues-only QL plus shifted inverse iteration, which is an order of
// magnitude cheaper than hermitian_eig at n ~ 1000.
template <class S>
TopEigenpair<S> top_eigenpair(const HermitianMatrix<S>& m);

// Rotate v by a unit scalar so that its largest-magnitude entry (first one
// on ties) is real and positive.
template <class S>
void normalize_phase(Vec<S>& v);

}  // namespace perturb
