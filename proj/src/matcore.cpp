#include "perturb/matcore.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace perturb {

template <class S>
HermitianMatrix<S>::HermitianMatrix(Mat<S> entries) : m_(std::move(entries)) {
  if (m_.rows() != m_.cols()) throw DimensionMismatch("HermitianMatrix: matrix is not square");
  const Index n = m_.rows();
  for (Index j = 0; j < n; ++j) {
    if (imag_of(m_(j, j)) != 0.0)
      throw DomainError("HermitianMatrix: diagonal entry has nonzero imaginary part");
    for (Index k = j + 1; k < n; ++k) {
      if (m_(j, k) != conj_of(m_(k, j))) {
        std::ostringstream os;
        os << "HermitianMatrix: entries (" << j << "," << k << ") and (" << k << "," << j
           << ") are not conjugate";
        throw DomainError(os.str());
      }
    }
  }
}

template <class S>
HermitianMatrix<S> HermitianMatrix<S>::from_upper(Mat<S> entries) {
  if (entries.rows() != entries.cols())
    throw DimensionMismatch("HermitianMatrix::from_upper: matrix is not square");
  const Index n = entries.rows();
  for (Index j = 0; j < n; ++j) {
    entries(j, j) = S(real_of(entries(j, j)));
    for (Index k = j + 1; k < n; ++k) entries(k, j) = conj_of(entries(j, k));
  }
  HermitianMatrix out;
  out.m_ = std::move(entries);
  return out;
}

template <class S>
HermitianMatrix<S> HermitianMatrix<S>::zero(Index n) {
  HermitianMatrix out;
  out.m_ = Mat<S>::Zero(n, n);
  return out;
}

template <class S>
HermitianMatrix<S> HermitianMatrix<S>::diagonal(const RealVec& diag) {
  HermitianMatrix out;
  out.m_ = Mat<S>::Zero(diag.size(), diag.size());
  for (Index j = 0; j < diag.size(); ++j) out.m_(j, j) = S(diag(j));
  return out;
}

template <class S>
HermitianMatrix<S> HermitianMatrix<S>::scaled(double c) const {
  HermitianMatrix out;
  out.m_ = m_ * c;
  return out;
}

Spectrum::Spectrum(std::vector<double> lambdas) : lambdas_(std::move(lambdas)) {
  if (lambdas_.size() < 2) throw InvalidSpectrum("Spectrum: need at least two eigenvalues");
  for (std::size_t j = 0; j < lambdas_.size(); ++j) {
    if (!std::isfinite(lambdas_[j])) throw InvalidSpectrum("Spectrum: non-finite eigenvalue");
    if (j + 1 < lambdas_.size() && lambdas_[j] < lambdas_[j + 1])
      throw InvalidSpectrum("Spectrum: eigenvalues must be nonincreasing");
  }
  if (!(lambdas_[0] > lambdas_[1]))
    throw InvalidSpectrum("Spectrum: top eigenvalue is not simple (lambda_1 == lambda_2)");
}

Spectrum::Spectrum(const RealVec& lambdas)
    : Spectrum(std::vector<double>(lambdas.data(), lambdas.data() + lambdas.size())) {}

RealVec Spectrum::as_vector() const {
  return Eigen::Map<const RealVec>(lambdas_.data(), n());
}

double dual_exponent(double p) {
  if (!(p >= 1.0)) throw DomainError("dual_exponent: p must be >= 1");
  if (p == 1.0) return kInf;
  if (std::isinf(p)) return 1.0;
  return p / (p - 1.0);
}

template <class S>
double operator_norm_exact(const Mat<S>& m, double p) {
  if (m.size() == 0) return 0.0;
  if (p == 1.0) return m.cwiseAbs().colwise().sum().maxCoeff();
  if (std::isinf(p) && p > 0) return m.cwiseAbs().rowwise().sum().maxCoeff();
  if (p != 2.0) throw UnsupportedExponent(p);
  if (m.rows() == m.cols() && m == m.adjoint()) {
    Eigen::SelfAdjointEigenSolver<Mat<S>> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  const Mat<S> gram = m.adjoint() * m;
  Eigen::SelfAdjointEigenSolver<Mat<S>> es(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

template <class S>
void normalize_phase(Vec<S>& v) {
  if (v.size() == 0) return;
  Index best = 0;
  double best_abs = std::abs(v(0));
  for (Index j = 1; j < v.size(); ++j) {
    const double a = std::abs(v(j));
    if (a > best_abs) {
      best_abs = a;
      best = j;
    }
  }
  if (best_abs == 0.0) return;
  if constexpr (is_complex_v<S>) {
    const Complex phase = std::conj(v(best)) / best_abs;
    v *= phase;
    v(best) = Complex(std::abs(v(best)), 0.0);
  } else {
    if (v(best) < 0) v = -v;
  }
}

template <class S>
EigDecomposition<S> hermitian_eig(const HermitianMatrix<S>& m, const EigOptions& opts) {
  const Index n = m.n();
  Eigen::SelfAdjointEigenSolver<Mat<S>> es(m.dense(), Eigen::ComputeEigenvectors);
  if (es.info() != Eigen::Success)
    throw NumericFailure("hermitian_eig: QL iteration did not converge", kInf);

  // Eigen returns ascending order. Stable sort on the reversed sequence so
  // equal eigenvalues keep their solver order.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::reverse(order.begin(), order.end());
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return ev(a) > ev(b); });

  EigDecomposition<S> out;
  out.values.resize(n);
  out.basis.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    out.values(j) = ev(src);
    Vec<S> col = es.eigenvectors().col(src);
    normalize_phase(col);
    out.basis.col(j) = col;
  }

  if (opts.verify) {
    const double fro = std::max(m.frobenius(), std::numeric_limits<double>::min());
    const Mat<S> recon = out.basis * out.values.asDiagonal() * out.basis.adjoint();
    const double rec = (recon - m.dense()).norm();
    if (rec > opts.reconstruction_tol * fro)
      throw NumericFailure("hermitian_eig: reconstruction residual too large", rec / fro);
    const double orth = (out.basis.adjoint() * out.basis - Mat<S>::Identity(n, n)).norm();
    if (orth > opts.orthogonality_tol * static_cast<double>(n))
      throw NumericFailure("hermitian_eig: basis is not orthonormal", orth);
  }
  return out;
}

template <class S>
RealVec eigenvalues(const HermitianMatrix<S>& m) {
  Eigen::SelfAdjointEigenSolver<Mat<S>> es(m.dense(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw NumericFailure("eigenvalues: QL iteration did not converge", kInf);
  return es.eigenvalues().reverse();
}

template <class S>
TopEigenpair<S> top_eigenpair(const HermitianMatrix<S>& m) {
  const Index n = m.n();
  if (n == 0) throw DomainError("top_eigenpair: empty matrix");
  const RealVec ev = eigenvalues(m);
  const double top = ev(0);
  const double scale = std::max({std::abs(ev(0)), std::abs(ev(n - 1)), 1e-300});

  // sigma*I - M is positive definite with smallest eigenvalue `shift`.
  const double shift = 1e-10 * scale;
  Mat<S> shifted = -m.dense();
  shifted.diagonal().array() += S(top + shift);
  Eigen::LLT<Mat<S>> llt(shifted);

  TopEigenpair<S> out;
  out.value = top;
  if (llt.info() == Eigen::Success) {
    Vec<S> v(n);
    for (Index j = 0; j < n; ++j) v(j) = S(1.0 + 0.5 * std::sin(1.0 + static_cast<double>(j)));
    v.normalize();
    for (int it = 0; it < 3; ++it) {
      v = llt.solve(v);
      v.normalize();
    }
    const double res = (m.dense() * v - top * v).norm();
    if (std::isfinite(res) && res <= 1e-9 * scale) {
      normalize_phase(v);
      out.vector = std::move(v);
      return out;
    }
  }
  const auto full = hermitian_eig(m);
  out.vector = full.basis.col(0);
  return out;
}

template class HermitianMatrix<double>;
template class HermitianMatrix<Complex>;
template double operator_norm_exact(const Mat<double>&, double);
template double operator_norm_exact(const Mat<Complex>&, double);
template void normalize_phase(Vec<double>&);
template void normalize_phase(Vec<Complex>&);
template EigDecomposition<double> hermitian_eig(const HermitianMatrix<double>&, const EigOptions&);
template EigDecomposition<Complex> hermitian_eig(const HermitianMatrix<Complex>&, const EigOptions&);
template RealVec eigenvalues(const HermitianMatrix<double>&);
template RealVec eigenvalues(const HermitianMatrix<Complex>&);
template TopEigenpair<double> top_eigenpair(const HermitianMatrix<double>&);
template TopEigenpair<Complex> top_eigenpair(const HermitianMatrix<Complex>&);

}  // namespace perturb
