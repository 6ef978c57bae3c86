#pragma once

// Leading eigenpair of A + E through the quadratic system
//
//     L q = E21 - q (E12 q),    L = (lambda_1 + E11) I - diag(lambda_2..n) - E22,
//
// in the eigenbasis of A. L^{-1} is applied by a Jacobi fixed point on
// v <- E22 D^{-1} v + y with D = diag(lambda_1 - lambda_{j+1}) + E11 I, and q
// by an outer fixed point q <- L^{-1}(E21 - q (E12 q)). The eigenvector is
// (u_1 + U_perp q) / sqrt(1 + |q|^2) with eigenvalue lambda_1 + E11 + E12 q.

#include <string>
#include <vector>

#include <json.hpp>

#include "perturb/matcore.hpp"

namespace perturb::rs {

template <class S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// E in the basis (u_1, U_perp), split into blocks.
template <class S>
struct PartitionedPerturbation {
  double e11 = 0.0;
  RowVec<S> e12;  // u_1^* E U_perp
  Vec<S> e21;     // U_perp^* E u_1, equal to e12^* bit for bit
  Mat<S> e22;     // U_perp^* E U_perp, Hermitian

  Index dim() const { return e21.size(); }
  S e12_times(const Vec<S>& q) const { return (e12 * q)(0); }
  Mat<S> assembled() const;
};

template <class S>
PartitionedPerturbation<S> partition(const EigDecomposition<S>& eig, const HermitianMatrix<S>& e);

struct ShiftedGapOperator {
  RealVec d;  // lambda_1 - lambda_{j+1} + E11, all positive
  double lambda_head = 0.0;
};

ShiftedGapOperator build_shifted_gaps(const Spectrum& lambda, double e11);

// Certified upper bound on ||M||_{p,p}: exact for p in {1, 2, inf}, Riesz-Thorin otherwise.
template <class S>
double contraction_bound(const Mat<S>& m, double p);

inline constexpr double kDefaultContractionAccept = 0.9;

// L = D - E22 with a precomputed E22 D^{-1} and its contraction certificate.
template <class S>
class LinearizedOperator {
 public:
  // Throws ContractionFailure when the certificate exceeds `accept`.
  LinearizedOperator(ShiftedGapOperator gaps, const Mat<S>& e22, double p,
                     double accept = kDefaultContractionAccept);

  const ShiftedGapOperator& gaps() const { return gaps_; }
  const Mat<S>& e22() const { return e22_; }
  const Mat<S>& e22_dinv() const { return e22_dinv_; }
  double p() const { return p_; }
  double contraction_upper() const { return contraction_upper_; }

  Vec<S> apply(const Vec<S>& x) const;  // L x

 private:
  ShiftedGapOperator gaps_;
  Mat<S> e22_;
  Mat<S> e22_dinv_;
  double p_;
  double contraction_upper_;
};

template <class S>
struct InnerResult {
  Vec<S> x;            // L x ~= y
  int iters = 0;       // applications of E22 D^{-1}
  double residual = 0; // ||L x - y||_2, measured
};

template <class S>
InnerResult<S> jacobi_apply_Linv(const LinearizedOperator<S>& op, const Vec<S>& y, double tol, int cap);

template <class S>
InnerResult<S> jacobi_apply_Linv(const ShiftedGapOperator& gaps, const Mat<S>& e22, const Vec<S>& y,
                                 double p, double tol, int cap);

struct SolveOptions {
  double p = 2.0;
  double tol = 1e-12;
  int cap = 0;  // 0: max(200, 10 log2(1/tol))
  double accept_contraction = kDefaultContractionAccept;
  double imag_tol = 1e-10;
  bool fallback = true;  // return the dense-oracle pair on construction failure

  int iteration_cap() const;
};

template <class S>
struct QSolution {
  Vec<S> q;
  int outer_iters = 0;
  int inner_iters_total = 0;
  double contraction_upper = 0.0;
  double fixed_point_residual = 0.0;  // ||L q - E21 + q (E12 q)||_2
  std::vector<double> steps;          // ||D (q^{s+1} - q^s)||_p per outer step
};

template <class S>
QSolution<S> solve_q(const PartitionedPerturbation<S>& part, const Spectrum& lambda,
                     const SolveOptions& opts = {});

// ||L q - E21 + q (E12 q)||_2, computed by direct substitution.
template <class S>
double fixed_point_residual(const PartitionedPerturbation<S>& part, const Spectrum& lambda, const Vec<S>& q);

template <class S>
Vec<S> assemble_eigvec(const EigDecomposition<S>& eig, const Vec<S>& q);

template <class S>
double eigenvalue_from_q(double lambda1, double e11, const RowVec<S>& e12, const Vec<S>& q,
                         double imag_tol = 1e-10);

// (lambda_1 - lambda_{j+1}) |<u~, u_{j+1}>| / sqrt(log n) with
// <u~, u_{j+1}> = q_j / sqrt(1 + |q|^2).
template <class S>
RealVec coordinate_bounds(const Vec<S>& q, const Spectrum& lambda);

template <class S>
struct SolverReport {
  Vec<S> q;
  Vec<S> u_tilde;
  double lambda_tilde = 0.0;
  int outer_iters = 0;
  int inner_iters_total = 0;
  double contraction_upper = 0.0;
  double residual2 = 0.0;
  double orth_residual = 0.0;
  RealVec coord_ratios;
  double q_norm2 = 0.0;
  bool leading_certified = false;

  std::string method = "rs";  // or "oracle-fallback"
  std::string fallback_reason;
  double p = 2.0;

  nlohmann::json to_json() const;
};

// Fills residual2, orth_residual and leading_certified. Never throws on a
// bad solution; the fields record it.
template <class S>
SolverReport<S> verify_solution(const HermitianMatrix<S>& a, const HermitianMatrix<S>& e,
                                SolverReport<S> report, const Spectrum& lambda);

// partition -> solve_q -> assemble -> verify. With opts.fallback, gap
// collapse / contraction failure / nonconvergence yield the dense-oracle
// eigenpair tagged "oracle-fallback" instead of an exception.
template <class S>
SolverReport<S> solve_leading_eigenpair(const EigDecomposition<S>& eig_a, const HermitianMatrix<S>& a,
                                        const HermitianMatrix<S>& e, const SolveOptions& opts = {});
template <class S>
SolverReport<S> solve_leading_eigenpair(const HermitianMatrix<S>& a, const HermitianMatrix<S>& e,
                                        const SolveOptions& opts = {});

template <class S>
struct DominationResult {
  bool holds = false;
  double margin = 0.0;  // min over |z| = 1 of z^*(D_mu - X)z - tau Re(g^* z)
  Vec<S> minimizer;
  int secular_iters = 0;
};

// Checks z^* X z + tau |z| Re(g^* z) <= z^* D_mu z for all z.
template <class S>
DominationResult<S> verify_shifted_domination(const HermitianMatrix<S>& x, const RealVec& mu, double tau,
                                              const Vec<S>& g);

}  // namespace perturb::rs
