#include "perturb/rs_solver.hpp"

#include <algorithm>
#include <cmath>

#include "perturb/bounds.hpp"
#include "perturb/io.hpp"

namespace perturb::rs {

template <class S>
Mat<S> PartitionedPerturbation<S>::assembled() const {
  const Index m = dim();
  Mat<S> out(m + 1, m + 1);
  out(0, 0) = S(e11);
  out.block(0, 1, 1, m) = e12;
  out.block(1, 0, m, 1) = e21;
  out.bottomRightCorner(m, m) = e22;
  return out;
}

template <class S>
PartitionedPerturbation<S> partition(const EigDecomposition<S>& eig, const HermitianMatrix<S>& e) {
  const Index n = eig.n();
  if (e.n() != n || eig.basis.rows() != n || eig.basis.cols() != n)
    throw DimensionMismatch("partition: E and the eigenbasis of A have different sizes");
  if (n < 2) throw DimensionMismatch("partition: need n >= 2");
  const Mat<S> rotated = eig.basis.adjoint() * e.dense() * eig.basis;

  PartitionedPerturbation<S> out;
  out.e11 = real_of(rotated(0, 0));
  out.e12 = rotated.block(0, 1, 1, n - 1);
  out.e21 = out.e12.adjoint();
  // Symmetrize the rounding noise away so E22 is Hermitian exactly.
  const Mat<S> block = rotated.bottomRightCorner(n - 1, n - 1);
  out.e22 = (block + block.adjoint()) * 0.5;
  for (Index j = 0; j < n - 1; ++j) out.e22(j, j) = S(real_of(out.e22(j, j)));
  return out;
}

ShiftedGapOperator build_shifted_gaps(const Spectrum& lambda, double e11) {
  const Index n = lambda.n();
  ShiftedGapOperator out;
  out.lambda_head = lambda.lambda1();
  out.d.resize(n - 1);
  for (Index j = 0; j + 1 < n; ++j) {
    const double dj = lambda[0] - lambda[j + 1] + e11;
    if (!(dj > 0.0))
      throw GapCollapse("build_shifted_gaps: shifted gap " + std::to_string(j + 1) +
                            " is not positive; the perturbation is too large for the construction",
                        dj);
    out.d(j) = dj;
  }
  return out;
}

template <class S>
double contraction_bound(const Mat<S>& m, double p) {
  return bounds::opnorm_pp_upper(m, p);
}

template <class S>
LinearizedOperator<S>::LinearizedOperator(ShiftedGapOperator gaps, const Mat<S>& e22, double p,
                                          double accept)
    : gaps_(std::move(gaps)), e22_(e22), p_(p) {
  if (e22_.rows() != gaps_.d.size() || e22_.cols() != gaps_.d.size())
    throw DimensionMismatch("LinearizedOperator: E22 and D have different sizes");
  e22_dinv_ = e22_ * gaps_.d.cwiseInverse().asDiagonal();
  contraction_upper_ = contraction_bound(e22_dinv_, p_);
  if (!(contraction_upper_ <= accept))
    throw ContractionFailure("||E22 D^-1||_{p,p} certificate " + std::to_string(contraction_upper_) +
                                 " exceeds " + std::to_string(accept),
                             contraction_upper_);
}

template <class S>
Vec<S> LinearizedOperator<S>::apply(const Vec<S>& x) const {
  return (gaps_.d.array() * x.array()).matrix() - e22_ * x;
}

template <class S>
InnerResult<S> jacobi_apply_Linv(const LinearizedOperator<S>& op, const Vec<S>& y, double tol, int cap) {
  if (y.size() != op.gaps().d.size()) throw DimensionMismatch("jacobi_apply_Linv: y has wrong length");
  const double target = tol * y.norm();
  InnerResult<S> out;
  Vec<S> v = y;
  // L D^{-1} v - y = v - (E22 D^{-1} v + y), so the step length is the residual.
  for (int t = 1; t <= cap; ++t) {
    Vec<S> next = op.e22_dinv() * v + y;
    const double step = (next - v).norm();
    out.iters = t;
    if (!std::isfinite(step)) break;
    if (step <= target) {
      out.x = (v.array() / op.gaps().d.array()).matrix();
      out.residual = step;
      return out;
    }
    v = std::move(next);
  }
  throw ContractionFailure("jacobi_apply_Linv: no convergence within " + std::to_string(cap) + " iterations",
                           op.contraction_upper());
}

template <class S>
InnerResult<S> jacobi_apply_Linv(const ShiftedGapOperator& gaps, const Mat<S>& e22, const Vec<S>& y,
                                 double p, double tol, int cap) {
  const LinearizedOperator<S> op(gaps, e22, p);
  return jacobi_apply_Linv(op, y, tol, cap);
}

int SolveOptions::iteration_cap() const {
  if (cap > 0) return cap;
  return std::max(200, static_cast<int>(std::ceil(10.0 * std::log2(1.0 / tol))));
}

template <class S>
double fixed_point_residual(const PartitionedPerturbation<S>& part, const Spectrum& lambda, const Vec<S>& q) {
  const Index m = part.dim();
  Vec<S> lq(m);
  for (Index j = 0; j < m; ++j) lq(j) = (lambda[0] - lambda[j + 1] + part.e11) * q(j);
  lq -= part.e22 * q;
  return (lq - part.e21 + q * part.e12_times(q)).norm();
}

template <class S>
QSolution<S> solve_q(const PartitionedPerturbation<S>& part, const Spectrum& lambda, const SolveOptions& opts) {
  if (part.dim() + 1 != lambda.n()) throw DimensionMismatch("solve_q: spectrum and blocks differ in size");
  const ShiftedGapOperator gaps = build_shifted_gaps(lambda, part.e11);
  const LinearizedOperator<S> op(gaps, part.e22, opts.p, opts.accept_contraction);
  const int cap = opts.iteration_cap();
  const double inner_tol = opts.tol / 10.0;
  const double scale = lp_norm(part.e21, opts.p) + 1.0;

  QSolution<S> out;
  out.contraction_upper = op.contraction_upper();
  Vec<S> q = Vec<S>::Zero(part.dim());
  int growth_streak = 0;
  bool converged = false;
  for (int s = 0; s < cap; ++s) {
    const Vec<S> rhs = part.e21 - q * part.e12_times(q);
    auto inner = jacobi_apply_Linv(op, rhs, inner_tol, cap);
    out.inner_iters_total += inner.iters;
    const Vec<S> diff = inner.x - q;
    const double step = lp_norm(Vec<S>((gaps.d.array() * diff.array()).matrix()), opts.p);
    q = std::move(inner.x);
    ++out.outer_iters;
    if (!std::isfinite(step)) break;
    if (!out.steps.empty() && step >= out.steps.back()) {
      if (++growth_streak >= 3) {
        out.steps.push_back(step);
        throw NonConvergence("solve_q: outer iteration is not contracting", step);
      }
    } else {
      growth_streak = 0;
    }
    out.steps.push_back(step);
    if (step <= opts.tol * scale) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw NonConvergence("solve_q: outer iteration hit the cap",
                         out.steps.empty() ? kInf : out.steps.back());
  out.fixed_point_residual = fixed_point_residual(part, lambda, q);
  if (!(out.fixed_point_residual <= opts.tol * (part.e21.norm() + 1.0)))
    throw NonConvergence("solve_q: fixed-point residual above tolerance", out.fixed_point_residual);
  out.q = std::move(q);
  return out;
}

template <class S>
Vec<S> assemble_eigvec(const EigDecomposition<S>& eig, const Vec<S>& q) {
  const Index n = eig.n();
  if (q.size() != n - 1) throw DimensionMismatch("assemble_eigvec: q must have length n-1");
  Vec<S> u = eig.basis.col(0) + eig.basis.rightCols(n - 1) * q;
  return u / std::sqrt(1.0 + q.squaredNorm());
}

template <class S>
double eigenvalue_from_q(double lambda1, double e11, const RowVec<S>& e12, const Vec<S>& q, double imag_tol) {
  if (e12.size() != q.size()) throw DimensionMismatch("eigenvalue_from_q: e12 and q differ in length");
  const S coupling = (e12 * q)(0);
  const double im = imag_of(coupling);
  if (std::abs(im) > imag_tol * std::max(1.0, std::abs(coupling)))
    throw InconsistencyError("eigenvalue_from_q: E12 q has a nonzero imaginary part", im);
  return lambda1 + e11 + real_of(coupling);
}

template <class S>
RealVec coordinate_bounds(const Vec<S>& q, const Spectrum& lambda) {
  if (q.size() != lambda.n() - 1) throw DimensionMismatch("coordinate_bounds: q must have length n-1");
  const double c = 1.0 / std::sqrt(1.0 + q.squaredNorm());
  const double root_log = std::sqrt(std::log(static_cast<double>(lambda.n())));
  RealVec out(q.size());
  for (Index j = 0; j < q.size(); ++j) out(j) = (lambda[0] - lambda[j + 1]) * std::abs(q(j)) * c / root_log;
  return out;
}

template <class S>
nlohmann::json SolverReport<S>::to_json() const {
  auto vec = [](const auto& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Index k = 0; k < v.size(); ++k) arr.push_back(io::scalar_to_json(v(k)));
    return arr;
  };
  nlohmann::json j{{"q", vec(q)},
                   {"u_tilde", vec(u_tilde)},
                   {"lambda_tilde", lambda_tilde},
                   {"outer_iters", outer_iters},
                   {"inner_iters_total", inner_iters_total},
                   {"contraction_upper", contraction_upper},
                   {"residual2", residual2},
                   {"orth_residual", orth_residual},
                   {"coord_ratios", vec(coord_ratios)},
                   {"q_norm2", q_norm2},
                   {"leading_certified", leading_certified},
                   {"method", method},
                   {"p", std::isinf(p) ? nlohmann::json("inf") : nlohmann::json(p)},
                   {"scalar", is_complex_v<S> ? "complex" : "real"}};
  if (!fallback_reason.empty()) j["fallback_reason"] = fallback_reason;
  return j;
}

template <class S>
SolverReport<S> verify_solution(const HermitianMatrix<S>& a, const HermitianMatrix<S>& e, SolverReport<S> report,
                                const Spectrum& lambda) {
  const HermitianMatrix<S> perturbed = a + e;
  const Vec<S>& u = report.u_tilde;
  const Vec<S> au = perturbed.dense() * u;
  report.residual2 = (au - report.lambda_tilde * u).norm();
  const S rayleigh = u.dot(au);
  report.orth_residual = (au - rayleigh * u).norm();
  const double top = lambda_max(perturbed);
  const bool above_mid = report.lambda_tilde > 0.5 * (lambda[0] + lambda[1]);
  const bool is_max = std::abs(report.lambda_tilde - top) <= 1e-9 * (1.0 + std::abs(report.lambda_tilde));
  report.leading_certified = above_mid && is_max;
  return report;
}

namespace {

template <class S>
SolverReport<S> oracle_fallback(const EigDecomposition<S>& eig_a, const HermitianMatrix<S>& a,
                                const HermitianMatrix<S>& e, const Spectrum& lambda, const std::string& reason,
                                double contraction) {
  const Index n = eig_a.n();
  const HermitianMatrix<S> perturbed = a + e;
  auto top = top_eigenpair(perturbed);
  Vec<S> u = top.vector;
  // Phase so that <u~, u_1> is real and nonnegative.
  const S overlap = eig_a.basis.col(0).dot(u);
  if (std::abs(overlap) > 0.0) u *= conj_of(overlap) / std::abs(overlap);

  SolverReport<S> r;
  r.method = "oracle-fallback";
  r.fallback_reason = reason;
  r.u_tilde = u;
  r.lambda_tilde = top.value;
  r.contraction_upper = contraction;
  const Vec<S> coords = eig_a.basis.adjoint() * u;  // <u_j, u~>
  const double head = real_of(coords(0));
  r.q = coords.tail(n - 1);
  if (head > 0.0) r.q /= head;
  r.q_norm2 = r.q.norm();
  const double root_log = std::sqrt(std::log(static_cast<double>(n)));
  r.coord_ratios.resize(n - 1);
  for (Index j = 0; j + 1 < n; ++j)
    r.coord_ratios(j) = (lambda[0] - lambda[j + 1]) * std::abs(coords(j + 1)) / root_log;
  return verify_solution(a, e, std::move(r), lambda);
}

}  // namespace

template <class S>
SolverReport<S> solve_leading_eigenpair(const EigDecomposition<S>& eig_a, const HermitianMatrix<S>& a,
                                        const HermitianMatrix<S>& e, const SolveOptions& opts) {
  const Spectrum lambda = eig_a.spectrum();
  const auto part = partition(eig_a, e);
  try {
    auto sol = solve_q(part, lambda, opts);
    SolverReport<S> r;
    r.p = opts.p;
    r.lambda_tilde = eigenvalue_from_q(lambda[0], part.e11, part.e12, sol.q, opts.imag_tol);
    r.u_tilde = assemble_eigvec(eig_a, sol.q);
    r.outer_iters = sol.outer_iters;
    r.inner_iters_total = sol.inner_iters_total;
    r.contraction_upper = sol.contraction_upper;
    r.coord_ratios = coordinate_bounds(sol.q, lambda);
    r.q_norm2 = sol.q.norm();
    r.q = std::move(sol.q);
    return verify_solution(a, e, std::move(r), lambda);
  } catch (const ContractionFailure& err) {
    if (!opts.fallback) throw;
    auto r = oracle_fallback(eig_a, a, e, lambda, err.what(), err.certified_bound());
    r.p = opts.p;
    return r;
  } catch (const GapCollapse& err) {
    if (!opts.fallback) throw;
    auto r = oracle_fallback(eig_a, a, e, lambda, err.what(), kInf);
    r.p = opts.p;
    return r;
  } catch (const NonConvergence& err) {
    if (!opts.fallback) throw;
    auto r = oracle_fallback(eig_a, a, e, lambda, err.what(), kInf);
    r.p = opts.p;
    return r;
  } catch (const InconsistencyError& err) {
    if (!opts.fallback) throw;
    auto r = oracle_fallback(eig_a, a, e, lambda, err.what(), kInf);
    r.p = opts.p;
    return r;
  }
}

template <class S>
SolverReport<S> solve_leading_eigenpair(const HermitianMatrix<S>& a, const HermitianMatrix<S>& e,
                                        const SolveOptions& opts) {
  return solve_leading_eigenpair(hermitian_eig(a), a, e, opts);
}

template <class S>
DominationResult<S> verify_shifted_domination(const HermitianMatrix<S>& x, const RealVec& mu, double tau,
                                              const Vec<S>& g) {
  const Index n = x.n();
  if (mu.size() != n) throw DimensionMismatch("verify_shifted_domination: mu has wrong length");
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("verify_shifted_domination: tau must be in [0, 1]");
  if (tau > 0.0 && g.size() != n) throw DimensionMismatch("verify_shifted_domination: g has wrong length");

  Mat<S> h = -x.dense();
  h.diagonal() += mu.template cast<S>();
  const auto eig = hermitian_eig(HermitianMatrix<S>::from_upper(h));
  const RealVec& lam = eig.values;  // descending
  const double lam_min = lam(n - 1);

  DominationResult<S> out;
  const Vec<S> b = tau > 0.0 ? Vec<S>(g * (0.5 * tau)) : Vec<S>::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.margin = lam_min;
    out.minimizer = eig.basis.col(n - 1);
    out.holds = out.margin >= 0.0;
    return out;
  }

  // Minimize z^* H z - 2 Re(b^* z) on the unit sphere: z = (H - sigma I)^{-1} b
  // with sigma < lambda_min(H) solving sum |beta_i|^2 / (lambda_i - sigma)^2 = 1.
  const Vec<S> beta = eig.basis.adjoint() * b;
  const double spread = std::max({1.0, std::abs(lam(0)), std::abs(lam_min)});
  const double deg_tol = 1e-12 * spread;
  double beta_min_group = 0.0;
  double hard_sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (lam(i) - lam_min <= deg_tol) {
      beta_min_group += std::norm(beta(i));
    } else {
      hard_sum += std::norm(beta(i)) / ((lam(i) - lam_min) * (lam(i) - lam_min));
    }
  }

  Vec<S> zeta = Vec<S>::Zero(n);
  if (beta_min_group <= 1e-28 * bnorm * bnorm && hard_sum <= 1.0) {
    // Hard case: sigma = lambda_min, the slack goes into the bottom eigenspace.
    for (Index i = 0; i < n; ++i)
      if (lam(i) - lam_min > deg_tol) zeta(i) = beta(i) / (lam(i) - lam_min);
    zeta(n - 1) += S(std::sqrt(std::max(0.0, 1.0 - zeta.squaredNorm())));
  } else {
    auto phi = [&](double sigma, double* dphi) {
      double f = 0.0, df = 0.0;
      for (Index i = 0; i < n; ++i) {
        const double gap = lam(i) - sigma;
        const double w = std::norm(beta(i)) / (gap * gap);
        f += w;
        df += 2.0 * w / gap;
      }
      if (dphi) *dphi = df;
      return f;
    };
    double lo = lam_min - bnorm;  // phi(lo) <= 1
    double hi = lam_min;          // phi -> inf as sigma -> lambda_min
    double sigma = lo;
    bool done = false;
    for (int it = 0; it < 200; ++it) {
      out.secular_iters = it + 1;
      double dphi = 0.0;
      const double f = phi(sigma, &dphi);
      if (std::abs(f - 1.0) <= 1e-15) {
        done = true;
        break;
      }
      if (f < 1.0) lo = sigma; else hi = sigma;
      // Newton on psi = 1/sqrt(phi) - 1, which is close to linear in sigma.
      const double psi = 1.0 / std::sqrt(f) - 1.0;
      const double dpsi = -0.5 * dphi / (f * std::sqrt(f));
      double next = sigma - psi / dpsi;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi))) {
        sigma = next;
        done = true;
        break;
      }
      sigma = next;
    }
    if (!done) throw NumericFailure("verify_shifted_domination: secular equation did not converge", hi - lo);
    for (Index i = 0; i < n; ++i) zeta(i) = beta(i) / (lam(i) - sigma);
  }
  zeta /= zeta.norm();
  double value = 0.0;
  for (Index i = 0; i < n; ++i) value += lam(i) * std::norm(zeta(i));
  value -= 2.0 * real_of(beta.dot(zeta));
  out.margin = value;
  out.minimizer = eig.basis * zeta;
  out.holds = out.margin >= 0.0;
  return out;
}

#define PERTURB_INSTANTIATE_RS(S)                                                                               \
  template struct PartitionedPerturbation<S>;                                                                  \
  template PartitionedPerturbation<S> partition(const EigDecomposition<S>&, const HermitianMatrix<S>&);        \
  template double contraction_bound(const Mat<S>&, double);                                                    \
  template class LinearizedOperator<S>;                                                                        \
  template InnerResult<S> jacobi_apply_Linv(const LinearizedOperator<S>&, const Vec<S>&, double, int);         \
  template InnerResult<S> jacobi_apply_Linv(const ShiftedGapOperator&, const Mat<S>&, const Vec<S>&, double,   \
                                            double, int);                                                      \
  template QSolution<S> solve_q(const PartitionedPerturbation<S>&, const Spectrum&, const SolveOptions&);      \
  template double fixed_point_residual(const PartitionedPerturbation<S>&, const Spectrum&, const Vec<S>&);     \
  template Vec<S> assemble_eigvec(const EigDecomposition<S>&, const Vec<S>&);                                  \
  template double eigenvalue_from_q(double, double, const RowVec<S>&, const Vec<S>&, double);                  \
  template RealVec coordinate_bounds(const Vec<S>&, const Spectrum&);                                          \
  template struct SolverReport<S>;                                                                             \
  template SolverReport<S> verify_solution(const HermitianMatrix<S>&, const HermitianMatrix<S>&,               \
                                           SolverReport<S>, const Spectrum&);                                  \
  template SolverReport<S> solve_leading_eigenpair(const EigDecomposition<S>&, const HermitianMatrix<S>&,      \
                                                   const HermitianMatrix<S>&, const SolveOptions&);            \
  template SolverReport<S> solve_leading_eigenpair(const HermitianMatrix<S>&, const HermitianMatrix<S>&,       \
                                                   const SolveOptions&);                                       \
  template DominationResult<S> verify_shifted_domination(const HermitianMatrix<S>&, const RealVec&, double,    \
                                                         const Vec<S>&);

PERTURB_INSTANTIATE_RS(double)
PERTURB_INSTANTIATE_RS(Complex)

#undef PERTURB_INSTANTIATE_RS

}  // namespace perturb::rs
