#include <doctest.h>

#include "oracles.hpp"
#include "perturb/bounds.hpp"
#include "perturb/ensembles.hpp"
#include "perturb/errors.hpp"
#include "perturb/rs_solver.hpp"

using namespace perturb;
using namespace perturb::rs;
namespace ens = perturb::ensembles;

namespace {

template <class S>
EigDecomposition<S> identity_eig(const Spectrum& lambda) {
  EigDecomposition<S> eig;
  eig.values = lambda.as_vector();
  eig.basis = Mat<S>::Identity(lambda.n(), lambda.n());
  return eig;
}

// A = U diag(lambda) U^* for a random orthogonal U.
struct Rotated {
  HermitianMatrix<double> a;
  EigDecomposition<double> eig;
};

Rotated rotated_diagonal(const Spectrum& lambda, std::uint64_t seed) {
  const Index n = lambda.n();
  const Mat<double> q = Eigen::HouseholderQR<Mat<double>>(oracles::random_symmetric(n, seed)).householderQ();
  Mat<double> a = q * lambda.as_vector().asDiagonal() * q.transpose();
  const auto h = HermitianMatrix<double>::from_upper(a);
  return {h, hermitian_eig(h)};
}

}  // namespace

TEST_CASE("partition") {
  const Spectrum lambda({3.0, 2.0, 1.0});
  const auto zero = partition(identity_eig<double>(lambda), HermitianMatrix<double>::zero(3));
  CHECK(zero.e11 == 0.0);
  CHECK(zero.e12.norm() == 0.0);
  CHECK(zero.e22.norm() == 0.0);

  const HermitianMatrix<double> e(oracles::random_symmetric(3, 1));
  const auto p = partition(identity_eig<double>(lambda), e);
  CHECK(p.assembled() == e.dense());

  const auto rot = rotated_diagonal(ens::realize_spectrum(ens::SpectrumSpec::linear_family(8, 1.0)), 4);
  const HermitianMatrix<double> e8(oracles::random_symmetric(8, 2));
  const auto p8 = partition(rot.eig, e8);
  const Mat<double> back = rot.eig.basis * p8.assembled() * rot.eig.basis.transpose();
  CHECK((back - e8.dense()).norm() <= 1e-12 * e8.frobenius());
  CHECK(p8.e21 == Vec<double>(p8.e12.adjoint()));

  const HermitianMatrix<Complex> c(oracles::random_hermitian(6, 3));
  const auto pc = partition(identity_eig<Complex>(ens::realize_spectrum(ens::SpectrumSpec::linear_family(6, 1.0))), c);
  CHECK(pc.e21 == Vec<Complex>(pc.e12.adjoint()));
  CHECK(pc.e22 == Mat<Complex>(pc.e22.adjoint()));

  CHECK_THROWS_AS(partition(identity_eig<double>(lambda), HermitianMatrix<double>::zero(4)), DimensionMismatch);
}

TEST_CASE("build_shifted_gaps") {
  const Spectrum lambda({3.0, 2.0, 1.0});
  CHECK(build_shifted_gaps(lambda, 0.0).d == RealVec{{1.0, 2.0}});
  CHECK(build_shifted_gaps(lambda, 0.5).d == RealVec{{1.5, 2.5}});
  CHECK_THROWS_AS(build_shifted_gaps(lambda, -1.0), GapCollapse);
}

TEST_CASE("jacobi_apply_Linv") {
  ShiftedGapOperator gaps{RealVec{{1.0, 2.0, 4.0}}, 5.0};
  const Vec<double> y{{1.0, -2.0, 3.0}};
  const auto trivial = jacobi_apply_Linv<double>(gaps, Mat<double>::Zero(3, 3), y, 2.0, 1e-14, 100);
  CHECK(trivial.iters == 1);
  CHECK(trivial.x == Vec<double>{{1.0, -1.0, 0.75}});

  std::mt19937_64 rng(17);
  int checked = 0;
  for (std::uint64_t s = 0; checked < 30; ++s) {
    ShiftedGapOperator g6{RealVec::LinSpaced(6, 1.0, 3.0), 4.0};
    Mat<double> e22 = oracles::random_symmetric(6, 900 + s, 0.15);
    const Mat<double> m = e22 * g6.d.cwiseInverse().asDiagonal();
    if (operator_norm_exact<double>(m, 2.0) > 0.4) continue;
    ++checked;
    const Vec<double> yy = oracles::random_vector<double>(6, rng);
    const auto r = jacobi_apply_Linv<double>(g6, e22, yy, 2.0, 1e-14, 500);
    const Mat<double> l = Mat<double>(g6.d.asDiagonal()) - e22;
    const Vec<double> direct = l.partialPivLu().solve(yy);
    CHECK((r.x - direct).norm() <= 1e-10 * direct.norm());
    CHECK((l * r.x - yy).norm() <= 1e-13 * yy.norm() * 10);
  }

  gaps = ShiftedGapOperator{RealVec{{1.0, 1.0}}, 2.0};
  CHECK_THROWS_AS(jacobi_apply_Linv<double>(gaps, Mat<double>{{0.0, 2.0}, {2.0, 0.0}}, Vec<double>{{1.0, 1.0}}, 2.0, 1e-12, 50),
                  ContractionFailure);
}

TEST_CASE("scaled inverse: ||D L^{-1} y||_p <= 2 ||y||_p under a 1/2 certificate") {
  std::mt19937_64 rng(23);
  for (double p : {2.0, kInf}) {
    int checked = 0;
    for (std::uint64_t s = 0; checked < 100; ++s) {
      const Index m = 10;
      ShiftedGapOperator g{RealVec::LinSpaced(m, 1.0, 5.0), 6.0};
      const Mat<double> e22 = oracles::random_symmetric(m, 3000 + s, 0.1);
      const Mat<double> ed = e22 * g.d.cwiseInverse().asDiagonal();
      if (contraction_bound<double>(ed, p) > 0.5) continue;
      ++checked;
      const Vec<double> y = oracles::random_vector<double>(m, rng);
      const auto r = jacobi_apply_Linv<double>(g, e22, y, p, 1e-14, 500);
      const Vec<double> dx = g.d.asDiagonal() * r.x;
      CHECK(lp_norm(dx, p) <= 2.0 * lp_norm(y, p));
      CHECK(r.iters <= 10 * std::log2(1e14));
    }
  }
}

TEST_CASE("solve_q: zero perturbation and scalar closed form") {
  const Spectrum lambda({3.0, 2.0, 1.0});
  const auto eig = identity_eig<double>(lambda);
  const auto sol = solve_q(partition(eig, HermitianMatrix<double>::zero(3)), lambda);
  CHECK(sol.q.norm() == 0.0);
  CHECK(assemble_eigvec(eig, sol.q) == Vec<double>{{1.0, 0.0, 0.0}});

  // n = 2: (delta + e11 - e22) q = e21 - e12 q^2.
  const double delta = 2.0, e11 = 0.3, e12 = 0.4, e22 = -0.2;
  const Spectrum l2({5.0, 5.0 - delta});
  const HermitianMatrix<double> e(Mat<double>{{e11, e12}, {e12, e22}});
  const auto s2 = solve_q(partition(identity_eig<double>(l2), e), l2);
  const double a = e12, b = delta + e11 - e22, c = -e12;
  const double root = (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
  CHECK(s2.q(0) == doctest::Approx(root).epsilon(1e-12));
  const double lam = eigenvalue_from_q(5.0, e11, RowVec<double>{{e12}}, s2.q);
  CHECK(lam == doctest::Approx(oracles::dense_top<double>(Mat<double>{{5.0 + e11, e12}, {e12, 3.0 + e22}}).value).epsilon(1e-13));
}

TEST_CASE("solve_q: residual, iteration counts, scaled l_inf error") {
  const auto base = ens::realize_spectrum(ens::SpectrumSpec::linear_family(64, 1.0));
  const double k1 = bounds::assess(base).k_best;
  const double scale = 2.0 * k1 / bounds::kDefaultC0;
  const auto lambda = ens::realize_spectrum(ens::SpectrumSpec::linear_family(64, scale));
  REQUIRE(bounds::assess(lambda).satisfied);
  const auto eig = identity_eig<double>(lambda);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto e = ens::sample_goe(64, {5, t});
    const auto part = partition(eig, e);
    SolveOptions opts;
    const auto sol = solve_q(part, lambda, opts);
    CHECK(sol.fixed_point_residual <= opts.tol * (part.e21.norm() + 1.0));
    CHECK(fixed_point_residual(part, lambda, sol.q) == sol.fixed_point_residual);
    CHECK(sol.q.norm() <= 0.25);
    if (sol.contraction_upper <= 0.5) {
      CHECK(sol.outer_iters <= 10 * std::log2(1.0 / opts.tol));
      CHECK(sol.inner_iters_total <= sol.outer_iters * 10 * std::log2(10.0 / opts.tol));
    }
  }
}

TEST_CASE("assemble_eigvec and coordinate_bounds") {
  const Spectrum lambda({3.0, 2.0, 1.0});
  const auto eig = identity_eig<double>(lambda);
  CHECK(assemble_eigvec(eig, Vec<double>(Vec<double>::Zero(2))) == Vec<double>{{1.0, 0.0, 0.0}});
  const auto u2 = assemble_eigvec(identity_eig<double>(Spectrum({2.0, 1.0})), Vec<double>{{1.0}});
  CHECK(u2(0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(u2(1) == doctest::Approx(1.0 / std::sqrt(2.0)));

  const auto rot = rotated_diagonal(ens::realize_spectrum(ens::SpectrumSpec::linear_family(8, 1.0)), 9);
  std::mt19937_64 rng(4);
  const Vec<double> q = oracles::random_vector<double>(7, rng);
  const Vec<double> u = assemble_eigvec(rot.eig, q);
  CHECK(u.norm() == doctest::Approx(1.0).epsilon(1e-14));
  const double c = 1.0 / std::sqrt(1.0 + q.squaredNorm());
  CHECK(u.dot(rot.eig.basis.col(0)) == doctest::Approx(c).epsilon(1e-13));
  for (Index j = 0; j < 7; ++j) CHECK(u.dot(rot.eig.basis.col(j + 1)) == doctest::Approx(q(j) * c).epsilon(1e-12));

  CHECK(coordinate_bounds(Vec<double>(Vec<double>::Zero(2)), lambda).norm() == 0.0);
  const Vec<double> qq{{0.1, 0.01}};
  const double cc = 1.0 / std::sqrt(1.0 + qq.squaredNorm());
  const RealVec r = coordinate_bounds(qq, lambda);
  CHECK(r(0) == doctest::Approx(1.0 * 0.1 * cc / std::sqrt(std::log(3.0))));
  CHECK(r(1) == doctest::Approx(2.0 * 0.01 * cc / std::sqrt(std::log(3.0))));
  CHECK(coordinate_bounds(Vec<double>{{0.2, 0.01}}, lambda)(1) < r(1));
  CHECK(coordinate_bounds(Vec<double>{{0.1, 0.02}}, lambda)(1) > r(1));
}

TEST_CASE("eigenvalue_from_q") {
  CHECK(eigenvalue_from_q(7.0, 0.0, RowVec<double>{{1.0, 2.0}}, Vec<double>(Vec<double>::Zero(2))) == 7.0);
  RowVec<Complex> e12(1);
  e12(0) = Complex(0.0, 1.0);
  Vec<Complex> q(1);
  q(0) = Complex(1.0, 0.0);
  CHECK_THROWS_AS(eigenvalue_from_q(1.0, 0.0, e12, q), InconsistencyError);

  const auto lambda = ens::realize_spectrum(ens::SpectrumSpec::linear_family(8, 3.0));
  const auto rot = rotated_diagonal(lambda, 12);
  const HermitianMatrix<double> e(oracles::random_symmetric(8, 13, 0.3));
  const auto part = partition(rot.eig, e);
  const auto sol = solve_q(part, lambda);
  const Vec<double> u = assemble_eigvec(rot.eig, sol.q);
  const double direct = u.dot((rot.a + e).dense() * u);
  CHECK(eigenvalue_from_q(lambda[0], part.e11, part.e12, sol.q) == doctest::Approx(direct).epsilon(1e-11));
}

TEST_CASE("verify_solution and the leading certificate") {
  const Spectrum lambda({3.0, 2.0, 1.0});
  const auto a = HermitianMatrix<double>::diagonal(lambda.as_vector());
  const auto clean = solve_leading_eigenpair(a, HermitianMatrix<double>::zero(3));
  CHECK(clean.residual2 == 0.0);
  CHECK(clean.orth_residual == 0.0);
  CHECK(clean.leading_certified);
  CHECK(clean.method == "rs");

  // E = (lambda_1 - lambda_2 + 0.1) u_2 u_2^*: q = 0 solves the system but
  // (u_1, lambda_1) is no longer the top pair.
  const auto bad = HermitianMatrix<double>::diagonal(RealVec{{0.0, 1.1, 0.0}});
  SolverReport<double> r;
  r.q = Vec<double>::Zero(2);
  r.u_tilde = assemble_eigvec(identity_eig<double>(lambda), r.q);
  r.lambda_tilde = 3.0;
  r = verify_solution(a, bad, r, lambda);
  CHECK(r.residual2 == 0.0);
  CHECK_FALSE(r.leading_certified);

  SolveOptions strict;
  strict.fallback = false;
  CHECK_THROWS_AS(solve_leading_eigenpair(a, bad, strict), ContractionFailure);
  const auto fb = solve_leading_eigenpair(a, bad);
  CHECK(fb.method == "oracle-fallback");
  CHECK(!fb.fallback_reason.empty());
  CHECK(fb.lambda_tilde == doctest::Approx(3.1));
  CHECK(std::abs(fb.u_tilde(1)) == doctest::Approx(1.0));

  const auto big_e11 = HermitianMatrix<double>::diagonal(RealVec{{-5.0, 0.0, 0.0}});
  CHECK(solve_leading_eigenpair(a, big_e11).method == "oracle-fallback");
  CHECK_THROWS_AS(solve_leading_eigenpair(a, big_e11, strict), GapCollapse);
}

TEST_CASE("oracle equivalence on random certified instances, real and complex") {
  const auto lambda = ens::realize_spectrum(ens::SpectrumSpec::multiscale_family(48, 1.0));
  const auto a = HermitianMatrix<double>::diagonal(lambda.as_vector());
  const auto ac = HermitianMatrix<Complex>::diagonal(lambda.as_vector());
  for (std::uint64_t t = 0; t < 10; ++t) {
    const auto e = ens::sample_goe(48, {21, t});
    const auto rep = solve_leading_eigenpair(a, e);
    REQUIRE(rep.leading_certified);
    const auto ref = oracles::dense_top<double>((a + e).dense());
    CHECK(1.0 - oracles::overlap(rep.u_tilde, ref.vector) <= 1e-9);
    CHECK(std::abs(rep.lambda_tilde - ref.value) <= 1e-9 * (1.0 + std::abs(rep.lambda_tilde)));
    CHECK(rep.residual2 <= 1e-9 * operator_norm_exact<double>((a + e).dense(), 2.0));
    CHECK(rep.u_tilde.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.u_tilde(0) > 0.0);

    const auto g = ens::sample_gue(48, {22, t});
    const auto repc = solve_leading_eigenpair(ac, g);
    REQUIRE(repc.leading_certified);
    CHECK(repc.method == "rs");
    const auto refc = oracles::dense_top<Complex>((ac + g).dense());
    CHECK(1.0 - oracles::overlap(repc.u_tilde, refc.vector) <= 1e-9);
    CHECK(repc.u_tilde(0).imag() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(repc.u_tilde(0).real() > 0.0);
  }
}

TEST_CASE("solver is deterministic and reports in JSON") {
  const auto lambda = ens::realize_spectrum(ens::SpectrumSpec::multiscale_family(20, 1.0));
  const auto a = HermitianMatrix<double>::diagonal(lambda.as_vector());
  const auto e = ens::sample_goe(20, {1, 1});
  const auto r1 = solve_leading_eigenpair(a, e);
  const auto r2 = solve_leading_eigenpair(a, e);
  CHECK(r1.to_json().dump() == r2.to_json().dump());
  const auto j = r1.to_json();
  for (const char* key : {"q", "u_tilde", "lambda_tilde", "outer_iters", "inner_iters_total", "contraction_upper",
                          "residual2", "orth_residual", "coord_ratios", "q_norm2", "leading_certified"})
    CHECK_MESSAGE(j.contains(key), key);
}

TEST_CASE("verify_shifted_domination") {
  const RealVec mu{{2.0, 3.0, 5.0}};
  const auto none = verify_shifted_domination(HermitianMatrix<double>::zero(3), mu, 0.0, Vec<double>(Vec<double>::Zero(3)));
  CHECK(none.holds);
  CHECK(none.margin == doctest::Approx(2.0));

  for (double x : {-1.0, 0.5, 2.5}) {
    for (double g : {-3.0, 0.7}) {
      const auto r = verify_shifted_domination(HermitianMatrix<double>(Mat<double>{{x}}), RealVec{{2.0}}, 1.0,
                                               Vec<double>{{g}});
      CHECK(r.margin == doctest::Approx(2.0 - x - std::abs(g)).epsilon(1e-12));
      CHECK(r.holds == (2.0 - x - std::abs(g) >= 0.0));
    }
  }

  std::mt19937_64 rng(31);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const HermitianMatrix<double> x(oracles::random_symmetric(5, 700 + s));
    const RealVec m5 = RealVec::LinSpaced(5, 1.0, 3.0);
    const Vec<double> g = oracles::random_vector<double>(5, rng);
    const auto r = verify_shifted_domination(x, m5, 0.5, g);
    Mat<double> h = -x.dense();
    h.diagonal() += m5;
    const double brute = oracles::brute_force_sphere_min<double>(h, g, 0.5, 100000, s);
    CHECK(r.margin <= brute + 1e-9);
    CHECK(r.margin == doctest::Approx(brute).epsilon(1e-3));
    CHECK(r.holds == (brute >= 0.0));
  }

  // Hard case: b orthogonal to the bottom eigenvector.
  const HermitianMatrix<double> x0 = HermitianMatrix<double>::zero(2);
  const auto hard = verify_shifted_domination(x0, RealVec{{1.0, 4.0}}, 1.0, Vec<double>{{0.0, 1.0}});
  const double brute = oracles::brute_force_sphere_min<double>(Mat<double>(RealVec{{1.0, 4.0}}.asDiagonal()),
                                                               Vec<double>{{0.0, 1.0}}, 1.0, 100000, 1);
  CHECK(hard.margin == doctest::Approx(brute).epsilon(1e-6));
}
