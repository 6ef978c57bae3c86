#pragma once

// Closed-form quantities on spectra and matrices: gap vectors, the
// K_{n,p} eigenvalue condition, Davis-Kahan and RS sin-theta bounds, the
// analogous condition on a diagonal majorant, the ellipsoid covering bound,
// and l^p operator-norm estimators.

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "perturb/matcore.hpp"

namespace perturb::bounds {

struct GapVector {
  RealVec d;  // d_j = 1 / (lambda_1 - lambda_{j+1}), length n-1
  double eigengap() const { return 1.0 / d(0); }
};

GapVector gap_vector(const Spectrum& lambda);

// ||x||_{p/(p-2)} with p = 2 -> inf and p = inf -> 1.
double holder_pair_norm(const RealVec& x, double p);

// sqrt(p log n) n^{1/p} ||d||_{p/(p-2)} for p in [2, inf); log n ||d||_1 at
// p = inf.
double k_np(const Spectrum& lambda, double p);

std::vector<double> default_p_grid(Index n);

struct BestP {
  double p;
  double k;
};
BestP best_p(const Spectrum& lambda, const std::vector<double>& grid);

struct AssumptionRow {
  double p;
  double scaled_gap_norm;  // n^{1/p} ||d||_{p/(p-2)}
  double k;
};

struct AssumptionReport {
  Index n = 0;
  RealVec d;
  std::vector<AssumptionRow> table;
  double best_p = 2.0;
  double k_best = kInf;
  double c0 = 0.1;
  bool satisfied = false;
  double e_norm = 0.0;
  double dk_bound = 0.0;
  double rs_l2_bound = 0.0;

  nlohmann::json to_json() const;
};

inline constexpr double kDefaultC0 = 0.1;

// e_norm defaults to 2 sqrt(n), the spectral edge of unit-variance noise.
AssumptionReport assess(const Spectrum& lambda, double c0 = kDefaultC0,
                        std::optional<double> e_norm = std::nullopt,
                        std::vector<double> grid = {});

double davis_kahan_bound(const Spectrum& lambda, double e_norm);

// C sqrt(log n) ||d||_2.
double rs_sin_theta_bound(const Spectrum& lambda, double c);

// Same as k_np with d replaced by 1/mu.
double mu_assumption(const RealVec& mu, double p);

// |J| log h(a) + |J_theta| log(cbar / theta).
double ellipsoid_covering_bound(const RealVec& a, double theta, double cbar = 2.718281828459045);

// ||M||_1^{1/p} ||M||_inf^{1-1/p}; tightened by the exact spectral norm at p = 2.
template <class S>
double opnorm_pp_upper(const Mat<S>& m, double p);

struct AscentOptions {
  int restarts = 8;
  int max_iters = 2000;
  double rel_tol = 1e-13;
  std::uint64_t seed = 0;
};

// Lower estimate of sup { ||M u||_out : ||u||_in <= 1 } by the nonlinear power
// method (linearize, maximize over the input ball, repeat). Each step cannot
// decrease the objective, so every returned value is attained by some
// feasible u.
template <class S>
double opnorm_ascent(const Mat<S>& m, double in_exp, double out_exp, const AscentOptions& opts = {});

// Lower estimate of ||M||_{p',p} = sup ||M u||_p over ||u||_{p'} <= 1.
template <class S>
double opnorm_dual_lower(const Mat<S>& m, double p, int restarts, std::uint64_t seed);

}  // namespace perturb::bounds
