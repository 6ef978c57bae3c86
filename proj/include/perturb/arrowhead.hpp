#pragma once

// Leading eigenpair of diag(lambda) + [[0, g^T], [g, 0]] in closed form. The
// top eigenvalue is lambda_1 + gamma where gamma is the positive root of
//
//     gamma = sum_j g_j^2 / (lambda_1 - lambda_{j+1} + gamma),
//
// and the eigenvector is (a, w) with w_j = g_j a / (lambda_1 - lambda_{j+1} + gamma).

#include <json.hpp>

#include "perturb/matcore.hpp"

namespace perturb::arrowhead {

struct SecularSolution {
  double gamma = 0.0;
  RealVec rho;  // g_j^2 / (lambda_1 - lambda_{j+1} + gamma)
  double a = 1.0;
  RealVec w;
  double top_eigenvalue = 0.0;
  double residual = 0.0;  // |gamma - sum_j rho_j|
  int iterations = 0;

  RealVec eigenvector() const;  // (a, w)
  nlohmann::json to_json() const;
};

inline constexpr double kDefaultSecularTol = 1e-12;

// Safeguarded Newton on the increasing map gamma -> gamma - sum g^2/(gap + gamma)
// inside [0, sum g^2/gap]. Sums use compensated accumulation.
double solve_gamma(const Spectrum& lambda, const RealVec& g, double tol = kDefaultSecularTol,
                   int* iterations = nullptr);

double secular_residual(const Spectrum& lambda, const RealVec& g, double gamma);

SecularSolution arrowhead_eigvec(const Spectrum& lambda, const RealVec& g, double gamma);

// Convenience: solve_gamma + arrowhead_eigvec.
SecularSolution solve_arrowhead(const Spectrum& lambda, const RealVec& g, double tol = kDefaultSecularTol);

struct LowerBoundCheck {
  bool holds = true;
  double min_slack = kInf;  // min_j |w_j| 4 (lambda_1 - lambda_{j+1}) / |g_j| - 1, g_j != 0
  Index tested = 0;
};

// |w_j| >= |g_j| / (4 (lambda_1 - lambda_{j+1})) for every j.
LowerBoundCheck lower_bound_check(const SecularSolution& sol, const Spectrum& lambda, const RealVec& g);

}  // namespace perturb::arrowhead
