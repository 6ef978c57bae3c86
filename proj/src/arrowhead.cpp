#include "perturb/arrowhead.hpp"

#include <algorithm>
#include <cmath>

namespace perturb::arrowhead {

namespace {

// Neumaier summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void check_sizes(const Spectrum& lambda, const RealVec& g) {
  if (g.size() != lambda.n() - 1) throw DimensionMismatch("arrowhead: g must have length n-1");
}

// F(gamma) = gamma - sum g^2/(gap + gamma) and F'(gamma).
std::pair<double, double> secular_map(const Spectrum& lambda, const RealVec& g, double gamma) {
  CompensatedSum sum, deriv;
  for (Index j = 0; j < g.size(); ++j) {
    const double denom = lambda[0] - lambda[j + 1] + gamma;
    const double term = g(j) * g(j) / denom;
    sum.add(term);
    deriv.add(term / denom);
  }
  return {gamma - sum.value(), 1.0 + deriv.value()};
}

}  // namespace

double secular_residual(const Spectrum& lambda, const RealVec& g, double gamma) {
  check_sizes(lambda, g);
  return std::abs(secular_map(lambda, g, gamma).first);
}

double solve_gamma(const Spectrum& lambda, const RealVec& g, double tol, int* iterations) {
  check_sizes(lambda, g);
  if (iterations) *iterations = 0;
  if (g.cwiseAbs().maxCoeff() == 0.0) return 0.0;

  CompensatedSum upper;
  for (Index j = 0; j < g.size(); ++j) upper.add(g(j) * g(j) / (lambda[0] - lambda[j + 1]));
  double lo = 0.0;
  double hi = upper.value();
  double gamma = 0.5 * (lo + hi);
  double best = gamma;
  double best_res = kInf;
  for (int it = 1; it <= 200; ++it) {
    if (iterations) *iterations = it;
    const auto [f, df] = secular_map(lambda, g, gamma);
    if (std::abs(f) < best_res) {
      best_res = std::abs(f);
      best = gamma;
    }
    if (std::abs(f) <= tol * std::max(gamma, 1.0) * 0.25) return gamma;
    if (f < 0.0) lo = gamma; else hi = gamma;
    double next = gamma - f / df;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == gamma || hi - lo <= std::numeric_limits<double>::epsilon() * hi) break;
    gamma = next;
  }
  if (best_res <= tol * std::max(best, 1.0)) return best;
  throw NumericFailure("solve_gamma: secular equation residual above tolerance", best_res);
}

SecularSolution arrowhead_eigvec(const Spectrum& lambda, const RealVec& g, double gamma) {
  check_sizes(lambda, g);
  const Index m = g.size();
  SecularSolution sol;
  sol.gamma = gamma;
  sol.rho.resize(m);
  sol.w.resize(m);
  CompensatedSum norm_sq;
  RealVec ratio(m);  // rho_j / g_j, continuous through g_j = 0
  for (Index j = 0; j < m; ++j) {
    const double denom = lambda[0] - lambda[j + 1] + gamma;
    ratio(j) = g(j) / denom;
    sol.rho(j) = g(j) * ratio(j);
    norm_sq.add(ratio(j) * ratio(j));
  }
  sol.a = 1.0 / std::sqrt(1.0 + norm_sq.value());
  sol.w = ratio * sol.a;
  sol.top_eigenvalue = lambda[0] + gamma;
  sol.residual = secular_residual(lambda, g, gamma);
  return sol;
}

SecularSolution solve_arrowhead(const Spectrum& lambda, const RealVec& g, double tol) {
  int iters = 0;
  const double gamma = solve_gamma(lambda, g, tol, &iters);
  auto sol = arrowhead_eigvec(lambda, g, gamma);
  sol.iterations = iters;
  return sol;
}

RealVec SecularSolution::eigenvector() const {
  RealVec v(w.size() + 1);
  v(0) = a;
  v.tail(w.size()) = w;
  return v;
}

nlohmann::json SecularSolution::to_json() const {
  return {{"gamma", gamma},
          {"rho", std::vector<double>(rho.data(), rho.data() + rho.size())},
          {"a", a},
          {"w", std::vector<double>(w.data(), w.data() + w.size())},
          {"top_eigenvalue", top_eigenvalue},
          {"residual", residual},
          {"iterations", iterations}};
}

LowerBoundCheck lower_bound_check(const SecularSolution& sol, const Spectrum& lambda, const RealVec& g) {
  check_sizes(lambda, g);
  if (sol.w.size() != g.size()) throw DimensionMismatch("lower_bound_check: solution and g differ in length");
  LowerBoundCheck out;
  for (Index j = 0; j < g.size(); ++j) {
    if (g(j) == 0.0) continue;
    const double gap = lambda[0] - lambda[j + 1];
    const double slack = std::abs(sol.w(j)) * 4.0 * gap / std::abs(g(j)) - 1.0;
    ++out.tested;
    out.min_slack = std::min(out.min_slack, slack);
    if (slack < 0.0) out.holds = false;
  }
  return out;
}

}  // namespace perturb::arrowhead
