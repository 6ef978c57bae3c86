#include "perturb/bounds.hpp"

#include <algorithm>
#include <random>

#include "perturb/ensembles.hpp"

namespace perturb::bounds {

GapVector gap_vector(const Spectrum& lambda) {
  const Index n = lambda.n();
  GapVector out;
  out.d.resize(n - 1);
  for (Index j = 0; j + 1 < n; ++j) {
    const double gap = lambda[0] - lambda[j + 1];
    if (!(gap > 0.0)) throw InvalidSpectrum("gap_vector: lambda_1 equals lambda_" + std::to_string(j + 2));
    out.d(j) = 1.0 / gap;
  }
  return out;
}

double holder_pair_norm(const RealVec& x, double p) {
  if (!(p >= 2.0)) throw DomainError("holder_pair_norm: p must be >= 2");
  if (p == 2.0) return lp_norm(x, kInf);
  if (std::isinf(p)) return lp_norm(x, 1.0);
  return lp_norm(x, p / (p - 2.0));
}

namespace {

// Shared by k_np and mu_assumption; `n` is the ambient dimension.
double k_value(const RealVec& d, double n, double p) {
  if (!(p >= 2.0)) throw DomainError("K_{n,p}: p must be >= 2");
  const double logn = std::log(n);
  if (std::isinf(p)) return logn * lp_norm(d, 1.0);
  return std::sqrt(p * logn) * std::pow(n, 1.0 / p) * holder_pair_norm(d, p);
}

double scaled_norm(const RealVec& d, double n, double p) {
  if (std::isinf(p)) return lp_norm(d, 1.0);
  return std::pow(n, 1.0 / p) * holder_pair_norm(d, p);
}

}  // namespace

double k_np(const Spectrum& lambda, double p) {
  return k_value(gap_vector(lambda).d, static_cast<double>(lambda.n()), p);
}

std::vector<double> default_p_grid(Index n) {
  const double hi = std::max(2.0, std::log(static_cast<double>(n)));
  std::vector<double> grid;
  constexpr int kPoints = 32;
  for (int i = 0; i < kPoints; ++i) {
    const double t = static_cast<double>(i) / (kPoints - 1);
    const double p = 2.0 * std::pow(hi / 2.0, t);
    if (grid.empty() || p != grid.back()) grid.push_back(p);
  }
  grid.push_back(kInf);
  return grid;
}

BestP best_p(const Spectrum& lambda, const std::vector<double>& grid) {
  if (grid.empty()) throw DomainError("best_p: empty grid");
  BestP best{grid.front(), kInf};
  for (double p : grid) {
    const double k = k_np(lambda, p);
    if (k < best.k) best = {p, k};
  }
  return best;
}

AssumptionReport assess(const Spectrum& lambda, double c0, std::optional<double> e_norm,
                        std::vector<double> grid) {
  if (grid.empty()) grid = default_p_grid(lambda.n());
  const double n = static_cast<double>(lambda.n());
  AssumptionReport r;
  r.n = lambda.n();
  r.d = gap_vector(lambda).d;
  r.c0 = c0;
  for (double p : grid) {
    const AssumptionRow row{p, scaled_norm(r.d, n, p), k_value(r.d, n, p)};
    r.table.push_back(row);
    if (row.k < r.k_best) {
      r.k_best = row.k;
      r.best_p = p;
    }
  }
  r.satisfied = r.k_best <= c0;
  r.e_norm = e_norm.value_or(2.0 * std::sqrt(n));
  r.dk_bound = davis_kahan_bound(lambda, r.e_norm);
  r.rs_l2_bound = rs_sin_theta_bound(lambda, 1.0);
  return r;
}

namespace {

nlohmann::json exponent_json(double p) {
  if (std::isinf(p)) return "inf";
  return p;
}

}  // namespace

nlohmann::json AssumptionReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table)
    rows.push_back({{"p", exponent_json(row.p)}, {"scaled_gap_norm", row.scaled_gap_norm}, {"K", row.k}});
  return {{"n", n},
          {"d", std::vector<double>(d.data(), d.data() + d.size())},
          {"table", std::move(rows)},
          {"best_p", exponent_json(best_p)},
          {"K_best", k_best},
          {"c0", c0},
          {"satisfied", satisfied},
          {"e_norm", e_norm},
          {"dk_bound", dk_bound},
          {"rs_l2_bound", rs_l2_bound}};
}

double davis_kahan_bound(const Spectrum& lambda, double e_norm) {
  if (!(e_norm >= 0.0)) throw DomainError("davis_kahan_bound: e_norm must be >= 0");
  return e_norm / lambda.eigengap();
}

double rs_sin_theta_bound(const Spectrum& lambda, double c) {
  if (!(c > 0.0)) throw DomainError("rs_sin_theta_bound: C must be positive");
  return c * std::sqrt(std::log(static_cast<double>(lambda.n()))) * gap_vector(lambda).d.norm();
}

double mu_assumption(const RealVec& mu, double p) {
  if (mu.size() < 2) throw DomainError("mu_assumption: need n >= 2");
  if (!(mu.minCoeff() > 0.0)) throw DomainError("mu_assumption: mu must be positive");
  return k_value(mu.cwiseInverse(), static_cast<double>(mu.size()), p);
}

double ellipsoid_covering_bound(const RealVec& a, double theta, double cbar) {
  if (!(theta > 0.0 && theta < 0.5)) throw DomainError("ellipsoid_covering_bound: theta must be in (0, 1/2)");
  if (a.size() == 0 || !(a.minCoeff() > 0.0))
    throw DomainError("ellipsoid_covering_bound: axes must be positive");
  // |J| log h(a) is the sum of log a_j over J.
  double log_volume = 0.0;
  Index j_theta = 0;
  for (Index j = 0; j < a.size(); ++j) {
    if (a(j) > 1.0) log_volume += std::log(a(j));
    if (a(j) * a(j) >= 1.0 - theta) ++j_theta;
  }
  return log_volume + static_cast<double>(j_theta) * std::log(cbar / theta);
}

template <class S>
double opnorm_pp_upper(const Mat<S>& m, double p) {
  if (!(p >= 1.0)) throw DomainError("opnorm_pp_upper: p must be >= 1");
  const double n1 = operator_norm_exact(m, 1.0);
  const double ninf = operator_norm_exact(m, kInf);
  if (p == 1.0) return n1;
  if (std::isinf(p)) return ninf;
  const double interp = std::pow(n1, 1.0 / p) * std::pow(ninf, 1.0 - 1.0 / p);
  if (p == 2.0) return std::min(interp, operator_norm_exact(m, 2.0));
  return interp;
}

namespace {

template <class S>
S unit_phase(S x) {
  const double a = std::abs(x);
  if (a == 0.0) return S(1.0);
  return x / a;
}

// Unit-norm (in l^r) vector u maximizing Re<z, u>.
template <class S>
Vec<S> ball_maximizer(const Vec<S>& z, double r) {
  const Index n = z.size();
  Vec<S> u = Vec<S>::Zero(n);
  if (r == 1.0) {
    Index k = 0;
    z.cwiseAbs().maxCoeff(&k);
    u(k) = unit_phase(z(k));
    return u;
  }
  if (std::isinf(r)) {
    for (Index i = 0; i < n; ++i) u(i) = unit_phase(z(i));
    return u;
  }
  const double rd = dual_exponent(r);
  const double zn = lp_norm(z, rd);
  if (zn == 0.0) {
    u(0) = S(1.0);
    return u;
  }
  for (Index i = 0; i < n; ++i) u(i) = unit_phase(z(i)) * std::pow(std::abs(z(i)) / zn, rd - 1.0);
  return u;
}

template <class S>
Vec<S> random_start(Index n, double r, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec<S> u(n);
  for (Index i = 0; i < n; ++i) {
    if constexpr (is_complex_v<S>) {
      const double re = normal(rng);
      const double im = normal(rng);
      u(i) = Complex(re, im);
    } else {
      u(i) = normal(rng);
    }
  }
  const double un = lp_norm(u, r);
  return un > 0.0 ? Vec<S>(u / un) : u;
}

}  // namespace

template <class S>
double opnorm_ascent(const Mat<S>& m, double in_exp, double out_exp, const AscentOptions& opts) {
  if (!(in_exp >= 1.0) || !(out_exp >= 1.0)) throw DomainError("opnorm_ascent: exponents must be >= 1");
  if (m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  const Index n = m.cols();
  const double out_dual = dual_exponent(out_exp);
  std::mt19937_64 rng(ensembles::mix64(opts.seed));
  const Mat<S> adj = m.adjoint();

  double best = 0.0;
  const int restarts = std::max(1, opts.restarts);
  for (int rs = 0; rs < restarts; ++rs) {
    Vec<S> u = random_start<S>(n, in_exp, rng);
    double value = lp_norm(m * u, out_exp);
    for (int it = 0; it < opts.max_iters; ++it) {
      const Vec<S> y = m * u;
      // Subgradient of ||.||_out at y, scaled to unit dual norm.
      const Vec<S> w = ball_maximizer<S>(y, out_dual);
      const Vec<S> z = adj * w;
      Vec<S> next = ball_maximizer<S>(z, in_exp);
      const double next_value = lp_norm(m * next, out_exp);
      if (!(next_value > value * (1.0 + opts.rel_tol))) {
        value = std::max(value, next_value);
        break;
      }
      u = std::move(next);
      value = next_value;
    }
    best = std::max(best, value);
  }
  return best;
}

template <class S>
double opnorm_dual_lower(const Mat<S>& m, double p, int restarts, std::uint64_t seed) {
  if (!(p >= 2.0) || std::isinf(p)) throw DomainError("opnorm_dual_lower: p must be in [2, inf)");
  AscentOptions opts;
  opts.restarts = restarts;
  opts.seed = seed;
  return opnorm_ascent(m, dual_exponent(p), p, opts);
}

template double opnorm_pp_upper(const Mat<double>&, double);
template double opnorm_pp_upper(const Mat<Complex>&, double);
template double opnorm_ascent(const Mat<double>&, double, double, const AscentOptions&);
template double opnorm_ascent(const Mat<Complex>&, double, double, const AscentOptions&);
template double opnorm_dual_lower(const Mat<double>&, double, int, std::uint64_t);
template double opnorm_dual_lower(const Mat<Complex>&, double, int, std::uint64_t);

}  // namespace perturb::bounds
