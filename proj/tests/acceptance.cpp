// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "perturb/arrowhead.hpp"
#include "perturb/bounds.hpp"
#include "perturb/cli.hpp"
#include "perturb/ensembles.hpp"
#include "perturb/errors.hpp"
#include "perturb/experiments.hpp"
#include "perturb/rs_solver.hpp"

using namespace perturb;
namespace ens = perturb::ensembles;
namespace ex = perturb::experiments;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ex::ExperimentConfig config(ex::Kind kind, std::vector<Index> ns, int trials, std::uint64_t seed) {
  ex::ExperimentConfig cfg;
  cfg.kind = kind;
  cfg.spectrum = ens::SpectrumSpec::multiscale_family(ns.front(), 1.0);
  cfg.n_list = std::move(ns);
  cfg.trials = trials;
  cfg.seed = seed;
  return cfg;
}

Verdict criterion_oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  int certified = 0, total = 0, bad = 0;
  double worst_vec = 0.0, worst_val = 0.0;
  rs::SolveOptions opts;
  opts.fallback = false;
  for (Index n : {8, 32, 128}) {
    const auto lambda = ens::realize_spectrum(ens::SpectrumSpec::multiscale_family(n, 1.0));
    const auto a = HermitianMatrix<double>::diagonal(lambda.as_vector());
    const auto eig = hermitian_eig(a);
    for (std::uint64_t t = 0; t < 100; ++t) {
      ++total;
      const auto e = ens::sample_goe(n, {1001, ens::derive_stream(1001, {static_cast<std::uint64_t>(n), t})});
      rs::SolverReport<double> rep;
      try {
        rep = rs::solve_leading_eigenpair(eig, a, e, opts);
      } catch (const ContractionFailure&) {
        continue;
      } catch (const GapCollapse&) {
        continue;
      }
      if (!(rep.contraction_upper <= 0.9)) continue;
      ++certified;
      const auto ref = oracles::dense_top<double>((a + e).dense());
      const double vec_gap = 1.0 - oracles::overlap(rep.u_tilde, ref.vector);
      const double val_gap = std::abs(rep.lambda_tilde - ref.value) / (1.0 + std::abs(rep.lambda_tilde));
      worst_vec = std::max(worst_vec, vec_gap);
      worst_val = std::max(worst_val, val_gap);
      if (!(vec_gap <= 1e-9 && val_gap <= 1e-9)) ++bad;
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && certified > 0 && secs < 120.0,
          fmt("%d/%d certified, %d mismatches, worst 1-overlap %.2e, worst eigenvalue gap %.2e, %.1fs", certified,
              total, bad, worst_vec, worst_val, secs)};
}

Verdict criterion_arrowhead() {
  int bad = 0, runs = 0;
  double worst_val = 0.0, worst_vec = 0.0, worst_res = 0.0;
  for (Index n : {16, 64, 512}) {
    const auto lambda = ens::realize_spectrum(ens::SpectrumSpec::multiscale_family(n, 1.0));
    for (std::uint64_t s = 0; s < 50; ++s) {
      ++runs;
      const auto sample = ens::sample_arrowhead_noise(n, {2002, ens::derive_stream(2002, {static_cast<std::uint64_t>(n), s})});
      const auto sol = arrowhead::solve_arrowhead(lambda, sample.g);
      const auto ref = oracles::dense_top<double>((HermitianMatrix<double>::diagonal(lambda.as_vector()) + sample.noise).dense());
      const double val = std::abs(sol.top_eigenvalue - ref.value) / std::abs(ref.value);
      const double vec = 1.0 - oracles::overlap(Vec<double>(sol.eigenvector()), ref.vector);
      const double res = sol.residual / std::max(sol.gamma, 1.0);
      worst_val = std::max(worst_val, val);
      worst_vec = std::max(worst_vec, vec);
      worst_res = std::max(worst_res, res);
      if (!(val <= 1e-10 && vec <= 1e-10 && res <= 1e-12)) ++bad;
    }
  }
  const auto big = ens::realize_spectrum(ens::SpectrumSpec::multiscale_family(4096, 1.0));
  const auto g = ens::sample_arrowhead_noise(4096, {2002, 4096}).g;
  const auto sol = arrowhead::solve_arrowhead(big, g);
  const double big_res = sol.residual / std::max(sol.gamma, 1.0);
  return {bad == 0 && big_res <= 1e-12,
          fmt("%d/%d within tolerance; worst rel eigenvalue %.2e, 1-overlap %.2e, scaled residual %.2e; n=4096 "
              "scaled residual %.2e",
              runs - bad, runs, worst_val, worst_vec, worst_res, big_res)};
}

Verdict criterion_upper_bound() {
  auto cfg = config(ex::Kind::upper_bound, {64, 128, 256}, 200, 3003);
  const auto res = ex::run_experiment(cfg);
  double c = 0.0;
  for (Index n : cfg.n_list) c = std::max(c, res.summary.at(cfg.kind, n, "max_coord_ratio").p99);
  const double p64 = res.summary.at(cfg.kind, 64, "max_coord_ratio").p99;
  const double p256 = res.summary.at(cfg.kind, 256, "max_coord_ratio").p99;
  int within = 0, fallbacks = 0;
  for (const auto& r : res.records) {
    const auto lambda = ens::realize_spectrum(cfg.spectrum.with_n(r.n));
    within += r.statistics.at("sin_theta") <= bounds::rs_sin_theta_bound(lambda, c);
    fallbacks += r.statistics.at("fallback") == 1.0;
  }
  const double frac = static_cast<double>(within) / static_cast<double>(res.records.size());
  return {p256 <= 1.25 * p64 && frac >= 0.99,
          fmt("p99 ratio n=64 %.4f, n=128 %.4f, n=256 %.4f (growth %.3f); C = %.4f covers %.2f%% of %zu trials; "
              "%d fallbacks",
              p64, res.summary.at(cfg.kind, 128, "max_coord_ratio").p99, p256, p256 / p64, c, 100.0 * frac,
              res.records.size(), fallbacks)};
}

Verdict criterion_lower_bound() {
  auto cfg = config(ex::Kind::lower_bound, {128}, 200, 4004);
  const auto res = ex::run_experiment(cfg);
  const auto& s = res.summary.at(cfg.kind, 128, "lower_bound_holds");
  const double k = res.records.front().statistics.at("k_best");
  return {*s.frequency >= 0.95,
          fmt("lower bound holds on %.1f%% of %zu trials (K_best = %.3f; gamma <= delta on %.1f%%, a >= 1/2 on %.1f%%)",
              100.0 * *s.frequency, s.count, k,
              100.0 * *res.summary.at(cfg.kind, 128, "gamma_le_delta").frequency,
              100.0 * *res.summary.at(cfg.kind, 128, "a_ge_half").frequency)};
}

Verdict criterion_inconsistency() {
  auto cfg = config(ex::Kind::inconsistency, {200, 500, 1000}, 100, 5005);
  cfg.p = 2.0;
  const auto res = ex::run_experiment(cfg);
  bool ok = true;
  double prev = -1.0;
  std::string detail;
  for (Index n : cfg.n_list) {
    const double freq = *res.summary.at(cfg.kind, n, "lambda_max_exceeds").frequency;
    const auto& norm = res.summary.at(cfg.kind, n, "norm_sq");
    const double target = res.summary.at(cfg.kind, n, "lambda2_sq_plus_n").mean;
    const bool moment = norm.mean >= target - 3.0 * norm.stddev;
    ok = ok && freq >= prev && moment;
    prev = freq;
    detail += fmt("n=%ld freq %.2f, mean norm^2 %.1f vs %.1f - 3*%.1f; ", static_cast<long>(n), freq, norm.mean,
                  target, norm.stddev);
  }
  ok = ok && prev >= 0.9;
  return {ok, detail};
}

Verdict criterion_domination() {
  auto cfg = config(ex::Kind::weyl, {256}, 200, 6006);
  cfg.params = {{"C", 10.0}, {"tau", 0.0}};
  const auto res = ex::run_experiment(cfg);
  const double freq = *res.summary.at(cfg.kind, 256, "domination_holds").frequency;

  int agree = 0, total = 0, negative = 0;
  double worst = 0.0;
  std::mt19937_64 rng(6006);
  const Index n = 5;
  const double log3 = std::pow(std::log(5.0), 3.0);
  for (double c : {10.0, 0.3}) {
    for (std::uint64_t t = 0; t < 20; ++t) {
      RealVec mu(n);
      for (Index j = 0; j < n; ++j) mu(j) = c * static_cast<double>(n - j) * log3;
      const auto x = ens::sample_goe(n, {6006, ens::derive_stream(6006, {static_cast<std::uint64_t>(c * 10), t})});
      const Vec<double> g = oracles::random_vector<double>(n, rng);
      const auto r = rs::verify_shifted_domination(x, mu, 1.0, g);
      Mat<double> h = -x.dense();
      h.diagonal() += mu;
      const double brute = oracles::brute_force_sphere_min<double>(h, g, 1.0, 100000, t);
      ++total;
      negative += brute < 0.0;
      agree += (r.margin >= 0.0) == (brute >= 0.0);
      worst = std::max(worst, std::abs(r.margin - brute) / std::max(1.0, std::abs(brute)));
    }
  }
  return {freq >= 0.95 && agree == total,
          fmt("domination frequency %.3f over 200 trials; shifted check agrees on sign %d/%d (C=10 and C=0.3, %d "
              "negative minima), worst relative margin gap %.1e",
              freq, agree, total, negative, worst)};
}

Verdict criterion_opnorm_scaling() {
  bool ok = true;
  std::string detail;
  for (double p : {2.0, 4.0}) {
    auto cfg = config(ex::Kind::opnorm_scaling, {32, 64, 128, 256, 512}, 20, 7007);
    cfg.p = p;
    cfg.params = {{"restarts", 4}};
    const auto res = ex::run_experiment(cfg);
    std::vector<double> xs, ys;
    for (const auto& r : res.records) {
      xs.push_back(static_cast<double>(r.n));
      ys.push_back(r.statistics.at("opnorm_lower"));
    }
    const double slope = ex::loglog_slope(xs, ys);
    ok = ok && std::abs(slope - 1.0 / p) <= 0.15;
    detail += fmt("p=%g slope %.4f (target %.4f); ", p, slope, 1.0 / p);
  }
  return {ok, detail};
}

Verdict criterion_norm_identities() {
  std::mt19937_64 rng(8008);
  std::normal_distribution<double> nd;
  int diag_bad = 0, diag_total = 0;
  double worst = 0.0;
  for (double p : {2.0, 3.0, 4.0, kInf}) {
    for (int t = 0; t < 50; ++t) {
      RealVec z(16);
      for (Index j = 0; j < 16; ++j) z(j) = nd(rng);
      const Mat<double> d = z.asDiagonal();
      const double target = bounds::holder_pair_norm(z, p);
      const double est = bounds::opnorm_ascent<double>(
          d, p, dual_exponent(p), bounds::AscentOptions{.restarts = 8, .seed = static_cast<std::uint64_t>(t)});
      const double rel = std::abs(est - target) / target;
      worst = std::max(worst, rel);
      ++diag_total;
      diag_bad += rel > 0.01;
    }
  }
  int holder_bad = 0, holder_total = 0;
  for (Index n : {4, 64, 256}) {
    for (double p : {2.0, 3.0, 4.0, 8.0}) {
      const double r = p == 2.0 ? kInf : p / (p - 2.0);
      for (int t = 0; t < 1000; ++t) {
        const RealVec x = oracles::random_vector<double>(n, rng);
        ++holder_total;
        holder_bad += x.norm() > std::pow(static_cast<double>(n), 1.0 / p) * lp_norm(x, r);
      }
    }
  }
  return {diag_bad == 0 && holder_bad == 0,
          fmt("diagonal identity within 1%% on %d/%d (worst %.1e); Hoelder inequality violated %d/%d times",
              diag_total - diag_bad, diag_total, worst, holder_bad, holder_total)};
}

Verdict criterion_phase_transition() {
  bool ok = true;
  std::string detail;
  for (double theta : {1.5, 3.0}) {
    auto cfg = config(ex::Kind::phase_transition, {1000}, 50, 9009);
    cfg.params = {{"theta", theta}};
    const auto res = ex::run_experiment(cfg);
    const double mean = res.summary.at(cfg.kind, 1000, "overlap_sq").mean;
    const double target = std::max(0.0, 1.0 - 1.0 / (theta * theta));
    ok = ok && std::abs(mean - target) <= 0.1;
    detail += fmt("theta=%g mean overlap^2 %.4f vs %.4f; ", theta, mean, target);
  }
  return {ok, detail};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict criterion_determinism() {
  const auto base = std::filesystem::temp_directory_path() / "perturb_acceptance_replay";
  std::filesystem::remove_all(base);
  int identical = 0, compared = 0;
  const ex::Kind kinds[] = {ex::Kind::upper_bound,    ex::Kind::lower_bound,       ex::Kind::inconsistency,
                            ex::Kind::weyl,           ex::Kind::dk_compare,        ex::Kind::opnorm_scaling,
                            ex::Kind::event_diagnostics, ex::Kind::phase_transition};
  for (ex::Kind kind : kinds) {
    auto cfg = config(kind, {24, 40}, 4, 10010);
    if (kind == ex::Kind::opnorm_scaling) cfg.p = 3.0;
    const auto dir = base / ex::kind_name(kind);
    ex::write_outputs(cfg, ex::run_experiment(cfg, 1), {(dir / "one").string(), ex::Format::both});
    ex::write_outputs(cfg, ex::run_experiment(cfg, 4), {(dir / "four").string(), ex::Format::both});
    for (const char* f : {"records.csv", "records.json", "summary.json"}) {
      ++compared;
      identical += slurp(dir / "one" / f) == slurp(dir / "four" / f);
    }
  }
  // Same replay through the command-line surface.
  const std::string cfg_json =
      R"({"kind":"upper_bound","spectrum":{"family":"multiscale","n":32,"params":{"epsilon":1}},"n_list":[32,48],"trials":5,"seed":77})";
  for (const char* sub : {"a", "b"}) {
    const std::string out = (base / "cli" / sub).string();
    const char* argv[] = {"perturb", "exp", "--config", cfg_json.c_str(), "--out", out.c_str()};
    std::ostringstream sink, err;
    cli::run(6, argv, sink, err);
  }
  for (const char* f : {"records.csv", "records.json", "summary.json"}) {
    ++compared;
    const auto a = slurp(base / "cli" / "a" / f);
    identical += !a.empty() && a == slurp(base / "cli" / "b" / f);
  }
  std::filesystem::remove_all(base);
  return {identical == compared, fmt("%d/%d output files byte-identical on replay", identical, compared)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "fixed-point solver matches the dense oracle on certified trials", criterion_oracle_equivalence},
      {2, "arrowhead secular solver matches the dense oracle", criterion_arrowhead},
      {3, "per-coordinate upper bound is stable in n and covers sin theta", criterion_upper_bound},
      {4, "arrowhead per-coordinate lower bound holds", criterion_lower_bound},
      {5, "inconsistency frequency trend and second-moment bound", criterion_inconsistency},
      {6, "randomized eigenvalue domination and shifted check vs brute force", criterion_domination},
      {7, "dual operator norm scaling slope", criterion_opnorm_scaling},
      {8, "diagonal norm identity and Hoelder pair inequality", criterion_norm_identities},
      {9, "spiked model overlap matches the phase-transition limit", criterion_phase_transition},
      {10, "experiment outputs replay byte-identically", criterion_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s criterion %d: %s -- %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
