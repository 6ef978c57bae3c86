#include "perturb/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include "perturb/arrowhead.hpp"
#include "perturb/bounds.hpp"
#include "perturb/errors.hpp"
#include "perturb/io.hpp"
#include "perturb/rs_solver.hpp"

namespace perturb::experiments {

using nlohmann::json;
namespace ens = perturb::ensembles;

namespace {

constexpr std::pair<Kind, const char*> kKindNames[] = {
    {Kind::upper_bound, "upper_bound"},
    {Kind::lower_bound, "lower_bound"},
    {Kind::inconsistency, "inconsistency"},
    {Kind::weyl, "weyl"},
    {Kind::dk_compare, "dk_compare"},
    {Kind::opnorm_scaling, "opnorm_scaling"},
    {Kind::event_diagnostics, "event_diagnostics"},
    {Kind::phase_transition, "phase_transition"},
};

std::string format_name(Format f) {
  switch (f) {
    case Format::csv: return "csv";
    case Format::json: return "json";
    case Format::both: return "both";
  }
  return "both";
}

Format parse_format(const std::string& s) {
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  if (s == "both") return Format::both;
  throw DomainError("output format must be csv, json or both, got '" + s + "'");
}

double root_log(Index n) { return std::sqrt(std::log(static_cast<double>(n))); }

template <class S>
EigDecomposition<S> diagonal_eig(const Spectrum& lambda) {
  EigDecomposition<S> eig;
  eig.values = lambda.as_vector();
  eig.basis = Mat<S>::Identity(lambda.n(), lambda.n());
  return eig;
}

template <class S>
HermitianMatrix<S> diagonal_matrix(const Spectrum& lambda) {
  Mat<S> m = Mat<S>::Zero(lambda.n(), lambda.n());
  for (Index i = 0; i < lambda.n(); ++i) m(i, i) = lambda[i];
  return HermitianMatrix<S>(m);
}

template <class S>
HermitianMatrix<S> sample_noise(const EnsembleSpec& ens_spec, Index n, const ens::Seed& seed) {
  if (ens_spec.type == "zero") return HermitianMatrix<S>::zero(n);
  if (ens_spec.type == "subgaussian")
    return ens::sample_subgaussian_hermitian<S>(n, ens::EntryDistribution::parse(ens_spec.dist, ens_spec.truncation),
                                                seed);
  if constexpr (is_complex_v<S>) {
    return ens::sample_gue(n, seed);
  } else {
    return ens::sample_goe(n, seed);
  }
}

using Stats = std::map<std::string, double>;

double flag(bool b) { return b ? 1.0 : 0.0; }

// Statistic for a quantity that may be undefined on this trial.
double or_sentinel(double x) { return std::isfinite(x) ? x : -1.0; }

template <class S>
Stats upper_bound_trial(const ExperimentConfig& cfg, const Spectrum& lambda, const ens::Seed& seed) {
  const Index n = lambda.n();
  const auto a = diagonal_matrix<S>(lambda);
  const auto e = sample_noise<S>(cfg.ensemble, n, seed);

  rs::SolveOptions opts;
  opts.p = cfg.p;
  opts.tol = cfg.param("tol", 1e-12);
  const auto report = rs::solve_leading_eigenpair(diagonal_eig<S>(lambda), a, e, opts);

  const auto oracle = top_eigenpair(a + e);
  const double head = std::abs(report.u_tilde(0));
  const double head_oracle = std::abs(oracle.vector(0));
  const double e_norm = operator_norm_exact<S>(e.dense(), 2.0);

  Stats s;
  s["max_coord_ratio"] = report.coord_ratios.size() ? report.coord_ratios.maxCoeff() : 0.0;
  s["sin_theta"] = std::sqrt(std::max(0.0, 1.0 - head * head));
  s["sin_theta_oracle"] = std::sqrt(std::max(0.0, 1.0 - head_oracle * head_oracle));
  s["rs_bound"] = bounds::rs_sin_theta_bound(lambda, cfg.param("C", 1.0));
  s["dk_bound"] = bounds::davis_kahan_bound(lambda, e_norm);
  s["e_norm"] = e_norm;
  s["q_norm2"] = report.q_norm2;
  s["contraction_upper"] = or_sentinel(report.contraction_upper);
  s["certified"] = flag(report.leading_certified);
  s["fallback"] = flag(report.method != "rs");
  s["oracle_overlap_gap"] = 1.0 - std::abs(report.u_tilde.dot(oracle.vector));
  s["lambda_gap_rel"] = std::abs(report.lambda_tilde - oracle.value) / (1.0 + std::abs(report.lambda_tilde));
  return s;
}

Stats lower_bound_trial(const ExperimentConfig& cfg, const Spectrum& lambda, const ens::Seed& seed) {
  const Index n = lambda.n();
  const auto sample = ens::sample_arrowhead_noise(n, seed);
  const auto sol = arrowhead::solve_arrowhead(lambda, sample.g, cfg.param("tol", arrowhead::kDefaultSecularTol));
  const auto check = arrowhead::lower_bound_check(sol, lambda, sample.g);
  const auto report = bounds::assess(lambda, cfg.param("c0", bounds::kDefaultC0));

  double max_scaled = 0.0;
  for (Index j = 0; j + 1 < n; ++j)
    max_scaled = std::max(max_scaled, (lambda[0] - lambda[j + 1]) * std::abs(sol.w(j)));

  Stats s;
  s["lower_bound_holds"] = flag(check.holds);
  // No coordinate tested only when g = 0, which has probability zero.
  s["min_slack"] = check.tested ? check.min_slack : 0.0;
  s["gamma"] = sol.gamma;
  s["a"] = sol.a;
  s["gamma_le_delta"] = flag(sol.gamma <= lambda.eigengap());
  s["a_ge_half"] = flag(sol.a >= 0.5);
  s["max_scaled_coord"] = max_scaled / root_log(n);
  s["secular_residual"] = sol.residual;
  s["k_best"] = or_sentinel(report.k_best);
  s["assumption_satisfied"] = flag(report.satisfied);
  return s;
}

Stats inconsistency_trial(const ExperimentConfig& cfg, Index n, const ens::Seed& seed) {
  const auto inst = ens::sample_inconsistency_instance(n, cfg.p, seed);
  const Mat<double> full = inst.a.dense() + inst.noise.dense();
  const HermitianMatrix<double> block(Mat<double>(full.bottomRightCorner(n - 1, n - 1)));
  const RealVec ev = eigenvalues(block);
  const double lmax = ev(0);
  const double lmin = ev(ev.size() - 1);
  const double norm = std::max(std::abs(lmax), std::abs(lmin));

  Stats s;
  s["lambda_max"] = lmax;
  s["lambda1"] = inst.spectrum.lambda1();
  s["lambda_max_exceeds"] = flag(lmax > inst.spectrum.lambda1());
  s["norm_sq"] = norm * norm;
  s["lambda2_sq_plus_n"] = inst.spectrum[1] * inst.spectrum[1] + static_cast<double>(n);
  s["min_eig_nonneg"] = flag(lmin >= 0.0);
  return s;
}

template <class S>
Stats weyl_trial(const ExperimentConfig& cfg, Index n, const ens::Seed& seed) {
  const double c = cfg.param("C", 10.0);
  const double tau = cfg.param("tau", 1.0);
  const double log3 = std::pow(std::log(static_cast<double>(n)), 3.0);
  RealVec mu(n);
  for (Index j = 0; j < n; ++j) mu(j) = c * static_cast<double>(n - j) * log3;

  const auto x = sample_noise<S>(cfg.ensemble, n, seed);
  auto rng = ens::make_engine({seed.master, ens::derive_stream(seed.stream, {1})});
  std::normal_distribution<double> normal;
  Vec<S> g(n);
  for (Index j = 0; j < n; ++j) {
    if constexpr (is_complex_v<S>) {
      const double re = normal(rng);
      g(j) = S(re, normal(rng));
    } else {
      g(j) = normal(rng);
    }
  }

  const auto plain = rs::verify_shifted_domination(x, mu, 0.0, Vec<S>(Vec<S>::Zero(n)));
  const auto shifted = rs::verify_shifted_domination(x, mu, tau, g);
  Stats s;
  s["domination_holds"] = flag(plain.holds);
  s["margin"] = plain.margin;
  s["shifted_holds"] = flag(shifted.holds);
  s["shifted_margin"] = shifted.margin;
  s["mu_k_inf"] = bounds::mu_assumption(mu, kInf);
  return s;
}

template <class S>
Stats dk_compare_trial(const ExperimentConfig& cfg, const Spectrum& lambda, const ens::Seed& seed) {
  const Index n = lambda.n();
  const auto e = sample_noise<S>(cfg.ensemble, n, seed);
  const auto top = top_eigenpair(diagonal_matrix<S>(lambda) + e);
  const double head = std::abs(top.vector(0));
  const double e_norm = operator_norm_exact<S>(e.dense(), 2.0);
  const double dk = bounds::davis_kahan_bound(lambda, e_norm);

  Stats s;
  s["sin_theta"] = std::sqrt(std::max(0.0, 1.0 - head * head));
  s["e_norm"] = e_norm;
  s["dk_bound"] = dk;
  s["rs_bound"] = bounds::rs_sin_theta_bound(lambda, cfg.param("C", 1.0));
  s["dk_vacuous"] = flag(dk >= 1.0);
  return s;
}

template <class S>
Stats opnorm_trial(const ExperimentConfig& cfg, Index n, const ens::Seed& seed) {
  const auto x = sample_noise<S>(cfg.ensemble, n, seed);
  const int restarts = static_cast<int>(cfg.param("restarts", 4));
  const double est = bounds::opnorm_dual_lower<S>(x.dense(), cfg.p, restarts, ens::derive_stream(seed.stream, {2}));
  Stats s;
  s["opnorm_lower"] = est;
  s["opnorm_scaled"] = std::isinf(cfg.p) ? est : est / std::pow(static_cast<double>(n), 1.0 / cfg.p);
  return s;
}

template <class S>
Stats event_trial(const ExperimentConfig& cfg, const Spectrum& lambda, const ens::Seed& seed) {
  const Index n = lambda.n();
  const auto e = sample_noise<S>(cfg.ensemble, n, seed);
  const auto part = rs::partition(diagonal_eig<S>(lambda), e);
  const double rl = root_log(n);
  const double p = cfg.p;
  const double pp = dual_exponent(p);

  Stats s;
  s["e_tilde_max_over_sqrtlog"] = e.dense().cwiseAbs().maxCoeff() / rl;
  s["e11_abs"] = std::abs(part.e11);

  rs::ShiftedGapOperator gaps;
  bool gaps_ok = true;
  try {
    gaps = rs::build_shifted_gaps(lambda, part.e11);
  } catch (const GapCollapse&) {
    gaps_ok = false;
  }
  s["d_ge_half"] = flag(gaps_ok && (gaps.d.array() >= 0.5 * (lambda[0] - lambda.as_vector().tail(n - 1).array())).all());

  double c_p = -1.0, c_2 = -1.0, c_inf = -1.0, dinv_e21 = -1.0, scaled_inv = -1.0, linearized = -1.0;
  bool inverse_ok = false;
  if (gaps_ok) {
    const Mat<S> m = part.e22 * gaps.d.cwiseInverse().asDiagonal();
    c_p = rs::contraction_bound<S>(m, p);
    c_2 = rs::contraction_bound<S>(m, 2.0);
    c_inf = rs::contraction_bound<S>(m, kInf);
    const Vec<S> dinv = gaps.d.cwiseInverse().template cast<S>().asDiagonal() * part.e21;
    dinv_e21 = lp_norm(dinv, pp);
    if (c_p <= rs::kDefaultContractionAccept) {
      try {
        const auto inner = rs::jacobi_apply_Linv<S>(gaps, part.e22, part.e21, p, 1e-13, 10000);
        const Vec<S> dl = gaps.d.template cast<S>().asDiagonal() * inner.x;
        const double e21p = lp_norm(part.e21, p);
        scaled_inv = e21p > 0.0 ? lp_norm(dl, p) / e21p : 0.0;
        linearized = dl.cwiseAbs().maxCoeff() / rl;
        inverse_ok = true;
      } catch (const ContractionFailure&) {
      }
    }
  }
  s["contraction_p"] = c_p;
  s["contraction_2"] = c_2;
  s["contraction_inf"] = c_inf;
  s["certificate_half"] = flag(c_p >= 0.0 && c_p <= 0.5);
  s["d_inv_e21_dual"] = dinv_e21;
  s["d_inv_e21_dual_half"] = flag(dinv_e21 >= 0.0 && dinv_e21 <= 0.5);
  s["scaled_inverse_ratio"] = scaled_inv;
  s["linearized_inf_over_sqrtlog"] = linearized;
  s["inverse_ok"] = flag(inverse_ok);
  return s;
}

Stats phase_trial(const ExperimentConfig& cfg, Index n, const ens::Seed& seed) {
  const double theta = cfg.param("theta", 3.0);
  Mat<double> m = ens::sample_goe(n, seed).dense() / std::sqrt(static_cast<double>(n));
  m(0, 0) += theta;
  const auto top = top_eigenpair(HermitianMatrix<double>(m));
  Stats s;
  s["overlap_sq"] = top.vector(0) * top.vector(0);
  s["lambda_max"] = top.value;
  s["predicted_overlap_sq"] = std::max(0.0, 1.0 - 1.0 / (theta * theta));
  return s;
}

template <class S>
Stats dispatch(const ExperimentConfig& cfg, Index n, const ens::Seed& seed) {
  auto spectrum = [&] { return ens::realize_spectrum(cfg.spectrum.with_n(n)); };
  switch (cfg.kind) {
    case Kind::upper_bound: return upper_bound_trial<S>(cfg, spectrum(), seed);
    case Kind::lower_bound: return lower_bound_trial(cfg, spectrum(), seed);
    case Kind::inconsistency: return inconsistency_trial(cfg, n, seed);
    case Kind::weyl: return weyl_trial<S>(cfg, n, seed);
    case Kind::dk_compare: return dk_compare_trial<S>(cfg, spectrum(), seed);
    case Kind::opnorm_scaling: return opnorm_trial<S>(cfg, n, seed);
    case Kind::event_diagnostics: return event_trial<S>(cfg, spectrum(), seed);
    case Kind::phase_transition: return phase_trial(cfg, n, seed);
  }
  throw DomainError("unknown experiment kind");
}

std::vector<StatField> make_schema(Kind kind) {
  switch (kind) {
    case Kind::upper_bound:
      return {{"certified", true},        {"contraction_upper", false}, {"dk_bound", false},
              {"e_norm", false},          {"fallback", true},           {"lambda_gap_rel", false},
              {"max_coord_ratio", false}, {"oracle_overlap_gap", false}, {"q_norm2", false},
              {"rs_bound", false},        {"sin_theta", false},         {"sin_theta_oracle", false}};
    case Kind::lower_bound:
      return {{"a", false},           {"a_ge_half", true},         {"assumption_satisfied", true},
              {"gamma", false},       {"gamma_le_delta", true},    {"k_best", false},
              {"lower_bound_holds", true}, {"max_scaled_coord", false}, {"min_slack", false},
              {"secular_residual", false}};
    case Kind::inconsistency:
      return {{"lambda1", false},  {"lambda2_sq_plus_n", false}, {"lambda_max", false},
              {"lambda_max_exceeds", true}, {"min_eig_nonneg", true}, {"norm_sq", false}};
    case Kind::weyl:
      return {{"domination_holds", true}, {"margin", false}, {"mu_k_inf", false},
              {"shifted_holds", true},    {"shifted_margin", false}};
    case Kind::dk_compare:
      return {{"dk_bound", false}, {"dk_vacuous", true}, {"e_norm", false}, {"rs_bound", false},
              {"sin_theta", false}};
    case Kind::opnorm_scaling:
      return {{"opnorm_lower", false}, {"opnorm_scaled", false}};
    case Kind::event_diagnostics:
      return {{"certificate_half", true},  {"contraction_2", false},
              {"contraction_inf", false},  {"contraction_p", false},
              {"d_ge_half", true},         {"d_inv_e21_dual", false},
              {"d_inv_e21_dual_half", true}, {"e11_abs", false},
              {"e_tilde_max_over_sqrtlog", false}, {"inverse_ok", true},
              {"scaled_inverse_ratio", false},     {"linearized_inf_over_sqrtlog", false}};
    case Kind::phase_transition:
      return {{"lambda_max", false}, {"overlap_sq", false}, {"predicted_overlap_sq", false}};
  }
  return {};
}

bool is_boolean_stat(Kind kind, const std::string& name) {
  for (const auto& f : stat_schema(kind))
    if (f.name == name) return f.boolean;
  return false;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

template <class T>
T parse_number(const std::string& text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw DomainError("CSV: malformed number '" + text + "'");
  return value;
}

}  // namespace

std::string kind_name(Kind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "unknown";
}

Kind parse_kind(const std::string& name) {
  for (const auto& [kind, n] : kKindNames)
    if (name == n) return kind;
  throw DomainError("unknown experiment kind '" + name + "'");
}

json EnsembleSpec::to_json() const {
  return {{"type", type}, {"dist", dist}, {"c", truncation}, {"scalar", scalar}};
}

EnsembleSpec EnsembleSpec::from_json(const json& j) {
  EnsembleSpec e;
  if (j.is_string()) {
    e.type = j.get<std::string>();
  } else {
    e.type = j.value("type", e.type);
    e.dist = j.value("dist", e.dist);
    e.truncation = j.value("c", e.truncation);
    e.scalar = j.value("scalar", e.scalar);
  }
  if (e.type != "goe" && e.type != "gue" && e.type != "subgaussian" && e.type != "zero")
    throw DomainError("ensemble type must be goe, gue, subgaussian or zero, got '" + e.type + "'");
  if (e.scalar != "real" && e.scalar != "complex")
    throw DomainError("ensemble scalar must be real or complex, got '" + e.scalar + "'");
  if (e.type == "subgaussian") ens::EntryDistribution::parse(e.dist, e.truncation);
  return e;
}

double ExperimentConfig::param(const std::string& key, double fallback) const {
  if (!params.is_object() || !params.contains(key)) return fallback;
  const auto& v = params.at(key);
  if (v.is_string() && v.get<std::string>() == "inf") return kInf;
  if (!v.is_number()) throw DomainError("experiment param '" + key + "' must be a number");
  return v.get<double>();
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw DomainError("experiment: trials must be >= 1");
  if (n_list.empty()) throw DomainError("experiment: n_list is empty");
  const Index min_n = kind == Kind::inconsistency ? 3 : 2;
  for (Index n : n_list)
    if (n < min_n) throw DomainError("experiment: every n must be >= " + std::to_string(min_n));
  if (!(p >= 1.0)) throw DomainError("experiment: p must be >= 1");
  if ((kind == Kind::opnorm_scaling || kind == Kind::inconsistency) && !(p >= 2.0 && std::isfinite(p)))
    throw UnsupportedExponent(p);
  if (kind == Kind::inconsistency || kind == Kind::lower_bound || kind == Kind::phase_transition) {
    if (ensemble.complex_scalar()) throw DomainError("experiment: this kind uses real Gaussian noise only");
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["kind"] = kind_name(kind);
  j["spectrum"] = spectrum.to_json();
  j["ensemble"] = ensemble.to_json();
  j["n_list"] = n_list;
  j["trials"] = trials;
  j["seed"] = seed;
  j["p"] = std::isinf(p) ? json("inf") : json(p);
  j["output"] = {{"path", output.path}, {"format", format_name(output.format)}};
  j["params"] = params;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw DomainError("experiment config must be a JSON object");
  static const char* known[] = {"kind", "spectrum", "ensemble", "n_list", "trials",
                                "seed", "p",        "output",   "params"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw DomainError("experiment config: unknown field '" + key + "'");
  }
  ExperimentConfig cfg;
  try {
    cfg.kind = parse_kind(j.at("kind").get<std::string>());
    if (cfg.kind == Kind::inconsistency) cfg.n_list = {200, 500, 1000};
    if (j.contains("spectrum")) cfg.spectrum = ens::SpectrumSpec::from_json(j.at("spectrum"));
    if (j.contains("ensemble")) cfg.ensemble = EnsembleSpec::from_json(j.at("ensemble"));
    if (j.contains("n_list")) cfg.n_list = j.at("n_list").get<std::vector<Index>>();
    cfg.trials = j.value("trials", cfg.trials);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("p")) {
      const auto& p = j.at("p");
      cfg.p = p.is_string() && p.get<std::string>() == "inf" ? kInf : p.get<double>();
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      cfg.output.path = o.value("path", std::string());
      cfg.output.format = parse_format(o.value("format", std::string("both")));
    }
    if (j.contains("params")) cfg.params = j.at("params");
  } catch (const json::exception& e) {
    throw DomainError(std::string("experiment config: ") + e.what());
  }
  if (!cfg.params.is_object()) throw DomainError("experiment config: params must be an object");
  cfg.validate();
  return cfg;
}

const std::vector<StatField>& stat_schema(Kind kind) {
  static const std::map<Kind, std::vector<StatField>> schemas = [] {
    std::map<Kind, std::vector<StatField>> m;
    for (const auto& [k, _] : kKindNames) m[k] = make_schema(k);
    return m;
  }();
  return schemas.at(kind);
}

TrialRecord run_trial(const ExperimentConfig& cfg, Index n, int trial_index) {
  TrialRecord rec;
  rec.kind = cfg.kind;
  rec.n = n;
  rec.trial_index = trial_index;
  rec.stream = ens::derive_stream(cfg.seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial_index)});
  const ens::Seed seed{cfg.seed, rec.stream};
  rec.statistics = cfg.ensemble.complex_scalar() ? dispatch<Complex>(cfg, n, seed) : dispatch<double>(cfg, n, seed);

  const auto& schema = stat_schema(cfg.kind);
  if (rec.statistics.size() != schema.size())
    throw NumericFailure("trial statistics do not match the schema for " + kind_name(cfg.kind), 0.0);
  for (const auto& f : schema) {
    const auto it = rec.statistics.find(f.name);
    if (it == rec.statistics.end())
      throw NumericFailure("trial statistic '" + f.name + "' missing", 0.0);
    if (!std::isfinite(it->second))
      throw NumericFailure("trial statistic '" + f.name + "' is not finite", it->second);
  }
  return rec;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads) {
  cfg.validate();
  std::vector<std::pair<Index, int>> tasks;
  for (Index n : cfg.n_list)
    for (int t = 0; t < cfg.trials; ++t) tasks.emplace_back(n, t);
  std::sort(tasks.begin(), tasks.end());
  tasks.erase(std::unique(tasks.begin(), tasks.end()), tasks.end());

  ExperimentResult result;
  result.records.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        result.records[i] = run_trial(cfg, tasks[i].first, tasks[i].second);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = tasks.size();
        return;
      }
    }
  };

  const int k = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
  if (k == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  result.summary = summarize(result.records);
  return result;
}

double quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

SummaryStats summarize(const std::vector<TrialRecord>& records) {
  std::map<std::pair<Kind, Index>, std::map<std::string, std::vector<double>>> samples;
  for (const auto& r : records)
    for (const auto& [name, value] : r.statistics) samples[{r.kind, r.n}][name].push_back(value);

  SummaryStats out;
  for (auto& [key, stats] : samples) {
    for (auto& [name, xs] : stats) {
      StatSummary s;
      s.count = xs.size();
      double sum = 0.0;
      for (double x : xs) sum += x;
      s.mean = sum / static_cast<double>(xs.size());
      double ss = 0.0;
      for (double x : xs) ss += (x - s.mean) * (x - s.mean);
      s.stddev = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
      std::sort(xs.begin(), xs.end());
      s.min = xs.front();
      s.max = xs.back();
      s.p50 = quantile(xs, 0.50);
      s.p95 = quantile(xs, 0.95);
      s.p99 = quantile(xs, 0.99);
      if (is_boolean_stat(key.first, name)) s.frequency = s.mean;
      out.groups[key][name] = s;
    }
  }
  return out;
}

const StatSummary& SummaryStats::at(Kind kind, Index n, const std::string& stat) const {
  const auto g = groups.find({kind, n});
  if (g == groups.end()) throw DomainError("summary: no group for " + kind_name(kind) + " n=" + std::to_string(n));
  const auto s = g->second.find(stat);
  if (s == g->second.end()) throw DomainError("summary: no statistic '" + stat + "'");
  return s->second;
}

json SummaryStats::to_json() const {
  json groups_json = json::array();
  for (const auto& [key, stats] : groups) {
    json sj = json::object();
    std::size_t count = 0;
    for (const auto& [name, s] : stats) {
      json e = {{"count", s.count}, {"mean", s.mean}, {"std", s.stddev}, {"min", s.min},
                {"max", s.max},     {"p50", s.p50},   {"p95", s.p95},    {"p99", s.p99}};
      if (s.frequency) e["frequency"] = *s.frequency;
      sj[name] = std::move(e);
      count = s.count;
    }
    groups_json.push_back({{"kind", kind_name(key.first)}, {"n", key.second}, {"count", count}, {"stats", sj}});
  }
  return {{"groups", groups_json}};
}

std::string format_real(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw DomainError("format_real: conversion failed");
  return std::string(buf, ptr);
}

std::string records_to_csv(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw DomainError("export: no records");
  std::vector<std::string> names;
  for (const auto& [name, _] : records.front().statistics) names.push_back(name);
  if (names.empty()) throw DomainError("export: record has an empty statistics map");

  std::ostringstream out;
  out << "kind,n,trial_index,stream";
  for (const auto& name : names) out << ',' << name;
  out << '\n';
  for (const auto& r : records) {
    if (r.statistics.size() != names.size()) throw DomainError("export: records have different statistic keys");
    out << kind_name(r.kind) << ',' << r.n << ',' << r.trial_index << ',' << r.stream;
    std::size_t i = 0;
    for (const auto& [name, value] : r.statistics) {
      if (name != names[i++]) throw DomainError("export: records have different statistic keys");
      out << ',' << format_real(value);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<TrialRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DomainError("CSV: missing header");
  const auto header = split(line, ',');
  if (header.size() < 5 || header[0] != "kind" || header[1] != "n" || header[2] != "trial_index" ||
      header[3] != "stream")
    throw DomainError("CSV: header must start with kind,n,trial_index,stream");

  std::vector<TrialRecord> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) throw DomainError("CSV: row width differs from header");
    TrialRecord r;
    r.kind = parse_kind(cells[0]);
    r.n = parse_number<Index>(cells[1]);
    r.trial_index = parse_number<int>(cells[2]);
    r.stream = parse_number<std::uint64_t>(cells[3]);
    for (std::size_t c = 4; c < cells.size(); ++c) r.statistics[header[c]] = parse_number<double>(cells[c]);
    out.push_back(std::move(r));
  }
  return out;
}

json records_to_json(const std::vector<TrialRecord>& records) {
  json out = json::array();
  for (const auto& r : records) {
    if (r.statistics.empty()) throw DomainError("export: record has an empty statistics map");
    out.push_back({{"kind", kind_name(r.kind)},
                   {"n", r.n},
                   {"trial_index", r.trial_index},
                   {"stream", r.stream},
                   {"statistics", r.statistics}});
  }
  return out;
}

std::vector<TrialRecord> records_from_json(const json& j) {
  if (!j.is_array()) throw DomainError("records JSON must be a list");
  std::vector<TrialRecord> out;
  try {
    for (const auto& e : j) {
      TrialRecord r;
      r.kind = parse_kind(e.at("kind").get<std::string>());
      r.n = e.at("n").get<Index>();
      r.trial_index = e.at("trial_index").get<int>();
      r.stream = e.at("stream").get<std::uint64_t>();
      r.statistics = e.at("statistics").get<std::map<std::string, double>>();
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DomainError(std::string("records JSON: ") + e.what());
  }
  return out;
}

void export_records(const std::vector<TrialRecord>& records, Format format, const std::filesystem::path& path) {
  switch (format) {
    case Format::csv: io::write_text_file(path, records_to_csv(records)); return;
    case Format::json: io::write_text_file(path, records_to_json(records).dump(1) + "\n"); return;
    case Format::both: throw DomainError("export_records writes one format per path");
  }
}

void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result, const OutputSpec& out) {
  if (out.path.empty()) return;
  const std::filesystem::path dir(out.path);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  if (out.format != Format::json) export_records(result.records, Format::csv, dir / "records.csv");
  if (out.format != Format::csv) export_records(result.records, Format::json, dir / "records.json");
  json summary = result.summary.to_json();
  summary["config"] = cfg.to_json();
  summary["config"]["output"].erase("path");
  if (cfg.ensemble.type == "gue") summary["gue_convention"] = ens::kGueConvention;
  io::write_text_file(dir / "summary.json", summary.dump(1) + "\n");
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw DomainError("loglog_slope: need two or more paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw DomainError("loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0.0) throw DomainError("loglog_slope: x values are all equal");
  return sxy / sxx;
}

}  // namespace perturb::experiments
