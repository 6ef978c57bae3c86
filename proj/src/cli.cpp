#include "perturb/cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "perturb/arrowhead.hpp"
#include "perturb/bounds.hpp"
#include "perturb/ensembles.hpp"
#include "perturb/errors.hpp"
#include "perturb/experiments.hpp"
#include "perturb/io.hpp"
#include "perturb/rs_solver.hpp"

namespace perturb::cli {

namespace {

using io::json;
namespace ens = perturb::ensembles;

struct Shared {
  std::optional<std::uint64_t> seed;
  std::optional<Index> n;
  std::string p = "2";
  std::optional<double> c0;
  std::optional<double> tol;
  std::string format = "json";
  std::string out;
};

void add_shared(CLI::App* sub, Shared& s) {
  sub->add_option("--seed", s.seed, "Master seed (default: PERTURB_SEED, else 0)");
  sub->add_option("--n", s.n, "Dimension")->check(CLI::Range(Index{2}, Index{1} << 20));
  sub->add_option("--p", s.p, "Exponent: a number >= 1 or inf");
  sub->add_option("--c0", s.c0, "Assumption threshold");
  sub->add_option("--tol", s.tol, "Solver tolerance");
  sub->add_option("--format", s.format, "Report format")->check(CLI::IsMember({"json", "csv", "both"}));
  sub->add_option("--out", s.out, "Write the report to this path (exp: output directory)");
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double parse_p(const std::string& text) {
  if (text == "inf" || text == "Inf" || text == "infinity") return kInf;
  double p = 0.0;
  try {
    std::size_t used = 0;
    p = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw UsageError("--p must be a number >= 1 or 'inf', got '" + text + "'");
  }
  if (!(p >= 1.0)) throw UsageError("--p must be >= 1");
  return p;
}

std::uint64_t resolve_seed(const Shared& s) {
  if (s.seed) return *s.seed;
  if (const char* env = std::getenv("PERTURB_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("PERTURB_SEED must be an unsigned integer, got '") + env + "'");
  }
  return 0;
}

void require_json_format(const Shared& s) {
  if (s.format != "json") throw UsageError("--format " + s.format + " is only available for exp");
}

void emit(const Shared& s, const std::string& text, std::ostream& out) {
  if (s.out.empty())
    out << text;
  else
    io::write_text_file(s.out, text);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

ens::SpectrumSpec load_spectrum(const std::string& arg, const Shared& s) {
  auto spec = ens::SpectrumSpec::from_json(io::load_json_arg(arg));
  if (s.n) spec = spec.with_n(*s.n);
  return spec;
}

// gen ---------------------------------------------------------------------

struct GenArgs {
  std::string ensemble = "goe";
  std::string dist = "gaussian";
  double c = 3.0;
  std::string scalar = "real";
  std::string spectrum;
};

json run_gen(const GenArgs& g, const Shared& s) {
  const ens::Seed seed{resolve_seed(s), 0};
  if (g.ensemble == "spectrum") {
    if (g.spectrum.empty()) throw UsageError("gen --ensemble spectrum needs --spectrum");
    const auto lambda = ens::realize_spectrum(load_spectrum(g.spectrum, s));
    return {{"spectrum", lambda.values()}};
  }
  if (!s.n) throw UsageError("gen needs --n");
  const Index n = *s.n;
  if (g.ensemble == "goe") return io::matrix_to_json(ens::sample_goe(n, seed));
  if (g.ensemble == "gue") return io::matrix_to_json(ens::sample_gue(n, seed));
  if (g.ensemble == "subgaussian") {
    const auto dist = ens::EntryDistribution::parse(g.dist, g.c);
    if (g.scalar == "complex") return io::matrix_to_json(ens::sample_subgaussian_hermitian<Complex>(n, dist, seed));
    return io::matrix_to_json(ens::sample_subgaussian_hermitian<double>(n, dist, seed));
  }
  if (g.ensemble == "arrowhead") {
    const auto sample = ens::sample_arrowhead_noise(n, seed);
    return {{"g", io::vector_to_json<double>(sample.g)}, {"noise", io::matrix_to_json(sample.noise)}};
  }
  if (g.ensemble == "inconsistency") {
    const auto inst = ens::sample_inconsistency_instance(n, parse_p(s.p), seed);
    return {{"spectrum", inst.spectrum.values()},
            {"a", io::matrix_to_json(inst.a)},
            {"noise", io::matrix_to_json(inst.noise)}};
  }
  throw UsageError("unknown ensemble '" + g.ensemble + "'");
}

// assume ------------------------------------------------------------------

json run_assume(const std::string& spectrum_arg, std::optional<double> e_norm, const Shared& s) {
  const auto lambda = ens::realize_spectrum(load_spectrum(spectrum_arg, s));
  return bounds::assess(lambda, s.c0.value_or(bounds::kDefaultC0), e_norm).to_json();
}

// solve -------------------------------------------------------------------

struct SolveArgs {
  std::string a;
  std::string spectrum;
  std::string e;
  std::string ensemble = "goe";
  bool no_fallback = false;
};

template <class S>
HermitianMatrix<S> promote(const HermitianMatrix<double>& m) {
  if constexpr (is_complex_v<S>) {
    return HermitianMatrix<S>(Mat<S>(m.dense().template cast<S>()));
  } else {
    return m;
  }
}

template <class S>
json solve_typed(const HermitianMatrix<S>& a, const HermitianMatrix<S>& e, const rs::SolveOptions& opts) {
  return rs::solve_leading_eigenpair(a, e, opts).to_json();
}

json run_solve(const SolveArgs& args, const Shared& s) {
  if (args.a.empty() == args.spectrum.empty()) throw UsageError("solve needs exactly one of --a or --spectrum");
  rs::SolveOptions opts;
  opts.p = parse_p(s.p);
  opts.tol = s.tol.value_or(opts.tol);
  opts.fallback = !args.no_fallback;

  std::optional<io::AnyHermitian> a;
  if (!args.a.empty()) {
    a = io::hermitian_from_json(io::load_json_arg(args.a));
  } else {
    const auto lambda = ens::realize_spectrum(load_spectrum(args.spectrum, s));
    a = HermitianMatrix<double>::diagonal(lambda.as_vector());
  }
  const Index n = std::visit([](const auto& m) { return m.n(); }, *a);

  io::AnyHermitian e;
  if (!args.e.empty()) {
    e = io::hermitian_from_json(io::load_json_arg(args.e));
  } else {
    const ens::Seed seed{resolve_seed(s), 0};
    if (args.ensemble == "goe")
      e = ens::sample_goe(n, seed);
    else if (args.ensemble == "gue")
      e = ens::sample_gue(n, seed);
    else if (args.ensemble == "zero")
      e = HermitianMatrix<double>::zero(n);
    else
      throw UsageError("solve --ensemble must be goe, gue or zero");
  }

  const bool complex = std::holds_alternative<HermitianMatrix<Complex>>(*a) ||
                       std::holds_alternative<HermitianMatrix<Complex>>(e);
  if (complex) {
    auto as_complex = [](const io::AnyHermitian& m) {
      if (const auto* c = std::get_if<HermitianMatrix<Complex>>(&m)) return *c;
      return promote<Complex>(std::get<HermitianMatrix<double>>(m));
    };
    return solve_typed<Complex>(as_complex(*a), as_complex(e), opts);
  }
  return solve_typed<double>(std::get<HermitianMatrix<double>>(*a), std::get<HermitianMatrix<double>>(e), opts);
}

// arrowhead ---------------------------------------------------------------

json run_arrowhead(const std::string& spectrum_arg, const std::string& g_arg, const Shared& s) {
  const auto lambda = ens::realize_spectrum(load_spectrum(spectrum_arg, s));
  RealVec g;
  if (!g_arg.empty()) {
    g = io::vector_from_json<double>(io::load_json_arg(g_arg));
  } else {
    g = ens::sample_arrowhead_noise(lambda.n(), {resolve_seed(s), 0}).g;
  }
  const auto sol = arrowhead::solve_arrowhead(lambda, g, s.tol.value_or(arrowhead::kDefaultSecularTol));
  const auto check = arrowhead::lower_bound_check(sol, lambda, g);
  json j = sol.to_json();
  j["lower_bound"] = {{"holds", check.holds},
                      {"min_slack", check.tested ? json(check.min_slack) : json(nullptr)},
                      {"tested", check.tested}};
  return j;
}

// exp ---------------------------------------------------------------------

void run_exp(const std::string& config_arg, int threads, const Shared& s, bool format_given, std::ostream& out) {
  auto cfg = experiments::ExperimentConfig::from_json(io::load_json_arg(config_arg));
  if (s.seed) cfg.seed = *s.seed;
  if (s.n) cfg.n_list = {*s.n};
  if (s.p != "2") cfg.p = parse_p(s.p);
  if (s.c0) cfg.params["c0"] = *s.c0;
  if (s.tol) cfg.params["tol"] = *s.tol;
  if (!s.out.empty()) cfg.output.path = s.out;
  if (format_given)
    cfg.output.format = s.format == "csv"    ? experiments::Format::csv
                        : s.format == "json" ? experiments::Format::json
                                             : experiments::Format::both;
  cfg.validate();
  const auto result = experiments::run_experiment(cfg, threads);
  experiments::write_outputs(cfg, result, cfg.output);
  out << dump(result.summary.to_json());
}

json error_json(const Error& e) {
  json j{{"error", e.kind()}, {"message", e.what()}};
  if (const auto* nf = dynamic_cast<const NumericFailure*>(&e)) j["residual"] = nf->residual();
  if (const auto* gc = dynamic_cast<const GapCollapse*>(&e)) j["min_gap"] = gc->min_gap();
  if (const auto* cf = dynamic_cast<const ContractionFailure*>(&e)) j["certified_bound"] = cf->certified_bound();
  if (const auto* nc = dynamic_cast<const NonConvergence*>(&e)) j["residual"] = nc->residual();
  if (const auto* ie = dynamic_cast<const InconsistencyError*>(&e)) j["imag"] = ie->imag_part();
  return j;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Leading-eigenvector perturbation toolkit", "perturb"};
  app.require_subcommand(1);

  Shared shared;
  GenArgs gen_args;
  std::string assume_spectrum;
  std::optional<double> assume_enorm;
  SolveArgs solve_args;
  std::string arrow_spectrum, arrow_g;
  std::string exp_config;
  int exp_threads = 1;

  auto* gen = app.add_subcommand("gen", "Sample a random matrix or realize a spectrum");
  add_shared(gen, shared);
  gen->add_option("--ensemble", gen_args.ensemble, "goe|gue|subgaussian|arrowhead|inconsistency|spectrum")
      ->check(CLI::IsMember({"goe", "gue", "subgaussian", "arrowhead", "inconsistency", "spectrum"}));
  gen->add_option("--dist", gen_args.dist, "Entry law for subgaussian");
  gen->add_option("--c", gen_args.c, "Truncation level for truncated_gaussian");
  gen->add_option("--scalar", gen_args.scalar, "real|complex")->check(CLI::IsMember({"real", "complex"}));
  gen->add_option("--spectrum", gen_args.spectrum, "Spectrum JSON (inline or file)");

  auto* assume = app.add_subcommand("assume", "Evaluate the eigenvalue condition on a spectrum");
  add_shared(assume, shared);
  assume->add_option("--spectrum", assume_spectrum, "Spectrum JSON (inline or file)")->required();
  assume->add_option("--enorm", assume_enorm, "Noise operator norm (default 2 sqrt(n))");

  auto* solve = app.add_subcommand("solve", "Leading eigenpair of A + E by the fixed-point solver");
  add_shared(solve, shared);
  solve->add_option("--a,--matrix", solve_args.a, "Matrix JSON for A (inline or file)");
  solve->add_option("--spectrum", solve_args.spectrum, "Spectrum JSON; A = diag(spectrum)");
  solve->add_option("--e,--noise", solve_args.e, "Matrix JSON for E (inline or file)");
  solve->add_option("--ensemble", solve_args.ensemble, "Noise ensemble when --e is absent: goe|gue|zero");
  solve->add_flag("--no-fallback", solve_args.no_fallback, "Fail instead of using the dense eigensolver");

  auto* arrow = app.add_subcommand("arrowhead", "Secular-equation eigenpair of the arrowhead model");
  add_shared(arrow, shared);
  arrow->add_option("--spectrum", arrow_spectrum, "Spectrum JSON (inline or file)")->required();
  arrow->add_option("--g", arrow_g, "Vector JSON for g (default: sampled from --seed)");

  auto* exp = app.add_subcommand("exp", "Run a Monte Carlo experiment");
  add_shared(exp, shared);
  exp->add_option("--config", exp_config, "Experiment config JSON (inline or file)")->required();
  exp->add_option("--threads", exp_threads, "Worker threads")->check(CLI::Range(1, 256));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return 1;
  }

  try {
    if (*gen) {
      require_json_format(shared);
      emit(shared, dump(run_gen(gen_args, shared)), out);
    } else if (*assume) {
      require_json_format(shared);
      emit(shared, dump(run_assume(assume_spectrum, assume_enorm, shared)), out);
    } else if (*solve) {
      require_json_format(shared);
      emit(shared, dump(run_solve(solve_args, shared)), out);
    } else if (*arrow) {
      require_json_format(shared);
      emit(shared, dump(run_arrowhead(arrow_spectrum, arrow_g, shared)), out);
    } else if (*exp) {
      run_exp(exp_config, exp_threads, shared, exp->count("--format") > 0, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return 1;
  } catch (const Error& e) {
    err << dump(error_json(e));
    return e.numeric() ? 2 : 1;
  } catch (const std::exception& e) {
    err << dump(json{{"error", "internal"}, {"message", e.what()}});
    return 1;
  }
  return 0;
}

}  // namespace perturb::cli
