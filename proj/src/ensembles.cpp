#include "perturb/ensembles.hpp"

#include <cmath>
#include <numbers>

namespace perturb::ensembles {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_stream(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

std::mt19937_64 make_engine(const Seed& seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed.master), static_cast<std::uint32_t>(seed.master >> 32),
                    static_cast<std::uint32_t>(seed.stream), static_cast<std::uint32_t>(seed.stream >> 32)};
  return std::mt19937_64(seq);
}

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

EntryDistribution::EntryDistribution(DistTag tag, double c) : tag_(tag), c_(c) {
  if (tag_ == DistTag::truncated_gaussian) {
    if (!(c_ > 0.0)) throw DomainError("truncated_gaussian: c must be positive");
    const double phi = std::exp(-0.5 * c_ * c_) / std::sqrt(2.0 * std::numbers::pi);
    const double mass = 2.0 * std_normal_cdf(c_) - 1.0;
    const double var = 1.0 - 2.0 * c_ * phi / mass;
    rescale_ = 1.0 / std::sqrt(var);
  }
}

EntryDistribution EntryDistribution::truncated_gaussian(double c) {
  return EntryDistribution(DistTag::truncated_gaussian, c);
}

EntryDistribution EntryDistribution::parse(const std::string& name, double c) {
  if (name == "gaussian") return gaussian();
  if (name == "rademacher") return rademacher();
  if (name == "uniform_pm1") return uniform_pm1();
  if (name == "truncated_gaussian") return truncated_gaussian(c);
  throw DomainError("unknown entry distribution '" + name + "'");
}

std::string EntryDistribution::name() const {
  switch (tag_) {
    case DistTag::gaussian: return "gaussian";
    case DistTag::rademacher: return "rademacher";
    case DistTag::uniform_pm1: return "uniform_pm1";
    case DistTag::truncated_gaussian: return "truncated_gaussian";
  }
  return "unknown";
}

std::optional<double> EntryDistribution::bound() const {
  switch (tag_) {
    case DistTag::gaussian: return std::nullopt;
    case DistTag::rademacher: return 1.0;
    case DistTag::uniform_pm1: return std::sqrt(3.0);
    case DistTag::truncated_gaussian: return c_ * rescale_;
  }
  return std::nullopt;
}

double EntryDistribution::operator()(std::mt19937_64& rng) const {
  switch (tag_) {
    case DistTag::gaussian: return std::normal_distribution<double>(0.0, 1.0)(rng);
    case DistTag::rademacher: return std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
    case DistTag::uniform_pm1: {
      const double r = std::sqrt(3.0);
      return std::uniform_real_distribution<double>(-r, r)(rng);
    }
    case DistTag::truncated_gaussian: {
      std::normal_distribution<double> normal(0.0, 1.0);
      for (;;) {
        const double x = normal(rng);
        if (std::abs(x) <= c_) return x * rescale_;
      }
    }
  }
  return 0.0;
}

template <class S>
HermitianMatrix<S> sample_subgaussian_hermitian(Index n, const EntryDistribution& dist,
                                                const Seed& seed) {
  if (n < 2) throw DomainError("sample_subgaussian_hermitian: n must be >= 2");
  auto rng = make_engine(seed);
  Mat<S> m = Mat<S>::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    m(j, j) = S(dist(rng));
    for (Index k = j + 1; k < n; ++k) {
      if constexpr (is_complex_v<S>) {
        const double re = dist(rng);
        const double im = dist(rng);
        m(j, k) = Complex(re, im);
      } else {
        m(j, k) = dist(rng);
      }
    }
  }
  return HermitianMatrix<S>::from_upper(std::move(m));
}

HermitianMatrix<double> sample_goe(Index n, const Seed& seed) {
  if (n < 1) throw DomainError("sample_goe: n must be >= 1");
  auto rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RealMat m = RealMat::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    m(j, j) = std::numbers::sqrt2 * normal(rng);
    for (Index k = j + 1; k < n; ++k) m(j, k) = normal(rng);
  }
  return HermitianMatrix<double>::from_upper(std::move(m));
}

HermitianMatrix<Complex> sample_gue(Index n, const Seed& seed) {
  if (n < 1) throw DomainError("sample_gue: n must be >= 1");
  auto rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double half = 1.0 / std::numbers::sqrt2;
  Mat<Complex> m = Mat<Complex>::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    m(j, j) = normal(rng);
    for (Index k = j + 1; k < n; ++k) {
      const double re = half * normal(rng);
      const double im = half * normal(rng);
      m(j, k) = Complex(re, im);
    }
  }
  return HermitianMatrix<Complex>::from_upper(std::move(m));
}

ArrowheadSample sample_arrowhead_noise(Index n, const Seed& seed) {
  if (n < 2) throw DomainError("sample_arrowhead_noise: n must be >= 2");
  auto rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RealVec g(n - 1);
  for (Index j = 0; j + 1 < n; ++j) g(j) = normal(rng);
  RealMat e = RealMat::Zero(n, n);
  e.row(0).tail(n - 1) = g.transpose();
  e.col(0).tail(n - 1) = g;
  return {std::move(g), HermitianMatrix<double>(std::move(e))};
}

SpectrumSpec SpectrumSpec::explicit_list(std::vector<double> values) {
  SpectrumSpec s;
  s.family = SpectrumFamily::explicit_values;
  s.n = static_cast<Index>(values.size());
  s.values = std::move(values);
  return s;
}

SpectrumSpec SpectrumSpec::linear_family(Index n, double scale) {
  SpectrumSpec s;
  s.family = SpectrumFamily::linear;
  s.n = n;
  s.scale = scale;
  return s;
}

SpectrumSpec SpectrumSpec::multiscale_family(Index n, double epsilon) {
  SpectrumSpec s;
  s.family = SpectrumFamily::multiscale;
  s.n = n;
  s.epsilon = epsilon;
  return s;
}

SpectrumSpec SpectrumSpec::lowrank_family(Index n, Index r, double lambda1, double delta) {
  SpectrumSpec s;
  s.family = SpectrumFamily::lowrank;
  s.n = n;
  s.rank = r;
  s.lambda1 = lambda1;
  s.delta = delta;
  return s;
}

SpectrumSpec SpectrumSpec::inconsistency_family(Index n, double p) {
  SpectrumSpec s;
  s.family = SpectrumFamily::inconsistency;
  s.n = n;
  s.p = p;
  return s;
}

SpectrumSpec SpectrumSpec::with_n(Index new_n) const {
  if (family == SpectrumFamily::explicit_values && new_n != n)
    throw DomainError("explicit spectrum has fixed length " + std::to_string(n));
  SpectrumSpec s = *this;
  s.n = new_n;
  return s;
}

namespace {

const char* family_name(SpectrumFamily f) {
  switch (f) {
    case SpectrumFamily::explicit_values: return "explicit";
    case SpectrumFamily::linear: return "linear";
    case SpectrumFamily::multiscale: return "multiscale";
    case SpectrumFamily::lowrank: return "lowrank";
    case SpectrumFamily::inconsistency: return "inconsistency";
  }
  return "unknown";
}

}  // namespace

nlohmann::json SpectrumSpec::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  switch (family) {
    case SpectrumFamily::explicit_values: params["values"] = values; break;
    case SpectrumFamily::linear: params["scale"] = scale; break;
    case SpectrumFamily::multiscale: params["epsilon"] = epsilon; break;
    case SpectrumFamily::lowrank:
      params["r"] = rank;
      params["lambda1"] = lambda1;
      params["delta"] = delta;
      break;
    case SpectrumFamily::inconsistency: params["p"] = p; break;
  }
  return {{"family", family_name(family)}, {"n", n}, {"params", std::move(params)}};
}

SpectrumSpec SpectrumSpec::from_json(const nlohmann::json& j) {
  try {
    const std::string fam = j.at("family").get<std::string>();
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    if (fam == "explicit") {
      auto s = explicit_list(params.at("values").get<std::vector<double>>());
      if (j.contains("n") && j.at("n").get<Index>() != s.n)
        throw DomainError("spectrum JSON: n does not match explicit values");
      return s;
    }
    const Index n = j.at("n").get<Index>();
    if (fam == "linear") return linear_family(n, params.value("scale", 1.0));
    if (fam == "multiscale") return multiscale_family(n, params.value("epsilon", 1.0));
    if (fam == "lowrank")
      return lowrank_family(n, params.at("r").get<Index>(), params.at("lambda1").get<double>(),
                            params.at("delta").get<double>());
    if (fam == "inconsistency") return inconsistency_family(n, params.value("p", 2.0));
    throw DomainError("spectrum JSON: unknown family '" + fam + "'");
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("spectrum JSON: ") + e.what());
  }
}

Spectrum realize_spectrum(const SpectrumSpec& spec) {
  const Index n = spec.n;
  if (spec.family != SpectrumFamily::explicit_values && n < 2)
    throw DomainError("realize_spectrum: n must be >= 2");
  std::vector<double> lam(static_cast<std::size_t>(n));
  const double dn = static_cast<double>(n);
  switch (spec.family) {
    case SpectrumFamily::explicit_values:
      lam = spec.values;
      break;
    case SpectrumFamily::linear:
      if (!(spec.scale > 0.0)) throw InvalidSpectrum("linear spectrum: scale must be positive");
      for (Index j = 1; j <= n; ++j) lam[j - 1] = static_cast<double>(n + 1 - j) * spec.scale;
      break;
    case SpectrumFamily::multiscale: {
      if (!(spec.epsilon > 0.0)) throw DomainError("multiscale spectrum: epsilon must be positive");
      const double unit = std::pow(std::log(dn), 2.0 + spec.epsilon);
      for (Index j = 1; j <= n; ++j) lam[j - 1] = static_cast<double>(n + 1 - j) * unit;
      break;
    }
    case SpectrumFamily::lowrank:
      if (spec.rank < 2 || spec.rank > n) throw DomainError("lowrank spectrum: need 2 <= r <= n");
      if (!(spec.delta > 0.0 && spec.delta < spec.lambda1))
        throw DomainError("lowrank spectrum: need 0 < delta < lambda1");
      lam[0] = spec.lambda1;
      for (Index j = 1; j < n; ++j) lam[j] = j < spec.rank ? spec.lambda1 - spec.delta : 0.0;
      break;
    case SpectrumFamily::inconsistency: {
      if (!(spec.p >= 2.0) || std::isinf(spec.p))
        throw DomainError("inconsistency spectrum: p must be in [2, inf)");
      if (n < 3) throw DomainError("inconsistency spectrum: n must be >= 3");
      const double expo = (spec.p - 2.0) / spec.p;
      const double unit = std::pow(dn, 1.0 / spec.p) / std::pow(std::log(dn), 2.0);
      const double bottom = 3.0 * std::sqrt(dn);
      const double top = bottom + std::pow(dn - 1.0, expo) * unit;
      lam[0] = top;
      // lambda_1 - lambda_{j+1} = j^((p-2)/p) n^(1/p) / log^2 n for j >= 1.
      for (Index j = 1; j < n; ++j) lam[j] = top - std::pow(static_cast<double>(j), expo) * unit;
      lam[n - 1] = bottom;
      break;
    }
  }
  return Spectrum(std::move(lam));
}

InconsistencyInstance sample_inconsistency_instance(Index n, double p, const Seed& seed) {
  if (n < 3) throw DomainError("sample_inconsistency_instance: n must be >= 3");
  Spectrum spec = realize_spectrum(SpectrumSpec::inconsistency_family(n, p));
  const auto block = sample_goe(n - 1, seed);
  RealMat e = RealMat::Zero(n, n);
  e.bottomRightCorner(n - 1, n - 1) = block.dense();
  auto a = HermitianMatrix<double>::diagonal(spec.as_vector());
  return {std::move(spec), std::move(a), HermitianMatrix<double>(std::move(e))};
}

template HermitianMatrix<double> sample_subgaussian_hermitian(Index, const EntryDistribution&, const Seed&);
template HermitianMatrix<Complex> sample_subgaussian_hermitian(Index, const EntryDistribution&, const Seed&);

}  // namespace perturb::ensembles
