#pragma once

// Seeded samplers for the random models: subgaussian Wigner noise, GOE/GUE,
// the arrowhead perturbation and the inconsistency instance, plus the
// deterministic spectrum families.

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "perturb/matcore.hpp"

namespace perturb::ensembles {

struct Seed {
  std::uint64_t master = 0;
  std::uint64_t stream = 0;
  friend bool operator==(const Seed&, const Seed&) = default;
};

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Order-independent per-trial stream: hash of (master, keys...).
std::uint64_t derive_stream(std::uint64_t master, std::initializer_list<std::uint64_t> keys);

std::mt19937_64 make_engine(const Seed& seed);

enum class DistTag { gaussian, rademacher, uniform_pm1, truncated_gaussian };

// Zero-mean, unit-variance entry law.
class EntryDistribution {
 public:
  static EntryDistribution gaussian() { return EntryDistribution(DistTag::gaussian, 0.0); }
  static EntryDistribution rademacher() { return EntryDistribution(DistTag::rademacher, 0.0); }
  // Uniform on [-sqrt(3), sqrt(3)].
  static EntryDistribution uniform_pm1() { return EntryDistribution(DistTag::uniform_pm1, 0.0); }
  // N(0,1) conditioned on [-c, c], rescaled to unit variance.
  static EntryDistribution truncated_gaussian(double c);
  static EntryDistribution parse(const std::string& name, double c = 3.0);

  DistTag tag() const { return tag_; }
  double truncation() const { return c_; }
  std::string name() const;
  // Almost-sure bound on |x|, when there is one.
  std::optional<double> bound() const;

  double operator()(std::mt19937_64& rng) const;

 private:
  EntryDistribution(DistTag tag, double c);
  DistTag tag_;
  double c_;
  double rescale_ = 1.0;
};

template <class S>
HermitianMatrix<S> sample_subgaussian_hermitian(Index n, const EntryDistribution& dist,
                                                const Seed& seed);

// Off-diagonal N(0,1), diagonal N(0,2).
HermitianMatrix<double> sample_goe(Index n, const Seed& seed);

inline constexpr const char* kGueConvention =
    "off-diagonal Re and Im ~ N(0,1/2) each (total variance 1); diagonal ~ N(0,1)";
HermitianMatrix<Complex> sample_gue(Index n, const Seed& seed);

struct ArrowheadSample {
  RealVec g;                     // length n-1
  HermitianMatrix<double> noise; // [[0, g^T], [g, 0]]
};
ArrowheadSample sample_arrowhead_noise(Index n, const Seed& seed);

enum class SpectrumFamily { explicit_values, linear, multiscale, lowrank, inconsistency };

struct SpectrumSpec {
  SpectrumFamily family = SpectrumFamily::linear;
  Index n = 2;
  std::vector<double> values;  // explicit
  double scale = 1.0;          // linear
  double epsilon = 1.0;        // multiscale
  Index rank = 2;              // lowrank
  double lambda1 = 1.0;        // lowrank
  double delta = 0.5;          // lowrank
  double p = 2.0;              // inconsistency

  static SpectrumSpec explicit_list(std::vector<double> values);
  static SpectrumSpec linear_family(Index n, double scale);
  static SpectrumSpec multiscale_family(Index n, double epsilon);
  static SpectrumSpec lowrank_family(Index n, Index r, double lambda1, double delta);
  static SpectrumSpec inconsistency_family(Index n, double p);

  SpectrumSpec with_n(Index new_n) const;
  nlohmann::json to_json() const;
  static SpectrumSpec from_json(const nlohmann::json& j);
};

Spectrum realize_spectrum(const SpectrumSpec& spec);

struct InconsistencyInstance {
  Spectrum spectrum;
  HermitianMatrix<double> a;      // diag(spectrum)
  HermitianMatrix<double> noise;  // zero first row/column, GOE of size n-1 below
};
InconsistencyInstance sample_inconsistency_instance(Index n, double p, const Seed& seed);

}  // namespace perturb::ensembles
