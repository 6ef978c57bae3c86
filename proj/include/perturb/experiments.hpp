#pragma once

// Seeded Monte Carlo campaigns. Each trial draws from its own stream
// derive_stream(seed, {n, trial_index}), so records do not depend on thread
// count or execution order.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "perturb/ensembles.hpp"

namespace perturb::experiments {

enum class Kind {
  upper_bound,
  lower_bound,
  inconsistency,
  weyl,
  dk_compare,
  opnorm_scaling,
  event_diagnostics,
  phase_transition,
};

std::string kind_name(Kind k);
Kind parse_kind(const std::string& name);

struct EnsembleSpec {
  std::string type = "goe";  // goe | gue | subgaussian | zero
  std::string dist = "gaussian";
  double truncation = 3.0;
  std::string scalar = "real";

  bool complex_scalar() const { return type == "gue" || (type != "goe" && scalar == "complex"); }
  nlohmann::json to_json() const;
  static EnsembleSpec from_json(const nlohmann::json& j);
};

enum class Format { csv, json, both };

struct OutputSpec {
  std::string path;  // directory; empty means do not write
  Format format = Format::both;
};

struct ExperimentConfig {
  Kind kind = Kind::upper_bound;
  ensembles::SpectrumSpec spectrum = ensembles::SpectrumSpec::multiscale_family(64, 1.0);
  EnsembleSpec ensemble;
  std::vector<Index> n_list{64, 128, 256};
  int trials = 1;
  std::uint64_t seed = 0;
  double p = 2.0;
  OutputSpec output;
  // Kind-specific knobs: theta, C, tau, restarts, tol, c0.
  nlohmann::json params = nlohmann::json::object();

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);

  double param(const std::string& key, double fallback) const;
};

struct TrialRecord {
  Kind kind = Kind::upper_bound;
  Index n = 0;
  int trial_index = 0;
  std::uint64_t stream = 0;
  std::map<std::string, double> statistics;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

struct StatField {
  std::string name;
  bool boolean = false;
};

// Fixed statistic keys per kind. Booleans are stored as 0/1.
const std::vector<StatField>& stat_schema(Kind kind);

struct StatSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1) standard deviation, 0 for one sample
  double min = 0.0;
  double max = 0.0;
  double p50 = 0.0;
  double p95 = 0.0;
  double p99 = 0.0;
  std::optional<double> frequency;  // boolean statistics only
};

struct SummaryStats {
  // (kind, n) -> statistic -> summary
  std::map<std::pair<Kind, Index>, std::map<std::string, StatSummary>> groups;

  const StatSummary& at(Kind kind, Index n, const std::string& stat) const;
  nlohmann::json to_json() const;
};

// Linear interpolation between order statistics at position q (n - 1).
double quantile(const std::vector<double>& sorted, double q);

SummaryStats summarize(const std::vector<TrialRecord>& records);

TrialRecord run_trial(const ExperimentConfig& cfg, Index n, int trial_index);

struct ExperimentResult {
  std::vector<TrialRecord> records;  // sorted by (n, trial_index)
  SummaryStats summary;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads = 1);

std::string records_to_csv(const std::vector<TrialRecord>& records);
std::vector<TrialRecord> records_from_csv(const std::string& text);
nlohmann::json records_to_json(const std::vector<TrialRecord>& records);
std::vector<TrialRecord> records_from_json(const nlohmann::json& j);

// Writes `path` as CSV or JSON; throws IoError on failure and DomainError
// on empty input.
void export_records(const std::vector<TrialRecord>& records, Format format, const std::filesystem::path& path);

// records.csv / records.json (per format) and summary.json inside out.path.
void write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result, const OutputSpec& out);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Shortest decimal that parses back to the same double.
std::string format_real(double x);

}  // namespace perturb::experiments
