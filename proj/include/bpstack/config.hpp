#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bpstack/cohort.hpp"
#include "bpstack/ensemble.hpp"
#include "bpstack/evaluate.hpp"
#include "bpstack/features.hpp"
#include "bpstack/impute.hpp"
#include "bpstack/leakage.hpp"
#include "bpstack/tuning.hpp"

namespace bpstack {

struct DataSource {
  std::filesystem::path cohort;
  std::filesystem::path schema;
  std::optional<std::filesystem::path> external;  // validated after training
};

enum class TuningMethod { None, Grid, Bayes };
std::string_view to_string(TuningMethod m);

struct TuningConfig {
  TuningMethod method = TuningMethod::None;
  int budget = 30;
  int initial_points = 5;
  double xi = 0.01;
};

struct EvaluationConfig {
  std::vector<EquitySpec> equity{{"age", 65.0}, {"sex", std::nullopt}};
  int bootstrap_resamples = 1000;
  int kl_bins = kDefaultKlBins;
  int permutation_repeats = 5;
};

struct StratifiedConfig {
  bool enabled = false;
  std::size_t min_stratum = 30;
};

struct AblationConfig {
  bool enabled = false;
  std::vector<std::string> features;  // single-feature removals
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t threads = 0;  // 0: hardware concurrency; not hashed
  std::filesystem::path output = "bpstack_out";
  std::optional<DataSource> data;
  std::optional<SyntheticConfig> synthetic;
  bool synthetic_seed_explicit = false;
  bool synthetic_external = true;  // validate on the generated external cohort
  LeakagePatternSet leakage;
  ImputePolicy imputation;
  FeaturePipelineConfig features;
  EnsembleParams model;
  TuningConfig tuning;
  int cv_folds = 5;
  EvaluationConfig evaluation;
  StratifiedConfig stratified;
  AblationConfig ablation;

  // Exactly one data source; every nested block valid. Throws ConfigError.
  void validate() const;
  // Model and search seeds follow the run seed; the synthetic seed does too
  // unless the file set it.
  void propagate_seed();
};

// Unknown keys are rejected. Relative data paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view yaml_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical echo: every field, sorted keys, threads and output omitted.
nlohmann::json config_to_json(const RunConfig& cfg);
// FNV-1a 64 over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);
std::string fnv1a_hex(std::string_view bytes);

}  // namespace bpstack
