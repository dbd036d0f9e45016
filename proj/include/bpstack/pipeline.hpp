#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bpstack/config.hpp"
#include "bpstack/cv.hpp"
#include "json.hpp"

namespace bpstack {

inline constexpr int kModelFormatVersion = 1;

// Digest of column names, kinds and domains, in order.
std::string schema_hash(const std::vector<ColumnSpec>& columns);

// Everything needed to turn a raw cohort into the model's feature matrix.
struct FeatureRecipe {
  CohortSchema cohort_schema;
  std::vector<std::string> leakage_patterns;
  std::vector<ColumnSpec> raw_schema;  // features after leakage removal
  ImputePolicy imputation;
  std::map<std::string, double> medians;
  std::map<std::string, ImputeStrategy> strategies;
  std::vector<std::pair<std::string, std::string>> interaction_pairs;
  std::vector<std::string> transform_columns;
  std::vector<std::string> selected;
  std::vector<DomainTag> selected_domains;
};

// Internal CV reference kept for external comparisons.
struct InternalReference {
  std::array<double, 2> cv_rmse{};
  std::array<Eigen::VectorXd, 2> oof_sq_err;
};

struct ModelBundle {
  std::string config_hash;
  std::string schema_hash;
  FeatureRecipe recipe;
  FittedEnsemble ensemble;
  std::optional<StratifiedModels> strata;
  InternalReference reference;
};

nlohmann::json bundle_to_json(const ModelBundle& b);
ModelBundle bundle_from_json(const nlohmann::json& j);  // throws DataError
void save_model(const ModelBundle& b, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

struct CohortInputs {
  CohortSchema schema;
  CohortTable internal;
  std::optional<CohortTable> external;
  FilterReport internal_filter;
  std::optional<FilterReport> external_filter;
};

// Reads the configured files or generates the synthetic pair.
CohortInputs load_inputs(const RunConfig& cfg);

// Feature view with the leakage patterns removed.
LeakageResult clean_cohort(const CohortTable& table, const LeakagePatternSet& patterns);

struct PreparedFeatures {
  Eigen::MatrixXd x;
  CohortTable imputed;  // raw columns after imputation, for subgroup labels
  std::optional<AlignmentMap> alignment;
};

// Scores-side preparation of a cleaned table: alignment when the schema
// differs, imputation with the training medians, derived columns, then the
// selected columns in model order.
PreparedFeatures prepare_features(const CohortTable& cleaned, const FeatureRecipe& recipe,
                                  bool allow_alignment);

struct TrainResult {
  ModelBundle bundle;
  nlohmann::json report;
  CvResult cv;
  CohortTable cleaned_internal;
  std::optional<CohortTable> cleaned_external;
  Eigen::MatrixXd x;
  std::vector<std::string> feature_names;
};

TrainResult run_train(const RunConfig& cfg);

struct ExternalValidation {
  AlignmentMap alignment;
  bool low_alignment = false;  // coverage < 0.5
  std::array<TargetReport, 2> reports;
  ShiftProfile shift;
  std::array<double, 2> internal_rmse{};
  std::array<double, 2> external_rmse{};
  std::array<double, 2> generalizability{};
  std::array<DegradationTest, 2> degradation;
};

ExternalValidation run_validate_external(const RunConfig& cfg, const ModelBundle& bundle,
                                         const CohortTable& cleaned_internal,
                                         const CohortTable& cleaned_external);

// Global model, or the strata models when the bundle carries them.
PredictionSet run_predict(const ModelBundle& bundle, const CohortTable& cleaned);
std::string format_predictions_csv(const CohortTable& table, const PredictionSet& pred);

struct AblateResult {
  AblationReport ablation;
  CvResult baseline;
  std::vector<std::string> feature_names;
};

AblateResult run_ablate(const RunConfig& cfg);

// generate: internal.csv, external.csv and schema.yaml under `dir`.
std::vector<std::filesystem::path> run_generate(const RunConfig& cfg,
                                                const std::filesystem::path& dir);

}  // namespace bpstack
