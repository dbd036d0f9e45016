#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bpstack/cohort.hpp"

namespace bpstack {

struct FeaturePipelineConfig {
  std::vector<std::pair<std::string, std::string>> interaction_pairs{
      {"age", "creatinine"}, {"hr", "creatinine"}, {"vasopressor_use", "lactate"}, {"hrv", "sbp_baseline"}};
  std::vector<std::string> transform_columns{"age", "creatinine", "lactate", "hr"};
  double p_value_cutoff = 0.1;
  double vif_cutoff = 5.0;
  double mi_cutoff = 0.01;
  std::size_t target_feature_count = 74;
  // Domains admitted before the statistical screens; empty admits all.
  std::vector<DomainTag> domain_whitelist;

  void validate() const;
};

std::string interaction_name(std::string_view a, std::string_view b);

// Appends a__x__b product columns tagged derived. Missing factor -> missing product.
CohortTable build_interactions(const CohortTable& table,
                               const std::vector<std::pair<std::string, std::string>>& pairs);

// Appends x__sq, x__sqrt, x__log1p per listed column (natural log).
// Negative values raise DataError naming row and column.
CohortTable build_power_transforms(const CohortTable& table, const std::vector<std::string>& columns);

// F-test p-value of the simple linear regression y ~ x.
double univariate_p_value(const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::Ref<const Eigen::VectorXd>& y);

// 1 / (1 - R^2) of `column` regressed on every other column. R^2 = 1 gives
// +infinity. A constant column raises UndefinedVifError.
double compute_vif(const CohortTable& table, std::string_view column);

// VIF of every column of a complete matrix (same semantics as compute_vif).
std::vector<double> vif_all(const Eigen::Ref<const Eigen::MatrixXd>& x);

// Number of equal-frequency bins used per axis: ceil(sqrt(n / 5)).
int mi_bin_count(Eigen::Index n);

// Equal-frequency histogram estimate of I(X;Y) in nats with the
// Miller-Madow correction on each entropy term, clamped at 0.
double estimate_mutual_information(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y);

struct SelectionDrop {
  std::string column;
  std::string stage;  // "whitelist" | "univariate" | "vif" | "mutual_information" | "cap"
  double statistic = 0.0;
};

struct SelectionAudit {
  std::size_t candidates = 0;
  std::size_t after_whitelist = 0;
  std::size_t after_univariate = 0;
  std::size_t after_vif = 0;
  std::size_t after_mutual_information = 0;
  std::vector<SelectionDrop> drops;
  std::vector<std::string> selected;
};

struct SelectionResult {
  CohortTable table;
  SelectionAudit audit;
};

// Whitelist -> univariate screen -> VIF elimination -> MI screen -> top-k by MI.
// The table must be complete (post imputation).
SelectionResult select_features(const CohortTable& table, const FeaturePipelineConfig& cfg);

// Lowercase; every run of non-alphanumerics becomes one underscore.
std::string normalize_name(std::string_view name);

struct AlignmentMap {
  std::map<std::string, std::string> direct_matches;  // external -> reference
  std::map<std::string, double> defaulted;            // reference -> fill value
  std::vector<std::string> unmatched_external;
  double coverage = 0.0;
};

struct AlignmentResult {
  CohortTable table;
  AlignmentMap map;
};

// Projects `external` onto the reference columns, in reference order.
// Absent features are filled with `clinical_defaults`, else
// `training_medians`, else 0.
AlignmentResult align_features(const CohortTable& external,
                               const std::vector<ColumnSpec>& reference_schema,
                               const std::map<std::string, double>& clinical_defaults,
                               const std::map<std::string, double>& training_medians = {});

}  // namespace bpstack
