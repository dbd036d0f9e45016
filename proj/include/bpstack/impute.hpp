#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bpstack/cohort.hpp"

namespace bpstack {

struct ImputePolicy {
  int mice_max_iter = 50;
  double mice_tol = 1e-4;
  int knn_k = 5;
  double missing_rate_cutoff = 0.7;
  std::map<std::string, double> clinical_defaults;

  void validate() const;  // throws ConfigError
};

enum class ImputeStrategy { Mice, Median, ClinicalDefault };
std::string_view to_string(ImputeStrategy s);

// ClinicalDefault when the column has a configured default, else Median
// above the missing-rate cutoff, else MICE.
ImputeStrategy select_strategy(const ColumnSpec& column, double missing_rate,
                               const ImputePolicy& policy);

struct MiceResult {
  CohortTable table;
  int iterations_used = 0;
  double final_delta = 0.0;          // max change / column SD in the last sweep
  std::vector<double> delta_history;  // one entry per sweep
  bool ridge_fallback = false;
};

// Chained-equations regression imputation. Missing cells start at the
// column median (or `initial` when given, keyed by column name); each sweep
// regresses every incomplete column, in schema order, on all other columns
// and overwrites only its missing cells with the fitted values.
MiceResult mice_impute(const CohortTable& table, const ImputePolicy& policy,
                       const std::map<std::string, double>* initial = nullptr);

// Each missing cell becomes the mean of the k nearest rows observing that
// column; distance is the NaN-aware Euclidean distance over standardised,
// mutually observed columns. No eligible neighbour -> column median.
CohortTable knn_impute(const CohortTable& table, int k);

struct ImputationResult {
  CohortTable table;
  std::map<std::string, ImputeStrategy> strategies;
  std::map<std::string, double> medians;  // observed medians used for fills
  int mice_iterations = 0;
  double mice_final_delta = 0.0;
};

// Multi-strategy driver: clinical defaults and medians first, MICE for the
// rest. `reference_medians` (from a training cohort) replace the table's own
// medians when given.
ImputationResult impute(const CohortTable& table, const ImputePolicy& policy,
                        const std::map<std::string, double>* reference_medians = nullptr);

struct ColumnAudit {
  std::string name;
  std::optional<ImputeStrategy> strategy;
  double missing_rate = 0.0;
  double ks_statistic = 0.0;
  double ks_p_value = 1.0;
  double disagreement = 0.0;  // mean |mice - knn| / IQR over imputed cells
  bool flagged = false;       // disagreement >= 0.10
};

struct ImputationAudit {
  std::vector<ColumnAudit> columns;
  double mean_disagreement = 0.0;
  double max_disagreement = 0.0;
  std::size_t flagged_count = 0;
  double min_ks_p_value = 1.0;
};

inline constexpr double kDisagreementThreshold = 0.10;

ImputationAudit validate_imputation(const CohortTable& before, const CohortTable& after_mice,
                                    const CohortTable& after_knn,
                                    const std::map<std::string, ImputeStrategy>& strategies = {});

}  // namespace bpstack
