#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bpstack/cohort.hpp"

namespace bpstack {

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

struct CoreMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  double r2 = 0.0;  // NaN when y_true is constant
  bool r2_defined = true;
  double mean_bias = 0.0;  // mean(pred - true)
  double error_sd = 0.0;   // population SD of (pred - true)
};

CoreMetrics core_metrics(const VectorRef& y_true, const VectorRef& y_pred);

struct WithinPercentages {
  double within_5 = 0.0;
  double within_10 = 0.0;
  double within_15 = 0.0;
};

// Percent of rows with |pred - true| <= 5, 10, 15 mmHg.
WithinPercentages within_percentages(const VectorRef& y_true, const VectorRef& y_pred);

enum class BhsGrade { A, B, C, D };
std::string_view to_string(BhsGrade g);

// Percent inputs. A: 60/85/95, B: 50/75/90, C: 40/65/85, else D.
BhsGrade bhs_grade(double within_5, double within_10, double within_15);

// |bias| <= 5 and sd <= 8, both inclusive.
bool aami_check(double mean_bias, double error_sd);

struct BlandAltman {
  double bias = 0.0;
  double loa_lower = 0.0;
  double loa_upper = 0.0;
  double width = 0.0;
  bool acceptable = true;  // width < 15 mmHg
};

BlandAltman bland_altman(const VectorRef& y_true, const VectorRef& y_pred);

inline constexpr double kCoverageLow = 0.75;
inline constexpr double kCoverageHigh = 0.85;

// Fraction of y inside the closed interval [lower, upper].
double coverage_probability(const VectorRef& y, const VectorRef& lower, const VectorRef& upper);

inline constexpr double kEquityThreshold = 1.2;
inline constexpr std::size_t kEquityMinGroup = 10;

struct EquityResult {
  double ratio = 1.0;
  bool pass = true;  // ratio < 1.2
  std::map<std::string, double> rmse;
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> low_n;  // groups with fewer than 10 rows
};

EquityResult equity_ratio(const std::map<std::string, double>& rmse_by_group,
                          const std::map<std::string, std::size_t>& counts = {});

struct EquitySpec {
  std::string column;
  std::optional<double> threshold;  // split at threshold, else one group per value
};

// Subgroup label per row, e.g. "age<65" / "age>=65" or "sex=1".
std::vector<std::string> subgroup_labels(const CohortTable& table, const EquitySpec& spec);

EquityResult equity_by_labels(const VectorRef& y_true, const VectorRef& y_pred,
                              const std::vector<std::string>& labels);

inline constexpr int kDefaultKlBins = 32;

// Shared equal-width bins over the pooled range, (count + 1) / (n + bins)
// smoothing on both histograms. A constant pooled sample gives 0.
double kl_divergence(const VectorRef& p_sample, const VectorRef& q_sample, int bins = kDefaultKlBins);

// Discrete KL(P || Q) of two normalised histograms, no smoothing.
double kl_from_histograms(const std::vector<double>& p, const std::vector<double>& q);

// (external - internal) / internal * 100.
double generalizability(double rmse_internal, double rmse_external);

struct StratumSummary {
  std::size_t n = 0;
  WithinPercentages within;
  BhsGrade grade = BhsGrade::D;
  bool unreliable = false;  // n < 30
};

struct StratifiedSummary {
  std::map<Stratum, StratumSummary> strata;  // empty strata omitted
  double hypotension_sensitivity = 0.0;
  std::size_t hypotension_n = 0;
};

// Rows are grouped by true SBP; sensitivity counts true-hypotensive rows
// whose predicted SBP is below 90.
StratifiedSummary stratified_report(const VectorRef& sbp_true, const VectorRef& sbp_pred,
                                    const VectorRef& y_true, const VectorRef& y_pred);

struct DegradationTest {
  double mean_difference = 0.0;  // mean external - mean internal squared error
  double p_value = 1.0;          // one-sided, external not worse
  int resamples = 0;
};

// Two-sample bootstrap on squared errors, each cohort resampled separately.
DegradationTest bootstrap_degradation(const VectorRef& internal_sq_err,
                                      const VectorRef& external_sq_err, int resamples,
                                      std::uint64_t seed);

struct TargetReport {
  CoreMetrics core;
  WithinPercentages within;
  BhsGrade grade = BhsGrade::D;
  bool aami_pass = false;
  BlandAltman bland_altman;
  double coverage = 0.0;
  bool coverage_in_band = false;
  double mean_interval_width = 0.0;
  std::size_t interval_swaps = 0;
  StratifiedSummary stratified;
  std::map<std::string, EquityResult> equity;
};

struct ShiftProfile {
  std::map<std::string, double> kl;  // per shared feature
  std::map<std::string, double> domain_mean_kl;
  double mean_kl = 0.0;
  double alignment_coverage = 1.0;
};

// KL per feature present in both tables (matched by name), grouped by the
// internal table's domain tags.
ShiftProfile shift_profile(const CohortTable& internal, const CohortTable& external,
                           int bins = kDefaultKlBins);

}  // namespace bpstack
