#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bpstack {

enum class ColumnKind { Numeric, Binary, Categorical };

enum class DomainTag { Vitals, Laboratory, Medication, Temporal, Derived, Demographic, Target, Id };

std::string_view to_string(ColumnKind kind);
std::string_view to_string(DomainTag tag);
ColumnKind parse_column_kind(std::string_view s);
DomainTag parse_domain_tag(std::string_view s);

struct ValidRange {
  double min = 0.0;
  double max = 0.0;

  bool operator==(const ValidRange&) const = default;
};

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  DomainTag domain = DomainTag::Derived;
  std::string unit;
  std::optional<ValidRange> valid_range;

  bool operator==(const ColumnSpec&) const = default;
};

// Column declarations plus the optional inclusion-filter columns.
struct CohortSchema {
  std::vector<ColumnSpec> columns;
  std::string age_column = "age";
  std::optional<std::string> stay_length_column;  // hours
  double min_stay_hours = 24.0;
  std::optional<std::string> measurement_count_column;
  int min_measurements = 2;
};

enum class Target : int { Sbp = 0, Dbp = 1 };
inline constexpr std::array<Target, 2> kTargets{Target::Sbp, Target::Dbp};
std::string_view to_string(Target t);

inline constexpr double kSbpMin = 30.0;
inline constexpr double kSbpMax = 300.0;
inline constexpr double kDbpMin = 15.0;
inline constexpr double kDbpMax = 200.0;

inline constexpr const char* kSbpColumn = "sbp_target";
inline constexpr const char* kDbpColumn = "dbp_target";
inline constexpr const char* kGroupColumn = "group_id";

// Patient-level table. Cells are NaN when missing. Immutable once built;
// every transformation returns a new table.
class CohortTable {
 public:
  CohortTable() = default;
  // Throws DataError when an invariant (finite, plausible targets;
  // non-empty group ids; unique column names) does not hold.
  CohortTable(std::vector<ColumnSpec> schema, Eigen::MatrixXd values, Eigen::MatrixXd targets,
              std::vector<std::string> group_ids, std::string source_tag = "internal");

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }

  const std::vector<ColumnSpec>& schema() const { return schema_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const Eigen::MatrixXd& targets() const { return targets_; }
  Eigen::VectorXd target(Target t) const { return targets_.col(static_cast<int>(t)); }
  const std::vector<std::string>& group_ids() const { return group_ids_; }
  const std::string& source_tag() const { return source_tag_; }

  std::optional<Eigen::Index> find(std::string_view name) const;
  Eigen::Index index_of(std::string_view name) const;
  std::vector<std::string> column_names() const;

  double missing_rate(Eigen::Index col) const;
  Eigen::Index missing_count() const;
  Eigen::Index feature_count() const;  // columns not tagged id/target

  // n >= 10 x d over feature columns.
  bool sample_size_adequate() const { return rows() >= 10 * feature_count(); }

  CohortTable with_columns(std::vector<ColumnSpec> schema, Eigen::MatrixXd values) const;
  CohortTable with_source_tag(std::string tag) const;
  CohortTable select_rows(std::span<const Eigen::Index> rows) const;
  CohortTable select_columns(std::span<const Eigen::Index> cols) const;
  CohortTable drop_columns(std::span<const std::string> names) const;
  // Removes id-tagged columns (filter metadata such as stay length).
  CohortTable feature_view() const;

 private:
  std::vector<ColumnSpec> schema_;
  Eigen::MatrixXd values_;
  Eigen::MatrixXd targets_;
  std::vector<std::string> group_ids_;
  std::string source_tag_;
};

struct FilterReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::map<std::string, std::size_t> dropped;  // predicate -> count
  std::size_t cells_out_of_range = 0;           // set to missing
  std::vector<std::string> warnings;
};

struct LoadResult {
  CohortTable table;
  FilterReport report;
};

// Reads a cohort CSV, applies the inclusion predicates and valid-range
// masking. Columns absent from the schema are read as numeric/derived.
LoadResult load_cohort(const std::filesystem::path& csv, const CohortSchema& schema,
                       std::string source_tag = "internal");
LoadResult parse_cohort_csv(std::string_view text, const CohortSchema& schema,
                            std::string source_tag = "internal");

std::string format_cohort_csv(const CohortTable& table);
void write_cohort_csv(const CohortTable& table, const std::filesystem::path& path);

CohortSchema read_schema_yaml(const std::filesystem::path& path);
CohortSchema parse_schema_yaml(std::string_view text);
std::string format_schema_yaml(const CohortSchema& schema);

// Shortest round-trip decimal form; empty for NaN.
std::string format_number(double v);

enum class Stratum { Hypotension, Normal, Prehypertension, Hypertension };
inline constexpr std::array<Stratum, 4> kStrata{Stratum::Hypotension, Stratum::Normal,
                                                Stratum::Prehypertension, Stratum::Hypertension};
std::string_view to_string(Stratum s);

// <90 | [90,120) | [120,140) | >=140 mmHg. Throws DomainError on non-finite input.
Stratum stratum_of(double sbp);

// ---------------------------------------------------------------------------
// Synthetic dual-institution cohorts.
//
// Per patient a latent hemodynamic tone z ~ N(0,1) and a shock indicator
// (Bernoulli(hypotension_fraction)) drive baseline pressures, vitals, labs
// and medications. Targets are a fixed function of the observed columns
// (see synthetic_ground_truth) plus Gaussian noise with SD
// noise_scale * {6, 5} mmHg for {SBP, DBP}.
//
// The external cohort draws from the same model with shift s:
//   medications  vasopressor rate +0.15s, drug counts x(1+0.8s)
//   laboratory   creatinine x(1+0.25s), lactate +0.4s, sodium -1.5s, bun x(1+0.2s)
//   vitals       hr +3s, hr_sd x(1+0.3s), spo2 -0.5s, temp +0.1s
//   demographic  age +2s
//   targets      noise SD x(1+0.25s)  (measurement-protocol difference)
// and renames round(min(0.3, 0.1s) * d) columns from kSyntheticRenames,
// alternating cosmetic renames (recoverable by name normalisation) and
// true renames (not recoverable).
// Four target-contaminated columns (sbp_mean_24h, dbp_mean_24h,
// map_mean_24h, sbp_verify) are always emitted.
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  std::size_t n_patients = 1000;
  std::uint64_t seed = 42;
  double shift_magnitude = 0.0;
  double missing_rate = 0.1;
  double hypotension_fraction = 0.05;
  double noise_scale = 1.0;
};

void validate(const SyntheticConfig& cfg);

struct SyntheticPair {
  CohortTable internal;
  CohortTable external;
  CohortSchema schema;
  Eigen::MatrixXd internal_truth;  // noise-free targets, n x 2
  Eigen::MatrixXd external_truth;
};

inline constexpr double kSyntheticSbpNoise = 6.0;
inline constexpr double kSyntheticDbpNoise = 5.0;

struct Rename {
  const char* from;
  const char* to;
  bool cosmetic;
};
inline constexpr std::array<Rename, 10> kSyntheticRenames{{
    {"hr_sd", "HR SD", true},
    {"bicarbonate", "hco3", false},
    {"spo2", "SpO2", true},
    {"bun", "urea_nitrogen", false},
    {"rr_sd", "RR.SD", true},
    {"troponin", "trop_t", false},
    {"potassium", "Potassium", true},
    {"lability_events", "bp_lability", false},
    {"ph", "pH", true},
    {"hr_trend", "hr_slope", false},
}};

CohortSchema synthetic_schema();
SyntheticPair generate_synthetic_pair(const SyntheticConfig& cfg);

// Noise-free targets recomputed from a complete synthetic table's columns.
Eigen::MatrixXd synthetic_ground_truth(const CohortTable& table);

}  // namespace bpstack
