#pragma once

#include <string>
#include <vector>

#include "bpstack/cohort.hpp"

namespace bpstack {

// Lowercase substrings that mark a feature as target-contaminated.
struct LeakagePatternSet {
  std::vector<std::string> patterns{"verify", "sbp_mean", "dbp_mean", "map_mean"};
  std::vector<std::string> extra_patterns;

  // patterns + extra_patterns, lowercased. Throws ConfigError when empty.
  std::vector<std::string> all() const;
};

struct LeakageReport {
  std::vector<std::string> removed_columns;
  std::size_t total_features = 0;
  double removal_rate = 0.0;
  std::size_t post_validation_matches = 0;
};

std::string to_lower(std::string_view s);

// True when any pattern is a substring of lowercase(name).
bool matches_leakage_pattern(std::string_view name, const std::vector<std::string>& patterns);

struct LeakageResult {
  CohortTable table;
  LeakageReport report;
};

// Drops every feature column whose lowercased name contains a pattern, then
// re-scans the survivors. Targets and group ids live outside the feature
// matrix and are never scanned. A surviving match raises InvariantError.
LeakageResult remove_leakage(const CohortTable& table, const LeakagePatternSet& patterns = {});

}  // namespace bpstack
