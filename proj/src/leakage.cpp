#include "bpstack/leakage.hpp"

#include <algorithm>
#include <cctype>

#include "bpstack/error.hpp"

namespace bpstack {

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> LeakagePatternSet::all() const {
  std::vector<std::string> out;
  for (const auto* list : {&patterns, &extra_patterns}) {
    for (const auto& p : *list) {
      if (p.empty()) continue;
      auto lower = to_lower(p);
      if (std::find(out.begin(), out.end(), lower) == out.end()) out.push_back(std::move(lower));
    }
  }
  if (out.empty()) throw ConfigError("leakage pattern set is empty");
  return out;
}

bool matches_leakage_pattern(std::string_view name, const std::vector<std::string>& patterns) {
  const auto lower = to_lower(name);
  return std::any_of(patterns.begin(), patterns.end(), [&](const std::string& p) {
    return lower.find(p) != std::string::npos;
  });
}

LeakageResult remove_leakage(const CohortTable& table, const LeakagePatternSet& patterns) {
  const auto pats = patterns.all();
  LeakageReport report;
  std::vector<std::string> marked;
  for (const auto& c : table.schema()) {
    if (c.domain == DomainTag::Id || c.domain == DomainTag::Target) continue;
    ++report.total_features;
    if (matches_leakage_pattern(c.name, pats)) marked.push_back(c.name);
  }
  CohortTable clean = table.drop_columns(marked);

  for (const auto& c : clean.schema()) {
    if (c.domain == DomainTag::Id || c.domain == DomainTag::Target) continue;
    if (matches_leakage_pattern(c.name, pats)) ++report.post_validation_matches;
  }
  if (report.post_validation_matches != 0) {
    throw InvariantError("leakage validation found " +
                         std::to_string(report.post_validation_matches) +
                         " matching columns after removal");
  }
  report.removal_rate = report.total_features == 0
                            ? 0.0
                            : static_cast<double>(marked.size()) /
                                  static_cast<double>(report.total_features);
  report.removed_columns = std::move(marked);
  return {std::move(clean), std::move(report)};
}

}  // namespace bpstack
