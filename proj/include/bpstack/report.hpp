#pragma once

#include <filesystem>
#include <string>

#include "bpstack/pipeline.hpp"
#include "json.hpp"

namespace bpstack {

using nlohmann::json;

inline constexpr int kReportFormatVersion = 1;

json to_json_value(const FilterReport& r);
json to_json_value(const LeakageReport& r);
json to_json_value(const ImputationAudit& a);
json to_json_value(const SelectionAudit& a);
json to_json_value(const TuningResult& r, const SearchSpace& space);
json to_json_value(const TargetReport& r);
json to_json_value(const ShiftProfile& s);
json to_json_value(const AlignmentMap& m);
json to_json_value(const AblationReport& r);
json to_json_value(const ExternalValidation& v);

// Copy of a report with the wall-clock fields removed.
json strip_timestamps(json report);

// Aligned plain-text tables: internal metrics, strata, external comparison.
std::string render_text(const json& report);

// Scatter, Bland-Altman and interval-band series, one CSV per target and plot.
void write_plot_csvs(const std::filesystem::path& dir, const Eigen::MatrixXd& y,
                     const PredictionSet& pred);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace bpstack
