#include "bpstack/report.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bpstack/error.hpp"

namespace bpstack {

namespace {

constexpr std::array<const char*, 2> kKeys{"sbp", "dbp"};

json equity_json(const EquityResult& e) {
  return {{"ratio", e.ratio}, {"pass", e.pass}, {"rmse", e.rmse}, {"counts", e.counts}, {"low_n", e.low_n}};
}

json degradation_json(const DegradationTest& d) {
  return {{"mean_difference", d.mean_difference}, {"p_value", d.p_value}, {"resamples", d.resamples}};
}

std::string fixed(const json& v, int digits = 2) {
  if (!v.is_number()) return v.is_null() ? "n/a" : v.dump();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v.get<double>());
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' ');
}

std::string yes_no(const json& v) { return v.is_boolean() ? (v.get<bool>() ? "pass" : "fail") : "n/a"; }

}  // namespace

json to_json_value(const FilterReport& r) {
  return {{"rows_read", r.rows_read},
          {"rows_kept", r.rows_kept},
          {"dropped", r.dropped},
          {"cells_out_of_range", r.cells_out_of_range},
          {"warnings", r.warnings}};
}

json to_json_value(const LeakageReport& r) {
  return {{"removed_columns", r.removed_columns},
          {"total_features", r.total_features},
          {"removal_rate", r.removal_rate},
          {"post_validation_matches", r.post_validation_matches}};
}

json to_json_value(const ImputationAudit& a) {
  json cols = json::array();
  for (const auto& c : a.columns) {
    cols.push_back({{"name", c.name},
                    {"strategy", c.strategy ? std::string(to_string(*c.strategy)) : "none"},
                    {"missing_rate", c.missing_rate},
                    {"ks_statistic", c.ks_statistic},
                    {"ks_p_value", c.ks_p_value},
                    {"disagreement", c.disagreement},
                    {"flagged", c.flagged}});
  }
  return {{"columns", cols},
          {"mean_disagreement", a.mean_disagreement},
          {"max_disagreement", a.max_disagreement},
          {"flagged_count", a.flagged_count},
          {"min_ks_p_value", a.min_ks_p_value}};
}

json to_json_value(const SelectionAudit& a) {
  json drops = json::array();
  for (const auto& d : a.drops) {
    drops.push_back({{"column", d.column}, {"stage", d.stage}, {"statistic", d.statistic}});
  }
  return {{"candidates", a.candidates},
          {"after_whitelist", a.after_whitelist},
          {"after_univariate", a.after_univariate},
          {"after_vif", a.after_vif},
          {"after_mutual_information", a.after_mutual_information},
          {"drops", drops},
          {"selected", a.selected}};
}

json to_json_value(const TuningResult& r, const SearchSpace& space) {
  auto named = [&](const std::vector<double>& p) {
    json o = json::object();
    for (std::size_t i = 0; i < p.size() && i < space.dims.size(); ++i) o[space.dims[i].name] = p[i];
    return o;
  };
  json trials = json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"point", named(t.point)}, {"value", std::isfinite(t.value) ? json(t.value) : json()}});
  }
  return {{"best_point", named(r.best_point)}, {"best_value", r.best_value}, {"trials", trials}};
}

json to_json_value(const TargetReport& r) {
  json strata = json::object();
  for (const auto& [s, v] : r.stratified.strata) {
    strata[std::string(to_string(s))] = {{"n", v.n},
                                         {"within_5", v.within.within_5},
                                         {"within_10", v.within.within_10},
                                         {"within_15", v.within.within_15},
                                         {"bhs_grade", std::string(to_string(v.grade))},
                                         {"unreliable", v.unreliable}};
  }
  json equity = json::object();
  for (const auto& [k, e] : r.equity) equity[k] = equity_json(e);
  return {{"rmse", r.core.rmse},
          {"mae", r.core.mae},
          {"r2", r.core.r2_defined ? json(r.core.r2) : json()},
          {"mean_bias", r.core.mean_bias},
          {"error_sd", r.core.error_sd},
          {"within_5", r.within.within_5},
          {"within_10", r.within.within_10},
          {"within_15", r.within.within_15},
          {"bhs_grade", std::string(to_string(r.grade))},
          {"aami_pass", r.aami_pass},
          {"bland_altman",
           {{"bias", r.bland_altman.bias},
            {"loa_lower", r.bland_altman.loa_lower},
            {"loa_upper", r.bland_altman.loa_upper},
            {"width", r.bland_altman.width},
            {"acceptable", r.bland_altman.acceptable}}},
          {"coverage", r.coverage},
          {"coverage_in_band", r.coverage_in_band},
          {"mean_interval_width", r.mean_interval_width},
          {"interval_swaps", r.interval_swaps},
          {"strata", strata},
          {"hypotension_sensitivity", r.stratified.hypotension_sensitivity},
          {"hypotension_n", r.stratified.hypotension_n},
          {"equity", equity}};
}

json to_json_value(const ShiftProfile& s) {
  return {{"kl", s.kl},
          {"domain_mean_kl", s.domain_mean_kl},
          {"mean_kl", s.mean_kl},
          {"alignment_coverage", s.alignment_coverage}};
}

json to_json_value(const AlignmentMap& m) {
  return {{"direct_matches", m.direct_matches},
          {"defaulted", m.defaulted},
          {"unmatched_external", m.unmatched_external},
          {"coverage", m.coverage}};
}

json to_json_value(const AblationReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    json o{{"name", e.name}, {"kind", e.kind}, {"removed_features", e.removed_features},
           {"skipped", e.skipped}};
    if (!e.note.empty()) o["note"] = e.note;
    if (!e.skipped) {
      for (std::size_t t = 0; t < 2; ++t) {
        o[kKeys[t]] = {{"rmse", e.rmse[t]},
                       {"impact", e.impact[t]},
                       {"impact_pct", e.impact_pct[t]},
                       {"contribution", -e.impact[t]}};
      }
    }
    entries.push_back(o);
  }
  return {{"full_rmse", {{"sbp", r.full_rmse[0]}, {"dbp", r.full_rmse[1]}}}, {"entries", entries}};
}

json to_json_value(const ExternalValidation& v) {
  json j;
  j["alignment"] = to_json_value(v.alignment);
  j["low_alignment_warning"] = v.low_alignment;
  j["shift"] = to_json_value(v.shift);
  for (std::size_t t = 0; t < 2; ++t) {
    auto r = to_json_value(v.reports[t]);
    r["internal_rmse"] = v.internal_rmse[t];
    r["generalizability_pct"] = v.generalizability[t];
    r["degradation_test"] = degradation_json(v.degradation[t]);
    j[kKeys[t]] = r;
  }
  return j;
}

json strip_timestamps(json report) {
  report.erase("generated_at");
  return report;
}

std::string render_text(const json& report) {
  std::ostringstream out;
  const auto& cv = report.value("cv_metrics", json::object());
  if (cv.contains("sbp")) {
    out << "Internal validation (" << cv.value("k", 0) << "-fold grouped CV)\n";
    out << pad("Metric", 22) << pad("SBP", 12) << "DBP\n";
    auto row = [&](const char* label, const char* key, int digits) {
      out << pad(label, 22) << pad(fixed(cv["sbp"][key], digits), 12) << fixed(cv["dbp"][key], digits) << "\n";
    };
    row("RMSE (mmHg)", "rmse", 2);
    row("MAE (mmHg)", "mae", 2);
    row("R2", "r2", 3);
    row("Mean bias (mmHg)", "mean_bias", 2);
    row("Error SD (mmHg)", "error_sd", 2);
    row("Within 5 mmHg (%)", "within_5", 1);
    row("Within 10 mmHg (%)", "within_10", 1);
    row("Within 15 mmHg (%)", "within_15", 1);
    out << pad("BHS grade", 22) << pad(cv["sbp"]["bhs_grade"].get<std::string>(), 12)
        << cv["dbp"]["bhs_grade"].get<std::string>() << "\n";
    out << pad("AAMI", 22) << pad(yes_no(cv["sbp"]["aami_pass"]), 12) << yes_no(cv["dbp"]["aami_pass"]) << "\n";
    row("Coverage (80% PI)", "coverage", 3);
    row("Mean PI width", "mean_interval_width", 2);
    out << "\nSBP by range\n" << pad("Stratum", 18) << pad("n", 8) << pad("Within 5", 10) << "Grade\n";
    for (const auto& [name, s] : cv["sbp"]["strata"].items()) {
      out << pad(name, 18) << pad(std::to_string(s["n"].get<std::size_t>()), 8)
          << pad(fixed(s["within_5"], 1), 10) << s["bhs_grade"].get<std::string>()
          << (s["unreliable"].get<bool>() ? " (n<30)" : "") << "\n";
    }
  }
  if (report.contains("external")) {
    const auto& ext = report["external"];
    out << "\nExternal validation\n"
        << pad("Metric", 16) << pad("Internal", 11) << pad("External", 11) << "Change\n";
    for (const char* k : kKeys) {
      const auto& t = ext[k];
      out << pad(std::string(k == kKeys[0] ? "SBP" : "DBP") + " RMSE", 16) << pad(fixed(t["internal_rmse"]), 11)
          << pad(fixed(t["rmse"]), 11) << (t["generalizability_pct"].get<double>() >= 0 ? "+" : "")
          << fixed(t["generalizability_pct"], 1) << "%\n";
    }
    out << "Mean KL " << fixed(ext["shift"]["mean_kl"], 3) << ", alignment coverage "
        << fixed(ext["shift"]["alignment_coverage"], 2) << "\n";
  }
  if (report.contains("ablation")) {
    out << "\nAblation\n" << pad("Removed", 18) << pad("SBP dRMSE", 12) << pad("SBP %", 10) << "DBP dRMSE\n";
    for (const auto& e : report["ablation"]["entries"]) {
      if (e["skipped"].get<bool>()) {
        out << pad(e["name"].get<std::string>(), 18) << "skipped\n";
        continue;
      }
      out << pad(e["name"].get<std::string>(), 18) << pad(fixed(e["sbp"]["impact"], 3), 12)
          << pad(fixed(e["sbp"]["impact_pct"], 1), 10) << fixed(e["dbp"]["impact"], 3) << "\n";
    }
  }
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

void write_plot_csvs(const std::filesystem::path& dir, const Eigen::MatrixXd& y, const PredictionSet& pred) {
  for (std::size_t t = 0; t < 2; ++t) {
    const auto& p = pred.targets[t];
    const Eigen::VectorXd yt = y.col(static_cast<Eigen::Index>(t));
    std::string scatter = "y_true,y_pred\n";
    std::string ba = "mean,difference\n";
    for (Eigen::Index i = 0; i < yt.size(); ++i) {
      scatter += format_number(yt[i]) + "," + format_number(p.point[i]) + "\n";
      ba += format_number((yt[i] + p.point[i]) / 2.0) + "," + format_number(p.point[i] - yt[i]) + "\n";
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(yt.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p.point[a] < p.point[b]; });
    std::string band = "rank,y_true,y_pred,lower,upper\n";
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto i = order[r];
      band += std::to_string(r) + "," + format_number(yt[i]) + "," + format_number(p.point[i]) + "," +
              format_number(p.lower[i]) + "," + format_number(p.upper[i]) + "\n";
    }
    const std::string k = kKeys[t];
    write_text_file(dir / ("scatter_" + k + ".csv"), scatter);
    write_text_file(dir / ("bland_altman_" + k + ".csv"), ba);
    write_text_file(dir / ("intervals_" + k + ".csv"), band);
  }
}

}  // namespace bpstack
