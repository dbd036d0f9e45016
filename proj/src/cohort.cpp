#include "bpstack/cohort.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <spdlog/spdlog.h>
#include <sstream>
#include <unordered_map>

#include "bpstack/error.hpp"
#include "bpstack/rng.hpp"

namespace bpstack {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::string_view to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Binary: return "binary";
    case ColumnKind::Categorical: return "categorical";
  }
  return "numeric";
}

std::string_view to_string(DomainTag tag) {
  switch (tag) {
    case DomainTag::Vitals: return "vitals";
    case DomainTag::Laboratory: return "laboratory";
    case DomainTag::Medication: return "medication";
    case DomainTag::Temporal: return "temporal";
    case DomainTag::Derived: return "derived";
    case DomainTag::Demographic: return "demographic";
    case DomainTag::Target: return "target";
    case DomainTag::Id: return "id";
  }
  return "derived";
}

ColumnKind parse_column_kind(std::string_view s) {
  for (auto k : {ColumnKind::Numeric, ColumnKind::Binary, ColumnKind::Categorical}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown column kind '" + std::string(s) + "'");
}

DomainTag parse_domain_tag(std::string_view s) {
  for (auto t : {DomainTag::Vitals, DomainTag::Laboratory, DomainTag::Medication,
                 DomainTag::Temporal, DomainTag::Derived, DomainTag::Demographic,
                 DomainTag::Target, DomainTag::Id}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown domain tag '" + std::string(s) + "'");
}

std::string_view to_string(Target t) { return t == Target::Sbp ? "sbp" : "dbp"; }

// ---------------------------------------------------------------------------
// CohortTable

CohortTable::CohortTable(std::vector<ColumnSpec> schema, Eigen::MatrixXd values,
                         Eigen::MatrixXd targets, std::vector<std::string> group_ids,
                         std::string source_tag)
    : schema_(std::move(schema)),
      values_(std::move(values)),
      targets_(std::move(targets)),
      group_ids_(std::move(group_ids)),
      source_tag_(std::move(source_tag)) {
  if (static_cast<Eigen::Index>(schema_.size()) != values_.cols()) {
    throw DataError("schema has " + std::to_string(schema_.size()) + " columns, matrix has " +
                    std::to_string(values_.cols()));
  }
  if (targets_.cols() != 2 || targets_.rows() != values_.rows() ||
      static_cast<Eigen::Index>(group_ids_.size()) != values_.rows()) {
    throw DataError("targets/group ids do not match row count");
  }
  std::set<std::string_view> names;
  for (const auto& c : schema_) {
    if (!names.insert(c.name).second) throw DataError("duplicate column name '" + c.name + "'");
    if (c.valid_range && !(c.valid_range->min < c.valid_range->max)) {
      throw DataError("column '" + c.name + "' has an empty valid range");
    }
  }
  for (Eigen::Index i = 0; i < rows(); ++i) {
    const double sbp = targets_(i, 0);
    const double dbp = targets_(i, 1);
    if (!std::isfinite(sbp) || !std::isfinite(dbp)) {
      throw DataError("row " + std::to_string(i) + " has a non-finite target");
    }
    if (sbp < kSbpMin || sbp > kSbpMax || dbp < kDbpMin || dbp > kDbpMax) {
      throw DataError("row " + std::to_string(i) + " has an implausible target");
    }
    if (group_ids_[static_cast<std::size_t>(i)].empty()) {
      throw DataError("row " + std::to_string(i) + " has an empty group id");
    }
  }
}

std::optional<Eigen::Index> CohortTable::find(std::string_view name) const {
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    if (schema_[j].name == name) return static_cast<Eigen::Index>(j);
  }
  return std::nullopt;
}

Eigen::Index CohortTable::index_of(std::string_view name) const {
  if (auto j = find(name)) return *j;
  throw DataError("no column named '" + std::string(name) + "'");
}

std::vector<std::string> CohortTable::column_names() const {
  std::vector<std::string> out;
  out.reserve(schema_.size());
  for (const auto& c : schema_) out.push_back(c.name);
  return out;
}

double CohortTable::missing_rate(Eigen::Index col) const {
  if (rows() == 0) return 0.0;
  return static_cast<double>(values_.col(col).array().isNaN().count()) /
         static_cast<double>(rows());
}

Eigen::Index CohortTable::missing_count() const { return values_.array().isNaN().count(); }

Eigen::Index CohortTable::feature_count() const {
  return std::count_if(schema_.begin(), schema_.end(), [](const ColumnSpec& c) {
    return c.domain != DomainTag::Id && c.domain != DomainTag::Target;
  });
}

CohortTable CohortTable::with_columns(std::vector<ColumnSpec> schema, Eigen::MatrixXd values) const {
  return CohortTable(std::move(schema), std::move(values), targets_, group_ids_, source_tag_);
}

CohortTable CohortTable::with_source_tag(std::string tag) const {
  CohortTable t = *this;
  t.source_tag_ = std::move(tag);
  return t;
}

CohortTable CohortTable::select_rows(std::span<const Eigen::Index> rows) const {
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd v(n, cols());
  Eigen::MatrixXd t(n, 2);
  std::vector<std::string> g;
  g.reserve(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    v.row(i) = values_.row(rows[static_cast<std::size_t>(i)]);
    t.row(i) = targets_.row(rows[static_cast<std::size_t>(i)]);
    g.push_back(group_ids_[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]);
  }
  return CohortTable(schema_, std::move(v), std::move(t), std::move(g), source_tag_);
}

CohortTable CohortTable::select_columns(std::span<const Eigen::Index> cols) const {
  std::vector<ColumnSpec> s;
  Eigen::MatrixXd v(rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    s.push_back(schema_[static_cast<std::size_t>(cols[k])]);
    v.col(static_cast<Eigen::Index>(k)) = values_.col(cols[k]);
  }
  return with_columns(std::move(s), std::move(v));
}

CohortTable CohortTable::drop_columns(std::span<const std::string> names) const {
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    if (std::find(names.begin(), names.end(), schema_[j].name) == names.end()) {
      keep.push_back(static_cast<Eigen::Index>(j));
    }
  }
  return select_columns(keep);
}

CohortTable CohortTable::feature_view() const {
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < schema_.size(); ++j) {
    if (schema_[j].domain != DomainTag::Id && schema_[j].domain != DomainTag::Target) {
      keep.push_back(static_cast<Eigen::Index>(j));
    }
  }
  return select_columns(keep);
}

// ---------------------------------------------------------------------------
// CSV

std::string format_number(double v) {
  if (std::isnan(v)) return {};
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return {buf, ptr};
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line, std::size_t row) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", row);
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") return kNaN;
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("non-numeric value '" + cell + "' in column '" + column + "'", row);
  }
  return v;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace

LoadResult parse_cohort_csv(std::string_view text, const CohortSchema& schema,
                            std::string source_tag) {
  std::vector<std::string> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      auto end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      std::string line(text.substr(start, end - start));
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(std::move(line));
      start = end + 1;
    }
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("missing header row", 1);

  auto header = split_csv_line(lines[0], 1);
  for (auto& h : header) h = trim(h);
  std::optional<std::size_t> sbp_col, dbp_col, group_col;
  std::vector<std::size_t> value_cols;
  std::vector<ColumnSpec> specs;
  for (std::size_t k = 0; k < header.size(); ++k) {
    const auto& h = header[k];
    if (h == kSbpColumn) {
      sbp_col = k;
    } else if (h == kDbpColumn) {
      dbp_col = k;
    } else if (h == kGroupColumn) {
      group_col = k;
    } else {
      auto it = std::find_if(schema.columns.begin(), schema.columns.end(),
                             [&](const ColumnSpec& c) { return c.name == h; });
      if (it != schema.columns.end()) {
        specs.push_back(*it);
      } else {
        ColumnSpec c;
        c.name = h;
        specs.push_back(c);
      }
      value_cols.push_back(k);
    }
  }
  if (!sbp_col || !dbp_col || !group_col) {
    throw ParseError("header must contain sbp_target, dbp_target and group_id", 1);
  }

  LoadResult res;
  auto& rep = res.report;
  for (const auto& c : specs) {
    if (std::none_of(schema.columns.begin(), schema.columns.end(),
                     [&](const ColumnSpec& s) { return s.name == c.name; })) {
      rep.warnings.push_back("column '" + c.name + "' not declared in schema; read as numeric");
    }
  }
  auto col_of = [&](const std::optional<std::string>& name) -> std::optional<std::size_t> {
    if (!name) return std::nullopt;
    for (std::size_t j = 0; j < specs.size(); ++j) {
      if (specs[j].name == *name) return j;
    }
    return std::nullopt;
  };
  const auto age_j = col_of(schema.age_column);
  const auto stay_j = col_of(schema.stay_length_column);
  const auto count_j = col_of(schema.measurement_count_column);
  if (!count_j) {
    rep.warnings.push_back("no measurement-count column declared; >=2 BP measurement filter skipped");
  }
  if (schema.stay_length_column && !stay_j) {
    rep.warnings.push_back("stay-length column '" + *schema.stay_length_column +
                           "' absent; stay filter skipped");
  }

  for (const char* p : {"age", "sbp", "dbp", "stay_length", "bp_measurements", "group_id"}) {
    rep.dropped[p] = 0;
  }

  std::vector<std::vector<double>> kept_values;
  std::vector<std::array<double, 2>> kept_targets;
  std::vector<std::string> kept_groups;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row_no = li + 1;
    if (trim(lines[li]).empty()) continue;
    auto cells = split_csv_line(lines[li], row_no);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(cells.size()),
                       row_no);
    }
    ++rep.rows_read;
    std::vector<double> vals(specs.size());
    for (std::size_t j = 0; j < specs.size(); ++j) {
      vals[j] = parse_cell(trim(cells[value_cols[j]]), row_no, specs[j].name);
    }
    const double sbp = parse_cell(trim(cells[*sbp_col]), row_no, kSbpColumn);
    const double dbp = parse_cell(trim(cells[*dbp_col]), row_no, kDbpColumn);
    std::string group = trim(cells[*group_col]);

    // Predicates evaluated in a fixed order; a row is counted once, under the
    // first predicate it fails.
    const char* failed = nullptr;
    if (age_j && std::isfinite(vals[*age_j]) && (vals[*age_j] < 18.0 || vals[*age_j] > 89.0)) {
      failed = "age";
    } else if (!(sbp >= kSbpMin && sbp <= kSbpMax)) {
      failed = "sbp";
    } else if (!(dbp >= kDbpMin && dbp <= kDbpMax)) {
      failed = "dbp";
    } else if (stay_j && !(vals[*stay_j] >= schema.min_stay_hours)) {
      failed = "stay_length";
    } else if (count_j && !(vals[*count_j] >= schema.min_measurements)) {
      failed = "bp_measurements";
    } else if (group.empty()) {
      failed = "group_id";
    }
    if (failed) {
      ++rep.dropped[failed];
      continue;
    }
    for (std::size_t j = 0; j < specs.size(); ++j) {
      const auto& r = specs[j].valid_range;
      if (r && std::isfinite(vals[j]) && (vals[j] < r->min || vals[j] > r->max)) {
        vals[j] = kNaN;
        ++rep.cells_out_of_range;
      }
    }
    kept_values.push_back(std::move(vals));
    kept_targets.push_back({sbp, dbp});
    kept_groups.push_back(std::move(group));
  }
  for (const auto& [pred, count] : rep.dropped) {
    if (count > 0) spdlog::info("cohort filter '{}' dropped {} rows", pred, count);
  }
  if (kept_values.empty()) throw EmptyCohortError("no rows survived the inclusion filters");

  const auto n = static_cast<Eigen::Index>(kept_values.size());
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(specs.size()));
  Eigen::MatrixXd targets(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < specs.size(); ++j) {
      values(i, static_cast<Eigen::Index>(j)) = kept_values[static_cast<std::size_t>(i)][j];
    }
    targets(i, 0) = kept_targets[static_cast<std::size_t>(i)][0];
    targets(i, 1) = kept_targets[static_cast<std::size_t>(i)][1];
  }
  rep.rows_kept = static_cast<std::size_t>(n);
  res.table = CohortTable(std::move(specs), std::move(values), std::move(targets),
                          std::move(kept_groups), std::move(source_tag));
  if (!res.table.sample_size_adequate()) {
    rep.warnings.push_back("sample size below 10 x features (n=" + std::to_string(n) +
                           ", d=" + std::to_string(res.table.feature_count()) + ")");
  }
  for (const auto& w : rep.warnings) spdlog::warn("{}", w);
  return res;
}

LoadResult load_cohort(const std::filesystem::path& csv, const CohortSchema& schema,
                       std::string source_tag) {
  std::ifstream in(csv, std::ios::binary);
  if (!in) throw DataError("cannot open cohort file " + csv.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_cohort_csv(ss.str(), schema, std::move(source_tag));
}

std::string format_cohort_csv(const CohortTable& table) {
  std::string out;
  out += kGroupColumn;
  for (const auto& c : table.schema()) out += "," + quote_if_needed(c.name);
  out += std::string(",") + kSbpColumn + "," + kDbpColumn + "\n";
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    out += quote_if_needed(table.group_ids()[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
      out += ",";
      out += format_number(table.values()(i, j));
    }
    out += "," + format_number(table.targets()(i, 0)) + "," + format_number(table.targets()(i, 1));
    out += "\n";
  }
  return out;
}

void write_cohort_csv(const CohortTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_cohort_csv(table);
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Schema YAML

CohortSchema parse_schema_yaml(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("schema YAML: ") + e.what());
  }
  CohortSchema schema;
  try {
    if (auto cols = root["columns"]) {
      for (const auto& node : cols) {
        ColumnSpec c;
        c.name = node["name"].as<std::string>();
        if (node["kind"]) c.kind = parse_column_kind(node["kind"].as<std::string>());
        if (node["domain"]) c.domain = parse_domain_tag(node["domain"].as<std::string>());
        if (node["unit"]) c.unit = node["unit"].as<std::string>();
        if (auto r = node["valid_range"]) {
          c.valid_range = ValidRange{r[0].as<double>(), r[1].as<double>()};
          if (!(c.valid_range->min < c.valid_range->max)) {
            throw ConfigError("column '" + c.name + "': valid_range min must be < max");
          }
        }
        if (std::any_of(schema.columns.begin(), schema.columns.end(),
                        [&](const ColumnSpec& o) { return o.name == c.name; })) {
          throw ConfigError("duplicate column '" + c.name + "' in schema");
        }
        schema.columns.push_back(std::move(c));
      }
    }
    if (auto f = root["filters"]) {
      if (f["age_column"]) schema.age_column = f["age_column"].as<std::string>();
      if (f["stay_length_column"]) schema.stay_length_column = f["stay_length_column"].as<std::string>();
      if (f["min_stay_hours"]) schema.min_stay_hours = f["min_stay_hours"].as<double>();
      if (f["measurement_count_column"]) {
        schema.measurement_count_column = f["measurement_count_column"].as<std::string>();
      }
      if (f["min_measurements"]) schema.min_measurements = f["min_measurements"].as<int>();
    }
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("schema YAML: ") + e.what());
  }
  return schema;
}

CohortSchema read_schema_yaml(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schema_yaml(ss.str());
}

std::string format_schema_yaml(const CohortSchema& schema) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "columns" << YAML::Value << YAML::BeginSeq;
  for (const auto& c : schema.columns) {
    out << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << c.name;
    out << YAML::Key << "kind" << YAML::Value << std::string(to_string(c.kind));
    out << YAML::Key << "domain" << YAML::Value << std::string(to_string(c.domain));
    if (!c.unit.empty()) out << YAML::Key << "unit" << YAML::Value << c.unit;
    if (c.valid_range) {
      out << YAML::Key << "valid_range" << YAML::Value << YAML::Flow << YAML::BeginSeq
          << c.valid_range->min << c.valid_range->max << YAML::EndSeq;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "filters" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "age_column" << YAML::Value << schema.age_column;
  if (schema.stay_length_column) {
    out << YAML::Key << "stay_length_column" << YAML::Value << *schema.stay_length_column;
  }
  out << YAML::Key << "min_stay_hours" << YAML::Value << schema.min_stay_hours;
  if (schema.measurement_count_column) {
    out << YAML::Key << "measurement_count_column" << YAML::Value
        << *schema.measurement_count_column;
  }
  out << YAML::Key << "min_measurements" << YAML::Value << schema.min_measurements;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Strata

std::string_view to_string(Stratum s) {
  switch (s) {
    case Stratum::Hypotension: return "hypotension";
    case Stratum::Normal: return "normal";
    case Stratum::Prehypertension: return "prehypertension";
    case Stratum::Hypertension: return "hypertension";
  }
  return "normal";
}

Stratum stratum_of(double sbp) {
  if (!std::isfinite(sbp)) throw DomainError("stratum_of: non-finite SBP");
  if (sbp < 90.0) return Stratum::Hypotension;
  if (sbp < 120.0) return Stratum::Normal;
  if (sbp < 140.0) return Stratum::Prehypertension;
  return Stratum::Hypertension;
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

struct SynthColumn {
  const char* name;
  ColumnKind kind;
  DomainTag domain;
  const char* unit;
  bool maskable;  // subject to MCAR missingness
};

// Order here is the CSV column order.
constexpr SynthColumn kSynthColumns[] = {
    {"age", ColumnKind::Numeric, DomainTag::Demographic, "years", false},
    {"sex", ColumnKind::Binary, DomainTag::Demographic, "", false},
    {"hr", ColumnKind::Numeric, DomainTag::Vitals, "bpm", true},
    {"hr_sd", ColumnKind::Numeric, DomainTag::Vitals, "bpm", true},
    {"rr", ColumnKind::Numeric, DomainTag::Vitals, "breaths/min", true},
    {"rr_sd", ColumnKind::Numeric, DomainTag::Vitals, "breaths/min", true},
    {"spo2", ColumnKind::Numeric, DomainTag::Vitals, "%", true},
    {"spo2_sd", ColumnKind::Numeric, DomainTag::Vitals, "%", true},
    {"temp", ColumnKind::Numeric, DomainTag::Vitals, "degC", true},
    {"creatinine", ColumnKind::Numeric, DomainTag::Laboratory, "mg/dL", true},
    {"lactate", ColumnKind::Numeric, DomainTag::Laboratory, "mmol/L", true},
    {"sodium", ColumnKind::Numeric, DomainTag::Laboratory, "mmol/L", true},
    {"potassium", ColumnKind::Numeric, DomainTag::Laboratory, "mmol/L", true},
    {"bun", ColumnKind::Numeric, DomainTag::Laboratory, "mg/dL", true},
    {"troponin", ColumnKind::Numeric, DomainTag::Laboratory, "ng/mL", true},
    {"bicarbonate", ColumnKind::Numeric, DomainTag::Laboratory, "mmol/L", true},
    {"ph", ColumnKind::Numeric, DomainTag::Laboratory, "", true},
    {"vasopressor_use", ColumnKind::Binary, DomainTag::Medication, "", false},
    {"beta_blockers", ColumnKind::Numeric, DomainTag::Medication, "doses", false},
    {"diuretics", ColumnKind::Numeric, DomainTag::Medication, "doses", false},
    {"ace_inhibitors", ColumnKind::Numeric, DomainTag::Medication, "doses", false},
    {"arbs", ColumnKind::Numeric, DomainTag::Medication, "doses", false},
    {"ccbs", ColumnKind::Numeric, DomainTag::Medication, "doses", false},
    {"hr_cv", ColumnKind::Numeric, DomainTag::Temporal, "", true},
    {"hr_trend", ColumnKind::Numeric, DomainTag::Temporal, "bpm/h", true},
    {"lability_events", ColumnKind::Numeric, DomainTag::Temporal, "events", false},
    {"hrv", ColumnKind::Numeric, DomainTag::Temporal, "ms", true},
    {"bmi", ColumnKind::Numeric, DomainTag::Derived, "kg/m2", true},
    {"sbp_baseline", ColumnKind::Numeric, DomainTag::Derived, "mmHg", false},
    {"dbp_baseline", ColumnKind::Numeric, DomainTag::Derived, "mmHg", false},
    {"pulse_pressure", ColumnKind::Numeric, DomainTag::Derived, "mmHg", false},
    {"map_calculated", ColumnKind::Numeric, DomainTag::Derived, "mmHg", false},
    {"sbp_mean_24h", ColumnKind::Numeric, DomainTag::Vitals, "mmHg", false},
    {"dbp_mean_24h", ColumnKind::Numeric, DomainTag::Vitals, "mmHg", false},
    {"map_mean_24h", ColumnKind::Numeric, DomainTag::Vitals, "mmHg", false},
    {"sbp_verify", ColumnKind::Numeric, DomainTag::Vitals, "mmHg", false},
    {"los_hours", ColumnKind::Numeric, DomainTag::Id, "h", false},
    {"n_bp_measurements", ColumnKind::Numeric, DomainTag::Id, "count", false},
};
constexpr std::size_t kNumSynth = std::size(kSynthColumns);

std::size_t synth_index(std::string_view name) {
  for (std::size_t j = 0; j < kNumSynth; ++j) {
    if (name == kSynthColumns[j].name) return j;
  }
  throw InvariantError("unknown synthetic column");
}

double col_value(const Eigen::Ref<const Eigen::RowVectorXd>& row, std::string_view name) {
  return row[static_cast<Eigen::Index>(synth_index(name))];
}

// Noise-free SBP / DBP as a function of one patient's column values.
std::array<double, 2> truth_of(const std::function<double(std::string_view)>& v) {
  const double age = v("age");
  const double hr = v("hr");
  const double creat = v("creatinine");
  const double lact = v("lactate");
  const double sbp = v("sbp_baseline") + 0.10 * (age - 62.0) + 0.12 * (hr - 82.0) -
                     1.5 * (v("beta_blockers") - 0.5) - 1.0 * (v("diuretics") - 0.3) -
                     0.8 * (v("ace_inhibitors") - 0.25) +
                     0.08 * (creat - 1.0) * (age - 62.0) +
                     2.0 * v("vasopressor_use") * (lact - 2.0) + 1.5 * std::log1p(creat);
  const double dbp = v("dbp_baseline") + 0.15 * (hr - 82.0) - 0.8 * (v("beta_blockers") - 0.5) -
                     0.04 * (age - 62.0) + 1.2 * (v("potassium") - 4.2) -
                     0.6 * (v("ccbs") - 0.2);
  return {sbp, dbp};
}

struct Generated {
  CohortTable table;
  Eigen::MatrixXd truth;
};

Generated generate_cohort(const SyntheticConfig& cfg, double s, std::uint64_t stream,
                          const char* group_prefix, std::string source_tag) {
  const auto n = static_cast<Eigen::Index>(cfg.n_patients);
  Eigen::MatrixXd values(n, static_cast<Eigen::Index>(kNumSynth));
  Eigen::MatrixXd targets(n, 2);
  Eigen::MatrixXd truth(n, 2);
  std::vector<std::string> groups;
  groups.reserve(cfg.n_patients);
  const double drug_scale = 1.0 + 0.8 * s;
  const double troponin_missing = cfg.missing_rate > 0.0 ? std::max(0.75, cfg.missing_rate) : 0.0;

  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng(Rng::derive(stream, static_cast<std::uint64_t>(i)));
    auto set = [&](std::string_view name, double v) {
      values(i, static_cast<Eigen::Index>(synth_index(name))) = v;
    };
    // Every patient consumes the same sequence of draws whatever the shift.
    const double z = rng.normal();
    const bool shock = rng.bernoulli(cfg.hypotension_fraction);
    const double age = std::clamp(rng.normal(62.0 + 2.0 * s, 14.0), 18.0, 89.0);
    const double sex = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double e_sbp_b = rng.normal();
    const double sbp_b = shock ? 72.0 + 5.0 * e_sbp_b : 126.0 + 13.0 * z + 3.0 * e_sbp_b;
    const double dbp_b = 0.55 * sbp_b + 8.0 + rng.normal(0.0, 5.0);
    const double hr = rng.normal(82.0 + 3.0 * s, 12.0) + 15.0 * (shock ? 1.0 : 0.0) - 4.0 * z;
    const double hr_sd = std::abs(rng.normal(8.0 * (1.0 + 0.3 * s), 2.5)) + 1.0;
    const double rr = rng.normal(18.0, 3.0) + (shock ? 3.0 : 0.0);
    const double rr_sd = std::abs(rng.normal(3.0, 1.0)) + 0.5;
    const double spo2 = std::clamp(rng.normal(96.0 - 0.5 * s, 1.5) - (shock ? 2.0 : 0.0), 70.0, 100.0);
    const double spo2_sd = std::abs(rng.normal(1.5, 0.5)) + 0.2;
    const double temp = rng.normal(37.0 + 0.1 * s, 0.5);
    const double creat = std::exp(rng.normal(0.0, 0.35)) * (shock ? 1.3 : 1.0) * (1.0 + 0.25 * s);
    const double lact = std::exp(rng.normal(0.3, 0.4)) + (shock ? 2.5 : 0.0) + 0.4 * s;
    const double sodium = rng.normal(140.0 - 1.5 * s, 3.0);
    const double potassium = rng.normal(4.2, 0.45);
    const double bun = std::exp(rng.normal(2.8, 0.4)) * (1.0 + 0.2 * s);
    const double troponin = std::exp(rng.normal(-3.0, 1.0));
    const double bicarb = rng.normal(24.0, 3.0) - (shock ? 2.0 : 0.0);
    const double ph = rng.normal(7.40, 0.04) - (shock ? 0.05 : 0.0);
    const double vaso_u = rng.uniform();
    const double vaso = (shock ? vaso_u < 0.85 : vaso_u < std::min(0.9, 0.03 + 0.15 * s)) ? 1.0 : 0.0;
    const double bb = std::min(4, rng.poisson(0.6 * drug_scale));
    const double diur = std::min(4, rng.poisson(0.3 * drug_scale));
    const double ace = std::min(4, rng.poisson(0.25 * drug_scale));
    const double arbs = std::min(4, rng.poisson(0.15 * drug_scale));
    const double ccbs = std::min(4, rng.poisson(0.2 * drug_scale));
    const double hr_trend = rng.normal(0.0, 1.0);
    const double lability = rng.poisson(shock ? 4.0 : 2.0);
    const double hrv = std::clamp(rng.normal(40.0 - 6.0 * z, 8.0), 2.0, 150.0);
    const double bmi = std::clamp(rng.normal(28.0, 5.0), 15.0, 60.0);
    const double los = 24.0 + std::exp(rng.normal(3.5, 0.8));
    const double n_bp = 2.0 + rng.poisson(12.0);
    const double e_sbp = rng.normal();
    const double e_dbp = rng.normal();
    const double e_leak0 = rng.normal();
    const double e_leak1 = rng.normal();
    const double e_leak2 = rng.normal();

    set("age", age);
    set("sex", sex);
    set("hr", hr);
    set("hr_sd", hr_sd);
    set("rr", rr);
    set("rr_sd", rr_sd);
    set("spo2", spo2);
    set("spo2_sd", spo2_sd);
    set("temp", temp);
    set("creatinine", creat);
    set("lactate", lact);
    set("sodium", sodium);
    set("potassium", potassium);
    set("bun", bun);
    set("troponin", troponin);
    set("bicarbonate", bicarb);
    set("ph", ph);
    set("vasopressor_use", vaso);
    set("beta_blockers", bb);
    set("diuretics", diur);
    set("ace_inhibitors", ace);
    set("arbs", arbs);
    set("ccbs", ccbs);
    set("hr_cv", hr_sd / hr);
    set("hr_trend", hr_trend);
    set("lability_events", lability);
    set("hrv", hrv);
    set("bmi", bmi);
    set("sbp_baseline", sbp_b);
    set("dbp_baseline", dbp_b);
    set("pulse_pressure", sbp_b - dbp_b);
    set("map_calculated", (sbp_b + 2.0 * dbp_b) / 3.0);
    set("los_hours", los);
    set("n_bp_measurements", n_bp);

    const Eigen::RowVectorXd row = values.row(i);
    const auto f = truth_of([&](std::string_view name) { return col_value(row, name); });
    truth(i, 0) = f[0];
    truth(i, 1) = f[1];
    const double noise = cfg.noise_scale * (1.0 + 0.25 * s);
    const double sbp = std::clamp(f[0] + noise * kSyntheticSbpNoise * e_sbp, kSbpMin, kSbpMax);
    const double dbp = std::clamp(f[1] + noise * kSyntheticDbpNoise * e_dbp, kDbpMin, kDbpMax);
    targets(i, 0) = sbp;
    targets(i, 1) = dbp;
    set("sbp_mean_24h", sbp + 1.5 * e_leak0);
    set("dbp_mean_24h", dbp + 1.5 * e_leak1);
    set("map_mean_24h", (sbp + 2.0 * dbp) / 3.0 + 1.5 * e_leak2);
    set("sbp_verify", 5.0 * std::round(sbp / 5.0));

    for (std::size_t j = 0; j < kNumSynth; ++j) {
      const double u = rng.uniform();
      const bool is_troponin = std::string_view(kSynthColumns[j].name) == "troponin";
      const double rate = is_troponin ? troponin_missing : cfg.missing_rate;
      if (kSynthColumns[j].maskable && u < rate) {
        values(i, static_cast<Eigen::Index>(j)) = kNaN;
      }
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06lld", group_prefix, static_cast<long long>(i + 1));
    groups.emplace_back(buf);
  }

  const CohortSchema schema = synthetic_schema();
  return {CohortTable(schema.columns, std::move(values), std::move(targets), std::move(groups),
                      std::move(source_tag)),
          std::move(truth)};
}

}  // namespace

void validate(const SyntheticConfig& cfg) {
  if (cfg.n_patients < 50) {
    throw ConfigError("synthetic n_patients must be >= 50 for 5-fold group CV");
  }
  if (!(cfg.shift_magnitude >= 0.0)) throw ConfigError("shift_magnitude must be >= 0");
  if (!(cfg.missing_rate >= 0.0 && cfg.missing_rate < 1.0)) {
    throw ConfigError("missing_rate must lie in [0, 1)");
  }
  if (!(cfg.hypotension_fraction >= 0.0 && cfg.hypotension_fraction < 1.0)) {
    throw ConfigError("hypotension_fraction must lie in [0, 1)");
  }
  if (!(cfg.noise_scale >= 0.0)) throw ConfigError("noise_scale must be >= 0");
}

CohortSchema synthetic_schema() {
  CohortSchema schema;
  for (const auto& c : kSynthColumns) {
    ColumnSpec spec;
    spec.name = c.name;
    spec.kind = c.kind;
    spec.domain = c.domain;
    spec.unit = c.unit;
    if (spec.name == "age") spec.valid_range = ValidRange{0.0, 120.0};
    if (spec.name == "spo2") spec.valid_range = ValidRange{50.0, 100.0};
    if (spec.name == "hr") spec.valid_range = ValidRange{20.0, 250.0};
    schema.columns.push_back(std::move(spec));
  }
  schema.stay_length_column = "los_hours";
  schema.measurement_count_column = "n_bp_measurements";
  return schema;
}

SyntheticPair generate_synthetic_pair(const SyntheticConfig& cfg) {
  validate(cfg);
  SyntheticPair pair;
  pair.schema = synthetic_schema();
  auto internal = generate_cohort(cfg, 0.0, Rng::derive(cfg.seed, 0), "P", "internal");
  auto external = generate_cohort(cfg, cfg.shift_magnitude, Rng::derive(cfg.seed, 1), "E", "external");

  const auto d = internal.table.feature_count();
  const double fraction = std::min(0.3, 0.1 * cfg.shift_magnitude);
  const auto n_renames = std::min<std::size_t>(
      kSyntheticRenames.size(), static_cast<std::size_t>(std::lround(fraction * static_cast<double>(d))));
  auto ext_schema = external.table.schema();
  for (std::size_t r = 0; r < n_renames; ++r) {
    for (auto& c : ext_schema) {
      if (c.name == kSyntheticRenames[r].from) c.name = kSyntheticRenames[r].to;
    }
  }
  pair.internal = std::move(internal.table);
  pair.external = external.table.with_columns(std::move(ext_schema), external.table.values());
  pair.internal_truth = std::move(internal.truth);
  pair.external_truth = std::move(external.truth);
  return pair;
}

Eigen::MatrixXd synthetic_ground_truth(const CohortTable& table) {
  Eigen::MatrixXd out(table.rows(), 2);
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const auto f = truth_of([&](std::string_view name) {
      return table.values()(i, table.index_of(name));
    });
    out(i, 0) = f[0];
    out(i, 1) = f[1];
  }
  return out;
}

}  // namespace bpstack
