#include "bpstack/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bpstack/error.hpp"

namespace bpstack {

using nlohmann::json;

std::string_view to_string(TuningMethod m) {
  switch (m) {
    case TuningMethod::None: return "none";
    case TuningMethod::Grid: return "grid";
    case TuningMethod::Bayes: return "bayes";
  }
  return "?";
}

namespace {

TuningMethod parse_tuning_method(const std::string& s) {
  if (s == "none") return TuningMethod::None;
  if (s == "grid") return TuningMethod::Grid;
  if (s == "bayes") return TuningMethod::Bayes;
  throw ConfigError("tuning.method must be none, grid or bayes (got '" + s + "')");
}

void check_keys(const YAML::Node& node, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (node[key]) out = node[key].as<T>();
}

void read_tree(const YAML::Node& n, const std::string& where, TreeParams& p) {
  check_keys(n, where, {"max_depth", "min_samples_leaf", "n_estimators", "learning_rate",
                        "subsample", "feature_fraction", "bootstrap"});
  read(n, "max_depth", p.max_depth);
  read(n, "min_samples_leaf", p.min_samples_leaf);
  read(n, "n_estimators", p.n_estimators);
  read(n, "learning_rate", p.learning_rate);
  read(n, "subsample", p.subsample);
  read(n, "feature_fraction", p.feature_fraction);
  read(n, "bootstrap", p.bootstrap);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

void parse_root(const YAML::Node& root, const std::filesystem::path& base, RunConfig& cfg) {
  check_keys(root, "config", {"seed", "threads", "output", "data", "synthetic", "leakage",
                              "imputation", "features", "model", "tuning", "cv", "evaluation",
                              "stratified", "ablation"});
  read(root, "seed", cfg.seed);
  read(root, "threads", cfg.threads);
  if (root["output"]) cfg.output = resolve(base, root["output"].as<std::string>());

  if (auto d = root["data"]) {
    check_keys(d, "data", {"cohort", "schema", "external"});
    if (!d["cohort"] || !d["schema"]) throw ConfigError("data: cohort and schema are required");
    DataSource src;
    src.cohort = resolve(base, d["cohort"].as<std::string>());
    src.schema = resolve(base, d["schema"].as<std::string>());
    if (d["external"]) src.external = resolve(base, d["external"].as<std::string>());
    cfg.data = src;
  }
  if (auto s = root["synthetic"]) {
    check_keys(s, "synthetic", {"n_patients", "seed", "shift_magnitude", "missing_rate",
                                "hypotension_fraction", "noise_scale", "validate_external"});
    SyntheticConfig sc;
    read(s, "n_patients", sc.n_patients);
    if (s["seed"]) {
      sc.seed = s["seed"].as<std::uint64_t>();
      cfg.synthetic_seed_explicit = true;
    }
    read(s, "shift_magnitude", sc.shift_magnitude);
    read(s, "missing_rate", sc.missing_rate);
    read(s, "hypotension_fraction", sc.hypotension_fraction);
    read(s, "noise_scale", sc.noise_scale);
    read(s, "validate_external", cfg.synthetic_external);
    cfg.synthetic = sc;
  }
  if (auto l = root["leakage"]) {
    check_keys(l, "leakage", {"patterns", "extra_patterns"});
    read(l, "patterns", cfg.leakage.patterns);
    read(l, "extra_patterns", cfg.leakage.extra_patterns);
  }
  if (auto im = root["imputation"]) {
    check_keys(im, "imputation", {"mice_max_iter", "mice_tol", "knn_k", "missing_rate_cutoff",
                                  "clinical_defaults"});
    auto& p = cfg.imputation;
    read(im, "mice_max_iter", p.mice_max_iter);
    read(im, "mice_tol", p.mice_tol);
    read(im, "knn_k", p.knn_k);
    read(im, "missing_rate_cutoff", p.missing_rate_cutoff);
    read(im, "clinical_defaults", p.clinical_defaults);
  }
  if (auto f = root["features"]) {
    check_keys(f, "features", {"interaction_pairs", "transform_columns", "p_value_cutoff",
                               "vif_cutoff", "mi_cutoff", "target_feature_count",
                               "domain_whitelist"});
    auto& p = cfg.features;
    if (auto pairs = f["interaction_pairs"]) {
      p.interaction_pairs.clear();
      for (const auto& pr : pairs) {
        if (!pr.IsSequence() || pr.size() != 2) {
          throw ConfigError("features.interaction_pairs: each entry must be [a, b]");
        }
        p.interaction_pairs.emplace_back(pr[0].as<std::string>(), pr[1].as<std::string>());
      }
    }
    read(f, "transform_columns", p.transform_columns);
    read(f, "p_value_cutoff", p.p_value_cutoff);
    read(f, "vif_cutoff", p.vif_cutoff);
    read(f, "mi_cutoff", p.mi_cutoff);
    read(f, "target_feature_count", p.target_feature_count);
    if (auto w = f["domain_whitelist"]) {
      p.domain_whitelist.clear();
      for (const auto& t : w) p.domain_whitelist.push_back(parse_domain_tag(t.as<std::string>()));
    }
  }
  if (auto m = root["model"]) {
    check_keys(m, "model", {"gbm", "forest", "ridge_penalty", "quantile_l1_penalty",
                            "lower_tau", "upper_tau", "stack_folds"});
    auto& p = cfg.model;
    if (m["gbm"]) read_tree(m["gbm"], "model.gbm", p.gbm);
    if (m["forest"]) read_tree(m["forest"], "model.forest", p.forest);
    read(m, "ridge_penalty", p.ridge_penalty);
    read(m, "quantile_l1_penalty", p.quantile_l1_penalty);
    read(m, "lower_tau", p.lower_tau);
    read(m, "upper_tau", p.upper_tau);
    read(m, "stack_folds", p.stack_folds);
  }
  if (auto t = root["tuning"]) {
    check_keys(t, "tuning", {"method", "budget", "initial_points", "xi"});
    if (t["method"]) cfg.tuning.method = parse_tuning_method(t["method"].as<std::string>());
    read(t, "budget", cfg.tuning.budget);
    read(t, "initial_points", cfg.tuning.initial_points);
    read(t, "xi", cfg.tuning.xi);
  }
  if (auto c = root["cv"]) {
    check_keys(c, "cv", {"k"});
    read(c, "k", cfg.cv_folds);
  }
  if (auto e = root["evaluation"]) {
    check_keys(e, "evaluation", {"equity", "bootstrap_resamples", "kl_bins", "permutation_repeats"});
    auto& p = cfg.evaluation;
    if (auto eq = e["equity"]) {
      p.equity.clear();
      for (const auto& item : eq) {
        check_keys(item, "evaluation.equity", {"column", "threshold"});
        EquitySpec spec;
        spec.column = item["column"].as<std::string>();
        if (item["threshold"]) spec.threshold = item["threshold"].as<double>();
        p.equity.push_back(spec);
      }
    }
    read(e, "bootstrap_resamples", p.bootstrap_resamples);
    read(e, "kl_bins", p.kl_bins);
    read(e, "permutation_repeats", p.permutation_repeats);
  }
  if (auto s = root["stratified"]) {
    check_keys(s, "stratified", {"enabled", "min_stratum"});
    read(s, "enabled", cfg.stratified.enabled);
    read(s, "min_stratum", cfg.stratified.min_stratum);
  }
  if (auto a = root["ablation"]) {
    check_keys(a, "ablation", {"enabled", "features"});
    read(a, "enabled", cfg.ablation.enabled);
    read(a, "features", cfg.ablation.features);
  }
}

json tree_json(const TreeParams& p) {
  return json{{"max_depth", p.max_depth},         {"min_samples_leaf", p.min_samples_leaf},
              {"n_estimators", p.n_estimators},   {"learning_rate", p.learning_rate},
              {"subsample", p.subsample},         {"feature_fraction", p.feature_fraction},
              {"seed", p.seed},                   {"bootstrap", p.bootstrap}};
}

}  // namespace

void RunConfig::validate() const {
  if (data.has_value() == synthetic.has_value()) {
    throw ConfigError("config needs exactly one data source: data or synthetic");
  }
  if (synthetic) bpstack::validate(*synthetic);
  (void)leakage.all();
  imputation.validate();
  features.validate();
  model.validate();
  if (tuning.budget < 1) throw ConfigError("tuning.budget must be >= 1");
  if (tuning.initial_points < 1) throw ConfigError("tuning.initial_points must be >= 1");
  if (!(tuning.xi >= 0.0)) throw ConfigError("tuning.xi must be >= 0");
  if (cv_folds < 2) throw ConfigError("cv.k must be >= 2");
  if (evaluation.bootstrap_resamples < 1) throw ConfigError("evaluation.bootstrap_resamples must be >= 1");
  if (evaluation.kl_bins < 2) throw ConfigError("evaluation.kl_bins must be >= 2");
  if (evaluation.permutation_repeats < 1) throw ConfigError("evaluation.permutation_repeats must be >= 1");
  for (const auto& e : evaluation.equity) {
    if (e.column.empty()) throw ConfigError("evaluation.equity: empty column name");
  }
  if (stratified.min_stratum < 1) throw ConfigError("stratified.min_stratum must be >= 1");
}

void RunConfig::propagate_seed() {
  model.seed = seed;
  model.gbm.seed = seed;
  model.forest.seed = seed + 1;
  if (synthetic && !synthetic_seed_explicit) synthetic->seed = seed;
}

RunConfig parse_run_config(std::string_view yaml_text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  try {
    const YAML::Node root = YAML::Load(std::string(yaml_text));
    if (root.IsNull()) throw ConfigError("config is empty");
    parse_root(root, base_dir, cfg);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config YAML: ") + e.what());
  }
  cfg.propagate_seed();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  if (cfg.data) {
    json d{{"cohort", cfg.data->cohort.string()}, {"schema", cfg.data->schema.string()}};
    if (cfg.data->external) d["external"] = cfg.data->external->string();
    j["data"] = d;
  }
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    j["synthetic"] = {{"n_patients", s.n_patients},
                      {"seed", s.seed},
                      {"shift_magnitude", s.shift_magnitude},
                      {"missing_rate", s.missing_rate},
                      {"hypotension_fraction", s.hypotension_fraction},
                      {"noise_scale", s.noise_scale},
                      {"validate_external", cfg.synthetic_external}};
  }
  j["leakage"] = {{"patterns", cfg.leakage.patterns}, {"extra_patterns", cfg.leakage.extra_patterns}};
  const auto& im = cfg.imputation;
  j["imputation"] = {{"mice_max_iter", im.mice_max_iter},
                     {"mice_tol", im.mice_tol},
                     {"knn_k", im.knn_k},
                     {"missing_rate_cutoff", im.missing_rate_cutoff},
                     {"clinical_defaults", im.clinical_defaults}};
  const auto& f = cfg.features;
  json pairs = json::array();
  for (const auto& [a, b] : f.interaction_pairs) pairs.push_back({a, b});
  json whitelist = json::array();
  for (auto t : f.domain_whitelist) whitelist.push_back(std::string(to_string(t)));
  j["features"] = {{"interaction_pairs", pairs},
                   {"transform_columns", f.transform_columns},
                   {"p_value_cutoff", f.p_value_cutoff},
                   {"vif_cutoff", f.vif_cutoff},
                   {"mi_cutoff", f.mi_cutoff},
                   {"target_feature_count", f.target_feature_count},
                   {"domain_whitelist", whitelist}};
  const auto& m = cfg.model;
  j["model"] = {{"gbm", tree_json(m.gbm)},
                {"forest", tree_json(m.forest)},
                {"ridge_penalty", m.ridge_penalty},
                {"quantile_l1_penalty", m.quantile_l1_penalty},
                {"lower_tau", m.lower_tau},
                {"upper_tau", m.upper_tau},
                {"stack_folds", m.stack_folds},
                {"seed", m.seed}};
  j["tuning"] = {{"method", std::string(to_string(cfg.tuning.method))},
                 {"budget", cfg.tuning.budget},
                 {"initial_points", cfg.tuning.initial_points},
                 {"xi", cfg.tuning.xi}};
  j["cv"] = {{"k", cfg.cv_folds}};
  json equity = json::array();
  for (const auto& e : cfg.evaluation.equity) {
    json item{{"column", e.column}};
    if (e.threshold) item["threshold"] = *e.threshold;
    equity.push_back(item);
  }
  j["evaluation"] = {{"equity", equity},
                     {"bootstrap_resamples", cfg.evaluation.bootstrap_resamples},
                     {"kl_bins", cfg.evaluation.kl_bins},
                     {"permutation_repeats", cfg.evaluation.permutation_repeats}};
  j["stratified"] = {{"enabled", cfg.stratified.enabled}, {"min_stratum", cfg.stratified.min_stratum}};
  j["ablation"] = {{"enabled", cfg.ablation.enabled}, {"features", cfg.ablation.features}};
  return j;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(config_to_json(cfg).dump()); }

}  // namespace bpstack
