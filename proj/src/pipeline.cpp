#include "bpstack/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

#include "bpstack/error.hpp"
#include "bpstack/parallel.hpp"
#include "bpstack/report.hpp"
#include "bpstack/rng.hpp"
#include "bpstack/stats.hpp"

namespace bpstack {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 2> kKeys{"sbp", "dbp"};

template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  const std::string prefix = std::string(name) + ": ";
  spdlog::debug("stage {}", name);
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError(prefix + e.what());
  }
}

json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json column_json(const ColumnSpec& c) {
  json j{{"name", c.name},
         {"kind", std::string(to_string(c.kind))},
         {"domain", std::string(to_string(c.domain))},
         {"unit", c.unit}};
  if (c.valid_range) j["valid_range"] = {c.valid_range->min, c.valid_range->max};
  return j;
}

ColumnSpec column_from(const json& j) {
  ColumnSpec c;
  c.name = j.at("name").get<std::string>();
  c.kind = parse_column_kind(j.at("kind").get<std::string>());
  c.domain = parse_domain_tag(j.at("domain").get<std::string>());
  c.unit = j.at("unit").get<std::string>();
  if (j.contains("valid_range")) {
    c.valid_range = ValidRange{j["valid_range"].at(0).get<double>(), j["valid_range"].at(1).get<double>()};
  }
  return c;
}

ImputeStrategy parse_strategy(const std::string& s) {
  for (auto st : {ImputeStrategy::Mice, ImputeStrategy::Median, ImputeStrategy::ClinicalDefault}) {
    if (to_string(st) == s) return st;
  }
  throw DataError("model file: unknown imputation strategy '" + s + "'");
}

// Front half shared by train and ablate.
struct Design {
  CohortInputs inputs;
  LeakageResult cleaned;
  ImputationResult imputed;
  ImputationAudit audit;
  SelectionResult selection;
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
  std::vector<std::string> groups;
  std::vector<std::string> names;
  std::vector<DomainTag> domains;
};

CohortTable build_derived(const CohortTable& imputed,
                          const std::vector<std::pair<std::string, std::string>>& pairs,
                          const std::vector<std::string>& transforms) {
  return build_power_transforms(build_interactions(imputed, pairs), transforms);
}

Design build_design(const RunConfig& cfg) {
  Design d;
  d.inputs = stage("load", [&] { return load_inputs(cfg); });
  d.cleaned = stage("leakage", [&] { return clean_cohort(d.inputs.internal, cfg.leakage); });
  d.imputed = stage("imputation", [&] { return impute(d.cleaned.table, cfg.imputation); });
  d.audit = stage("imputation", [&] {
    const auto knn = knn_impute(d.cleaned.table, cfg.imputation.knn_k);
    return validate_imputation(d.cleaned.table, d.imputed.table, knn, d.imputed.strategies);
  });
  d.selection = stage("features", [&] {
    const auto derived = build_derived(d.imputed.table, cfg.features.interaction_pairs,
                                       cfg.features.transform_columns);
    return select_features(derived, cfg.features);
  });
  const auto& t = d.selection.table;
  d.x = t.values();
  d.y = t.targets();
  d.groups = t.group_ids();
  d.names = t.column_names();
  for (const auto& c : t.schema()) d.domains.push_back(c.domain);
  return d;
}

// Pooled out-of-fold RMSE of the boosting model alone, averaged over targets.
double gbm_cv_rmse(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const FoldPlan& plan,
                   const TreeParams& gbm) {
  const auto folds = static_cast<std::size_t>(plan.k);
  std::vector<Eigen::VectorXd> preds(folds * 2);
  parallel_for(folds * 2, [&](std::size_t task) {
    const int f = static_cast<int>(task / 2);
    const auto t = static_cast<Eigen::Index>(task % 2);
    const auto train = plan.train_rows(f);
    const auto test = plan.test_rows(f);
    const Eigen::MatrixXd xtr = x(train, Eigen::all);
    const auto pre = Preprocessor::fit(xtr);
    const Eigen::VectorXd ytr = y(train, t);
    const auto model = fit_gbm(pre.transform(xtr), ytr, gbm);
    preds[task] = model.predict(pre.transform(x(test, Eigen::all)));
  });
  double total = 0.0;
  for (Eigen::Index t = 0; t < 2; ++t) {
    Eigen::VectorXd oof(x.rows());
    for (std::size_t f = 0; f < folds; ++f) {
      const auto test = plan.test_rows(static_cast<int>(f));
      for (std::size_t k = 0; k < test.size(); ++k) {
        oof[test[k]] = preds[f * 2 + static_cast<std::size_t>(t)][static_cast<Eigen::Index>(k)];
      }
    }
    total += stats::rmse(y.col(t), oof);
  }
  return total / 2.0;
}

std::map<std::string, std::vector<std::string>> equity_labels(const CohortTable& table,
                                                              const std::vector<EquitySpec>& specs,
                                                              std::vector<std::string>& warnings) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& s : specs) {
    if (!table.find(s.column)) {
      warnings.push_back("equity column '" + s.column + "' not in cohort; skipped");
      continue;
    }
    out[s.column] = subgroup_labels(table, s);
  }
  return out;
}

json predictions_summary(const PredictionSet& p) {
  json j;
  for (std::size_t t = 0; t < 2; ++t) {
    std::map<std::string, int> tiers;
    for (auto r : p.targets[t].tier) ++tiers[std::string(to_string(r))];
    j[kKeys[t]] = {{"tier_counts", tiers}, {"interval_swaps", p.targets[t].swaps}};
  }
  return j;
}

}  // namespace

std::string schema_hash(const std::vector<ColumnSpec>& columns) {
  std::string s;
  for (const auto& c : columns) {
    s += c.name;
    s += '|';
    s += to_string(c.kind);
    s += '|';
    s += to_string(c.domain);
    s += '\n';
  }
  return fnv1a_hex(s);
}

json bundle_to_json(const ModelBundle& b) {
  const auto& r = b.recipe;
  json raw = json::array();
  for (const auto& c : r.raw_schema) raw.push_back(column_json(c));
  json strategies = json::object();
  for (const auto& [k, v] : r.strategies) strategies[k] = std::string(to_string(v));
  json pairs = json::array();
  for (const auto& [a, c] : r.interaction_pairs) pairs.push_back({a, c});
  json domains = json::array();
  for (auto d : r.selected_domains) domains.push_back(std::string(to_string(d)));
  json j;
  j["format_version"] = kModelFormatVersion;
  j["config_hash"] = b.config_hash;
  j["schema_hash"] = b.schema_hash;
  j["recipe"] = {{"cohort_schema", format_schema_yaml(r.cohort_schema)},
                 {"leakage_patterns", r.leakage_patterns},
                 {"raw_schema", raw},
                 {"imputation",
                  {{"mice_max_iter", r.imputation.mice_max_iter},
                   {"mice_tol", r.imputation.mice_tol},
                   {"knn_k", r.imputation.knn_k},
                   {"missing_rate_cutoff", r.imputation.missing_rate_cutoff},
                   {"clinical_defaults", r.imputation.clinical_defaults}}},
                 {"medians", r.medians},
                 {"strategies", strategies},
                 {"interaction_pairs", pairs},
                 {"transform_columns", r.transform_columns},
                 {"selected", r.selected},
                 {"selected_domains", domains}};
  j["ensemble"] = b.ensemble;
  if (b.strata) j["strata"] = *b.strata;
  j["reference"] = {{"cv_rmse", {{"sbp", b.reference.cv_rmse[0]}, {"dbp", b.reference.cv_rmse[1]}}},
                    {"oof_sq_err",
                     {{"sbp", vec_json(b.reference.oof_sq_err[0])},
                      {"dbp", vec_json(b.reference.oof_sq_err[1])}}}};
  return j;
}

ModelBundle bundle_from_json(const json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("model file format_version " + std::to_string(version) + " is not supported");
    }
    ModelBundle b;
    b.config_hash = j.at("config_hash").get<std::string>();
    b.schema_hash = j.at("schema_hash").get<std::string>();
    const auto& r = j.at("recipe");
    auto& rec = b.recipe;
    try {
      rec.cohort_schema = parse_schema_yaml(r.at("cohort_schema").get<std::string>());
    } catch (const ConfigError& e) {
      throw DataError(std::string("model file: ") + e.what());
    }
    r.at("leakage_patterns").get_to(rec.leakage_patterns);
    for (const auto& c : r.at("raw_schema")) rec.raw_schema.push_back(column_from(c));
    const auto& im = r.at("imputation");
    rec.imputation.mice_max_iter = im.at("mice_max_iter").get<int>();
    rec.imputation.mice_tol = im.at("mice_tol").get<double>();
    rec.imputation.knn_k = im.at("knn_k").get<int>();
    rec.imputation.missing_rate_cutoff = im.at("missing_rate_cutoff").get<double>();
    im.at("clinical_defaults").get_to(rec.imputation.clinical_defaults);
    r.at("medians").get_to(rec.medians);
    for (const auto& [k, v] : r.at("strategies").items()) rec.strategies[k] = parse_strategy(v.get<std::string>());
    for (const auto& p : r.at("interaction_pairs")) {
      rec.interaction_pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    }
    r.at("transform_columns").get_to(rec.transform_columns);
    r.at("selected").get_to(rec.selected);
    for (const auto& d : r.at("selected_domains")) rec.selected_domains.push_back(parse_domain_tag(d.get<std::string>()));
    b.ensemble = j.at("ensemble").get<FittedEnsemble>();
    if (b.ensemble.feature_names != rec.selected) {
      throw DataError("model file: ensemble features differ from the recipe");
    }
    if (schema_hash(rec.raw_schema) != b.schema_hash) throw DataError("model file: schema hash mismatch");
    if (j.contains("strata")) b.strata = j["strata"].get<StratifiedModels>();
    const auto& ref = j.at("reference");
    for (std::size_t t = 0; t < 2; ++t) {
      b.reference.cv_rmse[t] = ref.at("cv_rmse").at(kKeys[t]).get<double>();
      b.reference.oof_sq_err[t] = vec_from(ref.at("oof_sq_err").at(kKeys[t]));
    }
    return b;
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

void save_model(const ModelBundle& b, const std::filesystem::path& path) {
  write_text_file(path, bundle_to_json(b).dump(1) + "\n");
}

ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("model file " + path.string() + ": " + e.what());
  }
  return bundle_from_json(j);
}

CohortInputs load_inputs(const RunConfig& cfg) {
  CohortInputs in;
  if (cfg.synthetic) {
    auto pair = generate_synthetic_pair(*cfg.synthetic);
    in.schema = pair.schema;
    in.internal_filter.rows_read = in.internal_filter.rows_kept = static_cast<std::size_t>(pair.internal.rows());
    FilterReport ext;
    ext.rows_read = ext.rows_kept = static_cast<std::size_t>(pair.external.rows());
    in.internal = std::move(pair.internal);
    in.external = std::move(pair.external);
    in.external_filter = ext;
    return in;
  }
  if (!cfg.data) throw ConfigError("no data source configured");
  in.schema = read_schema_yaml(cfg.data->schema);
  auto loaded = load_cohort(cfg.data->cohort, in.schema, "internal");
  in.internal = std::move(loaded.table);
  in.internal_filter = std::move(loaded.report);
  if (cfg.data->external) {
    auto ext = load_cohort(*cfg.data->external, in.schema, "external");
    in.external = std::move(ext.table);
    in.external_filter = std::move(ext.report);
  }
  return in;
}

LeakageResult clean_cohort(const CohortTable& table, const LeakagePatternSet& patterns) {
  return remove_leakage(table.feature_view(), patterns);
}

PreparedFeatures prepare_features(const CohortTable& cleaned, const FeatureRecipe& recipe,
                                  bool allow_alignment) {
  PreparedFeatures out;
  CohortTable table = cleaned;
  if (schema_hash(cleaned.schema()) != schema_hash(recipe.raw_schema)) {
    if (!allow_alignment) {
      throw SchemaMismatchError("cohort schema differs from the model's training schema");
    }
    auto aligned = align_features(cleaned, recipe.raw_schema, recipe.imputation.clinical_defaults,
                                  recipe.medians);
    table = std::move(aligned.table);
    out.alignment = std::move(aligned.map);
  }
  out.imputed = impute(table, recipe.imputation, &recipe.medians).table;
  const auto derived = build_derived(out.imputed, recipe.interaction_pairs, recipe.transform_columns);
  std::vector<Eigen::Index> cols;
  for (const auto& name : recipe.selected) cols.push_back(derived.index_of(name));
  out.x = derived.values()(Eigen::all, cols);
  return out;
}

TrainResult run_train(const RunConfig& cfg) {
  cfg.validate();
  std::vector<std::string> warnings;
  Design d = build_design(cfg);
  for (const auto& w : d.inputs.internal_filter.warnings) warnings.push_back(w);

  EnsembleParams params = cfg.model;
  json tuning_json = {{"method", std::string(to_string(cfg.tuning.method))}};
  if (cfg.tuning.method != TuningMethod::None) {
    stage("tuning", [&] {
      const auto space = SearchSpace::gbm_default();
      const auto plan = plan_group_kfold(d.groups, cfg.cv_folds, cfg.seed);
      const Objective objective = [&](const std::vector<double>& point) {
        return gbm_cv_rmse(d.x, d.y, plan, apply_gbm_point(params.gbm, point));
      };
      TuningResult res;
      if (cfg.tuning.method == TuningMethod::Grid) {
        res = tune_grid(space, objective);
      } else {
        BayesOptions opts;
        opts.budget = cfg.tuning.budget;
        opts.initial_points = cfg.tuning.initial_points;
        opts.xi = cfg.tuning.xi;
        opts.seed = cfg.seed;
        res = tune_bayes(space, objective, opts);
      }
      params.gbm = apply_gbm_point(params.gbm, res.best_point);
      tuning_json = to_json_value(res, space);
      tuning_json["method"] = std::string(to_string(cfg.tuning.method));
      return 0;
    });
  }

  CvOptions cv_opts;
  cv_opts.k = cfg.cv_folds;
  cv_opts.seed = cfg.seed;
  cv_opts.median_head = cfg.ablation.enabled;
  TrainResult out;
  out.cv = stage("cross-validation",
                 [&] { return cross_validate(d.x, d.y, d.groups, d.names, params, cv_opts); });
  if (out.cv.plan.reduced) warnings.push_back("fewer groups than folds; k reduced");

  auto fit = stage("final fit", [&] { return fit_ensemble(d.x, d.y, d.groups, d.names, params); });
  ModelBundle& b = out.bundle;
  b.config_hash = config_hash(cfg);
  b.schema_hash = schema_hash(d.cleaned.table.schema());
  auto& rec = b.recipe;
  rec.cohort_schema = d.inputs.schema;
  rec.leakage_patterns = cfg.leakage.all();
  rec.raw_schema = d.cleaned.table.schema();
  rec.imputation = cfg.imputation;
  rec.medians = d.imputed.medians;
  rec.strategies = d.imputed.strategies;
  rec.interaction_pairs = cfg.features.interaction_pairs;
  rec.transform_columns = cfg.features.transform_columns;
  rec.selected = d.names;
  rec.selected_domains = d.domains;
  b.ensemble = std::move(fit.model);
  if (cfg.stratified.enabled) {
    b.strata = stage("stratified fit", [&] {
      return fit_stratified(d.x, d.y, d.groups, d.names, params, cfg.stratified.min_stratum);
    });
  }
  for (std::size_t t = 0; t < 2; ++t) {
    const Eigen::VectorXd e = out.cv.oof.targets[t].point - d.y.col(static_cast<Eigen::Index>(t));
    b.reference.cv_rmse[t] = out.cv.rmse[t];
    b.reference.oof_sq_err[t] = e.array().square();
  }

  // Internal CV clinical report.
  const auto labels = equity_labels(d.imputed.table, cfg.evaluation.equity, warnings);
  const Eigen::VectorXd sbp_true = d.y.col(0);
  const Eigen::VectorXd sbp_oof = out.cv.oof.targets[0].point;
  json cv_json;
  cv_json["k"] = out.cv.plan.k;
  cv_json["reduced"] = out.cv.plan.reduced;
  cv_json["fold_rmse"] = out.cv.fold_rmse;
  for (std::size_t t = 0; t < 2; ++t) {
    const Eigen::VectorXd yt = d.y.col(static_cast<Eigen::Index>(t));
    auto r = to_json_value(target_report(yt, out.cv.oof.targets[t], sbp_true, sbp_oof, labels));
    r["rmse_primary"] = out.cv.rmse_primary[t];
    r["rmse_forest"] = out.cv.rmse_forest[t];
    r["rmse_stacked"] = out.cv.rmse_stacked[t];
    r["fold_alpha"] = out.cv.fold_alpha[t];
    cv_json[kKeys[t]] = r;
  }

  const auto train_pred = predict_with_intervals(b.ensemble, d.x);
  json unc;
  for (std::size_t t = 0; t < 2; ++t) {
    const auto& tm = b.ensemble.targets[t];
    const auto& p = out.cv.oof.targets[t];
    const double cov = coverage_probability(d.y.col(static_cast<Eigen::Index>(t)), p.lower, p.upper);
    unc[kKeys[t]] = {{"nominal", cfg.model.upper_tau - cfg.model.lower_tau},
                     {"cv_coverage", cov},
                     {"cv_coverage_in_band", cov >= kCoverageLow && cov <= kCoverageHigh},
                     {"cv_mean_width", p.width.mean()},
                     {"width_p33", tm.width_p33},
                     {"width_p66", tm.width_p66}};
  }
  unc["training_tiers"] = predictions_summary(train_pred);

  json model_json;
  for (std::size_t t = 0; t < 2; ++t) {
    const auto& tm = b.ensemble.targets[t];
    model_json[kKeys[t]] = {{"blend_alpha", tm.blend.alpha},
                            {"blend_degenerate", tm.blend.degenerate},
                            {"meta_intercept", tm.stack.meta_intercept},
                            {"meta_coef", {tm.stack.meta_coef[0], tm.stack.meta_coef[1]}},
                            {"gbm_trees", tm.stack.gbm.trees.size()},
                            {"forest_trees", tm.stack.forest.trees.size()}};
  }
  model_json["gbm_params"] = {{"n_estimators", params.gbm.n_estimators},
                              {"learning_rate", params.gbm.learning_rate},
                              {"max_depth", params.gbm.max_depth}};
  model_json["features"] = b.ensemble.feature_names.size();
  if (b.strata) {
    json s;
    for (const auto& [st, c] : b.strata->counts) s["counts"][std::string(to_string(st))] = c;
    s["flagged"] = json::array();
    for (auto st : b.strata->flagged) s["flagged"].push_back(std::string(to_string(st)));
    model_json["strata"] = s;
  }

  const auto importance = stage("permutation importance", [&] {
    return permutation_importance(b.ensemble, d.x, d.y, Rng::derive(cfg.seed, 7),
                                  cfg.evaluation.permutation_repeats);
  });
  json imp_json = json::object();
  for (const auto& [name, v] : importance) imp_json[name] = {{"sbp", v[0]}, {"dbp", v[1]}};

  json imputation_json = {{"mice_iterations", d.imputed.mice_iterations},
                          {"mice_final_delta", d.imputed.mice_final_delta},
                          {"audit", to_json_value(d.audit)}};
  for (const auto& [k, v] : d.imputed.strategies) imputation_json["strategies"][k] = std::string(to_string(v));

  json report;
  report["format_version"] = kReportFormatVersion;
  report["generated_at"] = "";
  report["command"] = "train";
  report["config"] = config_to_json(cfg);
  report["config_hash"] = b.config_hash;
  report["schema_hash"] = b.schema_hash;
  report["cohort"] = {{"rows", d.inputs.internal.rows()},
                      {"groups", out.cv.plan.assignments.size()},
                      {"filter", to_json_value(d.inputs.internal_filter)}};
  report["leakage"] = to_json_value(d.cleaned.report);
  report["imputation"] = imputation_json;
  report["feature_selection"] = to_json_value(d.selection.audit);
  report["tuning"] = tuning_json;
  report["cv_metrics"] = cv_json;
  report["uncertainty"] = unc;
  report["model"] = model_json;
  report["permutation_importance"] = imp_json;

  out.cleaned_internal = d.cleaned.table;
  const bool want_external = cfg.data ? cfg.data->external.has_value() : cfg.synthetic_external;
  if (want_external && d.inputs.external) {
    out.cleaned_external = stage("external", [&] { return clean_cohort(*d.inputs.external, cfg.leakage).table; });
    const auto ext = stage("external", [&] {
      return run_validate_external(cfg, b, out.cleaned_internal, *out.cleaned_external);
    });
    report["external"] = to_json_value(ext);
    if (ext.low_alignment) warnings.push_back("external alignment coverage below 0.5");
  }
  if (cfg.ablation.enabled) {
    const auto abl = stage("ablation", [&] {
      return ablation_run(d.x, d.y, d.groups, d.names, d.domains, params, cv_opts, out.cv,
                          cfg.ablation.features);
    });
    report["ablation"] = to_json_value(abl);
  }
  report["warnings"] = warnings;
  out.report = std::move(report);
  out.x = std::move(d.x);
  out.feature_names = std::move(d.names);
  return out;
}

ExternalValidation run_validate_external(const RunConfig& cfg, const ModelBundle& bundle,
                                         const CohortTable& cleaned_internal,
                                         const CohortTable& cleaned_external) {
  ExternalValidation v;
  const auto& rec = bundle.recipe;
  auto aligned = align_features(cleaned_external, rec.raw_schema, rec.imputation.clinical_defaults,
                                rec.medians);
  v.alignment = aligned.map;
  v.low_alignment = aligned.map.coverage < 0.5;
  if (v.low_alignment) {
    spdlog::warn("external alignment coverage {:.2f} is below 0.5", aligned.map.coverage);
  }
  std::vector<std::string> defaulted;
  for (const auto& [name, fill] : aligned.map.defaulted) defaulted.push_back(name);
  v.shift = shift_profile(cleaned_internal, aligned.table.drop_columns(defaulted), cfg.evaluation.kl_bins);
  v.shift.alignment_coverage = aligned.map.coverage;

  const auto prepared = prepare_features(aligned.table, rec, false);
  const auto pred = bundle.strata ? predict_stratified(bundle.ensemble, *bundle.strata, prepared.x)
                                  : predict_with_intervals(bundle.ensemble, prepared.x);
  std::vector<std::string> warnings;
  const auto labels = equity_labels(prepared.imputed, cfg.evaluation.equity, warnings);
  for (const auto& w : warnings) spdlog::warn("{}", w);
  const Eigen::VectorXd sbp_true = cleaned_external.target(Target::Sbp);
  for (std::size_t t = 0; t < 2; ++t) {
    const Eigen::VectorXd yt = cleaned_external.targets().col(static_cast<Eigen::Index>(t));
    v.reports[t] = target_report(yt, pred.targets[t], sbp_true, pred.targets[0].point, labels);
    v.internal_rmse[t] = bundle.reference.cv_rmse[t];
    v.external_rmse[t] = v.reports[t].core.rmse;
    v.generalizability[t] = generalizability(v.internal_rmse[t], v.external_rmse[t]);
    const Eigen::VectorXd sq = (pred.targets[t].point - yt).array().square();
    v.degradation[t] = bootstrap_degradation(bundle.reference.oof_sq_err[t], sq,
                                             cfg.evaluation.bootstrap_resamples,
                                             Rng::derive(cfg.seed, 100 + t));
  }
  return v;
}

PredictionSet run_predict(const ModelBundle& bundle, const CohortTable& cleaned) {
  const auto prepared = prepare_features(cleaned, bundle.recipe, true);
  if (prepared.alignment && prepared.alignment->coverage < 0.5) {
    throw SchemaMismatchError("cohort schema cannot be aligned to the model (coverage " +
                              format_number(prepared.alignment->coverage) + ")");
  }
  return bundle.strata ? predict_stratified(bundle.ensemble, *bundle.strata, prepared.x)
                       : predict_with_intervals(bundle.ensemble, prepared.x);
}

std::string format_predictions_csv(const CohortTable& table, const PredictionSet& pred) {
  if (pred.rows() != table.rows()) throw InvariantError("prediction rows differ from cohort rows");
  std::ostringstream out;
  out << kGroupColumn;
  for (const char* k : kKeys) {
    out << ',' << k << "_pred," << k << "_lower," << k << "_upper," << k << "_width," << k << "_tier";
  }
  out << '\n';
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    out << table.group_ids()[static_cast<std::size_t>(i)];
    for (const auto& p : pred.targets) {
      out << ',' << format_number(p.point[i]) << ',' << format_number(p.lower[i]) << ','
          << format_number(p.upper[i]) << ',' << format_number(p.width[i]) << ','
          << to_string(p.tier[static_cast<std::size_t>(i)]);
    }
    out << '\n';
  }
  return out.str();
}

AblateResult run_ablate(const RunConfig& cfg) {
  cfg.validate();
  Design d = build_design(cfg);
  CvOptions opts;
  opts.k = cfg.cv_folds;
  opts.seed = cfg.seed;
  opts.median_head = true;
  AblateResult out;
  out.baseline = stage("cross-validation",
                       [&] { return cross_validate(d.x, d.y, d.groups, d.names, cfg.model, opts); });
  out.ablation = stage("ablation", [&] {
    return ablation_run(d.x, d.y, d.groups, d.names, d.domains, cfg.model, opts, out.baseline,
                        cfg.ablation.features);
  });
  out.feature_names = d.names;
  return out;
}

std::vector<std::filesystem::path> run_generate(const RunConfig& cfg, const std::filesystem::path& dir) {
  if (!cfg.synthetic) throw ConfigError("generate needs a synthetic block");
  const auto pair = generate_synthetic_pair(*cfg.synthetic);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  const std::vector<std::filesystem::path> paths{dir / "internal.csv", dir / "external.csv",
                                                 dir / "schema.yaml"};
  write_cohort_csv(pair.internal, paths[0]);
  write_cohort_csv(pair.external, paths[1]);
  write_text_file(paths[2], format_schema_yaml(pair.schema));
  return paths;
}

}  // namespace bpstack
