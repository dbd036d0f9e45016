#include "bpstack/ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "bpstack/error.hpp"
#include "bpstack/parallel.hpp"
#include "bpstack/rng.hpp"
#include "bpstack/stats.hpp"

namespace bpstack {

using Matrix = Eigen::Ref<const Eigen::MatrixXd>;
using Vector = Eigen::Ref<const Eigen::VectorXd>;

Preprocessor Preprocessor::fit(const Matrix& x) {
  Preprocessor p;
  p.input_cols = x.cols();
  std::vector<double> med, scale;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto col = stats::to_vector(x.col(j));
    const double s = stats::sd(col);
    if (!(s * s >= kVarianceFloor)) continue;
    p.kept.push_back(static_cast<int>(j));
    med.push_back(stats::median(col));
    const double q = stats::iqr(col);
    // Degenerate spread (e.g. sparse binary flags) leaves the column unscaled.
    scale.push_back(q < kIqrFloor ? 1.0 : q);
  }
  if (p.kept.empty()) throw DataError("variance filter removed every feature");
  p.median = Eigen::Map<Eigen::VectorXd>(med.data(), static_cast<Eigen::Index>(med.size()));
  p.iqr = Eigen::Map<Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  return p;
}

Eigen::MatrixXd Preprocessor::transform(const Matrix& x) const {
  if (x.cols() != input_cols) {
    throw SchemaMismatchError("preprocessor expects " + std::to_string(input_cols) +
                              " columns, got " + std::to_string(x.cols()));
  }
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(k);
    out.col(j) = (x.col(kept[k]).array() - median[j]) / iqr[j];
  }
  return out;
}

void EnsembleParams::validate() const {
  gbm.validate();
  forest.validate();
  if (!(ridge_penalty >= 0.0)) throw ConfigError("ridge_penalty must be >= 0");
  if (!(quantile_l1_penalty >= 0.0)) throw ConfigError("quantile_l1_penalty must be >= 0");
  if (!(lower_tau > 0.0 && lower_tau < upper_tau && upper_tau < 1.0)) {
    throw ConfigError("quantile levels must satisfy 0 < lower < upper < 1");
  }
  if (stack_folds < 2) throw ConfigError("stack_folds must be >= 2");
}

Eigen::VectorXd StackedModel::combine(const Vector& gbm_pred, const Vector& forest_pred) const {
  return (meta_coef[0] * gbm_pred + meta_coef[1] * forest_pred).array() + meta_intercept;
}

Eigen::VectorXd StackedModel::predict(const Matrix& x) const {
  return combine(gbm.predict(x), forest.predict(x));
}

StackFit fit_stacked(const Matrix& x, const Vector& y, const std::vector<std::string>& groups,
                     const EnsembleParams& params) {
  params.validate();
  if (static_cast<std::size_t>(x.rows()) != groups.size() || x.rows() != y.size()) {
    throw DataError("fit_stacked: rows, targets and groups differ in length");
  }
  StackFit fit;
  fit.plan = plan_group_kfold(groups, params.stack_folds, params.seed);
  fit.oof = Eigen::MatrixXd::Zero(x.rows(), 2);
  const auto folds = static_cast<std::size_t>(fit.plan.k);
  parallel_for(2 * folds, [&](std::size_t task) {
    const int fold = static_cast<int>(task / 2);
    const auto train = fit.plan.train_rows(fold);
    const auto test = fit.plan.test_rows(fold);
    const Eigen::MatrixXd xtr = x(train, Eigen::all);
    const Eigen::VectorXd ytr = y(train);
    const Eigen::MatrixXd xte = x(test, Eigen::all);
    Eigen::VectorXd pred;
    if (task % 2 == 0) {
      TreeParams p = params.gbm;
      p.seed = Rng::derive(params.gbm.seed, static_cast<std::uint64_t>(fold) + 1);
      pred = fit_gbm(xtr, ytr, p).predict(xte);
    } else {
      TreeParams p = params.forest;
      p.seed = Rng::derive(params.forest.seed, static_cast<std::uint64_t>(fold) + 1);
      pred = fit_random_forest(xtr, ytr, p).predict(xte);
    }
    const auto col = static_cast<Eigen::Index>(task % 2);
    for (std::size_t r = 0; r < test.size(); ++r) fit.oof(test[r], col) = pred[static_cast<Eigen::Index>(r)];
  });
  const auto meta = stats::ridge(fit.oof, y, params.ridge_penalty);
  fit.model.meta_intercept = meta.intercept;
  fit.model.meta_coef = meta.coef;
  parallel_for(2, [&](std::size_t task) {
    if (task == 0) {
      fit.model.gbm = fit_gbm(x, y, params.gbm);
    } else {
      fit.model.forest = fit_random_forest(x, y, params.forest);
    }
  });
  return fit;
}

BlendResult blend_alpha(const Vector& y, const Vector& primary, const Vector& stacked) {
  if (y.size() == 0 || y.size() != primary.size() || y.size() != stacked.size()) {
    throw DataError("blend_alpha: vectors must share a non-zero length");
  }
  BlendResult r;
  const Eigen::VectorXd d = primary - stacked;
  const Eigen::VectorXd e = y - stacked;
  const double dd = d.squaredNorm();
  const auto n = static_cast<double>(y.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < r.grid_mse.size(); ++g) {
    const double a = static_cast<double>(g) / 10.0;
    r.grid_mse[g] = (e - a * d).squaredNorm() / n;
    if (r.grid_mse[g] < best) {
      best = r.grid_mse[g];
      r.grid_alpha = a;
    }
  }
  if (dd == 0.0) {
    r.alpha = kDegenerateAlpha;
    r.grid_alpha = kDegenerateAlpha;
    r.degenerate = true;
    return r;
  }
  r.alpha = std::clamp(e.dot(d) / dd, 0.0, 1.0);
  return r;
}

std::string_view to_string(RiskTier t) {
  switch (t) {
    case RiskTier::Low: return "low";
    case RiskTier::Medium: return "medium";
    case RiskTier::High: return "high";
  }
  return "low";
}

RiskTier risk_tier(double width, double p33, double p66) {
  if (width <= p33) return RiskTier::Low;
  if (width <= p66) return RiskTier::Medium;
  return RiskTier::High;
}

namespace {

struct Interval {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::size_t swaps = 0;
};

Interval interval(const TargetModel& tm, const Matrix& xt) {
  Interval iv{tm.lower.predict(xt), tm.upper.predict(xt), 0};
  for (Eigen::Index i = 0; i < iv.lower.size(); ++i) {
    if (iv.lower[i] > iv.upper[i]) {
      std::swap(iv.lower[i], iv.upper[i]);
      ++iv.swaps;
    }
  }
  return iv;
}

}  // namespace

EnsembleFit fit_ensemble(const Matrix& x, const Matrix& y, const std::vector<std::string>& groups,
                         const std::vector<std::string>& feature_names,
                         const EnsembleParams& params) {
  params.validate();
  if (y.cols() != 2) throw DataError("fit_ensemble expects two target columns");
  if (static_cast<std::size_t>(x.cols()) != feature_names.size()) {
    throw DataError("fit_ensemble: feature names do not match the matrix");
  }
  EnsembleFit out;
  auto& model = out.model;
  model.feature_names = feature_names;
  model.pre = Preprocessor::fit(x);
  const Eigen::MatrixXd xt = model.pre.transform(x);
  for (Target t : kTargets) {
    const auto ti = static_cast<std::size_t>(t);
    const Eigen::VectorXd yt = y.col(static_cast<Eigen::Index>(ti));
    auto& tm = model.targets[ti];
    auto& diag = out.diagnostics[ti];
    auto stack = fit_stacked(xt, yt, groups, params);
    tm.stack = std::move(stack.model);
    diag.stack_folds_used = stack.plan.k;
    diag.oof_primary = stack.oof.col(0);
    diag.oof_forest = stack.oof.col(1);
    diag.oof_stacked = tm.stack.combine(stack.oof.col(0), stack.oof.col(1));
    tm.blend = blend_alpha(yt, diag.oof_primary, diag.oof_stacked);
    tm.lower = fit_quantile(xt, yt, params.lower_tau, params.quantile_l1_penalty);
    tm.upper = fit_quantile(xt, yt, params.upper_tau, params.quantile_l1_penalty);
    const auto iv = interval(tm, xt);
    diag.train_width = iv.upper - iv.lower;
    const auto widths = stats::to_vector(diag.train_width);
    tm.width_p33 = stats::quantile(widths, 0.33);
    tm.width_p66 = stats::quantile(widths, 0.66);
  }
  return out;
}

PredictionSet predict_with_intervals(const FittedEnsemble& model, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != model.feature_names.size()) {
    throw SchemaMismatchError("model expects " + std::to_string(model.feature_names.size()) +
                              " aligned features, got " + std::to_string(x.cols()));
  }
  const Eigen::MatrixXd xt = model.pre.transform(x);
  PredictionSet out;
  for (Target t : kTargets) {
    const auto ti = static_cast<std::size_t>(t);
    const auto& tm = model.targets[ti];
    auto& p = out.targets[ti];
    p.primary = tm.stack.gbm.predict(xt);
    p.forest = tm.stack.forest.predict(xt);
    p.stacked = tm.stack.combine(p.primary, p.forest);
    const double a = tm.blend.alpha;
    p.point = a * p.primary + (1.0 - a) * p.stacked;
    auto iv = interval(tm, xt);
    p.lower = std::move(iv.lower);
    p.upper = std::move(iv.upper);
    p.swaps = iv.swaps;
    p.width = p.upper - p.lower;
    p.tier.reserve(static_cast<std::size_t>(p.width.size()));
    for (Eigen::Index i = 0; i < p.width.size(); ++i) {
      p.tier.push_back(risk_tier(p.width[i], tm.width_p33, tm.width_p66));
    }
  }
  return out;
}

StratifiedModels fit_stratified(const Matrix& x, const Matrix& y,
                                const std::vector<std::string>& groups,
                                const std::vector<std::string>& feature_names,
                                const EnsembleParams& params, std::size_t min_stratum) {
  StratifiedModels out;
  std::map<Stratum, std::vector<Eigen::Index>> rows;
  for (Eigen::Index i = 0; i < y.rows(); ++i) rows[stratum_of(y(i, 0))].push_back(i);
  for (Stratum s : kStrata) {
    const auto& r = rows[s];
    out.counts[s] = r.size();
    if (r.size() < min_stratum || r.empty()) {
      out.flagged.push_back(s);
      continue;
    }
    std::vector<std::string> g;
    g.reserve(r.size());
    for (auto i : r) g.push_back(groups[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd xs = x(r, Eigen::all);
    const Eigen::MatrixXd ys = y(r, Eigen::all);
    out.models.emplace(s, fit_ensemble(xs, ys, g, feature_names, params).model);
  }
  return out;
}

PredictionSet predict_stratified(const FittedEnsemble& global, const StratifiedModels& strata,
                                 const Matrix& x) {
  PredictionSet out = predict_with_intervals(global, x);
  std::map<Stratum, std::vector<Eigen::Index>> rows;
  const auto& sbp = out.at(Target::Sbp).point;
  for (Eigen::Index i = 0; i < sbp.size(); ++i) rows[stratum_of(sbp[i])].push_back(i);
  for (const auto& [s, model] : strata.models) {
    const auto& r = rows[s];
    if (r.empty()) continue;
    const Eigen::MatrixXd xs = x(r, Eigen::all);
    const auto local = predict_with_intervals(model, xs);
    for (std::size_t ti = 0; ti < 2; ++ti) {
      auto& dst = out.targets[ti];
      const auto& src = local.targets[ti];
      for (std::size_t k = 0; k < r.size(); ++k) {
        const auto i = r[k];
        const auto j = static_cast<Eigen::Index>(k);
        dst.point[i] = src.point[j];
        dst.primary[i] = src.primary[j];
        dst.forest[i] = src.forest[j];
        dst.stacked[i] = src.stacked[j];
        dst.lower[i] = src.lower[j];
        dst.upper[i] = src.upper[j];
        dst.width[i] = src.width[j];
        dst.tier[static_cast<std::size_t>(i)] = src.tier[k];
      }
      dst.swaps += src.swaps;
    }
  }
  return out;
}

// ---- persistence -----------------------------------------------------------

namespace {

using nlohmann::json;

std::vector<double> vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd eig(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json tree_json(const RegressionTree& t) {
  return {{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left},
          {"right", t.right},     {"value", t.value}};
}

RegressionTree tree_from(const json& j) {
  RegressionTree t;
  j.at("feature").get_to(t.feature);
  j.at("threshold").get_to(t.threshold);
  j.at("left").get_to(t.left);
  j.at("right").get_to(t.right);
  j.at("value").get_to(t.value);
  const auto n = t.feature.size();
  if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n ||
      t.value.size() != n) {
    throw DataError("model file: malformed tree");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.feature[i] >= 0 &&
        (t.left[i] <= static_cast<int>(i) || t.right[i] <= static_cast<int>(i) ||
         t.left[i] >= static_cast<int>(n) || t.right[i] >= static_cast<int>(n))) {
      throw DataError("model file: malformed tree links");
    }
  }
  return t;
}

json trees_json(const std::vector<RegressionTree>& trees) {
  json arr = json::array();
  for (const auto& t : trees) arr.push_back(tree_json(t));
  return arr;
}

std::vector<RegressionTree> trees_from(const json& j) {
  std::vector<RegressionTree> out;
  for (const auto& t : j) out.push_back(tree_from(t));
  return out;
}

json quantile_json(const QuantileModel& q) {
  return {{"tau", q.tau},
          {"l1_penalty", q.l1_penalty},
          {"intercept", q.intercept},
          {"coef", vec(q.coef)},
          {"objective", q.objective},
          {"iterations", q.iterations}};
}

QuantileModel quantile_from(const json& j) {
  QuantileModel q;
  q.tau = j.at("tau").get<double>();
  q.l1_penalty = j.at("l1_penalty").get<double>();
  q.intercept = j.at("intercept").get<double>();
  q.coef = eig(j.at("coef"));
  q.objective = j.at("objective").get<double>();
  q.iterations = j.at("iterations").get<int>();
  return q;
}

constexpr std::array<const char*, 2> kTargetKeys{"sbp", "dbp"};

Stratum parse_stratum(const std::string& s) {
  for (Stratum st : kStrata) {
    if (to_string(st) == s) return st;
  }
  throw DataError("model file: unknown stratum '" + s + "'");
}

}  // namespace

void to_json(json& j, const FittedEnsemble& m) {
  j = json::object();
  j["feature_names"] = m.feature_names;
  j["preprocessing"] = {{"input_cols", m.pre.input_cols},
                        {"kept", m.pre.kept},
                        {"median", vec(m.pre.median)},
                        {"iqr", vec(m.pre.iqr)}};
  for (std::size_t ti = 0; ti < 2; ++ti) {
    const auto& tm = m.targets[ti];
    j["targets"][kTargetKeys[ti]] = {
        {"gbm",
         {{"init", tm.stack.gbm.init},
          {"learning_rate", tm.stack.gbm.learning_rate},
          {"trees", trees_json(tm.stack.gbm.trees)}}},
        {"forest", {{"trees", trees_json(tm.stack.forest.trees)}}},
        {"meta", {{"intercept", tm.stack.meta_intercept}, {"coef", vec(tm.stack.meta_coef)}}},
        {"blend",
         {{"alpha", tm.blend.alpha},
          {"degenerate", tm.blend.degenerate},
          {"grid_mse", tm.blend.grid_mse},
          {"grid_alpha", tm.blend.grid_alpha}}},
        {"quantile_lower", quantile_json(tm.lower)},
        {"quantile_upper", quantile_json(tm.upper)},
        {"width_p33", tm.width_p33},
        {"width_p66", tm.width_p66}};
  }
}

void from_json(const json& j, FittedEnsemble& m) {
  j.at("feature_names").get_to(m.feature_names);
  const auto& pre = j.at("preprocessing");
  m.pre.input_cols = pre.at("input_cols").get<Eigen::Index>();
  pre.at("kept").get_to(m.pre.kept);
  m.pre.median = eig(pre.at("median"));
  m.pre.iqr = eig(pre.at("iqr"));
  if (static_cast<std::size_t>(m.pre.input_cols) != m.feature_names.size() ||
      m.pre.kept.size() != static_cast<std::size_t>(m.pre.median.size()) ||
      m.pre.kept.size() != static_cast<std::size_t>(m.pre.iqr.size())) {
    throw DataError("model file: inconsistent preprocessing state");
  }
  const auto width = static_cast<Eigen::Index>(m.pre.kept.size());
  for (std::size_t ti = 0; ti < 2; ++ti) {
    const auto& t = j.at("targets").at(kTargetKeys[ti]);
    auto& tm = m.targets[ti];
    tm.stack.gbm.init = t.at("gbm").at("init").get<double>();
    tm.stack.gbm.learning_rate = t.at("gbm").at("learning_rate").get<double>();
    tm.stack.gbm.trees = trees_from(t.at("gbm").at("trees"));
    tm.stack.forest.trees = trees_from(t.at("forest").at("trees"));
    if (tm.stack.forest.trees.empty()) throw DataError("model file: empty forest");
    for (const auto* trees : {&tm.stack.gbm.trees, &tm.stack.forest.trees}) {
      for (const auto& tree : *trees) {
        for (int f : tree.feature) {
          if (f >= width) throw DataError("model file: tree references a missing feature");
        }
      }
    }
    tm.stack.meta_intercept = t.at("meta").at("intercept").get<double>();
    const auto coef = eig(t.at("meta").at("coef"));
    if (coef.size() != 2) throw DataError("model file: meta learner needs two weights");
    tm.stack.meta_coef = coef;
    const auto& b = t.at("blend");
    tm.blend.alpha = b.at("alpha").get<double>();
    tm.blend.degenerate = b.at("degenerate").get<bool>();
    b.at("grid_mse").get_to(tm.blend.grid_mse);
    tm.blend.grid_alpha = b.at("grid_alpha").get<double>();
    tm.lower = quantile_from(t.at("quantile_lower"));
    tm.upper = quantile_from(t.at("quantile_upper"));
    if (tm.lower.coef.size() != width || tm.upper.coef.size() != width) {
      throw DataError("model file: quantile head width mismatch");
    }
    tm.width_p33 = t.at("width_p33").get<double>();
    tm.width_p66 = t.at("width_p66").get<double>();
  }
}

void to_json(json& j, const StratifiedModels& m) {
  j = json::object();
  j["models"] = json::object();
  for (const auto& [s, model] : m.models) j["models"][std::string(to_string(s))] = model;
  j["counts"] = json::object();
  for (const auto& [s, c] : m.counts) j["counts"][std::string(to_string(s))] = c;
  j["flagged"] = json::array();
  for (Stratum s : m.flagged) j["flagged"].push_back(std::string(to_string(s)));
}

void from_json(const json& j, StratifiedModels& m) {
  for (const auto& [k, v] : j.at("models").items()) m.models.emplace(parse_stratum(k), v.get<FittedEnsemble>());
  for (const auto& [k, v] : j.at("counts").items()) m.counts[parse_stratum(k)] = v.get<std::size_t>();
  for (const auto& s : j.at("flagged")) m.flagged.push_back(parse_stratum(s.get<std::string>()));
}

}  // namespace bpstack
