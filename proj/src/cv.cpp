#include "bpstack/cv.hpp"

#include <cmath>
#include <limits>
#include <algorithm>
#include <numeric>

#include "bpstack/error.hpp"
#include "bpstack/parallel.hpp"
#include "bpstack/quantile.hpp"
#include "bpstack/rng.hpp"
#include "bpstack/stats.hpp"

namespace bpstack {

using Matrix = Eigen::Ref<const Eigen::MatrixXd>;

namespace {

TargetPrediction blank(Eigen::Index n) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  TargetPrediction p;
  for (auto* v : {&p.point, &p.primary, &p.forest, &p.stacked, &p.lower, &p.upper, &p.width}) {
    v->setConstant(n, nan);
  }
  p.tier.assign(static_cast<std::size_t>(n), RiskTier::Low);
  return p;
}

void scatter(TargetPrediction& dst, const TargetPrediction& src,
             const std::vector<Eigen::Index>& rows) {
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    const auto j = static_cast<Eigen::Index>(k);
    if (src.point.size()) {
      dst.point[i] = src.point[j];
      dst.primary[i] = src.primary[j];
      dst.forest[i] = src.forest[j];
      dst.stacked[i] = src.stacked[j];
      dst.tier[static_cast<std::size_t>(i)] = src.tier[k];
    }
    dst.lower[i] = src.lower[j];
    dst.upper[i] = src.upper[j];
    dst.width[i] = src.width[j];
  }
  dst.swaps += src.swaps;
}

struct FoldOutput {
  PredictionSet pred;
  std::array<Eigen::VectorXd, 2> median;
  std::array<double, 2> alpha{};
};

}  // namespace

CvResult cross_validate(const Matrix& x, const Matrix& y, const std::vector<std::string>& groups,
                        const std::vector<std::string>& feature_names,
                        const EnsembleParams& params, const CvOptions& options) {
  params.validate();
  if (y.cols() != 2 || x.rows() != y.rows() || static_cast<std::size_t>(x.rows()) != groups.size()) {
    throw DataError("cross_validate: inconsistent shapes");
  }
  CvResult res;
  res.plan = plan_group_kfold(groups, options.k, options.seed);
  const auto folds = static_cast<std::size_t>(res.plan.k);
  std::vector<FoldOutput> out(folds);
  parallel_for(folds, [&](std::size_t f) {
    const int fold = static_cast<int>(f);
    const auto train = res.plan.train_rows(fold);
    const auto test = res.plan.test_rows(fold);
    const Eigen::MatrixXd xtr = x(train, Eigen::all);
    const Eigen::MatrixXd ytr = y(train, Eigen::all);
    const Eigen::MatrixXd xte = x(test, Eigen::all);
    std::vector<std::string> gtr;
    gtr.reserve(train.size());
    for (auto i : train) gtr.push_back(groups[static_cast<std::size_t>(i)]);
    EnsembleParams p = params;
    p.seed = Rng::derive(params.seed, f + 1);
    auto& o = out[f];
    Preprocessor pre;
    if (options.point_models) {
      auto fit = fit_ensemble(xtr, ytr, gtr, feature_names, p);
      o.pred = predict_with_intervals(fit.model, xte);
      for (std::size_t t = 0; t < 2; ++t) o.alpha[t] = fit.model.targets[t].blend.alpha;
      pre = fit.model.pre;
    } else {
      pre = Preprocessor::fit(xtr);
      const Eigen::MatrixXd ttr = pre.transform(xtr);
      const Eigen::MatrixXd tte = pre.transform(xte);
      for (std::size_t t = 0; t < 2; ++t) {
        const Eigen::VectorXd yt = ytr.col(static_cast<Eigen::Index>(t));
        auto lo = fit_quantile(ttr, yt, p.lower_tau, p.quantile_l1_penalty).predict(tte);
        auto hi = fit_quantile(ttr, yt, p.upper_tau, p.quantile_l1_penalty).predict(tte);
        auto& tp = o.pred.targets[t];
        for (Eigen::Index i = 0; i < lo.size(); ++i) {
          if (lo[i] > hi[i]) {
            std::swap(lo[i], hi[i]);
            ++tp.swaps;
          }
        }
        tp.lower = lo;
        tp.upper = hi;
        tp.width = hi - lo;
      }
    }
    if (options.median_head) {
      const Eigen::MatrixXd ttr = pre.transform(xtr);
      const Eigen::MatrixXd tte = pre.transform(xte);
      for (std::size_t t = 0; t < 2; ++t) {
        o.median[t] = fit_quantile(ttr, ytr.col(static_cast<Eigen::Index>(t)), 0.5,
                                   p.quantile_l1_penalty)
                          .predict(tte);
      }
    }
  });

  const Eigen::Index n = x.rows();
  for (std::size_t t = 0; t < 2; ++t) {
    res.oof.targets[t] = blank(n);
    if (options.median_head) res.median[t].setConstant(n, std::numeric_limits<double>::quiet_NaN());
  }
  for (std::size_t f = 0; f < folds; ++f) {
    const auto test = res.plan.test_rows(static_cast<int>(f));
    std::array<double, 2> fr{};
    for (std::size_t t = 0; t < 2; ++t) {
      scatter(res.oof.targets[t], out[f].pred.targets[t], test);
      if (options.median_head) {
        for (std::size_t k = 0; k < test.size(); ++k) {
          res.median[t][test[k]] = out[f].median[t][static_cast<Eigen::Index>(k)];
        }
      }
      if (options.point_models) {
        const Eigen::VectorXd yt = y(test, static_cast<Eigen::Index>(t));
        fr[t] = stats::rmse(yt, out[f].pred.targets[t].point);
        res.fold_alpha[t].push_back(out[f].alpha[t]);
      }
    }
    res.fold_rmse.push_back(fr);
  }
  if (options.point_models) {
    for (std::size_t t = 0; t < 2; ++t) {
      const Eigen::VectorXd yt = y.col(static_cast<Eigen::Index>(t));
      const auto& p = res.oof.targets[t];
      res.rmse[t] = stats::rmse(yt, p.point);
      res.rmse_primary[t] = stats::rmse(yt, p.primary);
      res.rmse_forest[t] = stats::rmse(yt, p.forest);
      res.rmse_stacked[t] = stats::rmse(yt, p.stacked);
    }
  }
  return res;
}

AblationReport ablation_run(const Matrix& x, const Matrix& y, const std::vector<std::string>& groups,
                            const std::vector<std::string>& feature_names,
                            const std::vector<DomainTag>& domains, const EnsembleParams& params,
                            const CvOptions& options, const CvResult& baseline,
                            const std::vector<std::string>& single_features) {
  if (domains.size() != feature_names.size()) throw DataError("ablation: one domain per feature");
  if (!baseline.oof.targets[0].point.size()) throw DataError("ablation: baseline lacks point predictions");
  AblationReport rep;
  rep.full_rmse = baseline.rmse;
  auto finish = [&](AblationEntry& e) {
    for (std::size_t t = 0; t < 2; ++t) {
      e.impact[t] = e.rmse[t] - rep.full_rmse[t];
      e.impact_pct[t] = e.impact[t] / rep.full_rmse[t] * 100.0;
    }
  };

  // Feature removals, each a full CV re-run.
  struct Removal {
    std::string name;
    std::string kind;
    std::vector<bool> drop;
  };
  std::vector<Removal> removals;
  for (DomainTag tag : {DomainTag::Vitals, DomainTag::Laboratory, DomainTag::Medication,
                        DomainTag::Temporal, DomainTag::Demographic, DomainTag::Derived}) {
    std::vector<bool> drop(domains.size());
    for (std::size_t j = 0; j < domains.size(); ++j) drop[j] = domains[j] == tag;
    if (std::none_of(drop.begin(), drop.end(), [](bool b) { return b; })) continue;
    removals.push_back({std::string(to_string(tag)), "category", std::move(drop)});
  }
  for (const auto& name : single_features) {
    std::vector<bool> drop(feature_names.size());
    for (std::size_t j = 0; j < feature_names.size(); ++j) drop[j] = feature_names[j] == name;
    removals.push_back({name, "feature", std::move(drop)});
  }
  std::vector<AblationEntry> removal_entries(removals.size());
  CvOptions opts = options;
  opts.median_head = false;
  parallel_for(removals.size(), [&](std::size_t r) {
    auto& e = removal_entries[r];
    e.name = removals[r].name;
    e.kind = removals[r].kind;
    std::vector<Eigen::Index> keep;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
      if (removals[r].drop[j]) {
        ++e.removed_features;
      } else {
        keep.push_back(static_cast<Eigen::Index>(j));
        names.push_back(feature_names[j]);
      }
    }
    if (e.removed_features == 0) {
      e.skipped = true;
      e.note = "feature not among the selected features";
      return;
    }
    if (keep.empty()) {
      e.skipped = true;
      e.note = "removal leaves no features";
      return;
    }
    const Eigen::MatrixXd xs = x(Eigen::all, keep);
    try {
      const auto cv = cross_validate(xs, y, groups, names, params, opts);
      e.rmse = cv.rmse;
    } catch (const DataError& err) {
      e.skipped = true;
      e.note = err.what();
    }
  });
  for (auto& e : removal_entries) {
    if (!e.skipped) finish(e);
    rep.entries.push_back(std::move(e));
  }

  // Component toggles on the baseline predictions.
  for (const char* name : {"no_stacking", "no_blend", "quantile_only"}) {
    AblationEntry e;
    e.name = name;
    e.kind = "component";
    for (std::size_t t = 0; t < 2; ++t) {
      const Eigen::VectorXd yt = y.col(static_cast<Eigen::Index>(t));
      const auto& p = baseline.oof.targets[t];
      const std::string n = name;
      if (n == "no_stacking") {
        e.rmse[t] = stats::rmse(yt, p.primary);
      } else if (n == "no_blend") {
        e.rmse[t] = stats::rmse(yt, p.stacked);
      } else if (baseline.median[t].size() == yt.size()) {
        e.rmse[t] = stats::rmse(yt, baseline.median[t]);
      } else {
        e.skipped = true;
        e.note = "baseline has no median head";
      }
    }
    if (!e.skipped) finish(e);
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

std::map<std::string, std::array<double, 2>> permutation_importance(const FittedEnsemble& model,
                                                                  const Matrix& x, const Matrix& y,
                                                                  std::uint64_t seed, int repeats) {
  if (repeats < 1) throw ConfigError("permutation repeats must be >= 1");
  if (y.cols() != 2 || x.rows() != y.rows()) throw DataError("permutation_importance: bad shapes");
  const auto base = predict_with_intervals(model, x);
  std::array<double, 2> base_rmse{};
  for (std::size_t t = 0; t < 2; ++t) {
    base_rmse[t] = stats::rmse(y.col(static_cast<Eigen::Index>(t)), base.targets[t].point);
  }
  const auto d = static_cast<std::size_t>(x.cols());
  std::vector<std::array<double, 2>> inc(d, {0.0, 0.0});
  parallel_for(d, [&](std::size_t j) {
    Rng rng(Rng::derive(seed, j));
    Eigen::MatrixXd xp = x;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(x.rows()));
    for (int r = 0; r < repeats; ++r) {
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      xp.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(j))(perm);
      const auto pred = predict_with_intervals(model, xp);
      for (std::size_t t = 0; t < 2; ++t) {
        inc[j][t] += stats::rmse(y.col(static_cast<Eigen::Index>(t)), pred.targets[t].point) -
                     base_rmse[t];
      }
    }
    for (auto& v : inc[j]) v /= static_cast<double>(repeats);
  });
  std::map<std::string, std::array<double, 2>> out;
  for (std::size_t j = 0; j < d; ++j) out[model.feature_names[j]] = inc[j];
  return out;
}

TargetReport target_report(const VectorRef& y_true, const TargetPrediction& pred,
                           const VectorRef& sbp_true, const VectorRef& sbp_pred,
                           const std::map<std::string, std::vector<std::string>>& equity) {
  TargetReport r;
  r.core = core_metrics(y_true, pred.point);
  r.within = within_percentages(y_true, pred.point);
  r.grade = bhs_grade(r.within.within_5, r.within.within_10, r.within.within_15);
  r.aami_pass = aami_check(r.core.mean_bias, r.core.error_sd);
  r.bland_altman = bland_altman(y_true, pred.point);
  r.coverage = coverage_probability(y_true, pred.lower, pred.upper);
  r.coverage_in_band = r.coverage >= kCoverageLow && r.coverage <= kCoverageHigh;
  r.mean_interval_width = pred.width.size() ? pred.width.mean() : 0.0;
  r.interval_swaps = pred.swaps;
  r.stratified = stratified_report(sbp_true, sbp_pred, y_true, pred.point);
  for (const auto& [name, labels] : equity) {
    r.equity[name] = equity_by_labels(y_true, pred.point, labels);
  }
  return r;
}

}  // namespace bpstack
