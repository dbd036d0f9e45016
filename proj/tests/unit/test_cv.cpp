#include <cmath>
#include <set>

#include "bpstack/cv.hpp"
#include "bpstack/error.hpp"
#include "bpstack/stats.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bpstack;

namespace {

const AblationEntry& entry(const AblationReport& r, const std::string& name) {
  for (const auto& e : r.entries) {
    if (e.name == name) return e;
  }
  throw std::runtime_error("no ablation entry " + name);
}

}  // namespace

TEST_SUITE("cv") {

TEST_CASE("cross-validation predicts every row out of fold") {
  Rng rng(1);
  const auto d = testutil::regression(rng, 200);
  CvOptions o;
  o.k = 4;
  o.median_head = true;
  const auto cv = cross_validate(d.x, d.y, d.groups, d.names, testutil::fast_params(), o);
  CHECK(cv.plan.k == 4);
  CHECK(cv.oof.rows() == 200);
  CHECK(cv.fold_rmse.size() == 4);
  CHECK(cv.fold_alpha[0].size() == 4);
  CHECK(cv.median[0].size() == 200);
  for (std::size_t t = 0; t < 2; ++t) {
    const auto& p = cv.oof.targets[t];
    CHECK(cv.rmse[t] == doctest::Approx(stats::rmse(d.y.col(static_cast<Eigen::Index>(t)), p.point)));
    CHECK(cv.rmse_primary[t] == doctest::Approx(stats::rmse(d.y.col(static_cast<Eigen::Index>(t)), p.primary)));
    CHECK((p.upper - p.lower).minCoeff() >= 0.0);
    CHECK(cv.rmse[t] < 6.0);
  }
  // repeated runs agree exactly
  const auto again = cross_validate(d.x, d.y, d.groups, d.names, testutil::fast_params(), o);
  CHECK(again.oof.targets[0].point == cv.oof.targets[0].point);
  CHECK(again.rmse == cv.rmse);
}

TEST_CASE("interval-only mode leaves point predictions empty") {
  Rng rng(2);
  const auto d = testutil::regression(rng, 150);
  CvOptions o;
  o.point_models = false;
  const auto cv = cross_validate(d.x, d.y, d.groups, d.names, testutil::fast_params(), o);
  CHECK(cv.oof.targets[0].lower.size() == 150);
  CHECK((cv.oof.targets[0].upper - cv.oof.targets[0].lower).minCoeff() >= 0.0);
  const double cov = coverage_probability(d.y.col(0), cv.oof.targets[0].lower, cv.oof.targets[0].upper);
  CHECK(cov > 0.6);
  CHECK(cov < 0.95);
}

TEST_CASE("ablation separates informative, redundant and noise features") {
  Rng rng(3);
  auto d = testutil::regression(rng, 400, 2.0);
  Eigen::MatrixXd x(d.x.rows(), 4);
  x << d.x.col(0), d.x.col(0), d.x.col(1), d.x.col(2);
  const std::vector<std::string> names{"signal_a", "dup_a", "signal_b", "noise"};
  const std::vector<DomainTag> domains{DomainTag::Vitals, DomainTag::Laboratory, DomainTag::Medication,
                                       DomainTag::Temporal};
  CvOptions o;
  o.median_head = true;
  const auto p = testutil::fast_params();
  const auto base = cross_validate(x, d.y, d.groups, names, p, o);
  const auto r = ablation_run(x, d.y, d.groups, names, domains, p, o, base, {"signal_b", "noise", "dup_a"});
  CHECK(r.full_rmse == base.rmse);

  const auto& informative = entry(r, "signal_b");
  CHECK(informative.kind == "feature");
  CHECK(informative.impact[0] > 0.2 * r.full_rmse[0]);
  CHECK(informative.impact_pct[0] == doctest::Approx(100.0 * informative.impact[0] / r.full_rmse[0]));
  for (const char* name : {"noise", "dup_a"}) {
    const auto& e = entry(r, name);
    INFO(name);
    CHECK(std::abs(e.impact_pct[0]) < 10.0);
    CHECK(std::abs(e.impact[0]) < informative.impact[0] / 4.0);
  }
  // a category holding one of two copies changes little
  CHECK(std::abs(entry(r, "vitals").impact_pct[0]) < 10.0);
  CHECK(entry(r, "medication").impact[0] == doctest::Approx(informative.impact[0]));
  CHECK_THROWS(entry(r, "demographic"));

  const auto& no_stack = entry(r, "no_stacking");
  CHECK(no_stack.kind == "component");
  CHECK(no_stack.rmse[0] == doctest::Approx(base.rmse_primary[0]));
  CHECK(entry(r, "no_blend").rmse[1] == doctest::Approx(base.rmse_stacked[1]));
  CHECK(entry(r, "quantile_only").rmse[0] ==
        doctest::Approx(stats::rmse(d.y.col(0), base.median[0])));
  for (const auto& e : r.entries) {
    if (e.skipped) continue;
    for (std::size_t t = 0; t < 2; ++t) CHECK(e.impact[t] == doctest::Approx(e.rmse[t] - r.full_rmse[t]));
  }
}

TEST_CASE("permutation importance ranks the signal above noise") {
  Rng rng(4);
  const auto d = testutil::regression(rng, 300, 2.0);
  const auto fit = fit_ensemble(d.x, d.y, d.groups, d.names, testutil::fast_params());
  const auto imp = permutation_importance(fit.model, d.x, d.y, 11, 3);
  CHECK(imp.size() == 3);
  CHECK(imp.at("signal_a")[0] > imp.at("signal_b")[0]);
  CHECK(imp.at("signal_b")[0] > 10.0 * std::abs(imp.at("noise")[0]));
  CHECK(imp == permutation_importance(fit.model, d.x, d.y, 11, 3));
}

TEST_CASE("target report bundles the metric suite") {
  Rng rng(5);
  const Eigen::Index n = 100;
  const Eigen::VectorXd y = (120.0 + testutil::normals(rng, n, 15.0).array()).matrix();
  TargetPrediction p;
  p.point = y + testutil::normals(rng, n, 4.0);
  p.lower = p.point.array() - 6.0;
  p.upper = p.point.array() + 6.0;
  p.width = p.upper - p.lower;
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < n; ++i) labels.push_back(i % 2 ? "a" : "b");
  const auto r = target_report(y, p, y, p.point, {{"half", labels}});
  CHECK(r.core.rmse == doctest::Approx(stats::rmse(y, p.point)));
  CHECK(r.coverage == doctest::Approx(coverage_probability(y, p.lower, p.upper)));
  CHECK(r.mean_interval_width == doctest::Approx(12.0));
  CHECK(r.grade == bhs_grade(r.within.within_5, r.within.within_10, r.within.within_15));
  CHECK(r.aami_pass == aami_check(r.core.mean_bias, r.core.error_sd));
  CHECK(r.equity.at("half").rmse.size() == 2);
}

}
