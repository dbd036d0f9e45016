#include <cmath>

#include "bpstack/error.hpp"
#include "bpstack/ensemble.hpp"
#include "bpstack/stats.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bpstack;

TEST_SUITE("ensemble") {

TEST_CASE("preprocessor drops constant columns and scales by IQR") {
  Eigen::MatrixXd x(5, 3);
  x << 1, 7, 0, 2, 7, 0, 3, 7, 0, 4, 7, 0, 5, 7, 1;
  const auto p = Preprocessor::fit(x);
  CHECK(p.kept == std::vector<int>{0, 2});
  CHECK(p.median[0] == 3.0);
  CHECK(p.iqr[0] == 2.0);
  // sparse flag: IQR 0, left unscaled
  CHECK(p.iqr[1] == 1.0);
  const auto z = p.transform(x);
  CHECK(z(4, 0) == 1.0);
  CHECK(z(4, 1) == 1.0);
  CHECK_THROWS_AS(p.transform(Eigen::MatrixXd::Zero(2, 2)), SchemaMismatchError);
  CHECK_THROWS_AS(Preprocessor::fit(Eigen::MatrixXd::Ones(4, 2)), DataError);
}

TEST_CASE("blend alpha is the minimiser over [0, 1]") {
  Rng rng(3);
  for (int rep = 0; rep < 40; ++rep) {
    const auto y = testutil::normals(rng, 50);
    const Eigen::VectorXd p = y + testutil::normals(rng, 50, rng.uniform(0.2, 2.0));
    const Eigen::VectorXd s = y + testutil::normals(rng, 50, rng.uniform(0.2, 2.0));
    const auto b = blend_alpha(y, p, s);
    double best_a = 0.0, best = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 100000; ++k) {
      const double a = k / 100000.0;
      const double mse = (y - a * p - (1 - a) * s).squaredNorm();
      if (mse < best) {
        best = mse;
        best_a = a;
      }
    }
    CHECK(std::abs(b.alpha - best_a) <= 1e-5);
    CHECK_FALSE(b.degenerate);
  }
  const auto y = testutil::normals(rng, 10);
  CHECK(blend_alpha(y, y, y + Eigen::VectorXd::Constant(10, 1.0)).alpha == 1.0);
  CHECK(blend_alpha(y, y.array() + 1.0, y).alpha == 0.0);
}

TEST_CASE("identical predictors give the degenerate alpha") {
  Rng rng(4);
  const auto y = testutil::normals(rng, 20);
  const Eigen::VectorXd p = y.array() + 0.3;
  const auto b = blend_alpha(y, p, p);
  CHECK(b.degenerate);
  CHECK(b.alpha == 0.4);
}

TEST_CASE("risk tiers use inclusive upper bounds") {
  CHECK(risk_tier(1.0, 2.0, 4.0) == RiskTier::Low);
  CHECK(risk_tier(2.0, 2.0, 4.0) == RiskTier::Low);
  CHECK(risk_tier(2.0001, 2.0, 4.0) == RiskTier::Medium);
  CHECK(risk_tier(4.0, 2.0, 4.0) == RiskTier::Medium);
  CHECK(risk_tier(4.1, 2.0, 4.0) == RiskTier::High);
}

TEST_CASE("fitted ensemble predicts, orders intervals and round-trips") {
  Rng rng(5);
  const auto d = testutil::regression(rng, 240);
  const auto fit = fit_ensemble(d.x, d.y, d.groups, d.names, testutil::fast_params());
  const auto& m = fit.model;
  CHECK(m.feature_names == d.names);
  const auto pred = predict_with_intervals(m, d.x);
  REQUIRE(pred.rows() == 240);
  for (int t = 0; t < 2; ++t) {
    const auto& tp = pred.targets[static_cast<std::size_t>(t)];
    CHECK((tp.upper - tp.lower).minCoeff() >= 0.0);
    CHECK((tp.width - (tp.upper - tp.lower)).cwiseAbs().maxCoeff() < 1e-12);
    const double a = m.targets[static_cast<std::size_t>(t)].blend.alpha;
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK((tp.point - (a * tp.primary + (1 - a) * tp.stacked)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(stats::rmse(d.y.col(t), tp.point) < 6.0);
    CHECK(m.targets[static_cast<std::size_t>(t)].width_p33 <= m.targets[static_cast<std::size_t>(t)].width_p66);
    CHECK(fit.diagnostics[static_cast<std::size_t>(t)].oof_primary.size() == 240);
  }
  // training widths split into thirds
  int low = 0;
  for (auto r : pred.targets[0].tier) low += r == RiskTier::Low;
  CHECK(low == doctest::Approx(80).epsilon(0.05));

  nlohmann::json j = m;
  const auto text = j.dump();
  FittedEnsemble back = nlohmann::json::parse(text).get<FittedEnsemble>();
  const auto again = predict_with_intervals(back, d.x);
  for (int t = 0; t < 2; ++t) {
    CHECK(again.targets[static_cast<std::size_t>(t)].point == pred.targets[static_cast<std::size_t>(t)].point);
    CHECK(again.targets[static_cast<std::size_t>(t)].lower == pred.targets[static_cast<std::size_t>(t)].lower);
    CHECK(again.targets[static_cast<std::size_t>(t)].upper == pred.targets[static_cast<std::size_t>(t)].upper);
  }
  CHECK_THROWS_AS(predict_with_intervals(m, d.x.leftCols(2)), SchemaMismatchError);
}

TEST_CASE("ensemble fit is deterministic for a seed") {
  Rng rng(6);
  const auto d = testutil::regression(rng, 120);
  const auto a = fit_ensemble(d.x, d.y, d.groups, d.names, testutil::fast_params(9));
  const auto b = fit_ensemble(d.x, d.y, d.groups, d.names, testutil::fast_params(9));
  CHECK(predict_with_intervals(a.model, d.x).targets[0].point ==
        predict_with_intervals(b.model, d.x).targets[0].point);
}

TEST_CASE("stratified fit honours the inclusive minimum") {
  Rng rng(7);
  const int sizes[4] = {30, 60, 29, 60};
  const double centres[4] = {80, 105, 130, 160};
  const Eigen::Index n = 179;
  Eigen::MatrixXd x(n, 2), y(n, 2);
  std::vector<std::string> groups;
  Eigen::Index i = 0;
  for (int s = 0; s < 4; ++s) {
    for (int k = 0; k < sizes[s]; ++k, ++i) {
      x(i, 0) = centres[s] + rng.normal();
      x(i, 1) = rng.normal();
      y(i, 0) = centres[s] + rng.uniform(-4.0, 4.0);
      y(i, 1) = 70 + rng.normal();
      groups.push_back("g" + std::to_string(i));
    }
  }
  const auto strata = fit_stratified(x, y, groups, {"a", "b"}, testutil::fast_params(), 30);
  CHECK(strata.counts.at(Stratum::Hypotension) == 30);
  CHECK(strata.models.count(Stratum::Hypotension) == 1);
  CHECK(strata.models.count(Stratum::Prehypertension) == 0);
  CHECK(strata.flagged == std::vector<Stratum>{Stratum::Prehypertension});

  const auto global = fit_ensemble(x, y, groups, {"a", "b"}, testutil::fast_params()).model;
  const auto routed = predict_stratified(global, strata, x);
  CHECK(routed.rows() == n);
  CHECK((routed.targets[0].upper - routed.targets[0].lower).minCoeff() >= 0.0);

  nlohmann::json j = strata;
  const auto back = nlohmann::json::parse(j.dump()).get<StratifiedModels>();
  CHECK(predict_stratified(global, back, x).targets[0].point == routed.targets[0].point);
}

TEST_CASE("each target's learners ignore the other target") {
  Rng rng(8);
  const auto d = testutil::regression(rng, 120);
  Eigen::MatrixXd other = d.y;
  other.col(1) = (other.col(1).array() * -2.0 + 300.0).matrix();
  const auto a = fit_ensemble(d.x, d.y, d.groups, d.names, testutil::fast_params());
  const auto b = fit_ensemble(d.x, other, d.groups, d.names, testutil::fast_params());
  const auto pa = predict_with_intervals(a.model, d.x);
  const auto pb = predict_with_intervals(b.model, d.x);
  CHECK(pa.targets[0].point == pb.targets[0].point);
  CHECK(pa.targets[0].lower == pb.targets[0].lower);
  CHECK(pa.targets[1].point != pb.targets[1].point);
}

}
