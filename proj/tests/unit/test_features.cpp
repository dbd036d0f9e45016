#include <cmath>

#include "bpstack/error.hpp"
#include "bpstack/features.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bpstack;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double sample_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::VectorXd ca = a.array() - a.mean();
  const Eigen::VectorXd cb = b.array() - b.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("interaction columns multiply and propagate missing") {
  Eigen::MatrixXd v(3, 2);
  v << 2, 3, 4, std::nan(""), -1, 5;
  const auto t = testutil::table({testutil::numeric("age"), testutil::numeric("creatinine")}, v);
  const auto out = build_interactions(t, {{"age", "creatinine"}});
  REQUIRE(out.cols() == 3);
  const auto j = out.index_of("age__x__creatinine");
  CHECK(out.schema()[static_cast<std::size_t>(j)].domain == DomainTag::Derived);
  CHECK(out.values()(0, j) == 6.0);
  CHECK(std::isnan(out.values()(1, j)));
  CHECK(out.values()(2, j) == -5.0);
}

TEST_CASE("power transforms") {
  Eigen::MatrixXd v(2, 1);
  v << 4, 0;
  const auto t = testutil::table({testutil::numeric("hr")}, v);
  const auto out = build_power_transforms(t, {"hr"});
  CHECK(out.values()(0, out.index_of("hr__sq")) == 16.0);
  CHECK(out.values()(0, out.index_of("hr__sqrt")) == 2.0);
  CHECK(out.values()(0, out.index_of("hr__log1p")) == doctest::Approx(std::log(5.0)));
  CHECK(out.values()(1, out.index_of("hr__log1p")) == 0.0);
  Eigen::MatrixXd neg(1, 1);
  neg << -1;
  CHECK_THROWS_AS(build_power_transforms(testutil::table({testutil::numeric("hr")}, neg), {"hr"}), DataError);
}

TEST_CASE("univariate p-value matches the regression F test") {
  Eigen::VectorXd x(22);
  for (int i = 0; i < 22; ++i) x[i] = i + 1;
  // scipy.stats.linregress(x, y).pvalue
  const auto y = vec({3.1, 2.0, 4.5, 3.9, 6.2, 4.4, 5.0, 7.1, 5.5, 6.8, 8.9,
                      6.0, 7.7, 9.4, 8.1, 7.0, 10.2, 9.9, 8.8, 11.5, 10.1, 12.3});
  CHECK(univariate_p_value(x, y) == doctest::Approx(1.0911986112892904e-09).epsilon(1e-6));
  const auto y2 = vec({5.0, 3.0, 4.0, 6.0, 2.0, 5.5, 4.5, 3.5, 6.5, 2.5, 5.0,
                       4.0, 3.0, 6.0, 4.8, 3.2, 5.1, 4.4, 3.9, 5.6, 4.1, 4.7});
  CHECK(univariate_p_value(x, y2) == doctest::Approx(0.6580248239722521).epsilon(1e-6));
  CHECK(univariate_p_value(Eigen::VectorXd::Constant(22, 1.0), y) == 1.0);
}

TEST_CASE("VIF of two correlated columns equals 1 / (1 - r^2)") {
  Rng rng(12);
  const Eigen::Index n = 4000;
  const Eigen::VectorXd a = testutil::normals(rng, n);
  // population R^2 = 1 / (1 + 1/9) = 0.9
  const Eigen::VectorXd b = a + testutil::normals(rng, n, 1.0 / 3.0);
  Eigen::MatrixXd x(n, 2);
  x << a, b;
  const double r = sample_corr(a, b);
  const auto v = vif_all(x);
  CHECK(v[0] == doctest::Approx(1.0 / (1.0 - r * r)).epsilon(1e-9));
  CHECK(v[1] == doctest::Approx(v[0]).epsilon(1e-9));
  CHECK(v[0] == doctest::Approx(10.0).epsilon(0.1));
  const auto t = testutil::table({testutil::numeric("a"), testutil::numeric("b")}, x);
  CHECK(compute_vif(t, "b") == doctest::Approx(v[1]));
}

TEST_CASE("VIF edge cases") {
  Eigen::MatrixXd x(5, 2);
  x << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10;
  CHECK(std::isinf(vif_all(x)[0]));
  Eigen::MatrixXd c(4, 2);
  c << 1, 3, 1, 4, 1, 5, 1, 9;
  CHECK_THROWS_AS(vif_all(c), UndefinedVifError);
}

TEST_CASE("mutual information") {
  CHECK(mi_bin_count(1000) == 15);
  CHECK(mi_bin_count(5) == 1);
  Rng rng(31);
  const Eigen::Index n = 5000;
  const Eigen::VectorXd a = testutil::normals(rng, n);
  const Eigen::VectorXd e = testutil::normals(rng, n);
  const Eigen::VectorXd b = 0.8 * a + 0.6 * e;
  const double mi = estimate_mutual_information(a, b);
  // bivariate normal with rho = 0.8
  const double exact = -0.5 * std::log(1.0 - 0.64);
  CHECK(mi == doctest::Approx(exact).epsilon(0.2));
  CHECK(estimate_mutual_information(a, e) < 0.05);
  CHECK(estimate_mutual_information(a, e) < 0.05 * mi);
  // equal-frequency bins only see ranks
  const Eigen::VectorXd ea = a.array().exp();
  CHECK(estimate_mutual_information(ea, b) == doctest::Approx(mi));
  CHECK(estimate_mutual_information(a, a) > estimate_mutual_information(a, b));
}

TEST_CASE("selection drops noise and collinear copies") {
  Rng rng(8);
  const Eigen::Index n = 600;
  const Eigen::VectorXd s1 = testutil::normals(rng, n);
  const Eigen::VectorXd s2 = testutil::normals(rng, n);
  Eigen::MatrixXd x(n, 4);
  x.col(0) = s1;
  x.col(1) = s2;
  x.col(2) = s1 + testutil::normals(rng, n, 0.05);
  x.col(3) = testutil::normals(rng, n);
  Eigen::MatrixXd y(n, 2);
  y.col(0) = (120.0 + 10.0 * s1.array() + 8.0 * s2.array()).matrix() + testutil::normals(rng, n, 3.0);
  y.col(1) = (80.0 + 5.0 * s2.array()).matrix() + testutil::normals(rng, n, 3.0);
  const auto t = testutil::table({testutil::numeric("s1"), testutil::numeric("s2"), testutil::numeric("copy"),
                                  testutil::numeric("noise")},
                                 x, y);
  FeaturePipelineConfig cfg;
  const auto res = select_features(t, cfg);
  const auto& sel = res.audit.selected;
  CHECK(std::find(sel.begin(), sel.end(), "noise") == sel.end());
  CHECK(std::find(sel.begin(), sel.end(), "s2") != sel.end());
  // exactly one of the collinear pair survives
  const bool has1 = std::find(sel.begin(), sel.end(), "s1") != sel.end();
  const bool hasc = std::find(sel.begin(), sel.end(), "copy") != sel.end();
  CHECK(has1 != hasc);
  CHECK(res.audit.candidates == 4);
  CHECK(res.audit.after_vif <= res.audit.after_univariate);
  CHECK(res.table.column_names() == sel);

  cfg.target_feature_count = 1;
  CHECK(select_features(t, cfg).audit.selected.size() == 1);
  cfg = {};
  cfg.domain_whitelist = {DomainTag::Vitals};
  CHECK_THROWS_AS(select_features(t, cfg), SelectionError);

  Eigen::MatrixXd holed = x;
  holed(0, 0) = std::nan("");
  CHECK_THROWS_AS(select_features(testutil::table(t.schema(), holed, y), FeaturePipelineConfig{}), DataError);
}

TEST_CASE("name normalisation and alignment") {
  CHECK(normalize_name("Heart Rate (bpm)") == "heart_rate_bpm");
  CHECK(normalize_name("heart-rate__bpm") == "heart_rate_bpm");
  Eigen::MatrixXd v(2, 3);
  v << 1, 2, 3, 4, 5, 6;
  const auto ext = testutil::table({testutil::numeric("Heart Rate"), testutil::numeric("AGE"), testutil::numeric("zzz")}, v);
  const std::vector<ColumnSpec> ref{testutil::numeric("age"), testutil::numeric("heart_rate"),
                                    testutil::numeric("lactate"), testutil::numeric("creatinine")};
  const auto res = align_features(ext, ref, {{"lactate", 1.2}}, {{"creatinine", 0.9}});
  CHECK(res.table.column_names() == std::vector<std::string>{"age", "heart_rate", "lactate", "creatinine"});
  CHECK(res.table.values()(1, 0) == 5.0);
  CHECK(res.table.values()(0, 1) == 1.0);
  CHECK(res.table.values()(0, 2) == 1.2);
  CHECK(res.table.values()(1, 3) == 0.9);
  CHECK(res.map.direct_matches.at("Heart Rate") == "heart_rate");
  CHECK(res.map.defaulted.size() == 2);
  CHECK(res.map.unmatched_external == std::vector<std::string>{"zzz"});
  CHECK(res.map.coverage == doctest::Approx(0.5));
}

TEST_CASE("builders append without touching existing columns") {
  Rng rng(3);
  Eigen::MatrixXd v(20, 3);
  for (auto& x : v.reshaped()) x = rng.uniform(0.0, 5.0);
  const auto t = testutil::table({testutil::numeric("age"), testutil::numeric("creatinine"), testutil::numeric("hr")}, v);
  const auto out = build_power_transforms(build_interactions(t, {{"age", "creatinine"}, {"hr", "age"}}), {"hr"});
  CHECK(out.cols() == 3 + 2 + 3);
  CHECK(out.values().leftCols(3) == v);
  const auto names = out.column_names();
  CHECK(std::vector<std::string>(names.begin(), names.begin() + 3) == t.column_names());
}

TEST_CASE("selection is deterministic and MI is never negative") {
  Rng rng(4);
  const Eigen::Index n = 300;
  Eigen::MatrixXd x(n, 6);
  for (auto& v : x.reshaped()) v = rng.normal();
  Eigen::MatrixXd y(n, 2);
  y.col(0) = (120.0 + 5.0 * x.col(0).array() + 5.0 * x.col(1).array()).matrix() + testutil::normals(rng, n, 2.0);
  y.col(1) = (80.0 + 3.0 * x.col(2).array()).matrix() + testutil::normals(rng, n, 2.0);
  std::vector<ColumnSpec> cols;
  for (int j = 0; j < 6; ++j) cols.push_back(testutil::numeric("f" + std::to_string(j)));
  const auto t = testutil::table(cols, x, y);
  FeaturePipelineConfig cfg;
  const auto a = select_features(t, cfg);
  const auto b = select_features(t, cfg);
  CHECK(a.audit.selected == b.audit.selected);
  CHECK(a.audit.drops.size() == b.audit.drops.size());
  for (int rep = 0; rep < 30; ++rep) {
    const auto p = testutil::normals(rng, 50 + static_cast<Eigen::Index>(rng.index(300)));
    const auto q = testutil::normals(rng, p.size());
    CHECK(estimate_mutual_information(p, q) >= 0.0);
  }
}

}
