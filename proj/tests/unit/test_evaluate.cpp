#include <cmath>

#include "bpstack/error.hpp"
#include "bpstack/evaluate.hpp"
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

}  // namespace

TEST_SUITE("evaluate") {

TEST_CASE("core metrics by hand") {
  const auto y = vec({100, 110, 120, 130});
  const auto p = vec({102, 108, 123, 130});
  const auto m = core_metrics(y, p);
  // errors (pred - true): 2, -2, 3, 0
  CHECK(m.rmse == doctest::Approx(std::sqrt(17.0 / 4.0)));
  CHECK(m.mae == doctest::Approx(7.0 / 4.0));
  CHECK(m.mean_bias == doctest::Approx(0.75));
  CHECK(m.error_sd == doctest::Approx(std::sqrt(17.0 / 4.0 - 0.75 * 0.75)));
  CHECK(m.r2 == doctest::Approx(1.0 - 17.0 / 500.0));
  const auto c = core_metrics(vec({120, 120}), vec({119, 121}));
  CHECK_FALSE(c.r2_defined);
  CHECK(std::isnan(c.r2));
}

TEST_CASE("within percentages are inclusive and nested") {
  const auto y = vec({0, 0, 0, 0});
  const auto p = vec({5, -10, 15.0001, 7});
  const auto w = within_percentages(y, p);
  CHECK(w.within_5 == doctest::Approx(25.0));
  CHECK(w.within_10 == doctest::Approx(75.0));
  CHECK(w.within_15 == doctest::Approx(75.0));
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const auto e = testutil::normals(rng, 30, 10.0);
    const auto q = within_percentages(Eigen::VectorXd::Zero(30), e);
    CHECK(q.within_5 <= q.within_10);
    CHECK(q.within_10 <= q.within_15);
  }
}

TEST_CASE("BHS ladder") {
  CHECK(bhs_grade(57.0, 91.1, 99.0) == BhsGrade::B);
  CHECK(bhs_grade(60, 85, 95) == BhsGrade::A);
  CHECK(bhs_grade(59.9, 85, 95) == BhsGrade::B);
  CHECK(bhs_grade(40, 65, 85) == BhsGrade::C);
  CHECK(bhs_grade(39.9, 90, 99) == BhsGrade::D);
  CHECK(bhs_grade(0, 0, 0) == BhsGrade::D);
  CHECK_THROWS_AS(bhs_grade(50, 40, 90), DomainError);
  CHECK_THROWS_AS(bhs_grade(50, 60, 101), DomainError);
}

TEST_CASE("BHS grade never drops when a percentage improves") {
  Rng rng(5);
  for (int rep = 0; rep < 2000; ++rep) {
    double w[3] = {rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100)};
    std::sort(w, w + 3);
    const auto g = bhs_grade(w[0], w[1], w[2]);
    const int k = static_cast<int>(rng.index(3));
    double up[3] = {w[0], w[1], w[2]};
    up[k] = rng.uniform(up[k], k == 2 ? 100.0 : up[k + 1]);
    CHECK(static_cast<int>(bhs_grade(up[0], up[1], up[2])) <= static_cast<int>(g));
  }
}

TEST_CASE("AAMI gate is inclusive") {
  CHECK(aami_check(-0.15, 6.03));
  CHECK(aami_check(5.0, 8.0));
  CHECK(aami_check(-5.0, 0.0));
  CHECK_FALSE(aami_check(5.01, 1.0));
  CHECK_FALSE(aami_check(0.0, 8.01));
}

TEST_CASE("Bland-Altman limits") {
  const auto y = vec({100, 100, 100, 100});
  const auto p = vec({98, 102, 104, 100});
  const auto ba = bland_altman(y, p);
  const double bias = 1.0;
  const double sd = std::sqrt((9.0 + 1.0 + 9.0 + 1.0) / 4.0);
  CHECK(ba.bias == doctest::Approx(bias));
  CHECK(ba.loa_lower == doctest::Approx(bias - 1.96 * sd));
  CHECK(ba.loa_upper == doctest::Approx(bias + 1.96 * sd));
  CHECK(ba.width == doctest::Approx(2 * 1.96 * sd));
  CHECK(ba.acceptable);
}

TEST_CASE("coverage uses the closed interval and ignores monotone transforms") {
  const auto y = vec({1, 2, 3, 4});
  const auto lo = vec({1, 0, 3.5, 0});
  const auto hi = vec({2, 2, 4, 3.9});
  CHECK(coverage_probability(y, lo, hi) == doctest::Approx(0.5));
  Rng rng(2);
  const auto yy = testutil::normals(rng, 200);
  const Eigen::VectorXd l = yy.array() - 1.0 + testutil::normals(rng, 200).array() * 0.5;
  const Eigen::VectorXd u = l.array() + 1.5;
  const auto f = [](const Eigen::VectorXd& v) { return Eigen::VectorXd(v.array().exp() * 3.0 + 1.0); };
  CHECK(coverage_probability(yy, l, u) == coverage_probability(f(yy), f(l), f(u)));
}

TEST_CASE("equity ratio gates") {
  const auto pass = equity_ratio({{"a", 6.0}, {"b", 6.48}});
  CHECK(std::round(pass.ratio * 100.0) / 100.0 == doctest::Approx(1.08));
  CHECK(pass.pass);
  const auto fail = equity_ratio({{"a", 6.0}, {"b", 7.38}});
  CHECK(std::round(fail.ratio * 100.0) / 100.0 == doctest::Approx(1.23));
  CHECK_FALSE(fail.pass);
  const auto scaled = equity_ratio({{"a", 60.0}, {"b", 73.8}});
  CHECK(scaled.pass == fail.pass);
  CHECK(scaled.ratio == doctest::Approx(fail.ratio));
  const auto low = equity_ratio({{"a", 6.0}, {"b", 6.1}}, {{"a", 9}, {"b", 100}});
  CHECK(low.low_n == std::vector<std::string>{"a"});
}

TEST_CASE("equity by labels") {
  const auto y = vec({0, 0, 0, 0});
  const auto p = vec({1, -1, 2, -2});
  const auto e = equity_by_labels(y, p, {"x", "x", "z", "z"});
  CHECK(e.rmse.at("x") == doctest::Approx(1.0));
  CHECK(e.rmse.at("z") == doctest::Approx(2.0));
  CHECK(e.ratio == doctest::Approx(2.0));
}

TEST_CASE("KL two-bin analytic value") {
  // 0.5 ln(0.5/0.75) + 0.5 ln(0.5/0.25)
  const double expect = 0.5 * std::log(2.0 / 3.0) + 0.5 * std::log(2.0);
  CHECK(kl_from_histograms({0.5, 0.5}, {0.75, 0.25}) == doctest::Approx(0.1438).epsilon(1e-3));
  CHECK(kl_from_histograms({0.5, 0.5}, {0.75, 0.25}) == doctest::Approx(expect));
}

TEST_CASE("KL of a sample with itself is small") {
  Rng rng(9);
  for (int n : {100, 500, 2000}) {
    const auto p = testutil::normals(rng, n);
    CHECK(kl_divergence(p, p) < 0.01);
  }
  CHECK(kl_divergence(vec({3, 3, 3}), vec({3, 3})) == 0.0);
}

TEST_CASE("KL grows with a mean shift") {
  Rng rng(4);
  const auto p = testutil::normals(rng, 2000);
  const auto q = testutil::normals(rng, 2000);
  double prev = -1.0;
  for (double s : {0.0, 0.5, 1.0, 2.0}) {
    const double kl = kl_divergence(p, Eigen::VectorXd(q.array() + s));
    CHECK(kl > prev);
    prev = kl;
  }
}

TEST_CASE("generalizability arithmetic") {
  CHECK(std::abs(generalizability(6.03, 7.84) - 30.0) < 0.1);
  CHECK(std::abs(generalizability(7.13, 9.31) - 30.6) < 0.1);
  CHECK(generalizability(5.0, 5.0) == 0.0);
  CHECK_THROWS_AS(generalizability(0.0, 1.0), DomainError);
}

TEST_CASE("stratified report") {
  const auto sbp = vec({85, 85, 100, 130, 150});
  const auto pred = vec({95, 96, 100, 130, 150});
  const auto r = stratified_report(sbp, pred, sbp, pred);
  CHECK(r.strata.count(Stratum::Hypotension) == 1);
  const auto& h = r.strata.at(Stratum::Hypotension);
  CHECK(h.n == 2);
  CHECK(h.within.within_5 == 0.0);
  CHECK(h.grade == BhsGrade::D);
  CHECK(h.unreliable);
  CHECK(r.hypotension_sensitivity == 0.0);
  CHECK(r.hypotension_n == 2);
  CHECK(r.strata.at(Stratum::Normal).grade == BhsGrade::A);
  const auto perfect = stratified_report(sbp, sbp, sbp, sbp);
  for (const auto& [s, v] : perfect.strata) CHECK(v.grade == BhsGrade::A);
  CHECK(perfect.hypotension_sensitivity == 1.0);
}

TEST_CASE("bootstrap degradation") {
  Rng rng(8);
  Eigen::VectorXd a = testutil::normals(rng, 300).array().square();
  Eigen::VectorXd b = (testutil::normals(rng, 300).array() * 2.0).square();
  const auto worse = bootstrap_degradation(a, b, 500, 1);
  CHECK(worse.mean_difference > 0.0);
  CHECK(worse.p_value < 0.01);
  const auto same = bootstrap_degradation(a, a, 500, 1);
  CHECK(same.p_value > 0.2);
  const auto again = bootstrap_degradation(a, b, 500, 1);
  CHECK(again.p_value == worse.p_value);
}

}
