#include <cmath>
#include <vector>

#include "bpstack/stats.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bpstack;

TEST_SUITE("stats") {

TEST_CASE("type 7 quantiles match numpy linear interpolation") {
  const std::vector<double> x{7, 1, 3, 10, 4};
  CHECK(stats::quantile(x, 0.1) == doctest::Approx(1.8));
  CHECK(stats::quantile(x, 0.25) == doctest::Approx(3.0));
  CHECK(stats::median(x) == doctest::Approx(4.0));
  CHECK(stats::quantile(x, 0.9) == doctest::Approx(8.8));
  CHECK(stats::iqr(x) == doctest::Approx(4.0));
}

TEST_CASE("population sd") {
  const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(stats::mean(x) == doctest::Approx(5.0));
  CHECK(stats::sd(x) == doctest::Approx(2.0));
}

TEST_CASE("normal distribution helpers") {
  CHECK(stats::normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(stats::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(stats::normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));
  for (double p : {0.01, 0.1, 0.5, 0.8, 0.999}) {
    CHECK(stats::normal_cdf(stats::normal_quantile(p)) == doctest::Approx(p).epsilon(1e-9));
  }
}

TEST_CASE("two-sample KS statistic and p-value") {
  const std::vector<double> a{1, 2, 3, 4, 5.5};
  const std::vector<double> b{2.5, 3.5, 6, 7, 8, 9, 10};
  const auto r = stats::ks_two_sample(a, b);
  // sup |F_a - F_b| reached after 5.5: 1 - 2/7
  CHECK(r.statistic == doctest::Approx(5.0 / 7.0));
  // scipy.stats.kstwobign.sf((sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D), ne = 35/12
  CHECK(r.p_value == doctest::Approx(0.05179331491406316).epsilon(1e-6));
  CHECK(stats::ks_two_sample(a, a).statistic == 0.0);
}

TEST_CASE("least squares recovers an exact plane") {
  Rng rng(3);
  Eigen::MatrixXd x(40, 2);
  for (auto& v : x.reshaped()) v = rng.normal();
  const Eigen::VectorXd y = 1.5 + 2.0 * x.col(0).array() - 0.5 * x.col(1).array();
  const auto fit = stats::least_squares(x, y);
  CHECK(fit.intercept == doctest::Approx(1.5));
  CHECK(fit.coef[0] == doctest::Approx(2.0));
  CHECK(fit.coef[1] == doctest::Approx(-0.5));
  CHECK(fit.r_squared == doctest::Approx(1.0));
}

TEST_CASE("ridge on duplicated column splits the weight") {
  // y = 2x with x duplicated: centred normal equations give
  // b1 = b2 = 2 * Sxx / (2 * Sxx + lambda).
  Eigen::MatrixXd x(5, 2);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) {
    x(i, 0) = x(i, 1) = i;
    y[i] = 2.0 * i + 1.0;
  }
  const double sxx = 10.0;
  const double lambda = 1.0;
  const auto fit = stats::ridge(x, y, lambda);
  const double expect = 2.0 * sxx / (2.0 * sxx + lambda);
  CHECK(fit.coef[0] == doctest::Approx(expect));
  CHECK(fit.coef[1] == doctest::Approx(expect));
  CHECK(fit.intercept == doctest::Approx(5.0 - 2.0 * expect * 2.0));
}

TEST_CASE("rmse") {
  Eigen::VectorXd a(3), b(3);
  a << 1, 2, 3;
  b << 2, 2, 5;
  CHECK(stats::rmse(a, b) == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

}
