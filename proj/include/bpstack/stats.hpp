#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace bpstack::stats {

double mean(std::span<const double> x);
// Population (1/n) standard deviation.
double sd(std::span<const double> x);

// Linear-interpolation quantile (type 7), q in [0, 1].
double quantile(std::span<const double> x, double q);
double median(std::span<const double> x);
double iqr(std::span<const double> x);

std::vector<double> finite_values(const Eigen::Ref<const Eigen::VectorXd>& col);
std::vector<double> to_vector(const Eigen::Ref<const Eigen::VectorXd>& v);

double normal_pdf(double z);
double normal_cdf(double z);
double normal_quantile(double p);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Two-sample Kolmogorov-Smirnov test, asymptotic Kolmogorov p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// Survival function of the Kolmogorov distribution, Q(lambda).
double kolmogorov_q(double lambda);

struct LinearFit {
  Eigen::VectorXd coef;  // slopes
  double intercept = 0.0;
  double r_squared = 0.0;
  bool ridge_fallback = false;
};

// Least squares with intercept. A near-singular design falls back to a
// ridge-stabilised solve with jitter 1e-6 on standardised predictors.
LinearFit least_squares(const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const Eigen::Ref<const Eigen::VectorXd>& y);

// Ridge regression, intercept unpenalised, penalty on raw coefficients.
LinearFit ridge(const Eigen::Ref<const Eigen::MatrixXd>& X,
                const Eigen::Ref<const Eigen::VectorXd>& y, double penalty);

double rmse(const Eigen::Ref<const Eigen::VectorXd>& y,
            const Eigen::Ref<const Eigen::VectorXd>& pred);

}  // namespace bpstack::stats
