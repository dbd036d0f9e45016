#include "bpstack/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace bpstack::stats {

double mean(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sd(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

double quantile(std::span<const double> x, double q) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

double iqr(std::span<const double> x) { return quantile(x, 0.75) - quantile(x, 0.25); }

std::vector<double> finite_values(const Eigen::Ref<const Eigen::VectorXd>& col) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(col.size()));
  for (Eigen::Index i = 0; i < col.size(); ++i) {
    if (std::isfinite(col[i])) out.push_back(col[i]);
  }
  return out;
}

std::vector<double> to_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return {v.data(), v.data() + v.size()};
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-14) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  KsResult res;
  if (a.empty() || b.empty()) return res;
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  res.statistic = d;
  const double ne = std::sqrt(na * nb / (na + nb));
  res.p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
  return res;
}

namespace {

struct Standardised {
  Eigen::MatrixXd z;
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;  // 0 marks a constant column
};

Standardised standardise(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  Standardised s;
  const auto n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean();
  s.z = X.rowwise() - s.mean;
  s.scale = (s.z.colwise().squaredNorm() / n).cwiseSqrt();
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (s.scale[j] > 1e-12 * (1.0 + std::abs(s.mean[j]))) {
      s.z.col(j) /= s.scale[j];
    } else {
      s.scale[j] = 0.0;
      s.z.col(j).setZero();
    }
  }
  return s;
}

LinearFit finish(const Standardised& s, const Eigen::VectorXd& b, double y_mean,
                 const Eigen::Ref<const Eigen::MatrixXd>& X,
                 const Eigen::Ref<const Eigen::VectorXd>& y) {
  LinearFit fit;
  fit.coef = Eigen::VectorXd::Zero(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (s.scale[j] > 0.0) fit.coef[j] = b[j] / s.scale[j];
  }
  fit.intercept = y_mean - s.mean.dot(fit.coef);
  const Eigen::VectorXd resid = (y - X * fit.coef).array() - fit.intercept;
  const double ss_tot = (y.array() - y_mean).square().sum();
  const double ss_res = resid.squaredNorm();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  return fit;
}

}  // namespace

LinearFit least_squares(const Eigen::Ref<const Eigen::MatrixXd>& X,
                        const Eigen::Ref<const Eigen::VectorXd>& y) {
  const auto n = static_cast<double>(X.rows());
  const Standardised s = standardise(X);
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;
  // Correlation-scale normal equations; constant columns contribute zero rows.
  Eigen::MatrixXd gram = s.z.transpose() * s.z / n;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (s.scale[j] == 0.0) gram(j, j) = 1.0;
  }
  const Eigen::VectorXd rhs = s.z.transpose() * yc / n;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  bool fallback = llt.info() != Eigen::Success || llt.rcond() < 1e-12;
  Eigen::VectorXd b;
  if (!fallback) {
    b = llt.solve(rhs);
  } else {
    gram.diagonal().array() += 1e-6;
    b = gram.ldlt().solve(rhs);
  }
  LinearFit fit = finish(s, b, y_mean, X, y);
  fit.ridge_fallback = fallback;
  return fit;
}

LinearFit ridge(const Eigen::Ref<const Eigen::MatrixXd>& X,
                const Eigen::Ref<const Eigen::VectorXd>& y, double penalty) {
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd xc = X.rowwise() - mu;
  const double y_mean = y.mean();
  const Eigen::VectorXd yc = y.array() - y_mean;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += penalty;
  LinearFit fit;
  fit.coef = gram.ldlt().solve(xc.transpose() * yc);
  fit.intercept = y_mean - mu.dot(fit.coef);
  const Eigen::VectorXd resid = yc - xc * fit.coef;
  const double ss_tot = yc.squaredNorm();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - resid.squaredNorm() / ss_tot : 0.0;
  return fit;
}

double rmse(const Eigen::Ref<const Eigen::VectorXd>& y,
            const Eigen::Ref<const Eigen::VectorXd>& pred) {
  return std::sqrt((y - pred).squaredNorm() / static_cast<double>(y.size()));
}

}  // namespace bpstack::stats
