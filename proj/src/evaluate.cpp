#include "bpstack/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bpstack/error.hpp"
#include "bpstack/rng.hpp"
#include "bpstack/stats.hpp"

namespace bpstack {

namespace {

void check_lengths(const VectorRef& a, const VectorRef& b, const char* what) {
  if (a.size() != b.size()) throw DataError(std::string(what) + ": length mismatch");
  if (a.size() == 0) throw DataError(std::string(what) + ": empty input");
}

}  // namespace

CoreMetrics core_metrics(const VectorRef& y_true, const VectorRef& y_pred) {
  check_lengths(y_true, y_pred, "core_metrics");
  if (y_true.size() < 2) throw DataError("core_metrics needs at least two rows");
  const auto n = static_cast<double>(y_true.size());
  const Eigen::ArrayXd err = (y_pred - y_true).array();
  CoreMetrics m;
  m.rmse = std::sqrt(err.square().sum() / n);
  m.mae = err.abs().sum() / n;
  m.mean_bias = err.sum() / n;
  m.error_sd = std::sqrt((err - m.mean_bias).square().sum() / n);
  const double ss_tot = (y_true.array() - y_true.mean()).square().sum();
  if (ss_tot > 0.0) {
    m.r2 = 1.0 - err.square().sum() / ss_tot;
  } else {
    m.r2 = std::numeric_limits<double>::quiet_NaN();
    m.r2_defined = false;
  }
  return m;
}

WithinPercentages within_percentages(const VectorRef& y_true, const VectorRef& y_pred) {
  check_lengths(y_true, y_pred, "within_percentages");
  std::array<std::size_t, 3> hits{};
  for (Eigen::Index i = 0; i < y_true.size(); ++i) {
    const double e = std::abs(y_pred[i] - y_true[i]);
    hits[0] += e <= 5.0;
    hits[1] += e <= 10.0;
    hits[2] += e <= 15.0;
  }
  const auto n = static_cast<double>(y_true.size());
  return {100.0 * static_cast<double>(hits[0]) / n, 100.0 * static_cast<double>(hits[1]) / n,
          100.0 * static_cast<double>(hits[2]) / n};
}

std::string_view to_string(BhsGrade g) {
  switch (g) {
    case BhsGrade::A: return "A";
    case BhsGrade::B: return "B";
    case BhsGrade::C: return "C";
    case BhsGrade::D: return "D";
  }
  return "D";
}

BhsGrade bhs_grade(double w5, double w10, double w15) {
  if (!(w5 >= 0.0 && w5 <= w10 && w10 <= w15 && w15 <= 100.0)) {
    std::ostringstream msg;
    msg << "BHS inputs must satisfy 0 <= within_5 <= within_10 <= within_15 <= 100, got (" << w5
        << ", " << w10 << ", " << w15 << ")";
    throw DomainError(msg.str());
  }
  if (w5 >= 60.0 && w10 >= 85.0 && w15 >= 95.0) return BhsGrade::A;
  if (w5 >= 50.0 && w10 >= 75.0 && w15 >= 90.0) return BhsGrade::B;
  if (w5 >= 40.0 && w10 >= 65.0 && w15 >= 85.0) return BhsGrade::C;
  return BhsGrade::D;
}

bool aami_check(double mean_bias, double error_sd) {
  if (!(error_sd >= 0.0)) throw DomainError("error_sd must be >= 0");
  return std::abs(mean_bias) <= 5.0 && error_sd <= 8.0;
}

BlandAltman bland_altman(const VectorRef& y_true, const VectorRef& y_pred) {
  check_lengths(y_true, y_pred, "bland_altman");
  const auto m = core_metrics(y_true, y_pred);
  BlandAltman b;
  b.bias = m.mean_bias;
  b.loa_lower = m.mean_bias - 1.96 * m.error_sd;
  b.loa_upper = m.mean_bias + 1.96 * m.error_sd;
  b.width = b.loa_upper - b.loa_lower;
  b.acceptable = b.width < 15.0;
  return b;
}

double coverage_probability(const VectorRef& y, const VectorRef& lower, const VectorRef& upper) {
  check_lengths(y, lower, "coverage_probability");
  check_lengths(y, upper, "coverage_probability");
  std::size_t inside = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (lower[i] > upper[i]) throw DomainError("coverage_probability: lower > upper");
    inside += (y[i] >= lower[i] && y[i] <= upper[i]);
  }
  return static_cast<double>(inside) / static_cast<double>(y.size());
}

EquityResult equity_ratio(const std::map<std::string, double>& rmse_by_group,
                          const std::map<std::string, std::size_t>& counts) {
  if (rmse_by_group.size() < 2) throw DomainError("equity ratio needs at least two subgroups");
  EquityResult r;
  r.rmse = rmse_by_group;
  r.counts = counts;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& [g, v] : rmse_by_group) {
    if (!(v > 0.0)) throw DomainError("equity ratio: RMSE of group '" + g + "' is not positive");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (const auto& [g, c] : counts) {
    if (c < kEquityMinGroup) r.low_n.push_back(g);
  }
  r.ratio = hi / lo;
  r.pass = r.ratio < kEquityThreshold;
  return r;
}

std::vector<std::string> subgroup_labels(const CohortTable& table, const EquitySpec& spec) {
  const auto j = table.find(spec.column);
  if (!j) throw ConfigError("equity column '" + spec.column + "' is not in the cohort");
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(table.rows()));
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const double v = table.values()(i, *j);
    if (std::isnan(v)) {
      out.emplace_back(spec.column + "=missing");
    } else if (spec.threshold) {
      out.push_back(spec.column + (v < *spec.threshold ? "<" : ">=") + format_number(*spec.threshold));
    } else {
      out.push_back(spec.column + "=" + format_number(v));
    }
  }
  return out;
}

EquityResult equity_by_labels(const VectorRef& y_true, const VectorRef& y_pred,
                              const std::vector<std::string>& labels) {
  check_lengths(y_true, y_pred, "equity");
  if (labels.size() != static_cast<std::size_t>(y_true.size())) {
    throw DataError("equity: labels do not match rows");
  }
  std::map<std::string, double> sse;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double e = y_pred[static_cast<Eigen::Index>(i)] - y_true[static_cast<Eigen::Index>(i)];
    sse[labels[i]] += e * e;
    ++counts[labels[i]];
  }
  std::map<std::string, double> rmse;
  for (const auto& [g, s] : sse) rmse[g] = std::sqrt(s / static_cast<double>(counts[g]));
  return equity_ratio(rmse, counts);
}

double kl_from_histograms(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size() || p.empty()) throw DataError("KL: histograms differ in size");
  double kl = 0.0;
  for (std::size_t b = 0; b < p.size(); ++b) {
    if (p[b] <= 0.0) continue;
    if (q[b] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[b] * std::log(p[b] / q[b]);
  }
  return kl;
}

double kl_divergence(const VectorRef& p_sample, const VectorRef& q_sample, int bins) {
  if (bins < 1) throw ConfigError("KL bins must be >= 1");
  const auto p = stats::finite_values(p_sample);
  const auto q = stats::finite_values(q_sample);
  if (p.empty() || q.empty()) throw DataError("KL divergence needs non-empty samples");
  const double lo = std::min(*std::min_element(p.begin(), p.end()), *std::min_element(q.begin(), q.end()));
  const double hi = std::max(*std::max_element(p.begin(), p.end()), *std::max_element(q.begin(), q.end()));
  if (!(hi > lo)) return 0.0;
  const auto nb = static_cast<std::size_t>(bins);
  auto histogram = [&](const std::vector<double>& s) {
    std::vector<double> c(nb, 0.0);
    for (double v : s) {
      auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
      c[std::min(b, nb - 1)] += 1.0;
    }
    const double denom = static_cast<double>(s.size()) + static_cast<double>(bins);
    for (auto& x : c) x = (x + 1.0) / denom;
    return c;
  };
  return std::max(0.0, kl_from_histograms(histogram(p), histogram(q)));
}

double generalizability(double rmse_internal, double rmse_external) {
  if (!(rmse_internal > 0.0)) throw DomainError("generalizability: internal RMSE must be > 0");
  return (rmse_external - rmse_internal) / rmse_internal * 100.0;
}

StratifiedSummary stratified_report(const VectorRef& sbp_true, const VectorRef& sbp_pred,
                                    const VectorRef& y_true, const VectorRef& y_pred) {
  check_lengths(sbp_true, sbp_pred, "stratified_report");
  check_lengths(y_true, y_pred, "stratified_report");
  check_lengths(sbp_true, y_true, "stratified_report");
  StratifiedSummary out;
  std::map<Stratum, std::vector<Eigen::Index>> rows;
  std::size_t detected = 0;
  for (Eigen::Index i = 0; i < sbp_true.size(); ++i) {
    const Stratum s = stratum_of(sbp_true[i]);
    rows[s].push_back(i);
    if (s == Stratum::Hypotension) {
      ++out.hypotension_n;
      detected += sbp_pred[i] < 90.0;
    }
  }
  out.hypotension_sensitivity =
      out.hypotension_n == 0 ? 0.0
                             : static_cast<double>(detected) / static_cast<double>(out.hypotension_n);
  for (const auto& [s, r] : rows) {
    StratumSummary sum;
    sum.n = r.size();
    const Eigen::VectorXd yt = y_true(r);
    const Eigen::VectorXd yp = y_pred(r);
    sum.within = within_percentages(yt, yp);
    sum.grade = bhs_grade(sum.within.within_5, sum.within.within_10, sum.within.within_15);
    sum.unreliable = sum.n < 30;
    out.strata[s] = sum;
  }
  return out;
}

DegradationTest bootstrap_degradation(const VectorRef& internal_sq_err,
                                      const VectorRef& external_sq_err, int resamples,
                                      std::uint64_t seed) {
  if (internal_sq_err.size() == 0 || external_sq_err.size() == 0) {
    throw DataError("bootstrap_degradation needs non-empty samples");
  }
  if (resamples < 1) throw ConfigError("bootstrap resamples must be >= 1");
  DegradationTest t;
  t.resamples = resamples;
  t.mean_difference = external_sq_err.mean() - internal_sq_err.mean();
  Rng rng(seed);
  const auto ni = static_cast<std::size_t>(internal_sq_err.size());
  const auto ne = static_cast<std::size_t>(external_sq_err.size());
  int not_worse = 0;
  for (int b = 0; b < resamples; ++b) {
    double si = 0.0;
    double se = 0.0;
    for (std::size_t i = 0; i < ni; ++i) si += internal_sq_err[static_cast<Eigen::Index>(rng.index(ni))];
    for (std::size_t i = 0; i < ne; ++i) se += external_sq_err[static_cast<Eigen::Index>(rng.index(ne))];
    not_worse += (se / static_cast<double>(ne) - si / static_cast<double>(ni)) <= 0.0;
  }
  t.p_value = (static_cast<double>(not_worse) + 1.0) / (static_cast<double>(resamples) + 1.0);
  return t;
}

ShiftProfile shift_profile(const CohortTable& internal, const CohortTable& external, int bins) {
  ShiftProfile out;
  std::map<std::string, std::vector<double>> by_domain;
  std::size_t features = 0;
  std::size_t matched = 0;
  for (Eigen::Index j = 0; j < internal.cols(); ++j) {
    const auto& spec = internal.schema()[static_cast<std::size_t>(j)];
    if (spec.domain == DomainTag::Id || spec.domain == DomainTag::Target) continue;
    ++features;
    const auto k = external.find(spec.name);
    if (!k) continue;
    const auto a = stats::finite_values(internal.values().col(j));
    const auto b = stats::finite_values(external.values().col(*k));
    if (a.empty() || b.empty()) continue;
    ++matched;
    const Eigen::Map<const Eigen::VectorXd> av(a.data(), static_cast<Eigen::Index>(a.size()));
    const Eigen::Map<const Eigen::VectorXd> bv(b.data(), static_cast<Eigen::Index>(b.size()));
    const double kl = kl_divergence(av, bv, bins);
    out.kl[spec.name] = kl;
    by_domain[std::string(to_string(spec.domain))].push_back(kl);
  }
  double total = 0.0;
  for (const auto& [name, v] : out.kl) total += v;
  out.mean_kl = out.kl.empty() ? 0.0 : total / static_cast<double>(out.kl.size());
  for (const auto& [d, v] : by_domain) out.domain_mean_kl[d] = stats::mean(v);
  out.alignment_coverage =
      features == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(features);
  return out;
}

}  // namespace bpstack
