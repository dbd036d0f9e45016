#include "bpstack/impute.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <spdlog/spdlog.h>

#include "bpstack/error.hpp"
#include "bpstack/stats.hpp"

namespace bpstack {

void ImputePolicy::validate() const {
  if (!(mice_tol > 0.0)) throw ConfigError("mice_tol must be > 0");
  if (knn_k < 1) throw ConfigError("knn_k must be >= 1");
  if (mice_max_iter < 1) throw ConfigError("mice_max_iter must be >= 1");
  if (!(missing_rate_cutoff > 0.0 && missing_rate_cutoff < 1.0)) {
    throw ConfigError("missing_rate_cutoff must lie in (0, 1)");
  }
}

std::string_view to_string(ImputeStrategy s) {
  switch (s) {
    case ImputeStrategy::Mice: return "mice";
    case ImputeStrategy::Median: return "median";
    case ImputeStrategy::ClinicalDefault: return "clinical_default";
  }
  return "mice";
}

ImputeStrategy select_strategy(const ColumnSpec& column, double missing_rate,
                               const ImputePolicy& policy) {
  if (policy.clinical_defaults.contains(column.name)) return ImputeStrategy::ClinicalDefault;
  if (missing_rate > policy.missing_rate_cutoff) return ImputeStrategy::Median;
  return ImputeStrategy::Mice;
}

namespace {

double observed_median(const Eigen::Ref<const Eigen::VectorXd>& col) {
  const auto obs = stats::finite_values(col);
  return obs.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::median(obs);
}

double observed_scale(const Eigen::Ref<const Eigen::VectorXd>& col) {
  const auto obs = stats::finite_values(col);
  if (obs.size() < 2) return 1.0;
  const double s = stats::sd(obs);
  return s > 0.0 ? s : 1.0;
}

}  // namespace

MiceResult mice_impute(const CohortTable& table, const ImputePolicy& policy,
                       const std::map<std::string, double>* initial) {
  policy.validate();
  const Eigen::Index n = table.rows();
  const Eigen::Index d = table.cols();
  MiceResult res;
  Eigen::MatrixXd x = table.values();
  const Eigen::ArrayXXd missing = x.array().isNaN().cast<double>();
  if ((missing == 0.0).all()) {
    res.table = table;
    return res;
  }

  std::vector<Eigen::Index> incomplete;
  std::vector<double> scale(static_cast<std::size_t>(d), 1.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    scale[static_cast<std::size_t>(j)] = observed_scale(table.values().col(j));
    if ((missing.col(j) == 0.0).all()) continue;
    incomplete.push_back(j);
    double init = observed_median(table.values().col(j));
    if (initial) {
      if (auto it = initial->find(table.schema()[static_cast<std::size_t>(j)].name);
          it != initial->end() && std::isfinite(it->second)) {
        init = it->second;
      }
    }
    if (!std::isfinite(init)) init = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (missing(i, j) != 0.0) x(i, j) = init;
    }
  }

  for (int sweep = 0; sweep < policy.mice_max_iter; ++sweep) {
    double delta = 0.0;
    for (Eigen::Index j : incomplete) {
      std::vector<Eigen::Index> obs_rows;
      std::vector<Eigen::Index> miss_rows;
      for (Eigen::Index i = 0; i < n; ++i) {
        (missing(i, j) != 0.0 ? miss_rows : obs_rows).push_back(i);
      }
      if (obs_rows.size() < 2 || d < 2) continue;
      std::vector<Eigen::Index> others;
      for (Eigen::Index c = 0; c < d; ++c) {
        if (c != j) others.push_back(c);
      }
      const Eigen::MatrixXd design = x(obs_rows, others);
      const Eigen::VectorXd response = x(obs_rows, j);
      const auto fit = stats::least_squares(design, response);
      res.ridge_fallback = res.ridge_fallback || fit.ridge_fallback;
      for (Eigen::Index i : miss_rows) {
        const double pred = fit.intercept + x(i, others).dot(fit.coef);
        delta = std::max(delta, std::abs(pred - x(i, j)) / scale[static_cast<std::size_t>(j)]);
        x(i, j) = pred;
      }
    }
    res.delta_history.push_back(delta);
    res.iterations_used = sweep + 1;
    res.final_delta = delta;
    if (delta < policy.mice_tol) break;
  }
  if (res.final_delta >= policy.mice_tol) {
    spdlog::warn("MICE stopped at {} sweeps with delta {:.3g}", res.iterations_used,
                 res.final_delta);
  }
  res.table = table.with_columns(table.schema(), std::move(x));
  return res;
}

CohortTable knn_impute(const CohortTable& table, int k) {
  if (k < 1) throw ConfigError("knn k must be >= 1");
  const Eigen::Index n = table.rows();
  const Eigen::Index d = table.cols();
  const Eigen::MatrixXd& raw = table.values();
  Eigen::MatrixXd z = raw;
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto obs = stats::finite_values(raw.col(j));
    const double mu = obs.empty() ? 0.0 : stats::mean(obs);
    double s = obs.size() < 2 ? 1.0 : stats::sd(obs);
    if (!(s > 0.0)) s = 1.0;
    z.col(j) = (raw.col(j).array() - mu) / s;
  }
  Eigen::MatrixXd out = raw;
  std::vector<double> medians(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    const double m = observed_median(raw.col(j));
    medians[static_cast<std::size_t>(j)] = std::isfinite(m) ? m : 0.0;
  }

  std::vector<double> dist(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!raw.row(i).array().isNaN().any()) continue;
    for (Eigen::Index r = 0; r < n; ++r) {
      double ss = 0.0;
      Eigen::Index present = 0;
      if (r != i) {
        for (Eigen::Index c = 0; c < d; ++c) {
          const double a = z(i, c);
          const double b = z(r, c);
          if (std::isnan(a) || std::isnan(b)) continue;
          ss += (a - b) * (a - b);
          ++present;
        }
      }
      dist[static_cast<std::size_t>(r)] =
          (r == i || present == 0)
              ? std::numeric_limits<double>::infinity()
              : std::sqrt(ss * static_cast<double>(d) / static_cast<double>(present));
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!std::isnan(raw(i, j))) continue;
      order.clear();
      for (Eigen::Index r = 0; r < n; ++r) {
        if (!std::isnan(raw(r, j)) && std::isfinite(dist[static_cast<std::size_t>(r)])) {
          order.push_back(r);
        }
      }
      if (order.empty()) {
        out(i, j) = medians[static_cast<std::size_t>(j)];
        continue;
      }
      const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                        order.end(), [&](Eigen::Index a, Eigen::Index b) {
                          const double da = dist[static_cast<std::size_t>(a)];
                          const double db = dist[static_cast<std::size_t>(b)];
                          return da < db || (da == db && a < b);
                        });
      double sum = 0.0;
      for (std::size_t t = 0; t < take; ++t) sum += raw(order[t], j);
      out(i, j) = sum / static_cast<double>(take);
    }
  }
  return table.with_columns(table.schema(), std::move(out));
}

ImputationResult impute(const CohortTable& table, const ImputePolicy& policy,
                        const std::map<std::string, double>* reference_medians) {
  policy.validate();
  ImputationResult res;
  Eigen::MatrixXd x = table.values();
  for (Eigen::Index j = 0; j < table.cols(); ++j) {
    const auto& spec = table.schema()[static_cast<std::size_t>(j)];
    double med = observed_median(table.values().col(j));
    if (reference_medians) {
      if (auto it = reference_medians->find(spec.name); it != reference_medians->end()) {
        med = it->second;
      }
    }
    if (!std::isfinite(med)) med = 0.0;
    res.medians[spec.name] = med;
    const double rate = table.missing_rate(j);
    const auto strategy = select_strategy(spec, rate, policy);
    res.strategies[spec.name] = strategy;
    if (rate == 0.0 || strategy == ImputeStrategy::Mice) continue;
    const double fill =
        strategy == ImputeStrategy::ClinicalDefault ? policy.clinical_defaults.at(spec.name) : med;
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      if (std::isnan(x(i, j))) x(i, j) = fill;
    }
  }
  const CohortTable prefilled = table.with_columns(table.schema(), std::move(x));
  auto mice = mice_impute(prefilled, policy, reference_medians ? &res.medians : nullptr);
  res.table = std::move(mice.table);
  res.mice_iterations = mice.iterations_used;
  res.mice_final_delta = mice.final_delta;
  if (res.table.missing_count() != 0) {
    throw InvariantError("imputation left missing cells");
  }
  return res;
}

ImputationAudit validate_imputation(const CohortTable& before, const CohortTable& after_mice,
                                    const CohortTable& after_knn,
                                    const std::map<std::string, ImputeStrategy>& strategies) {
  if (before.rows() != after_mice.rows() || before.cols() != after_mice.cols() ||
      before.rows() != after_knn.rows() || before.cols() != after_knn.cols()) {
    throw DataError("validate_imputation: tables differ in shape");
  }
  ImputationAudit audit;
  double sum_dis = 0.0;
  for (Eigen::Index j = 0; j < before.cols(); ++j) {
    ColumnAudit col;
    col.name = before.schema()[static_cast<std::size_t>(j)].name;
    if (auto it = strategies.find(col.name); it != strategies.end()) col.strategy = it->second;
    col.missing_rate = before.missing_rate(j);
    const auto observed = stats::finite_values(before.values().col(j));
    const auto full = stats::to_vector(after_mice.values().col(j));
    const auto ks = stats::ks_two_sample(observed, full);
    col.ks_statistic = ks.statistic;
    col.ks_p_value = ks.p_value;

    double scale = observed.size() >= 2 ? stats::iqr(observed) : 0.0;
    if (!(scale > 0.0)) scale = observed.size() >= 2 ? stats::sd(observed) : 0.0;
    if (!(scale > 0.0)) scale = 1.0;
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < before.rows(); ++i) {
      if (!std::isnan(before.values()(i, j))) continue;
      sum += std::abs(after_mice.values()(i, j) - after_knn.values()(i, j));
      ++count;
    }
    col.disagreement = count == 0 ? 0.0 : sum / static_cast<double>(count) / scale;
    col.flagged = col.disagreement >= kDisagreementThreshold;
    audit.flagged_count += col.flagged ? 1 : 0;
    audit.max_disagreement = std::max(audit.max_disagreement, col.disagreement);
    audit.min_ks_p_value = std::min(audit.min_ks_p_value, col.ks_p_value);
    sum_dis += col.disagreement;
    audit.columns.push_back(std::move(col));
  }
  if (!audit.columns.empty()) {
    audit.mean_disagreement = sum_dis / static_cast<double>(audit.columns.size());
  }
  return audit;
}

}  // namespace bpstack
